"""Zonal clearing prices, social welfare and the redispatch-cost estimate."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .case_io import Network, ZoneDivision
from .dcflow import dc_power_flow
from .market import CouplingSolution, OfferBook

log = logging.getLogger(__name__)

ACCEPTED = 1e-6  # acceptance above which an offer counts as accepted
FULL = 1.0 - 1e-6  # acceptance at or above which a buy offer counts as served


@dataclass(frozen=True)
class ZoneSummary:
    zone: str
    n_buses: int
    demand_mw: float
    n_generators: int
    dispatched_mw: float
    mcp: float


@dataclass(frozen=True)
class ZonalFlow:
    from_zone: str
    to_zone: str
    mw: float


@dataclass
class SettlementReport:
    division: str
    zones: tuple[str, ...]
    mcp: dict[str, float]
    sw: float
    congestion_rent: float
    redispatch_cost: float
    sw_corrected: float
    per_zone: list[ZoneSummary] = field(default_factory=list)
    zonal_flows: list[ZonalFlow] = field(default_factory=list)
    objective: float = float("nan")
    status: str = "optimal"
    reason: str = ""

    @classmethod
    def infeasible(cls, division: str, zones, reason: str = "") -> "SettlementReport":
        nan = float("nan")
        return cls(division, tuple(zones), {}, nan, nan, nan, nan, status="infeasible", reason=reason)


def cleared_prices(book: OfferBook, acceptance) -> np.ndarray:
    """Highest (sell) / lowest (buy) price reached by each offer."""
    p0, p1 = book.p0, book.p1
    return p0 + (p1 - p0) * np.asarray(acceptance)


def pair_flows(sol: CouplingSolution, n_zones: int) -> dict[tuple[int, int], float]:
    """Net inter-zonal flow per unordered zone pair ``(a, b)``, a < b, positive a -> b."""
    out: dict[tuple[int, int], float] = {}
    for f, (a, b) in zip(sol.interzonal_flows, sol.interzonal_zones):
        key, sign = ((a, b), 1.0) if a < b else ((b, a), -1.0)
        out[key] = out.get(key, 0.0) + sign * f
    return out


def clearing_prices(sol: CouplingSolution, book: OfferBook, div: ZoneDivision, demand_price: float) -> np.ndarray:
    """MCP per zone.

    A zone whose buy offers are all served is priced at the highest accepted
    sell offer located in it or in a neighbouring zone that exports into it
    over a direct inter-zonal branch; otherwise at ``demand_price``.
    """
    a = sol.acceptance
    zone_of = sol.offer_zones
    q = book.q
    pbar = cleared_prices(book, a)
    n_zones = div.n_zones
    local_max = np.full(n_zones, -np.inf)
    for n in np.flatnonzero((q > 0) & (a > ACCEPTED)):
        local_max[zone_of[n]] = max(local_max[zone_of[n]], pbar[n])
    unmet = np.zeros(n_zones, dtype=bool)
    for n in np.flatnonzero((q < 0) & (a < FULL)):
        unmet[zone_of[n]] = True

    flows = pair_flows(sol, n_zones)
    mcp = np.zeros(n_zones)
    for j in range(n_zones):
        if unmet[j]:
            mcp[j] = demand_price
            continue
        best = local_max[j]
        for (x, y), f in flows.items():
            if y == j and f > ACCEPTED:
                best = max(best, local_max[x])
            elif x == j and f < -ACCEPTED:
                best = max(best, local_max[y])
        if np.isfinite(best):
            mcp[j] = best
        else:
            log.warning("zone %s has no accepted or imported sell offer; MCP set to 0", div.zones[j])
            mcp[j] = 0.0
    return mcp


def social_welfare(sol: CouplingSolution, book: OfferBook, mcp, div: ZoneDivision) -> tuple[float, float]:
    """Return ``(sw, congestion_rent)``.

    Rent on each zone pair is (importer price - exporter price) x net flow.
    """
    a = sol.acceptance
    q = book.q
    zone_of = sol.offer_zones
    mcp = np.asarray(mcp, dtype=float)
    pbar = cleared_prices(book, a)
    surplus = float(np.sum(a * q * (mcp[zone_of] - (pbar + book.p0) / 2.0)))
    rent = 0.0
    for (x, y), f in pair_flows(sol, div.n_zones).items():
        # f > 0: x exports to y
        rent += (mcp[y] - mcp[x]) * f
    return float(surplus + rent), float(rent)


def zone_max_cost(net: Network, div: ZoneDivision) -> np.ndarray:
    """Costliest generator per zone; the system-wide maximum for zones without one."""
    bz = div.bus_zones(net)
    system = max((g.marginal_cost for g in net.generators), default=0.0)
    out = np.full(div.n_zones, -np.inf)
    for g in net.generators:
        j = bz[net.index[g.bus]]
        out[j] = max(out[j], g.marginal_cost)
    return np.where(np.isfinite(out), out, system)


def line_overloads(net: Network, div: ZoneDivision, injections, slack: int = 0):
    """Overload (MW above rating) of every intra-zonal branch, plus its zone index."""
    flows = dc_power_flow(net, injections, slack)
    bz = div.bus_zones(net)
    f, t = net.branch_ends
    intra = bz[f] == bz[t]
    over = np.where(intra, np.maximum(np.abs(flows) - net.capacities, 0.0), 0.0)
    return over, bz[f]


def redispatch_cost(net: Network, div: ZoneDivision, sol: CouplingSolution, slack: int = 0) -> float:
    """Upper-bound style estimate: each intra-zonal overload o_l costs o_l times
    the highest generation cost in the branch's zone."""
    over, zone = line_overloads(net, div, sol.nodal_injections, slack)
    pmax = zone_max_cost(net, div)
    return float(np.sum(over * pmax[zone]))


def settle(net: Network, div: ZoneDivision, book: OfferBook, sol: CouplingSolution, demand_price: float,
           slack: int = 0, division: str = "") -> SettlementReport:
    mcp = clearing_prices(sol, book, div, demand_price)
    sw, rent = social_welfare(sol, book, mcp, div)
    rd = redispatch_cost(net, div, sol, slack)

    bz = div.bus_zones(net)
    zone_of = sol.offer_zones
    q, a = book.q, sol.acceptance
    per_zone = []
    for j, z in enumerate(div.zones):
        members = bz == j
        n_gen = sum(1 for g in net.generators if bz[net.index[g.bus]] == j)
        sells = (zone_of == j) & (q > 0)
        per_zone.append(
            ZoneSummary(z, int(members.sum()), float(net.loads[members].sum()), n_gen,
                        float(np.sum(q[sells] * a[sells])), float(mcp[j]))
        )
    flows = []
    for (x, y), f in sorted(pair_flows(sol, div.n_zones).items()):
        flows.append(ZonalFlow(div.zones[x], div.zones[y], f))
        flows.append(ZonalFlow(div.zones[y], div.zones[x], -f))
    return SettlementReport(
        division=division,
        zones=div.zones,
        mcp={z: float(mcp[j]) for j, z in enumerate(div.zones)},
        sw=sw,
        congestion_rent=rent,
        redispatch_cost=rd,
        sw_corrected=sw - rd,
        per_zone=per_zone,
        zonal_flows=flows,
        objective=sol.objective,
    )
