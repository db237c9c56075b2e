"""Offer books and flow-based market coupling.

Clearing maximizes the sum of ``-q_n A_n (Pbar_n + P0_n) / 2`` over acceptance
levels ``A_n`` in [0, 1], with ``Pbar_n = P0_n + (P1_n - P0_n) A_n``, subject
to global balance ``sum q_n A_n = 0`` and two-sided limits on inter-zonal
branch flows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .case_io import Network, ZoneDivision
from .dcflow import GskMatrix, PtdfMatrix, interzonal_branches, zonal_ptdf
from .qpsolve import INFEASIBLE, OPTIMAL, QpProblem, solve_concave_qp

log = logging.getLogger(__name__)

DEFAULT_DEMAND_PRICE = 2000.0


class InfeasibleError(ValueError):
    """No balanced acceptance vector satisfies the flow limits."""


class SolverError(RuntimeError):
    """The QP solver stopped without reaching the requested tolerance."""


@dataclass(frozen=True)
class Offer:
    id: int
    bus: int
    q: float  # > 0 sell, < 0 buy
    p0: float
    p1: float
    zone: str | None = None
    kind: str = "generator"  # generator | wind | injection | demand

    @property
    def is_sell(self) -> bool:
        return self.q > 0


@dataclass(frozen=True)
class OfferBook:
    offers: tuple[Offer, ...]

    def __len__(self):
        return len(self.offers)

    @property
    def q(self) -> np.ndarray:
        return np.array([o.q for o in self.offers], dtype=float)

    @property
    def p0(self) -> np.ndarray:
        return np.array([o.p0 for o in self.offers], dtype=float)

    @property
    def p1(self) -> np.ndarray:
        return np.array([o.p1 for o in self.offers], dtype=float)

    def bus_index(self, net: Network) -> np.ndarray:
        return np.array([net.index[o.bus] for o in self.offers], dtype=int)

    def zone_index(self, net: Network, div: ZoneDivision) -> np.ndarray:
        return div.bus_zones(net)[self.bus_index(net)] if self.offers else np.zeros(0, dtype=int)

    def with_zones(self, div: ZoneDivision) -> "OfferBook":
        return OfferBook(tuple(replace(o, zone=div.assignment[o.bus]) for o in self.offers))

    def validate(self):
        for o in self.offers:
            if o.q == 0:
                raise ValueError(f"offer {o.id}: zero volume")
            if o.q > 0 and o.p0 > o.p1:
                raise ValueError(f"offer {o.id}: sell offer price must not decrease (p0 > p1)")
            if o.q < 0 and o.p0 < o.p1:
                raise ValueError(f"offer {o.id}: buy offer price must not increase (p0 < p1)")

    def to_csv(self) -> str:
        lines = ["id,bus,zone,q,p0,p1"]
        for o in self.offers:
            lines.append(f"{o.id},{o.bus},{o.zone or ''},{o.q!r},{o.p0!r},{o.p1!r}")
        return "\n".join(lines) + "\n"


def build_offer_book(net: Network, wind: dict[int, float] | None = None,
                     demand_price: float = DEFAULT_DEMAND_PRICE) -> OfferBook:
    """Offers for a case: generators at marginal cost, wind and fixed infeed at
    price zero, and inelastic demand bidding ``demand_price``."""
    costs = [g.marginal_cost for g in net.generators]
    if costs and not demand_price > max(costs):
        raise ValueError(
            f"demand price {demand_price} must exceed every generation cost (max {max(costs)})"
        )
    offers: list[Offer] = []

    def add(bus, q, price, kind):
        offers.append(Offer(len(offers), bus, float(q), float(price), float(price), kind=kind))

    for g in net.generators:
        if g.p_max > 0:
            add(g.bus, g.p_max, g.marginal_cost, "generator")
    for bus, mw in sorted((wind or {}).items()):
        if bus not in net.index:
            raise ValueError(f"wind bus {bus} not in network")
        if mw > 0:
            add(bus, mw, 0.0, "wind")
    for b in net.buses:
        if b.injection > 0:
            add(b.id, b.injection, 0.0, "injection")
    for b in net.buses:
        if b.load > 0:
            add(b.id, -b.load, demand_price, "demand")
    return OfferBook(tuple(offers))


@dataclass
class CouplingProblem:
    qp: QpProblem
    flow_matrix: np.ndarray  # K x N, flows = flow_matrix @ A
    capacities: np.ndarray  # K, inf = unconstrained
    rows: np.ndarray  # indices of the K rows that carry a finite limit


def nodal_flow_map(ptdf: PtdfMatrix, branches, book: OfferBook, net: Network) -> np.ndarray:
    """Flow on ``branches`` per unit acceptance of each offer (bootstrap stage)."""
    return ptdf.values[np.asarray(branches, dtype=int)][:, book.bus_index(net)] * book.q


def zonal_flow_map(zptdf: np.ndarray, book: OfferBook, net: Network, div: ZoneDivision) -> np.ndarray:
    """Flow per unit acceptance through zonal net positions (zonal PTDF stage)."""
    return zptdf[:, book.zone_index(net, div)] * book.q


def assemble_problem(book: OfferBook, flow_matrix, capacities) -> CouplingProblem:
    book.validate()
    q, p0, p1 = book.q, book.p0, book.p1
    n = len(book)
    fm = np.asarray(flow_matrix, dtype=float).reshape(-1, n)
    caps = np.asarray(capacities, dtype=float).ravel()
    if caps.size != fm.shape[0]:
        raise ValueError(f"{caps.size} capacities for {fm.shape[0]} constrained lines")
    if np.any(caps < 0):
        raise ValueError("capacities must be >= 0")
    rows = np.flatnonzero(np.isfinite(caps))
    qp = QpProblem(
        hessian_diag=-q * (p1 - p0) / 2.0,
        linear=-q * p0,
        eq_matrix=q.reshape(1, n),
        eq_rhs=np.zeros(1),
        ineq_matrix=fm[rows],
        ineq_lower=-caps[rows],
        ineq_upper=caps[rows],
        lower=np.zeros(n),
        upper=np.ones(n),
    )
    return CouplingProblem(qp, fm, caps, rows)


def _solve(problem: CouplingProblem, stage: str, tol: float, max_iter: int):
    s = solve_concave_qp(problem.qp, tol=tol, max_iter=max_iter)
    if s.status == INFEASIBLE:
        raise InfeasibleError(f"{stage}: no balanced dispatch satisfies the inter-zonal flow limits")
    if s.status != OPTIMAL:
        raise SolverError(
            f"{stage}: solver stopped ({s.status}) after {s.iterations} iterations, KKT residual {s.kkt_residual:.3g}"
        )
    return s


def bootstrap_run(net: Network, div: ZoneDivision, book: OfferBook, ptdf: PtdfMatrix,
                  tol: float = 1e-6, max_iter: int = 10000) -> np.ndarray:
    """Clear the market with nodal-resolution inter-zonal flows; return the
    bus-level injection profile of the optimum (input to the GSK)."""
    if div.n_zones < 2:
        raise ValueError("bootstrap stage needs at least two zones")
    cut = interzonal_branches(net, div)
    fm = nodal_flow_map(ptdf, cut, book, net)
    problem = assemble_problem(book, fm, net.capacities[cut])
    s = _solve(problem, "bootstrap", tol, max_iter)
    return nodal_injections(net, book, s.x)


def nodal_injections(net: Network, book: OfferBook, acceptance) -> np.ndarray:
    inj = np.zeros(net.n_buses)
    np.add.at(inj, book.bus_index(net), book.q * np.asarray(acceptance))
    return inj


@dataclass
class CouplingSolution:
    acceptance: np.ndarray
    zonal_net: np.ndarray
    interzonal_flows: np.ndarray
    nodal_injections: np.ndarray
    objective: float
    interzonal: list[int] = field(default_factory=list)
    # (from zone index, to zone index) of each inter-zonal branch
    interzonal_zones: list[tuple[int, int]] = field(default_factory=list)
    offer_zones: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    balance_dual: float = 0.0
    flow_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cut_residual: float = 0.0
    iterations: int = 0
    kkt_residual: float = 0.0


def cut_conservation_residual(zonal_net, flows, interzonal_zones, n_zones) -> float:
    """max_j |Q_j - (export - import of zone j over the cut branches)|."""
    export = np.zeros(n_zones)
    for f, (a, b) in zip(flows, interzonal_zones):
        export[a] += f
        export[b] -= f
    return float(np.abs(np.asarray(zonal_net) - export).max(initial=0.0))


def solve_coupling(net: Network, div: ZoneDivision, book: OfferBook, ptdf: PtdfMatrix,
                   gsk: GskMatrix | None, tol: float = 1e-6, max_iter: int = 10000) -> CouplingSolution:
    """Clear the zonal market with flows ``zPTDF @ Q``."""
    n_zones = div.n_zones
    zone_of = book.zone_index(net, div)
    if n_zones == 1:
        cut: list[int] = []
        zptdf = np.zeros((0, 1))
    else:
        if gsk is None:
            raise ValueError("a GSK matrix is required for more than one zone")
        zptdf, cut = zonal_ptdf(ptdf, gsk, net, div)
    fm = zonal_flow_map(zptdf, book, net, div)
    problem = assemble_problem(book, fm, net.capacities[cut])
    s = _solve(problem, "coupling", tol, max_iter)

    a = np.clip(s.x, 0.0, 1.0)
    zonal_net = np.zeros(n_zones)
    np.add.at(zonal_net, zone_of, book.q * a)
    flows = zptdf @ zonal_net
    bz = div.bus_zones(net)
    f, t = net.branch_ends
    zones = [(int(bz[f[k]]), int(bz[t[k]])) for k in cut]
    flow_duals = np.zeros(len(cut))
    flow_duals[problem.rows] = s.ineq_duals[:, 1] - s.ineq_duals[:, 0]
    residual = cut_conservation_residual(zonal_net, flows, zones, n_zones)
    if residual > 1e-6 * max(1.0, np.abs(book.q).sum()):
        log.warning("cut conservation violated by %.3g MW", residual)
    return CouplingSolution(
        acceptance=a,
        zonal_net=zonal_net,
        interzonal_flows=flows,
        nodal_injections=nodal_injections(net, book, a),
        objective=problem.qp.objective(a),
        interzonal=list(cut),
        interzonal_zones=zones,
        offer_zones=zone_of,
        balance_dual=float(s.eq_duals[0]),
        flow_duals=flow_duals,
        cut_residual=residual,
        iterations=s.iterations,
        kkt_residual=s.kkt_residual,
    )
