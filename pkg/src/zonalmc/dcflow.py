"""DC power flow, nodal PTDF, generation shift keys and zonal PTDF."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .case_io import CaseError, Network, ZoneDivision

GSK_DEGENERATE_MW = 1e-6


@dataclass(frozen=True)
class PtdfMatrix:
    values: np.ndarray  # L x B
    slack: int


@dataclass(frozen=True)
class GskMatrix:
    values: np.ndarray  # B x J
    zones: tuple[str, ...]


def _susceptance(net: Network):
    f, t = net.branch_ends
    b = np.array([1.0 / br.reactance for br in net.branches])
    L, n = net.n_branches, net.n_buses
    rows = np.r_[np.arange(L), np.arange(L)]
    incidence = sp.csr_matrix((np.r_[np.ones(L), -np.ones(L)], (rows, np.r_[f, t])), shape=(L, n))
    bf = sp.diags(b) @ incidence
    bbus = (incidence.T @ bf).tocsc()
    return bbus, bf.tocsr()


def _reduced_factor(net: Network, slack: int):
    if not 0 <= slack < net.n_buses:
        raise IndexError(f"slack index {slack} out of range")
    bbus, bf = _susceptance(net)
    keep = np.delete(np.arange(net.n_buses), slack)
    reduced = bbus[keep][:, keep].tocsc()
    try:
        lu = splu(reduced)
    except RuntimeError:
        raise CaseError("singular susceptance matrix (network disconnected?)") from None
    diag_u = lu.U.diagonal()
    if np.any(np.abs(diag_u) < 1e-12 * np.abs(diag_u).max(initial=1.0)):
        raise CaseError("singular susceptance matrix (network disconnected?)")
    return lu, bf, keep


def dc_power_flow(net: Network, injections, slack: int = 0) -> np.ndarray:
    """Branch flows (MW, positive from->to) for bus injections in MW.

    Any imbalance is taken up at ``slack``.
    """
    p = np.asarray(injections, dtype=float)
    if p.shape != (net.n_buses,):
        raise ValueError(f"expected {net.n_buses} injections, got {p.shape}")
    if net.n_buses == 1:
        return np.zeros(net.n_branches)
    lu, bf, keep = _reduced_factor(net, slack)
    theta = np.zeros(net.n_buses)
    theta[keep] = lu.solve(p[keep] / net.base_mva)
    return net.base_mva * (bf @ theta)


def build_nodal_ptdf(net: Network, slack: int = 0) -> PtdfMatrix:
    """Dense branch x bus sensitivity of flows to injections withdrawn at ``slack``."""
    n = net.n_buses
    values = np.zeros((net.n_branches, n))
    if n > 1:
        lu, bf, keep = _reduced_factor(net, slack)
        # one factorization, n-1 triangular solves
        inv = lu.solve(np.eye(n - 1))
        values[:, keep] = bf[:, keep] @ inv
    return PtdfMatrix(values, slack)


def build_gsk(net: Network, div: ZoneDivision, nodal_injections) -> GskMatrix:
    """Net-injection shift keys from a bus-level injection profile.

    A zone whose net injection is below 1e-6 MW in magnitude falls back to a
    uniform key over its generator buses, or over all its buses when it has
    no generator.
    """
    inj = np.asarray(nodal_injections, dtype=float)
    gsk = np.zeros((net.n_buses, div.n_zones))
    gen_buses = {net.index[g.bus] for g in net.generators}
    for j, members in enumerate(div.members(net)):
        total = inj[members].sum()
        if abs(total) >= GSK_DEGENERATE_MW:
            gsk[members, j] = inj[members] / total
        else:
            hosts = [m for m in members if m in gen_buses] or list(members)
            gsk[hosts, j] = 1.0 / len(hosts)
    return GskMatrix(gsk, div.zones)


def interzonal_branches(net: Network, div: ZoneDivision) -> list[int]:
    bz = div.bus_zones(net)
    f, t = net.branch_ends
    return [k for k in range(net.n_branches) if bz[f[k]] != bz[t[k]]]


def zonal_ptdf(ptdf: PtdfMatrix, gsk: GskMatrix, net: Network, div: ZoneDivision):
    """Rows of PTDF @ GSK for the inter-zonal branches.

    Returns ``(zptdf, interzonal)`` with ``zptdf`` of shape K x J.
    """
    cut = interzonal_branches(net, div)
    if gsk.values.shape != (net.n_buses, div.n_zones) or ptdf.values.shape != (net.n_branches, net.n_buses):
        raise ValueError("PTDF/GSK dimensions do not match the network and division")
    z = ptdf.values[cut] @ gsk.values
    return z.reshape(len(cut), div.n_zones), cut


def write_ptdf_csv(ptdf: PtdfMatrix, net: Network) -> str:
    head = "branch_id," + ",".join(str(b.id) for b in net.buses)
    rows = [f"{k}," + ",".join(repr(float(v)) for v in row) for k, row in enumerate(ptdf.values)]
    return "\n".join([head, *rows]) + "\n"


def write_gsk_csv(gsk: GskMatrix, net: Network) -> str:
    head = "bus_id," + ",".join(gsk.zones)
    rows = [f"{b.id}," + ",".join(repr(float(v)) for v in gsk.values[i]) for i, b in enumerate(net.buses)]
    return "\n".join([head, *rows]) + "\n"
