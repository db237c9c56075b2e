"""Fixture builders and independent oracles shared by the test modules.

The oracles deliberately avoid the package's own code paths: DC flows use a
dense pseudo-inverse of the full Laplacian, dispatch uses sorting, the zonal
market uses an exact per-zone grid enumeration and the redispatch LP uses
vertex enumeration.
"""

from __future__ import annotations

import dataclasses
import itertools
from pathlib import Path

import numpy as np

from zonalmc.case_io import Branch, Bus, Generator, Network, make_division
from zonalmc.dcflow import build_gsk, build_nodal_ptdf
from zonalmc.market import bootstrap_run, build_offer_book, solve_coupling

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
FIXTURES = DATA / "fixtures"
POLISH = DATA / "case2383wp.m"

VOLUMES = (10, 20, 25, 50, 100)  # each divides 100, keeps grid optima on the 0.01 lattice


# -- hand fixtures --------------------------------------------------------------

def two_bus(cap=30.0, load=50.0, p_max=100.0, cost=10.0) -> Network:
    return Network(
        buses=(Bus(1, 0.0), Bus(2, load)),
        branches=(Branch(1, 2, 0.1, cap),),
        generators=(Generator(1, p_max, cost),),
    )


def two_bus_split(net):
    return make_division(net, {1: "A", 2: "B"})


def triangle(cap13=None, load3=9.0, gens=((1, 100.0, 10.0),)) -> Network:
    """Equal-reactance triangle 1-2-3; branch order (1,2), (2,3), (1,3)."""
    return Network(
        buses=(Bus(1, 0.0), Bus(2, 0.0), Bus(3, load3)),
        branches=(Branch(1, 2, 0.1), Branch(2, 3, 0.1), Branch(1, 3, 0.1, cap13)),
        generators=tuple(Generator(b, p, c) for b, p, c in gens),
    )


def pipeline(net, div, book=None, slack=0):
    """Bootstrap, GSK and zonal clearing; returns (solution, book, ptdf, gsk)."""
    book = book or build_offer_book(net)
    ptdf = build_nodal_ptdf(net, slack)
    gsk = build_gsk(net, div, bootstrap_run(net, div, book, ptdf)) if div.n_zones > 1 else None
    return solve_coupling(net, div, book, ptdf, gsk), book, ptdf, gsk


def scaled_caps(net, k):
    """Copy of net with every finite branch rating multiplied by k."""
    return dataclasses.replace(net, branches=tuple(
        dataclasses.replace(b, capacity=None if b.capacity is None else b.capacity * k) for b in net.branches))


# -- random fixtures ------------------------------------------------------------

def random_tree_edges(rng, nodes):
    nodes = list(nodes)
    order = [nodes[i] for i in rng.permutation(len(nodes))]
    return [(order[rng.integers(0, k)], order[k]) for k in range(1, len(order))]


def random_network(rng, n_buses=None, extra=None, n_gens=None, with_caps=True, radial=False) -> Network:
    """Connected network with random reactances, loads and generators."""
    n = n_buses or int(rng.integers(2, 6))
    ids = list(range(1, n + 1))
    edges = random_tree_edges(rng, ids)
    if not radial:
        for _ in range(int(rng.integers(0, n)) if extra is None else extra):
            a, b = rng.choice(ids, 2, replace=False)
            edges.append((int(a), int(b)))
    branches = tuple(
        Branch(int(a), int(b), float(rng.uniform(0.05, 0.5)),
               float(rng.integers(5, 80)) if with_caps and rng.random() < 0.7 else None)
        for a, b in edges
    )
    buses = tuple(Bus(i, float(rng.choice([0, 0, 10, 20, 40]))) for i in ids)
    if sum(b.load for b in buses) == 0:
        buses = (Bus(1, 30.0),) + buses[1:]
    gens = tuple(
        Generator(int(rng.choice(ids)), float(rng.choice([20, 50, 100])), float(rng.integers(1, 100)))
        for _ in range(n_gens or int(rng.integers(1, 4)))
    )
    return Network(buses, branches, gens)


def random_division(rng, net: Network, n_zones=None):
    """Random division with every zone non-empty (zones need not be connected)."""
    n = net.n_buses
    j = min(n, n_zones or int(rng.integers(1, 4)))
    labels = np.r_[np.arange(j), rng.integers(0, j, n - j)]
    rng.shuffle(labels)
    return make_division(net, {b.id: "Z" + str(int(labels[i]) + 1) for i, b in enumerate(net.buses)})


def zone_tree_fixture(rng, max_offers=6):
    """Grid-aligned fixture: <= 5 buses, <= 3 zones chained Z1-Z2-Z3 by exactly
    one branch per neighbouring pair, <= max_offers constant-price offers with
    volumes from VOLUMES, integer prices and integer inter-zonal capacities.

    Every inter-zonal branch is a bridge, so the zonal PTDF has entries in
    {-1, 0, 1} for any GSK and the optimum lies on the 0.01 acceptance grid.
    """
    n = int(rng.integers(2, 6))
    j = int(rng.integers(1, min(3, n) + 1))
    sizes = np.ones(j, dtype=int)
    for _ in range(n - j):
        sizes[rng.integers(0, j)] += 1
    zones, start = [], 1
    for s in sizes:
        zones.append(list(range(start, start + s)))
        start += s
    edges = []
    for members in zones:
        edges += random_tree_edges(rng, members)
        if len(members) >= 3 and rng.random() < 0.5:
            a, b = rng.choice(members, 2, replace=False)
            edges.append((int(a), int(b)))
    for a, b in zip(zones, zones[1:]):
        edges.append((int(rng.choice(a)), int(rng.choice(b))))
    branches = []
    bus_zone = {b: k for k, m in enumerate(zones) for b in m}
    for a, b in edges:
        cross = bus_zone[a] != bus_zone[b]
        cap = float(rng.integers(5, 150)) if cross and rng.random() < 0.85 else None
        branches.append(Branch(a, b, float(rng.uniform(0.05, 0.5)), cap))

    n_offers = int(rng.integers(2, max_offers + 1))
    n_loads = int(rng.integers(1, n_offers))
    loads = np.zeros(n + 1)
    load_buses = rng.choice(np.arange(1, n + 1), size=min(n_loads, n), replace=False)
    for b in load_buses:
        loads[b] = float(rng.choice(VOLUMES))
    gens = tuple(
        Generator(int(rng.integers(1, n + 1)), float(rng.choice(VOLUMES)), float(rng.integers(1, 100)))
        for _ in range(n_offers - len(load_buses))
    )
    net = Network(tuple(Bus(i, float(loads[i])) for i in range(1, n + 1)), tuple(branches), gens)
    div = make_division(net, {b: "Z" + str(bus_zone[b] + 1) for b in range(1, n + 1)})
    return net, div


# -- oracles --------------------------------------------------------------------

def dense_dc_flows(net: Network, injections) -> np.ndarray:
    """DC flows via the pseudo-inverse of the full (singular) Laplacian."""
    f, t = net.branch_ends
    x = np.array([br.reactance for br in net.branches])
    n = net.n_buses
    inc = np.zeros((len(f), n))
    inc[np.arange(len(f)), f] = 1.0
    inc[np.arange(len(f)), t] = -1.0
    lap = inc.T @ np.diag(1.0 / x) @ inc
    theta = np.linalg.pinv(lap) @ np.asarray(injections, dtype=float)
    return (inc @ theta) / x


def gsk_oracle(net: Network, div, inj) -> np.ndarray:
    """Per-zone normalization written as plain loops."""
    out = np.zeros((net.n_buses, div.n_zones))
    gen_buses = {g.bus for g in net.generators}
    for j, zone in enumerate(div.zones):
        members = [i for i, b in enumerate(net.buses) if div.assignment[b.id] == zone]
        total = sum(inj[i] for i in members)
        if abs(total) >= 1e-6:
            for i in members:
                out[i, j] = inj[i] / total
        else:
            pool = [i for i in members if net.buses[i].id in gen_buses] or members
            for i in pool:
                out[i, j] = 1.0 / len(pool)
    return out


def merit_order(book):
    """Serve all demand with sells in ascending price order.

    Returns (sell acceptance by offer index, marginal price) or None when
    supply is short.
    """
    demand = -sum(o.q for o in book.offers if o.q < 0)
    sells = sorted((o for o in book.offers if o.q > 0), key=lambda o: (o.p0, o.id))
    acc, left, price = {}, demand, 0.0
    for o in sells:
        take = min(o.q, left)
        acc[o.id] = take / o.q
        if take > 0:
            price = o.p0
        left -= take
    if left > 1e-9:
        return None
    return acc, price


def _zone_states(q, p0, p1):
    """Best intra-zone objective for every reachable net position on the grid.

    Keys are net positions in units of 0.01 MW (exact integers)."""
    keys = np.zeros(1, dtype=np.int64)
    vals = np.zeros(1)
    k = np.arange(101)
    for qn, a, b in zip(q, p0, p1):
        a_grid = k / 100.0
        contrib = np.rint(qn * k).astype(np.int64)  # q * A in 0.01 MW
        obj = -qn * a * a_grid - qn * (b - a) * a_grid ** 2 / 2.0
        nk = (keys[:, None] + contrib[None, :]).ravel()
        nv = (vals[:, None] + obj[None, :]).ravel()
        order = np.lexsort((-nv, nk))
        nk, nv = nk[order], nv[order]
        first = np.r_[True, nk[1:] != nk[:-1]]
        keys, vals = nk[first], nv[first]
    return keys, vals


def coupling_grid_oracle(book, zone_of, zptdf, caps, n_zones, tol=1e-9):
    """Exact optimum of the zonal problem over acceptances on the 0.01 grid.

    Equivalent to enumerating all 101^N acceptance vectors: the objective is
    separable and the constraints depend on zonal net positions only, so each
    zone is reduced to its best value per net position first. Requires every
    offer volume to be an integer number of MW.
    """
    q, p0, p1 = book.q, book.p0, book.p1
    assert np.all(q == np.rint(q))
    states = []
    for j in range(n_zones):
        m = zone_of == j
        states.append(_zone_states(q[m], p0[m], p1[m]))
    zptdf = np.asarray(zptdf, dtype=float).reshape(-1, n_zones)
    caps = np.asarray(caps, dtype=float)
    lim = np.isfinite(caps)

    def feasible(Q):  # Q: (n_zones, batch) in MW
        flows = zptdf[lim] @ Q
        return np.all(np.abs(flows) <= caps[lim][:, None] + tol, axis=0)

    if n_zones == 1:
        keys, vals = states[0]
        hit = keys == 0
        return float(vals[hit][0]) if hit.any() else None

    last_k, last_v = states[-1]
    best = -np.inf
    head = states[:-1]
    if n_zones == 2:
        k1, v1 = head[0]
        need = -k1
        pos = np.searchsorted(last_k, need)
        ok = (pos < last_k.size) & (last_k[np.minimum(pos, last_k.size - 1)] == need)
        Q = np.vstack([k1[ok], need[ok]]) / 100.0
        tot = v1[ok] + last_v[pos[ok]]
        fe = feasible(Q)
        return float(tot[fe].max()) if fe.any() else None
    (k1, v1), (k2, v2) = head
    for a, va in zip(k1, v1):
        need = -(a + k2)
        pos = np.searchsorted(last_k, need)
        ok = (pos < last_k.size) & (last_k[np.minimum(pos, last_k.size - 1)] == need)
        if not ok.any():
            continue
        Q = np.vstack([np.full(ok.sum(), a), k2[ok], need[ok]]) / 100.0
        fe = feasible(Q)
        if fe.any():
            best = max(best, float((va + v2[ok] + last_v[pos[ok]])[fe].max()))
    return best if np.isfinite(best) else None


def qp_grid_oracle(p, tol=1e-9):
    """Best objective over the 0.01 grid of the box [lower, upper] (n <= 3)."""
    axes = [np.round(np.arange(lo, hi + 1e-9, 0.01), 10) for lo, hi in zip(p.lower, p.upper)]
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(p.n, -1)
    ok = np.ones(grid.shape[1], dtype=bool)
    if p.eq_rhs.size:
        ok &= np.all(np.abs(p.eq_matrix @ grid - p.eq_rhs[:, None]) <= tol, axis=0)
    if p.ineq_lower.size:
        g = p.ineq_matrix @ grid
        ok &= np.all((g >= p.ineq_lower[:, None] - tol) & (g <= p.ineq_upper[:, None] + tol), axis=0)
    if not ok.any():
        return None
    pts = grid[:, ok]
    return float((p.linear @ pts + p.hessian_diag @ (pts * pts)).max())


def cvxopt_qp(p):
    """Reference optimum from cvxopt (minimizes the negated objective)."""
    from cvxopt import matrix, solvers

    solvers.options["show_progress"] = False
    n = p.n
    P = matrix(np.diag(-2.0 * p.hessian_diag) + 1e-12 * np.eye(n))
    qv = matrix(-p.linear)
    rows, rhs = [np.eye(n), -np.eye(n)], [p.upper, -p.lower]
    for k in range(p.ineq_lower.size):
        if np.isfinite(p.ineq_upper[k]):
            rows.append(p.ineq_matrix[k:k + 1])
            rhs.append(p.ineq_upper[k:k + 1])
        if np.isfinite(p.ineq_lower[k]):
            rows.append(-p.ineq_matrix[k:k + 1])
            rhs.append(-p.ineq_lower[k:k + 1])
    G = matrix(np.vstack(rows))
    h = matrix(np.concatenate(rhs).astype(float))
    kw = {}
    if p.eq_rhs.size:
        kw = {"A": matrix(p.eq_matrix), "b": matrix(p.eq_rhs.astype(float))}
    sol = solvers.qp(P, qv, G, h, **kw)
    if sol["status"] != "optimal":
        return None
    return p.objective(np.array(sol["x"]).ravel())


def redispatch_lp(net: Network, book, acceptance, intra_mask, tol=1e-7):
    """Minimal production-cost increase restoring the masked line limits.

    Generator outputs are re-chosen within [0, p_max] keeping their total;
    every other accepted offer stays as cleared. Solved by enumerating LP
    vertices. Returns None when no feasible redispatch exists.
    """
    gens = [g for g in net.generators if g.p_max > 0]
    k = len(gens)
    gbus = np.array([net.index[x.bus] for x in gens])
    cost = np.array([x.marginal_cost for x in gens])
    pmax = np.array([x.p_max for x in gens])
    is_gen = np.array([o.kind == "generator" for o in book.offers])
    a = np.asarray(acceptance, dtype=float)
    dispatch = (book.q * a)[is_gen]  # generator offers follow generator order
    n = net.n_buses
    rest = np.zeros(n)
    np.add.at(rest, book.bus_index(net)[~is_gen], (book.q * a)[~is_gen])

    H = np.column_stack([dense_dc_flows(net, np.eye(n)[i] - np.eye(n)[0]) for i in range(n)])
    Hg, base = H[:, gbus], H @ rest
    caps = net.capacities
    A, b = [], []
    for i in range(k):
        e = np.eye(k)[i]
        A += [e, -e]
        b += [pmax[i], 0.0]
    for l in np.flatnonzero(intra_mask & np.isfinite(caps)):
        A += [Hg[l], -Hg[l]]
        b += [caps[l] - base[l], caps[l] + base[l]]
    A, b = np.array(A), np.array(b)
    best = None
    for combo in itertools.combinations(range(len(A)), k - 1):
        M = np.vstack([np.ones(k), A[list(combo)]])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        p = np.linalg.solve(M, np.r_[dispatch.sum(), b[list(combo)]])
        if np.all(A @ p <= b + tol):
            val = float(cost @ (p - dispatch))
            best = val if best is None else min(best, val)
    return best
