"""Concave separable QP: maximize linear.x + sum(hessian_diag * x**2).

Constraints are linear equalities ``E x = rhs``, two-sided rows
``lower <= G x <= upper`` (either side may be infinite) and variable bounds.
Solved with a Mehrotra predictor-corrector interior-point method; the
diagonal Hessian makes each Newton step a small dense system in the number
of constraint rows.

Dual conventions (all multipliers of the maximization problem)::

    grad f(x) = E' eq_duals + G' (ineq_up - ineq_lo) + (bound_up - bound_lo)

with ``ineq_duals[:, 0] = ineq_lo``, ``ineq_duals[:, 1] = ineq_up`` and the
same column layout for ``bound_duals``; all of them are >= 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"


def _empty(n):
    return np.zeros((0, n))


@dataclass
class QpProblem:
    hessian_diag: np.ndarray
    linear: np.ndarray
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ineq_matrix: np.ndarray | None = None
    ineq_lower: np.ndarray | None = None
    ineq_upper: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float).ravel()
        n = self.linear.size
        self.hessian_diag = np.broadcast_to(np.asarray(self.hessian_diag, dtype=float), (n,)).copy()
        self.eq_matrix = _empty(n) if self.eq_matrix is None else np.atleast_2d(np.asarray(self.eq_matrix, float))
        self.eq_rhs = np.zeros(0) if self.eq_rhs is None else np.asarray(self.eq_rhs, float).ravel()
        self.ineq_matrix = (
            _empty(n) if self.ineq_matrix is None else np.atleast_2d(np.asarray(self.ineq_matrix, float))
        )
        m = self.ineq_matrix.shape[0]
        self.ineq_lower = np.full(m, -np.inf) if self.ineq_lower is None else np.asarray(self.ineq_lower, float)
        self.ineq_upper = np.full(m, np.inf) if self.ineq_upper is None else np.asarray(self.ineq_upper, float)
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float).copy()
        if self.eq_matrix.shape != (self.eq_rhs.size, n):
            raise ValueError("equality matrix/rhs shape mismatch")
        if self.ineq_matrix.shape[1] != n or self.ineq_lower.shape != (m,) or self.ineq_upper.shape != (m,):
            raise ValueError("inequality matrix/bounds shape mismatch")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("variable bounds shape mismatch")
        if np.any(self.hessian_diag > 0):
            raise ValueError("hessian_diag must be <= 0 (concave objective)")
        if np.any(self.lower > self.upper) or np.any(self.ineq_lower > self.ineq_upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.linear.size

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.linear @ x + self.hessian_diag @ (x * x))

    def gradient(self, x) -> np.ndarray:
        return self.linear + 2.0 * self.hessian_diag * np.asarray(x, dtype=float)

    def scale(self) -> float:
        """Magnitude of the objective coefficients, used to normalize residuals."""
        return max(1.0, np.abs(self.linear).max(initial=0.0), 2.0 * np.abs(self.hessian_diag).max(initial=0.0))


@dataclass
class QpSolution:
    x: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray  # m x 2: (lower side, upper side)
    bound_duals: np.ndarray  # n x 2: (lower bound, upper bound)
    status: str
    kkt_residual: float
    iterations: int = 0
    objective: float = float("nan")


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    primal_feas: float
    dual_feas: float
    complementarity: float

    @property
    def worst(self) -> float:
        return max(self.stationarity, self.primal_feas, self.dual_feas, self.complementarity)


def _finite_gap(side, gap):
    return np.where(np.isfinite(side), gap, 0.0)


def verify_kkt(p: QpProblem, s: QpSolution) -> KktReport:
    """Max-norm KKT violations of ``s`` for ``p``.

    Primal feasibility and dual sign violations are absolute; stationarity
    and complementarity are divided by :meth:`QpProblem.scale`.
    """
    x = np.asarray(s.x, dtype=float)
    if x.shape != (p.n,):
        raise ValueError("solution dimension does not match problem")
    scale = p.scale()
    gx = p.ineq_matrix @ x
    lo_i, up_i = s.ineq_duals[:, 0], s.ineq_duals[:, 1]
    lo_b, up_b = s.bound_duals[:, 0], s.bound_duals[:, 1]

    resid = p.gradient(x) - p.eq_matrix.T @ s.eq_duals - p.ineq_matrix.T @ (up_i - lo_i) - (up_b - lo_b)
    stationarity = np.abs(resid).max(initial=0.0) / scale

    viol = [
        np.abs(p.eq_matrix @ x - p.eq_rhs),
        np.maximum(p.ineq_lower - gx, 0.0),
        np.maximum(gx - p.ineq_upper, 0.0),
        np.maximum(p.lower - x, 0.0),
        np.maximum(x - p.upper, 0.0),
    ]
    primal = max(v.max(initial=0.0) for v in viol)

    duals = np.concatenate([s.ineq_duals.ravel(), s.bound_duals.ravel()])
    dual = max(0.0, -duals.min(initial=0.0))

    comp = [
        lo_i * _finite_gap(p.ineq_lower, gx - p.ineq_lower),
        up_i * _finite_gap(p.ineq_upper, p.ineq_upper - gx),
        lo_b * _finite_gap(p.lower, x - p.lower),
        up_b * _finite_gap(p.upper, p.upper - x),
        # a multiplier on an infinite side must vanish
        np.where(np.isfinite(p.ineq_lower), 0.0, lo_i),
        np.where(np.isfinite(p.ineq_upper), 0.0, up_i),
        np.where(np.isfinite(p.lower), 0.0, lo_b),
        np.where(np.isfinite(p.upper), 0.0, up_b),
    ]
    complementarity = max(np.abs(c).max(initial=0.0) for c in comp) / scale
    return KktReport(float(stationarity), float(primal), float(dual), float(complementarity))


def dual_objective(p: QpProblem, s: QpSolution) -> float:
    """Lagrangian dual value at ``s``; an upper bound when stationarity holds."""
    def dot(side, mult):
        ok = np.isfinite(side)
        return float(side[ok] @ mult[ok])

    return (
        float(p.eq_rhs @ s.eq_duals)
        + dot(p.ineq_upper, s.ineq_duals[:, 1])
        - dot(p.ineq_lower, s.ineq_duals[:, 0])
        + dot(p.upper, s.bound_duals[:, 1])
        - dot(p.lower, s.bound_duals[:, 0])
        - float(p.hessian_diag @ (s.x * s.x))
    )


# -- interior point core ------------------------------------------------------

@dataclass
class _Ipm:
    """min 0.5 z'diag(q)z + c'z  s.t.  A z = b,  l <= z <= u."""

    q: np.ndarray
    c: np.ndarray
    a: np.ndarray
    b: np.ndarray
    l: np.ndarray
    u: np.ndarray
    iterations: int = 0
    z: np.ndarray = field(init=False)
    y: np.ndarray = field(init=False)
    zl: np.ndarray = field(init=False)
    zu: np.ndarray = field(init=False)

    def run(self, tol: float, max_iter: int, accept=None) -> bool:
        q, c, a, b, l, u = self.q, self.c, self.a, self.b, self.l, self.u
        n, m = c.size, b.size
        hl, hu = np.isfinite(l), np.isfinite(u)
        lf, uf = np.where(hl, l, 0.0), np.where(hu, u, 0.0)
        z = np.where(hl & hu, 0.5 * (lf + uf), np.where(hl, lf + 1.0, np.where(hu, uf - 1.0, 0.0)))
        y = np.zeros(m)
        zl = np.where(hl, 1.0, 0.0)
        zu = np.where(hu, 1.0, 0.0)
        n_comp = int(hl.sum() + hu.sum())
        bnorm = 1.0 + np.abs(b).max(initial=0.0)
        cnorm = 1.0 + np.abs(c).max(initial=0.0)
        best, best_it = np.inf, 0
        converged = False
        snapshot = None
        tight = min(tol, 1e-11)
        # bound gaps are iterated directly; z - l loses precision near a bound
        v = np.where(hl, z - lf, 1.0)
        w = np.where(hu, uf - z, 1.0)
        # an infeasible or unbounded problem drives the iterates to overflow;
        # that ends the loop (non-finite error) and phase one takes over
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            for it in range(max_iter):
                self.iterations = it
                rd = q * z + c - a.T @ y - zl + zu
                rp = b - a @ z
                mu = (v[hl] @ zl[hl] + w[hu] @ zu[hu]) / max(n_comp, 1)
                err = max(np.abs(rp).max(initial=0.0) / bnorm, np.abs(rd).max(initial=0.0) / cnorm, mu)
                if not np.isfinite(err):
                    break
                if err <= tol:
                    self.z, self.y, self.zl, self.zu = z, y, zl, zu
                    if accept is None or accept(self):
                        converged = True
                        snapshot = (z, y, zl, zu)
                        if err <= tight:
                            break
                    tol *= 0.1
                if err < 0.5 * best:
                    best, best_it = err, it
                elif it - best_it > 60:
                    break

                dl = np.where(hl, zl / v, 0.0)
                du = np.where(hu, zu / w, 0.0)
                h = q + dl + du + 1e-12 * (1.0 + q)
                hinv = 1.0 / h
                if m:
                    normal = (a * hinv) @ a.T
                    normal[np.diag_indices(m)] += 1e-14 * (1.0 + np.abs(np.diag(normal)).max())
                    try:
                        fac = la.cho_factor(normal, check_finite=False)
                        msolve = lambda r: la.cho_solve(fac, r, check_finite=False)  # noqa: E731
                    except la.LinAlgError:
                        pinv = np.linalg.pinv(normal)
                        msolve = lambda r: pinv @ r  # noqa: E731

                def newton(rcl, rcu):
                    r1 = -rd + np.where(hl, rcl / v, 0.0) - np.where(hu, rcu / w, 0.0)
                    if m:
                        dy = msolve(rp - a @ (hinv * r1))
                        dz = hinv * (r1 + a.T @ dy)
                    else:
                        dy = np.zeros(0)
                        dz = hinv * r1
                    dzl = np.where(hl, (rcl - zl * dz) / v, 0.0)
                    dzu = np.where(hu, (rcu + zu * dz) / w, 0.0)
                    return dz, dy, dzl, dzu

                def max_step(x, dx):
                    neg = dx < 0
                    return min(1.0, float(np.min(-x[neg] / dx[neg]))) if np.any(neg) else 1.0

                def steps(dz, dzl, dzu):
                    ap = min(max_step(v[hl], dz[hl]), max_step(w[hu], -dz[hu]))
                    ad = min(max_step(zl[hl], dzl[hl]), max_step(zu[hu], dzu[hu]))
                    return ap, ad

                rcl0 = np.where(hl, -v * zl, 0.0)
                rcu0 = np.where(hu, -w * zu, 0.0)
                dz_a, _, dzl_a, dzu_a = newton(rcl0, rcu0)
                ap, ad = steps(dz_a, dzl_a, dzu_a)
                if np.any(q > 0):
                    ap = ad = min(ap, ad)
                mu_aff = (
                    (v[hl] + ap * dz_a[hl]) @ (zl[hl] + ad * dzl_a[hl])
                    + (w[hu] - ap * dz_a[hu]) @ (zu[hu] + ad * dzu_a[hu])
                ) / max(n_comp, 1)
                sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
                rcl = np.where(hl, sigma * mu - v * zl - dz_a * dzl_a, 0.0)
                rcu = np.where(hu, sigma * mu - w * zu + dz_a * dzu_a, 0.0)
                dz, dy, dzl, dzu = newton(rcl, rcu)
                ap, ad = steps(dz, dzl, dzu)
                eta = max(0.9, 1.0 - 10.0 * mu)
                ap, ad = eta * ap, eta * ad
                if np.any(q > 0):
                    ap = ad = min(ap, ad)
                z = z + ap * dz
                v = np.where(hl, np.maximum(v + ap * dz, 1e-300), 1.0)
                w = np.where(hu, np.maximum(w - ap * dz, 1e-300), 1.0)
                y = y + ad * dy
                zl = np.where(hl, np.maximum(zl + ad * dzl, 1e-300), 0.0)
                zu = np.where(hu, np.maximum(zu + ad * dzu, 1e-300), 0.0)
            else:
                self.iterations = max_iter
        self.z, self.y, self.zl, self.zu = snapshot if snapshot is not None else (z, y, zl, zu)
        return converged


@dataclass
class _Reduced:
    """Problem after fixing ``lower == upper`` variables and dropping void rows."""

    p: QpProblem
    free: np.ndarray
    fixed_x: np.ndarray
    ineq_rows: np.ndarray  # original rows kept as inequalities
    pinned_rows: np.ndarray  # original rows with lower == upper, solved as equalities


def _reduce(p: QpProblem) -> _Reduced:
    fixed = p.lower == p.upper
    free = np.flatnonzero(~fixed)
    xf = np.where(fixed, p.lower, 0.0)
    eq_rhs = p.eq_rhs - p.eq_matrix @ xf
    shift = p.ineq_matrix @ xf
    lo, hi = p.ineq_lower - shift, p.ineq_upper - shift
    # rows the box alone keeps within their limits never bind; dropping them
    # also removes rows of roundoff-level coefficients with huge scaled bounds
    gmin, gmax = _activity_range(p.ineq_matrix[:, free], p.lower[free], p.upper[free])
    void = (gmin >= lo) & (gmax <= hi)
    # a zero-width row would give its slack an empty interior
    pinned = np.isfinite(lo) & (lo == hi) & ~void
    rows = np.flatnonzero((np.isfinite(lo) | np.isfinite(hi)) & ~void & ~pinned)
    pinned = np.flatnonzero(pinned)
    sub = QpProblem(
        p.hessian_diag[free],
        p.linear[free],
        np.vstack([p.eq_matrix[:, free], p.ineq_matrix[pinned][:, free]]),
        np.r_[eq_rhs, lo[pinned]],
        p.ineq_matrix[rows][:, free],
        lo[rows],
        hi[rows],
        p.lower[free],
        p.upper[free],
    )
    return _Reduced(sub, free, xf, rows, pinned)


def _activity_range(mat, lo, hi):
    """Interval bounds of ``mat @ x`` over the box ``[lo, hi]``."""
    with np.errstate(invalid="ignore"):
        low = np.where(mat > 0, mat * lo, np.where(mat < 0, mat * hi, 0.0))
        high = np.where(mat > 0, mat * hi, np.where(mat < 0, mat * lo, 0.0))
    return low.sum(axis=1), high.sum(axis=1)


def _row_infeasible(p: QpProblem, tol: float) -> bool:
    """Interval check: rows that no point of the box can satisfy."""
    emin, emax = _activity_range(p.eq_matrix, p.lower, p.upper)
    if np.any(p.eq_rhs < emin - tol) or np.any(p.eq_rhs > emax + tol):
        return True
    gmin, gmax = _activity_range(p.ineq_matrix, p.lower, p.upper)
    return bool(np.any(p.ineq_upper < gmin - tol) or np.any(p.ineq_lower > gmax + tol))


def _build_ipm(p: QpProblem):
    """Scaled standard form with one slack per inequality row."""
    n, me, mi = p.n, p.eq_rhs.size, p.ineq_lower.size
    obj_scale = p.scale()
    e_scale = np.maximum(np.abs(p.eq_matrix).max(axis=1, initial=0.0), 1e-300)
    e_scale = np.where(np.abs(p.eq_matrix).max(axis=1, initial=0.0) > 0, e_scale, 1.0)
    g_norm = np.abs(p.ineq_matrix).max(axis=1, initial=0.0)
    g_scale = np.where(g_norm > 0, g_norm, 1.0)
    a = np.zeros((me + mi, n + mi))
    a[:me, :n] = p.eq_matrix / e_scale[:, None]
    a[me:, :n] = p.ineq_matrix / g_scale[:, None]
    a[me:, n:] = -np.eye(mi)
    b = np.r_[p.eq_rhs / e_scale, np.zeros(mi)]
    q = np.r_[-2.0 * p.hessian_diag, np.zeros(mi)] / obj_scale
    c = np.r_[-p.linear, np.zeros(mi)] / obj_scale
    l = np.r_[p.lower, p.ineq_lower / g_scale]
    u = np.r_[p.upper, p.ineq_upper / g_scale]
    return _Ipm(q, c, a, b, l, u), obj_scale, e_scale, g_scale


def _extract(p: QpProblem, ipm: _Ipm, obj_scale, e_scale, g_scale) -> QpSolution:
    n, me = p.n, p.eq_rhs.size
    x = np.clip(ipm.z[:n], p.lower, p.upper)
    eq_duals = -ipm.y[:me] * obj_scale / e_scale
    ineq = np.column_stack([ipm.zl[n:], ipm.zu[n:]]) * obj_scale / g_scale[:, None]
    bound = np.column_stack([ipm.zl[:n], ipm.zu[:n]]) * obj_scale
    return QpSolution(x, eq_duals, ineq, bound, OPTIMAL, np.inf, ipm.iterations, p.objective(x))


def _solve_core(p: QpProblem, tol: float, max_iter: int) -> QpSolution:
    ipm, obj_scale, e_scale, g_scale = _build_ipm(p)

    def accept(state):
        s = _extract(p, state, obj_scale, e_scale, g_scale)
        return verify_kkt(p, s).worst <= tol

    ok = ipm.run(min(1e-8, tol), max_iter, accept)
    sol = _extract(p, ipm, obj_scale, e_scale, g_scale)
    sol.kkt_residual = verify_kkt(p, sol).worst
    sol.status = OPTIMAL if ok else ITERATION_LIMIT
    return sol


def _phase_one_violation(p: QpProblem, max_iter: int) -> float | None:
    """Least total constraint violation over the box (elastic LP); None if
    that LP did not converge either."""
    n, me, mi = p.n, p.eq_rhs.size, p.ineq_lower.size
    k = 2 * (me + mi)
    box = np.where(np.isfinite(p.lower), np.abs(p.lower), 0.0) + np.where(np.isfinite(p.upper), np.abs(p.upper), 0.0)
    rows = np.vstack([p.eq_matrix, p.ineq_matrix])
    rhs = np.r_[p.eq_rhs, np.where(np.isfinite(p.ineq_lower), p.ineq_lower, 0.0)]
    big = float(np.abs(rows).sum(axis=1).max(initial=0.0) * box.max(initial=1.0) + np.abs(rhs).max(initial=0.0) + 1.0)
    elastic = np.zeros((me + mi, k))
    elastic[np.arange(me + mi), np.arange(me + mi)] = 1.0
    elastic[np.arange(me + mi), me + mi + np.arange(me + mi)] = -1.0
    aux = QpProblem(
        np.zeros(n + k),
        np.r_[np.zeros(n), -np.ones(k)],
        np.hstack([p.eq_matrix, elastic[:me]]),
        p.eq_rhs,
        np.hstack([p.ineq_matrix, elastic[me:]]),
        p.ineq_lower,
        p.ineq_upper,
        np.r_[p.lower, np.zeros(k)],
        np.r_[p.upper, np.full(k, big)],
    )
    s = _solve_core(aux, 1e-9, max_iter)
    return float(s.x[n:].sum()) if s.status == OPTIMAL else None


def _snap(p: QpProblem, x0: np.ndarray, snap: float) -> np.ndarray:
    """Put variables within ``snap`` of a bound on it and correct the others
    (minimum norm) so equality rows and nearly active rows hold exactly."""
    x = x0.copy()
    width = np.where(np.isfinite(p.upper - p.lower), p.upper - p.lower, 1.0)
    tol_x = snap * np.maximum(1.0, width)
    at_lo = np.isfinite(p.lower) & (x - p.lower <= tol_x)
    at_hi = np.isfinite(p.upper) & (p.upper - x <= tol_x) & ~at_lo
    x[at_lo] = p.lower[at_lo]
    x[at_hi] = p.upper[at_hi]
    free = ~(at_lo | at_hi)

    gx = p.ineq_matrix @ x
    reach = np.abs(p.ineq_matrix) @ np.maximum(1.0, width)
    act_lo = np.isfinite(p.ineq_lower) & (gx - p.ineq_lower <= snap * reach)
    act_hi = np.isfinite(p.ineq_upper) & (p.ineq_upper - gx <= snap * reach) & ~act_lo
    rows = np.vstack([p.eq_matrix, p.ineq_matrix[act_lo], p.ineq_matrix[act_hi]])
    target = np.r_[p.eq_rhs, p.ineq_lower[act_lo], p.ineq_upper[act_hi]]
    if rows.shape[0] and free.any():
        step, *_ = la.lstsq(rows[:, free], target - rows @ x, lapack_driver="gelsd")
        x[free] += step
    return x


def _polish(p: QpProblem, s: QpSolution, tol: float) -> QpSolution:
    """Active-set cleanup of an interior-point answer.

    Candidates come from snapping at several radii; among those at least as
    feasible as the interior point and within ``tol`` in the KKT sense, the one
    with the highest objective wins. Every feasible point bounds the optimum
    from below, so a wrong snap can only lose, never win.
    """
    base = verify_kkt(p, s)
    feas_cap = max(base.primal_feas, 1e-12)
    best, best_obj = s, s.objective
    for snap in (1e-9, 1e-8, 1e-7, 1e-6, 1e-5):
        x = _snap(p, s.x, snap)
        cand = QpSolution(x, s.eq_duals, s.ineq_duals, s.bound_duals, s.status, np.inf, s.iterations,
                          p.objective(x))
        rep = verify_kkt(p, cand)
        if rep.primal_feas <= feas_cap and rep.worst <= tol and cand.objective > best_obj:
            cand.kkt_residual = rep.worst
            best, best_obj = cand, cand.objective
    return best


def solve_concave_qp(p: QpProblem, tol: float = 1e-6, max_iter: int = 10000) -> QpSolution:
    """Maximize ``p``; deterministic for identical inputs.

    ``status`` is ``optimal`` only when every KKT residual is <= ``tol``.
    """
    n = p.n
    red = _reduce(p)
    sub = red.p
    empty = QpSolution(
        red.fixed_x.copy(),
        np.zeros(p.eq_rhs.size),
        np.zeros((p.ineq_lower.size, 2)),
        np.zeros((n, 2)),
        INFEASIBLE,
        np.inf,
    )
    if _row_infeasible(sub, tol):
        empty.objective = p.objective(empty.x)
        return empty

    if sub.n == 0:
        s = QpSolution(np.zeros(0), np.zeros(sub.eq_rhs.size), np.zeros((sub.ineq_lower.size, 2)), np.zeros((0, 2)),
                       OPTIMAL, 0.0)
        feas = verify_kkt(sub, s).primal_feas
        if feas > tol:
            empty.objective = p.objective(empty.x)
            return empty
    else:
        s = _solve_core(sub, tol, max_iter)
        if s.status == OPTIMAL:
            s = _polish(sub, s, tol)
        if s.status != OPTIMAL:
            violation = _phase_one_violation(sub, max_iter)
            if violation is not None and violation > tol:
                log.info("QP infeasible: minimal constraint violation %.3g", violation)
                s.status = INFEASIBLE

    x = red.fixed_x.copy()
    x[red.free] = s.x
    me = p.eq_rhs.size
    eq_duals, pinned_duals = s.eq_duals[:me], s.eq_duals[me:]
    ineq = np.zeros((p.ineq_lower.size, 2))
    ineq[red.ineq_rows] = s.ineq_duals
    ineq[red.pinned_rows, 1] = np.maximum(pinned_duals, 0.0)
    ineq[red.pinned_rows, 0] = np.maximum(-pinned_duals, 0.0)
    bound = np.zeros((n, 2))
    bound[red.free] = s.bound_duals
    fixed = np.setdiff1d(np.arange(n), red.free)
    if fixed.size:
        # both bounds active at a fixed variable: absorb the stationarity gap
        g = (p.gradient(x) - p.eq_matrix.T @ eq_duals - p.ineq_matrix.T @ (ineq[:, 1] - ineq[:, 0]))[fixed]
        bound[fixed, 1] = np.maximum(g, 0.0)
        bound[fixed, 0] = np.maximum(-g, 0.0)
    out = QpSolution(x, eq_duals, ineq, bound, s.status, np.inf, s.iterations, p.objective(x))
    out.kkt_residual = verify_kkt(p, out).worst
    if out.status == OPTIMAL and out.kkt_residual > tol:
        out.status = ITERATION_LIMIT
    return out


def dump_problem(p: QpProblem) -> str:
    """Plain-text listing of variables, objective terms and constraint rows."""
    def num(v):
        return repr(float(v))

    out = [f"variables {p.n}"]
    for i in range(p.n):
        out.append(f"x{i} in [{num(p.lower[i])}, {num(p.upper[i])}]")
    out.append("maximize")
    for i in range(p.n):
        out.append(f"  {num(p.linear[i])} x{i} + {num(p.hessian_diag[i])} x{i}^2")

    def row(coeffs):
        return " + ".join(f"{num(v)} x{i}" for i, v in enumerate(coeffs) if v != 0) or "0"

    out.append(f"equalities {p.eq_rhs.size}")
    for k in range(p.eq_rhs.size):
        out.append(f"  {row(p.eq_matrix[k])} = {num(p.eq_rhs[k])}")
    out.append(f"inequalities {p.ineq_lower.size}")
    for k in range(p.ineq_lower.size):
        out.append(f"  {num(p.ineq_lower[k])} <= {row(p.ineq_matrix[k])} <= {num(p.ineq_upper[k])}")
    return "\n".join(out) + "\n"
