"""GMV-optimal inverse eigenvalues as a convex QP on a fixed eigenvector basis.

The slack-variable form has ``n(n+5)/2`` variables (weights, the symmetric
precision matrix and the inverse eigenvalues ``zeta``). Substituting the
precision matrix into the weights gives ``w = V (b * zeta)`` with ``b = V'e``,
so the problem collapses to

    minimize    zeta' Q zeta,   Q_kl = b_k b_l v_k' Sigma_out v_l
    subject to  sum_k b_k^2 zeta_k = 1,  zeta >= 0   [, zeta nondecreasing]

Both variants are solved in the same nonnegative form: the ordered cone is
parametrised by increments ``zeta = cumsum(u)`` with ``u >= 0``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .spectral import CovarianceMatrix, DimensionError, EigenSystem, ValidationError

__all__ = [
    "FullDims",
    "InfiniteEigenvalueError",
    "QpProblem",
    "QpSolution",
    "SolverOptions",
    "brute_force_min",
    "build_reduced_qp",
    "extract_filtered_eigenvalues",
    "kkt_residual",
    "project_weighted_simplex",
    "solve_qp",
]

Status = Literal["converged", "max_iterations", "infeasible"]

# |b_k| below this fraction of ||b|| is treated as an eigenvector orthogonal to e
ZERO_B_TOL = 1e-12


class InfiniteEigenvalueError(ValidationError):
    def __init__(self, indices):
        self.indices = list(indices)
        super().__init__(f"zeta is zero at indices {self.indices}; filtered eigenvalue would be infinite")


@dataclass(frozen=True)
class FullDims:
    """Size of the unreduced slack-variable problem."""

    variables: int
    constraints: int
    ordering_constraints: int = 0

    @classmethod
    def for_size(cls, n: int, ordered: bool = False) -> "FullDims":
        return cls(n * (n + 5) // 2, (n * n + 5 * n + 2) // 2, n - 1 if ordered else 0)


@dataclass(frozen=True, eq=False)
class QpProblem:
    q_matrix: NDArray[np.float64]
    equality_coeffs: NDArray[np.float64]
    b_vector: NDArray[np.float64]
    ordered: bool
    full_dims: FullDims
    basis: NDArray[np.float64] = field(repr=False)
    sigma_out: NDArray[np.float64] = field(repr=False)

    @property
    def n(self) -> int:
        return self.b_vector.shape[0]


@dataclass(frozen=True, eq=False)
class QpSolution:
    """``weights``/``objective`` are NaN when ``status == "infeasible"``."""

    zeta: NDArray[np.float64]
    weights: NDArray[np.float64]
    objective: float
    kkt_residual: float
    status: Status
    iterations: int = 0


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iterations: int | None = None  # default 100 * n^2
    polish: bool = True


def build_reduced_qp(eig_in: EigenSystem, sigma_out: CovarianceMatrix, ordered: bool = False) -> QpProblem:
    v = eig_in.eigenvectors
    s = sigma_out.values
    if s.shape != v.shape:
        raise DimensionError(f"basis is {v.shape}, out-of-sample covariance is {s.shape}")
    n = v.shape[0]
    b = v.sum(axis=0)
    m = v.T @ s @ v
    q = b[:, None] * m * b[None, :]
    q = 0.5 * (q + q.T)
    for arr in (q, b):
        arr.setflags(write=False)
    a = b * b
    a.setflags(write=False)
    return QpProblem(q, a, b, bool(ordered), FullDims.for_size(n, ordered), v, s)


def project_weighted_simplex(y: NDArray[np.float64], c: NDArray[np.float64]) -> NDArray[np.float64]:
    """Euclidean projection of ``y`` onto ``{x >= 0, c'x = 1}`` for ``c > 0``.

    The projection is ``max(y - tau c, 0)``; ``tau`` is found by sorting the
    breakpoints ``y_k / c_k``.
    """
    ratio = y / c
    order = np.argsort(-ratio)
    cs = c[order]
    ys = y[order]
    cum_cy = np.cumsum(cs * ys)
    cum_cc = np.cumsum(cs * cs)
    taus = (cum_cy - 1.0) / cum_cc
    # largest support size whose tau keeps the last included entry positive
    valid = ratio[order] - taus > 0
    k = int(np.flatnonzero(valid)[-1]) if valid.any() else 0
    return np.maximum(y - taus[k] * c, 0.0)


def _nonneg_form(problem: QpProblem):
    """Return ``(H, c, lift)`` with the problem as ``min x'Hx, c'x = 1, x >= 0``.

    ``lift`` maps a solution ``x`` back to the full ``zeta`` vector (before the
    treatment of eigenvectors orthogonal to e).
    """
    n = problem.n
    q = problem.q_matrix
    a = problem.equality_coeffs
    b = problem.b_vector
    relevant = np.abs(b) > ZERO_B_TOL * max(float(np.linalg.norm(b)), 1.0)
    if not problem.ordered:
        idx = np.flatnonzero(relevant)
        h = q[np.ix_(idx, idx)]

        def lift(x):
            zeta = np.zeros(n)
            zeta[idx] = x
            return zeta

        return h, a[idx], lift, idx
    lower = np.tril(np.ones((n, n)))
    c_full = lower.T @ a
    idx = np.flatnonzero(c_full > (ZERO_B_TOL**2) * max(float(a.sum()), 1.0))
    lt = lower[:, idx]
    h = lt.T @ q @ lt

    def lift(x):
        u = np.zeros(n)
        u[idx] = x
        return np.cumsum(u)

    return 0.5 * (h + h.T), c_full[idx], lift, idx


def kkt_residual(h: NDArray[np.float64], c: NDArray[np.float64], x: NDArray[np.float64]) -> float:
    """Scaled KKT violation of ``min x'Hx s.t. c'x = 1, x >= 0`` at ``x``.

    With gradient ``g = 2Hx``, equality multiplier ``nu`` fitted on the support
    and bound multipliers ``mu = max(g - nu c, 0)``, returns the larger of the
    dual infeasibility ``max(-(g - nu c))`` and the complementarity
    ``max(mu * x) / max(x)``, both divided by ``max|H|``.
    """
    g = 2.0 * h @ x
    support = x > 0
    if not support.any():
        return math.inf
    cs = c[support]
    nu = float(cs @ g[support]) / float(cs @ cs)
    r = g - nu * c
    mu = np.maximum(r, 0.0)
    stat = float(np.max(-r, initial=0.0))
    comp = float(np.max(mu * x)) / float(np.max(x))
    scale = max(float(np.max(np.abs(h))), np.finfo(float).tiny)
    return max(stat, comp) / scale


class _ScaledProblem:
    """``min y'Gy, s'y = 1, y >= 0`` with ``x = y / s`` and ``s = sqrt(c)``."""

    def __init__(self, h, c):
        self.s = np.sqrt(c)
        self.g = h / np.outer(self.s, self.s)
        self.g = 0.5 * (self.g + self.g.T)
        top = float(np.linalg.eigvalsh(self.g)[-1]) if self.g.size else 0.0
        self.lipschitz = max(2.0 * top, np.finfo(float).tiny)
        self.scale = max(float(np.max(np.abs(self.g))), np.finfo(float).tiny)

    def project(self, y):
        return project_weighted_simplex(y, self.s)

    def objective(self, y):
        return float(y @ self.g @ y)

    def residual(self, y):
        # gradient-mapping norm, zero exactly at the optimum
        step = self.project(y - 2.0 * self.g @ y / self.lipschitz)
        return float(np.max(np.abs(y - step))) * self.lipschitz / self.scale


def _projected_gradient(sp: _ScaledProblem, y0, tol: float, max_iter: int, check_every: int = 10):
    """FISTA with gradient-based adaptive restart."""
    y = sp.project(y0)
    z = y.copy()
    t = 1.0
    inv_l = 1.0 / sp.lipschitz
    it = 0
    for it in range(1, max_iter + 1):
        y_new = sp.project(z - 2.0 * inv_l * (sp.g @ z))
        if (z - y_new) @ (y_new - y) > 0.0:
            t = 1.0
            z = y_new
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            z = y_new + ((t - 1.0) / t_new) * (y_new - y)
            t = t_new
        y = y_new
        if it % check_every == 0 and sp.residual(y) <= tol:
            break
    return y, it


def _null_basis(s_free):
    m = s_free.shape[0]
    full, _ = np.linalg.qr(s_free.reshape(m, 1), mode="complete")
    return full[:, 1:]


def _active_set(sp: _ScaledProblem, y0, max_iter: int):
    """Primal active-set method started from a feasible point.

    Each step minimises over the free face using a null-space basis of the
    equality row; zero-curvature descent directions are followed to the
    nearest bound. Returns ``(y, iterations, ok)``.
    """
    s = sp.s
    gmat = sp.g
    y = np.where(y0 > 1e-14 * float(np.max(y0)), y0, 0.0)
    y = y / float(s @ y)
    free = y > 0
    curv_tol = 1e-12 * sp.scale
    for it in range(1, max_iter + 1):
        grad = 2.0 * gmat @ y
        f_idx = np.flatnonzero(free)
        y_f = y[f_idx]
        direction = None
        newton = True
        y_top = float(np.max(y_f))
        nu = float(s[f_idx] @ grad[f_idx]) / float(s[f_idx] @ s[f_idx])
        face_stationary = float(np.max(np.abs(grad[f_idx] - nu * s[f_idx]))) <= 1e-11 * sp.scale
        if f_idx.size > 1 and not face_stationary:
            basis = _null_basis(s[f_idx])
            reduced = 2.0 * basis.T @ gmat[np.ix_(f_idx, f_idx)] @ basis
            evals, evecs = np.linalg.eigh(0.5 * (reduced + reduced.T))
            coef = evecs.T @ (basis.T @ grad[f_idx])
            pos = evals > curv_tol
            flat = ~pos
            candidates = []
            null_part = evecs[:, flat] @ coef[flat]
            # zero-curvature component counts only if it is not round-off
            if np.linalg.norm(null_part) > 1e-9 * float(np.linalg.norm(coef)):
                candidates.append((-(basis @ null_part), False))
            candidates.append((-(basis @ (evecs[:, pos] @ (coef[pos] / evals[pos]))), True))
            for cand, is_newton in candidates:
                if float(np.max(np.abs(cand))) > 1e-13 * y_top:
                    direction, newton = cand, is_newton
                    break
        if direction is None:
            mult = grad - nu * s
            mult[f_idx] = np.inf
            j = int(np.argmin(mult))
            if mult[j] >= -1e-13 * sp.scale * max(1.0, float(np.max(y))):
                return y, it, True
            free[j] = True
            continue
        alpha = 1.0 if newton else math.inf
        if not newton:
            curv = float(direction @ gmat[np.ix_(f_idx, f_idx)] @ direction)
            slope = float(grad[f_idx] @ direction)
            if curv > 0:
                alpha = -slope / (2.0 * curv)
        neg = direction < 0
        blocking = None
        if neg.any():
            ratios = -y_f[neg] / direction[neg]
            k = int(np.argmin(ratios))
            if ratios[k] < alpha:
                alpha = float(ratios[k])
                blocking = f_idx[np.flatnonzero(neg)[k]]
        if not math.isfinite(alpha):
            return y, it, False
        y[f_idx] = y_f + alpha * direction
        if blocking is not None:
            y[blocking] = 0.0
        dropped = free & (y <= 0.0)
        y[dropped] = 0.0
        free &= ~dropped
        y = y / float(s @ y)
    return y, max_iter, False


def solve_qp(problem: QpProblem, opts: SolverOptions | None = None) -> QpSolution:
    """Minimise the realized GMV variance over nonnegative inverse eigenvalues."""
    opts = opts or SolverOptions()
    n = problem.n
    max_iter = opts.max_iterations if opts.max_iterations is not None else 100 * n * n
    h, c, lift, idx = _nonneg_form(problem)
    if idx.size == 0:
        nan = np.full(n, np.nan)
        return QpSolution(nan, nan.copy(), math.nan, math.inf, "infeasible")

    sp = _ScaledProblem(h, c)
    a = problem.equality_coeffs
    zeta0 = a / float(a @ a)
    if problem.ordered:
        start = np.diff(zeta0, prepend=0.0)[idx]
    else:
        start = zeta0[idx]
    y = sp.project(sp.s * start)

    iterations = 0
    status: Status = "max_iterations"
    # coarse first-order phase, then exact active-set polish; fall back to the
    # first-order method alone if polishing fails
    budget = min(max_iter, 50 * n + 200) if opts.polish else max_iter
    y, used = _projected_gradient(sp, y, tol=1e-4 if opts.polish else opts.tolerance, max_iter=budget)
    iterations += used
    x = y / sp.s
    if opts.polish:
        y_as, used, ok = _active_set(sp, y, max_iter=max(10 * n + 50, 1))
        iterations += used
        x_as = y_as / sp.s
        if ok and sp.objective(y_as) <= sp.objective(y) + 1e-12 * sp.scale:
            x = x_as
        elif iterations < max_iter:
            y, used = _projected_gradient(sp, y, tol=opts.tolerance, max_iter=max_iter - iterations)
            iterations += used
            x = y / sp.s
    x = np.maximum(x, 0.0)
    x = x / float(c @ x)
    residual = kkt_residual(h, c, x)
    if residual <= opts.tolerance:
        status = "converged"

    zeta = lift(x)
    zeta = _fill_orthogonal_modes(zeta, problem)
    raw = problem.basis @ (problem.b_vector * zeta)
    weights = raw / raw.sum()
    objective = max(float(weights @ problem.sigma_out @ weights), 0.0)
    zeta.setflags(write=False)
    weights.setflags(write=False)
    return QpSolution(zeta, weights, objective, residual, status, iterations)


def _fill_orthogonal_modes(zeta: NDArray[np.float64], problem: QpProblem) -> NDArray[np.float64]:
    """Give objective-irrelevant entries (``b_k = 0``) finite, feasible values."""
    b = problem.b_vector
    irrelevant = np.abs(b) <= ZERO_B_TOL * max(float(np.linalg.norm(b)), 1.0)
    if problem.ordered or not irrelevant.any():
        # in the ordered form these entries sit on the monotone chain already
        return zeta
    zeta = zeta.copy()
    positive = zeta[~irrelevant] > 0
    zeta[irrelevant] = float(np.mean(zeta[~irrelevant][positive]))
    return zeta


def extract_filtered_eigenvalues(solution: QpSolution, target_trace: float) -> NDArray[np.float64]:
    """Invert ``zeta`` and rescale so the eigenvalues sum to ``target_trace``."""
    if not target_trace > 0:
        raise ValidationError("target_trace must be positive")
    zeta = np.asarray(solution.zeta, dtype=np.float64)
    zero = np.flatnonzero(~(zeta > 0))
    if zero.size:
        raise InfiniteEigenvalueError(zero)
    lam = 1.0 / zeta
    return lam * (target_trace / lam.sum())


def _compositions(total: int, parts: int, chunk: int = 200_000):
    """Yield arrays of nonnegative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        yield np.array([[total]])
        return
    buf = []
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        buf.append(bars)
        if len(buf) == chunk:
            yield _bars_to_counts(np.array(buf), total, parts)
            buf = []
    if buf:
        yield _bars_to_counts(np.array(buf), total, parts)


def _bars_to_counts(bars, total, parts):
    edges = np.hstack([np.full((bars.shape[0], 1), -1), bars, np.full((bars.shape[0], 1), total + parts - 1)])
    return np.diff(edges, axis=1) - 1


def brute_force_min(problem: QpProblem, grid_resolution: int = 200) -> float:
    """Grid search over the feasible set followed by pairwise coordinate descent.

    Used as an independent check on :func:`solve_qp` for ``n <= 4``. The
    returned value upper-bounds the true optimum.
    """
    n = problem.n
    if n > 4:
        raise DimensionError(f"brute force supports n <= 4, got {n}")
    if grid_resolution < 1:
        raise ValidationError("grid_resolution must be positive")
    q = np.asarray(problem.q_matrix)
    a = np.asarray(problem.equality_coeffs)
    if problem.ordered:
        # zeta_k = u_1 + ... + u_k with u >= 0
        tri = np.tril(np.ones((n, n)))
        hess = tri.T @ q @ tri
        weight = tri.T @ a
    else:
        hess = q
        weight = a
    keep = np.flatnonzero(weight > 1e-24 * max(float(a.sum()), 1.0))
    if keep.size == 0:
        return math.inf
    hess = hess[np.ix_(keep, keep)]
    weight = weight[keep]
    # simplex coordinates p_k = weight_k u_k with sum(p) = 1
    gmat = hess / np.outer(weight, weight)
    best_val = math.inf
    best_p = None
    for counts in _compositions(grid_resolution, keep.size):
        p = counts / grid_resolution
        vals = np.einsum("ij,jk,ik->i", p, gmat, p)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_p = p[i].copy()
    return _pairwise_descent(gmat, best_p, best_val)


def _pairwise_descent(gmat, p, value, sweeps: int = 100_000):
    m = p.size
    if m == 1:
        return value
    for _ in range(sweeps):
        improved = False
        for i in range(m):
            for j in range(m):
                if i == j or p[j] <= 0:
                    continue
                g = gmat @ p
                curv = gmat[i, i] + gmat[j, j] - 2.0 * gmat[i, j]
                slope = 2.0 * (g[i] - g[j])
                if slope >= 0:
                    continue
                step = p[j] if curv <= 0 else min(p[j], -slope / (2.0 * curv))
                candidate = p.copy()
                candidate[i] += step
                candidate[j] -= step
                new_val = float(candidate @ gmat @ candidate)
                if new_val < value:
                    p, value, improved = candidate, new_val, True
        if not improved:
            break
    return value
