"""
Coefficient estimation for PCE measurement matrices.

Every solver works on a column-normalized copy of the dictionary and maps
the coefficients back on output, so the l1 terms below are measured on the
normalized scale (a column-norm weighted l1 norm of the returned vector).

Solvers
-------
least_squares            dense fit through a QR factorization
bpdn                     min ||c||_1  s.t. ||u - Psi c||_2 <= eps
lasso                    min ||u - Psi c||_2 + lam ||c||_1
l1l2                     min ||c||_1 - ||c||_2  s.t. ||u - Psi c||_2 <= eps
support_enumeration_oracle   exhaustive l0 minimization (tiny problems)
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .basis import MeasurementMatrix, MultiIndexSet, evaluate_basis_matrix
from .exceptions import (BasisTooLargeError, ConvergenceError, DimensionError,
                         InfeasibleError, RankDeficientError)

FEAS_RTOL = 1e-6
# absolute slack, relative to ||u||, so that eps = 0 stays attainable in floating point
FEAS_ATOL = 1e-12
ZERO_RTOL = 1e-8
ZERO_ATOL = 1e-12
COND_LIMIT = 1e12
ORACLE_CAP = 200_000


class SolverTag(str, enum.Enum):
    LS = "LS"
    BPDN = "BPDN"
    LASSO = "LASSO"
    L1L2 = "L1L2"
    ORACLE = "ORACLE"


@dataclass(frozen=True)
class ToleranceSpec:
    """Residual budget.

    With ``relative=True`` the stored ``value`` is a ratio tau in [0, 1]
    and the budget is ``tau * ||u||_2``; otherwise ``value`` is eps itself.
    """

    value: float = 0.0
    relative: bool = False

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("tolerance must be non-negative")
        if self.relative and self.value > 1:
            raise ValueError("relative tolerance must lie in [0, 1]")

    @classmethod
    def absolute(cls, eps: float) -> "ToleranceSpec":
        return cls(float(eps), False)

    @classmethod
    def rel(cls, tau: float) -> "ToleranceSpec":
        return cls(float(tau), True)

    def epsilon(self, u) -> float:
        if self.relative:
            return self.value * float(np.linalg.norm(u))
        return self.value

    def to_dict(self):
        return {"value": self.value, "relative": self.relative}


def default_zero_tolerance(c) -> float:
    c = np.asarray(c, dtype=float)
    cmax = float(np.max(np.abs(c))) if c.size else 0.0
    return max(ZERO_RTOL * cmax, ZERO_ATOL)


def count_nonzeros(c, zero_tolerance: float | None = None) -> int:
    """Number of entries with magnitude above ``zero_tolerance``.

    The default threshold is ``1e-8 * max|c|`` with an absolute floor of
    1e-12, which keeps the count invariant under rescaling of the data.
    """
    c = np.asarray(c, dtype=float)
    tol = default_zero_tolerance(c) if zero_tolerance is None else zero_tolerance
    return int(np.count_nonzero(np.abs(c) > tol))


@dataclass(frozen=True)
class SparseSolution:
    """Coefficients of a PCE together with the basis they refer to.

    ``active_dims[j]`` is the ambient input index feeding basis coordinate
    ``j``. ``info`` carries solver metadata (iterations, matched lambda,
    objective history, ...).
    """

    coefficients: np.ndarray
    basis: MultiIndexSet | None
    active_dims: tuple
    residual_norm: float
    nnz: int
    solver_tag: SolverTag
    ambient_dim: int | None = None
    info: dict = field(default_factory=dict, compare=False)

    @property
    def support(self) -> np.ndarray:
        c = self.coefficients
        return np.flatnonzero(np.abs(c) > default_zero_tolerance(c))

    def design(self, points) -> np.ndarray:
        if self.basis is None:
            raise DimensionError("solution has no basis attached")
        return evaluate_basis_matrix(self.basis, points, self.active_dims)

    def predict(self, points) -> np.ndarray:
        """Evaluate the expansion at ambient points of shape (N, d)."""
        return self.design(points) @ self.coefficients

    def ambient_coefficients(self) -> dict:
        """Map ambient multi-index tuples to nonzero coefficients."""
        d = self.ambient_dim
        if d is None:
            d = max(self.active_dims) + 1 if self.active_dims else 0
        out = {}
        for alpha, c in zip(self.basis, self.coefficients):
            if c == 0.0:
                continue
            full = [0] * d
            for j, a in zip(self.active_dims, alpha):
                full[j] = a
            key = tuple(full)
            out[key] = out.get(key, 0.0) + float(c)
        return out

    def with_ambient_dim(self, d: int) -> "SparseSolution":
        return replace(self, ambient_dim=int(d))

    def summary(self) -> dict:
        return {
            "solver": self.solver_tag.value,
            "nnz": self.nnz,
            "residual_norm": self.residual_norm,
            "active_dims": list(self.active_dims),
            "order": None if self.basis is None else self.basis.max_order,
            "n_terms": int(self.coefficients.size),
        }


def _unpack(Psi):
    if isinstance(Psi, MeasurementMatrix):
        return Psi.entries, Psi.basis, Psi.dims
    A = np.asarray(Psi, dtype=float)
    if A.ndim != 2:
        raise DimensionError("measurement matrix must be two-dimensional")
    return A, None, ()


def _normalized(A):
    norms = np.linalg.norm(A, axis=0)
    scale = np.where(norms > 0, norms, 1.0)
    return A / scale, scale


def _make_solution(c, A, u, basis, dims, tag, info=None):
    res = float(np.linalg.norm(u - A @ c))
    return SparseSolution(
        coefficients=c, basis=basis, active_dims=tuple(dims), residual_norm=res,
        nnz=count_nonzeros(c), solver_tag=tag, info=dict(info or {}))


def is_feasible(residual: float, eps: float, unorm: float) -> bool:
    return residual <= eps * (1.0 + FEAS_RTOL) + FEAS_ATOL * unorm


# ---------------------------------------------------------------------------
# least squares

def least_squares(Psi, u, cond_limit: float = COND_LIMIT) -> SparseSolution:
    """Dense least-squares fit via Householder QR.

    Raises
    ------
    RankDeficientError
        When the system is underdetermined or its condition estimate
        exceeds ``cond_limit``.
    """
    A, basis, dims = _unpack(Psi)
    u = np.asarray(u, dtype=float)
    M, K = A.shape
    if M < K:
        raise RankDeficientError(f"underdetermined system ({M} rows, {K} columns)")
    An, scale = _normalized(A)
    Q, R = sla.qr(An, mode="economic")
    sv = np.linalg.svd(R, compute_uv=False)
    cond = np.inf if sv[-1] == 0 else sv[0] / sv[-1]
    if cond > cond_limit:
        raise RankDeficientError(f"condition estimate {cond:.3g} exceeds {cond_limit:g}")
    x = sla.solve_triangular(R, Q.T @ u)
    c = x / scale
    return _make_solution(c, A, u, basis, dims, SolverTag.LS, {"condition": float(cond)})


# ---------------------------------------------------------------------------
# l1 homotopy

def _lasso_homotopy(A, q, u=None, eps=None, mu_target=None, max_steps=10_000):
    """Follow the solution path of  min 0.5 x'A'Ax - q'x + mu ||x||_1.

    ``A`` must have unit-norm columns. The path is piecewise linear in mu
    and is traced from mu = max|q| (where x = 0) downwards until either
    ``mu_target`` is reached or, in residual mode (q = A'u), the residual
    ||u - Ax|| grows to ``eps``. Returns (x, mu, steps, reached) where
    ``reached`` is False when the path ended at mu = 0 without meeting the
    residual target.
    """
    M, K = A.shape
    x = np.zeros(K)
    residual_mode = mu_target is None
    mu = float(np.max(np.abs(q))) if K else 0.0
    if residual_mode and np.linalg.norm(u) <= eps:
        return x, mu, 0, True
    if not residual_mode and mu_target >= mu:
        return x, mu, 0, True
    if mu == 0.0:
        return x, 0.0, 0, bool(residual_mode and np.linalg.norm(u) <= eps)

    active = [int(np.argmax(np.abs(q)))]
    signs = [float(np.sign(q[active[0]]))]
    excluded = np.zeros(K, dtype=bool)
    just_added, just_dropped = active[0], -1

    for step in range(1, max_steps + 1):
        AA = A[:, active]
        try:
            cf = sla.cho_factor(AA.T @ AA, check_finite=False)
            if np.min(np.abs(np.diag(cf[0]))) < 1e-7:
                raise np.linalg.LinAlgError
        except (np.linalg.LinAlgError, sla.LinAlgError):
            # column is numerically dependent on the current active set
            bad = active.pop()
            signs.pop()
            excluded[bad] = True
            if not active:
                raise ConvergenceError("homotopy broke down on a degenerate dictionary")
            continue
        s = np.asarray(signs)
        p = sla.cho_solve(cf, q[active], check_finite=False)
        dv = sla.cho_solve(cf, s, check_finite=False)
        # x_A(mu) = p - mu dv ; corr(mu) = a0 + mu v
        a0 = q - A.T @ (AA @ p)
        v = A.T @ (AA @ dv)

        mask = np.ones(K, dtype=bool)
        mask[active] = False
        mask &= ~excluded
        if just_dropped >= 0:
            mask[just_dropped] = False
        cand_mu, cand_idx, cand_kind = 0.0, -1, None
        if len(active) < min(M, K):
            with np.errstate(divide="ignore", invalid="ignore"):
                up = a0 / (1.0 - v)
                dn = -a0 / (1.0 + v)
            for arr in (up, dn):
                arr = np.where(mask & np.isfinite(arr) & (arr > 0) & (arr < mu), arr, 0.0)
                j = int(np.argmax(arr))
                if arr[j] > cand_mu:
                    cand_mu, cand_idx, cand_kind = float(arr[j]), j, "add"
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = p / dv
        for pos, j in enumerate(active):
            if j == just_added:
                continue
            t = cross[pos]
            if np.isfinite(t) and 0 < t < mu and t > cand_mu:
                cand_mu, cand_idx, cand_kind = float(t), pos, "drop"

        if residual_mode:
            r0 = u - AA @ p
            g = AA @ dv
            rr, rg, gg = r0 @ r0, r0 @ g, g @ g
            res_next = math.sqrt(max(rr + 2 * rg * cand_mu + gg * cand_mu ** 2, 0.0))
            if res_next <= eps:
                disc = max(rg * rg - gg * (rr - eps * eps), 0.0)
                mu_eps = (-rg + math.sqrt(disc)) / gg
                mu_eps = min(max(mu_eps, cand_mu), mu)
                x[active] = p - mu_eps * dv
                return x, mu_eps, step, True
        elif mu_target >= cand_mu:
            x[active] = p - mu_target * dv
            return x, mu_target, step, True

        if cand_kind is None:
            # end of path (mu -> 0)
            x[active] = p
            return x, 0.0, step, not residual_mode
        mu = cand_mu
        if cand_kind == "add":
            active.append(cand_idx)
            corr = a0[cand_idx] + mu * v[cand_idx]
            signs.append(float(np.sign(corr)))
            just_added, just_dropped = cand_idx, -1
        else:
            just_dropped = active.pop(cand_idx)
            signs.pop(cand_idx)
            just_added = -1
    raise ConvergenceError(f"homotopy did not finish within {max_steps} steps")


def bpdn(Psi, u, tol: ToleranceSpec, max_steps: int = 10_000) -> SparseSolution:
    """Basis pursuit denoising, ``min ||c||_1 s.t. ||u - Psi c||_2 <= eps``.

    The constrained problem is solved by walking the Pareto curve of the
    penalized problem exactly: the l1 homotopy path is followed from the
    zero solution until the residual reaches eps, where the crossing point
    is found in closed form on the final linear segment.

    ``info['lambda_sq']`` is the matching multiplier of the squared-loss
    penalized form, ``info['lambda']`` the one for the unsquared form
    accepted by :func:`lasso`.

    Raises
    ------
    InfeasibleError
        If even the least-squares fit violates the tolerance.
    """
    A, basis, dims = _unpack(Psi)
    u = np.asarray(u, dtype=float)
    eps = tol.epsilon(u) if isinstance(tol, ToleranceSpec) else float(tol)
    unorm = float(np.linalg.norm(u))
    An, scale = _normalized(A)
    q = An.T @ u
    target = max(eps * (1.0 - 1e-9), 0.0)
    x, mu, steps, reached = _lasso_homotopy(An, q, u=u, eps=target, max_steps=max_steps)
    c = x / scale
    sol = _make_solution(c, A, u, basis, dims, SolverTag.BPDN,
                         {"epsilon": float(eps), "lambda_sq": float(mu),
                          "lambda": float(mu / eps) if eps > 0 else math.inf,
                          "steps": int(steps)})
    if not reached or not is_feasible(sol.residual_norm, eps, unorm):
        raise InfeasibleError(
            f"residual {sol.residual_norm:.6g} cannot meet tolerance {eps:.6g}")
    return sol


# ---------------------------------------------------------------------------
# lasso (unsquared residual)

def _soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso(Psi, u, lam: float, max_iter: int = 50_000, gtol: float = 1e-10) -> SparseSolution:
    """``min ||u - Psi c||_2 + lam ||c||_1`` by monotone FISTA with backtracking.

    After the first-order phase the support and sign pattern are frozen and
    the stationarity equations are solved exactly; the polished point is
    kept only when it satisfies the optimality conditions and does not
    increase the objective. ``info['objective']`` holds the per-iteration
    objective history, which is non-increasing.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    A, basis, dims = _unpack(Psi)
    u = np.asarray(u, dtype=float)
    An, scale = _normalized(A)
    K = An.shape[1]

    def f(x):
        return float(np.linalg.norm(u - An @ x))

    def obj(x):
        return f(x) + lam * float(np.abs(x).sum())

    def grad(x):
        r = u - An @ x
        nr = np.linalg.norm(r)
        return np.zeros(K) if nr == 0 else -(An.T @ r) / nr

    x = np.zeros(K)
    y = x.copy()
    t = 1.0
    L = 1.0
    hist = [obj(x)]
    converged = False
    for it in range(max_iter):
        fy, gy = f(y), grad(y)
        while True:
            z = _soft(y - gy / L, lam / L)
            dz = z - y
            if f(z) <= fy + gy @ dz + 0.5 * L * (dz @ dz) + 1e-15 * max(fy, 1.0):
                break
            L *= 2.0
        fz = obj(z)
        x_prev = x
        if fz <= hist[-1]:
            x = z
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x + (t / t_new) * (z - x) + ((t - 1.0) / t_new) * (x - x_prev)
        t = t_new
        hist.append(obj(x))
        # norm of the gradient mapping at y
        if L * np.linalg.norm(dz) <= gtol:
            converged = True
            break
        L = max(L * 0.9, 1e-12)

    polished = _polish_lasso(An, u, lam, x)
    if polished is not None and obj(polished) <= hist[-1]:
        x = polished
        hist.append(obj(x))
        converged = True
    if not converged:
        raise ConvergenceError("lasso did not converge",
                               best=_make_solution(x / scale, A, u, basis, dims, SolverTag.LASSO))
    return _make_solution(x / scale, A, u, basis, dims, SolverTag.LASSO,
                          {"lambda": float(lam), "objective": [float(v) for v in hist],
                           "iterations": len(hist) - 1})


def _polish_lasso(An, u, lam, x):
    """Solve the stationarity system on the support of ``x`` exactly."""
    S = np.flatnonzero(np.abs(x) > default_zero_tolerance(x))
    if S.size == 0 or S.size > An.shape[0]:
        return None
    s = np.sign(x[S])
    AS = An[:, S]
    try:
        cf = sla.cho_factor(AS.T @ AS)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        return None
    p = sla.cho_solve(cf, AS.T @ u)
    dv = sla.cho_solve(cf, s)
    r0 = u - AS @ p
    rr, gg = r0 @ r0, s @ dv
    if lam * lam * gg >= 1.0 or rr <= 0:
        return None
    mu = lam * math.sqrt(rr / (1.0 - lam * lam * gg))
    xs = p - mu * dv
    if np.any(np.sign(xs) != s):
        return None
    out = np.zeros_like(x)
    out[S] = xs
    r = u - An @ out
    nr = np.linalg.norm(r)
    if nr == 0 or np.max(np.abs(An.T @ r)) / nr > lam * (1 + 1e-9):
        return None
    return out


# ---------------------------------------------------------------------------
# l1 - l2

def l1l2_objective(A, u, x, lam):
    """``||u - A x||^2 + lam (||x||_1 - ||x||_2)``."""
    r = u - A @ x
    return float(r @ r + lam * (np.abs(x).sum() - np.linalg.norm(x)))


def _l1l2_dca(An, u, lam, max_outer=200, tol=1e-10, max_steps=10_000):
    """Difference-of-convex iterations for the penalized l1 - l2 problem.

    Each step linearizes -||x||_2 at the current iterate and solves the
    convex remainder exactly along its l1 homotopy path.
    """
    K = An.shape[1]
    Atu = An.T @ u
    x = np.zeros(K)
    hist = [l1l2_objective(An, u, x, lam)]
    for it in range(max_outer):
        nx = np.linalg.norm(x)
        w = x / nx if nx > 0 else np.zeros(K)
        # halved objective: 0.5||u - Ax||^2 - (lam/2) w'x + (lam/2)||x||_1
        q = Atu + 0.5 * lam * w
        x_new, _, _, _ = _lasso_homotopy(An, q, mu_target=0.5 * lam, max_steps=max_steps)
        f_new = l1l2_objective(An, u, x_new, lam)
        if f_new > hist[-1] + 1e-10 * max(abs(hist[-1]), 1.0):
            break
        hist.append(f_new)
        step = np.linalg.norm(x_new - x)
        x = x_new
        if step <= tol * max(np.linalg.norm(x), 1e-300):
            break
    return x, hist


def l1l2(Psi, u, tol: ToleranceSpec, max_bisect: int = 50,
         window: float = 1e-4) -> SparseSolution:
    """Constrained l1 - l2 minimization through its penalized form.

    The penalty weight is located by bisection in log(lambda) over
    [1e-10 * lam_hat, lam_hat], lam_hat = ||Psi_n' u||_inf, looking for the
    largest weight whose solution still satisfies the residual bound; the
    search stops early once the residual lies within ``window`` (relative)
    below eps. The residual is assumed non-decreasing in lambda.

    Raises
    ------
    InfeasibleError
        If the tolerance cannot be met even at the smallest weight.
    """
    A, basis, dims = _unpack(Psi)
    u = np.asarray(u, dtype=float)
    eps = tol.epsilon(u) if isinstance(tol, ToleranceSpec) else float(tol)
    unorm = float(np.linalg.norm(u))
    An, scale = _normalized(A)
    if unorm <= eps:
        c = np.zeros(A.shape[1])
        return _make_solution(c, A, u, basis, dims, SolverTag.L1L2,
                              {"epsilon": float(eps), "lambda": math.inf, "objective": [0.0]})
    lam_hat = float(np.max(np.abs(An.T @ u)))
    lo, hi = 1e-10 * lam_hat, lam_hat

    def solve(lam):
        x, hist = _l1l2_dca(An, u, lam)
        return x, hist, float(np.linalg.norm(u - An @ x))

    x_lo, h_lo, r_lo = solve(lo)
    if not is_feasible(r_lo, eps, unorm):
        raise InfeasibleError(
            f"l1-l2 residual {r_lo:.6g} at the smallest weight exceeds {eps:.6g}")
    best = (lo, x_lo, h_lo, r_lo)
    x_hi, h_hi, r_hi = solve(hi)
    if is_feasible(r_hi, eps, unorm):
        best = (hi, x_hi, h_hi, r_hi)
    else:
        for _ in range(max_bisect):
            if r_lo >= eps * (1.0 - window) or hi / lo < 1.0 + 1e-12:
                break
            mid = math.sqrt(lo * hi)
            x_m, h_m, r_m = solve(mid)
            if is_feasible(r_m, eps, unorm):
                lo, x_lo, h_lo, r_lo = mid, x_m, h_m, r_m
                best = (lo, x_lo, h_lo, r_lo)
            else:
                hi = mid
    lam, x, hist, _ = best
    return _make_solution(x / scale, A, u, basis, dims, SolverTag.L1L2,
                          {"epsilon": float(eps), "lambda": float(lam),
                           "objective": [float(v) for v in hist]})


# ---------------------------------------------------------------------------
# exhaustive l0 oracle

def support_enumeration_oracle(Psi, u, tol: ToleranceSpec, max_support: int,
                               cap: int = ORACLE_CAP) -> SparseSolution:
    """Exact l0 minimizer by enumerating supports of growing size.

    Among the smallest feasible supports the one with the least residual is
    returned; remaining ties go to the lexicographically first support.
    """
    A, basis, dims = _unpack(Psi)
    u = np.asarray(u, dtype=float)
    eps = tol.epsilon(u) if isinstance(tol, ToleranceSpec) else float(tol)
    unorm = float(np.linalg.norm(u))
    K = A.shape[1]
    max_support = min(max_support, K)
    if math.comb(K, max_support) > cap:
        raise BasisTooLargeError(
            f"C({K}, {max_support}) supports exceed the oracle cap {cap}")
    for size in range(max_support + 1):
        best = None
        for S in itertools.combinations(range(K), size):
            if size == 0:
                xs, res = np.zeros(0), unorm
            else:
                AS = A[:, S]
                xs, *_ = np.linalg.lstsq(AS, u, rcond=None)
                res = float(np.linalg.norm(u - AS @ xs))
            if is_feasible(res, eps, unorm) and (best is None or res < best[0]):
                best = (res, S, xs)
        if best is not None:
            c = np.zeros(K)
            c[list(best[1])] = best[2]
            sol = _make_solution(c, A, u, basis, dims, SolverTag.ORACLE,
                                 {"epsilon": eps, "support": list(best[1])})
            return replace(sol, nnz=size)
    raise InfeasibleError(f"no support of size <= {max_support} meets tolerance {eps:.6g}")
