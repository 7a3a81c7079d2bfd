"""Iterative linear algebra for singular Neumann systems and small pencils."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError, InvalidArgumentError, SolvabilityError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`solve_projected`.

    ``max_iter=None`` means ten times the system size.  ``preconditioner`` is
    ``None`` or ``"jacobi"``.
    """

    tol_rel: float = 1e-10
    max_iter: int | None = None
    projection: bool = True
    preconditioner: str | None = None
    compat_rtol: float = 1e-8

    def __post_init__(self):
        if not self.tol_rel > 0:
            raise InvalidArgumentError("tol_rel must be positive")
        if self.max_iter is not None and self.max_iter <= 0:
            raise InvalidArgumentError("max_iter must be positive")
        if self.preconditioner not in (None, "none", "jacobi"):
            raise InvalidArgumentError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveInfo:
    iterations: int
    residual: np.ndarray
    converged: bool
    history: list = field(default_factory=list)

    @property
    def relative_residual(self):
        return self.residual


def project_mean_zero(x: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the complement of the constant vector."""
    return x - x.mean(axis=0)


def solve_projected(K, b, cfg: SolverConfig | None = None, return_info: bool = False):
    """Solve the singular system ``K x = b`` with ``ker K = span{1}`` by BiCGSTAB.

    ``b`` may be a vector or an ``(n, k)`` block; the columns are iterated in
    lockstep but with their own recurrence coefficients, so each column
    follows classical BiCGSTAB exactly.  The initial guess is zero and the
    result is projected to mean zero.

    Parameters
    ----------
    K : sparse matrix
        Symmetric positive semidefinite, constants in the kernel.
    b : ndarray
        Right-hand side(s), each orthogonal to the constant vector.
    cfg : SolverConfig, optional
    return_info : bool
        Also return a :class:`SolveInfo`.

    Raises
    ------
    SolvabilityError
        If a right-hand side has a component along the constants.
    ConvergenceError
        If ``max_iter`` is reached before ``||K x - b|| <= tol_rel ||b||``.
    """
    cfg = cfg or SolverConfig()
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    B = b[:, None] if single else b
    n, k = B.shape
    if K.shape != (n, n):
        raise InvalidArgumentError(f"matrix shape {K.shape} does not match rhs length {n}")
    bnorm = np.linalg.norm(B, axis=0)
    drift = np.abs(B.sum(axis=0)) / np.sqrt(n)
    if np.any(drift > cfg.compat_rtol * np.maximum(bnorm, np.finfo(float).tiny)):
        worst = float(np.max(drift / np.maximum(bnorm, np.finfo(float).tiny)))
        raise SolvabilityError(f"right-hand side not orthogonal to constants (rel. {worst:.2e})",
                               residual=worst)
    if cfg.projection:
        B = project_mean_zero(B)
    max_iter = cfg.max_iter or 10 * n
    if cfg.preconditioner == "jacobi":
        dinv = 1.0 / K.diagonal()
        precond = lambda v: dinv[:, None] * v  # noqa: E731
    else:
        precond = lambda v: v  # noqa: E731

    X = np.zeros_like(B)
    R = B.copy()
    active = bnorm > 0
    target = cfg.tol_rel * bnorm
    history = []
    it = 0
    while active.any() and it < max_iter:
        cols = np.flatnonzero(active)
        it_used = _bicgstab_block(K, precond, X, R, B, cols, target, max_iter - it, history)
        it += it_used
        # verify with the true residual; restart columns that stagnated
        true_res = np.linalg.norm(B[:, cols] - K @ X[:, cols], axis=0)
        done = true_res <= target[cols]
        active[cols[done]] = False
        R[:, cols] = B[:, cols] - K @ X[:, cols]
        if it_used == 0:
            break

    if cfg.projection:
        X = project_mean_zero(X)
    residual = np.linalg.norm(B - K @ X, axis=0) / np.where(bnorm > 0, bnorm, 1.0)
    converged = bool(np.all(residual <= cfg.tol_rel))
    info = SolveInfo(iterations=it, residual=residual[0] if single else residual,
                     converged=converged, history=history)
    if not converged:
        raise ConvergenceError(
            f"BiCGSTAB did not converge in {it} iterations "
            f"(relative residual {float(np.max(residual)):.3e})",
            residual=float(np.max(residual)), iterations=it)
    out = X[:, 0] if single else X
    return (out, info) if return_info else out


def _bicgstab_block(K, precond, X, R, B, cols, target, budget, history):
    """Run right-preconditioned BiCGSTAB on the given columns in place.

    Returns the number of iterations taken.  Stops when every column meets
    its recursive-residual target, on breakdown, or when the budget runs out.
    """
    tiny = np.finfo(float).tiny
    x = X[:, cols]
    r = R[:, cols].copy()
    rhat = r.copy()
    p = np.zeros_like(r)
    v = np.zeros_like(r)
    rho_old = np.ones(len(cols))
    alpha = np.ones(len(cols))
    omega = np.ones(len(cols))
    live = np.ones(len(cols), dtype=bool)
    tgt = target[cols]
    it = 0
    for it in range(1, budget + 1):
        rho = np.einsum("ij,ij->j", rhat, r)
        breakdown = (np.abs(rho) < tiny) | (np.abs(omega) < tiny)
        live &= ~breakdown
        if not live.any():
            break
        beta = np.where(live, (rho / np.where(live, rho_old, 1.0)) * (alpha / np.where(live, omega, 1.0)), 0.0)
        p = r + beta * (p - omega * v)
        phat = precond(p)
        v = K @ phat
        denom = np.einsum("ij,ij->j", rhat, v)
        live &= np.abs(denom) > tiny
        alpha = np.where(live, rho / np.where(live, denom, 1.0), 0.0)
        s = r - alpha * v
        snorm = np.linalg.norm(s, axis=0)
        early = live & (snorm <= tgt)
        x += np.where(early, alpha, 0.0) * phat
        shat = precond(s)
        t = K @ shat
        tt = np.einsum("ij,ij->j", t, t)
        omega = np.where(live & ~early & (tt > tiny), np.einsum("ij,ij->j", t, s) / np.where(tt > tiny, tt, 1.0), 0.0)
        step = live & ~early
        x += np.where(step, alpha, 0.0) * phat + omega * shat
        r = np.where(step, s - omega * t, np.where(early, s, r))
        rho_old = rho
        rnorm = np.linalg.norm(r, axis=0)
        history.append(float(np.max(rnorm / np.maximum(tgt, tiny))))
        live &= ~early & (rnorm > tgt)
        live &= omega != 0.0
        if not live.any():
            break
    X[:, cols] = x
    R[:, cols] = r
    return it


# --------------------------------------------------------------------------
# smallest generalized eigenpair


def _as_dense(A):
    if hasattr(A, "toarray"):
        return A.toarray()
    return np.asarray(A, dtype=float)


def smallest_genpair(A, B, subspace=None, tol=1e-10, max_iter=500, block=6, max_restarts=3, seed=0):
    """Smallest eigenpair of the symmetric pencil ``(A, B)`` on a subspace.

    Solves ``min x^T A x`` subject to ``x^T B x = 1`` and ``x in range(subspace)``
    with shifted inverse subspace iteration plus Rayleigh-Ritz, after
    reducing to a standard problem with the Cholesky factor of the projected
    ``B``.

    Parameters
    ----------
    A, B : array_like or sparse
        Symmetric; ``A`` positive semidefinite and ``B`` positive definite on
        the subspace.
    subspace : ndarray, shape (n, m), optional
        Columns spanning the admissible subspace (full space if omitted).
    tol : float
        Residual tolerance ``||A x - lam B x|| <= tol * ||A||`` in the
        reduced coordinates.

    Returns
    -------
    value : float
    vector : ndarray, shape (n,)
        ``B``-normalised, with its largest-magnitude entry positive.

    Raises
    ------
    ConvergenceError
        If the residual target is missed after ``max_restarts`` restarts.
    """
    A = _as_dense(A)
    B = _as_dense(B)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n):
        raise InvalidArgumentError("pencil matrices must be square and of equal size")
    Z = np.eye(n) if subspace is None else np.asarray(subspace, dtype=float)
    Ar = Z.T @ A @ Z
    Br = Z.T @ B @ Z
    Ar = 0.5 * (Ar + Ar.T)
    Br = 0.5 * (Br + Br.T)
    m = Ar.shape[0]
    try:
        L = np.linalg.cholesky(Br)
    except np.linalg.LinAlgError as exc:
        raise InvalidArgumentError("B is not positive definite on the subspace") from exc
    # C = L^{-1} Ar L^{-T}
    C = np.linalg.solve(L, np.linalg.solve(L, Ar).T).T
    C = 0.5 * (C + C.T)
    scale = max(np.abs(C).sum(axis=1).max(), np.finfo(float).tiny)
    rng = np.random.default_rng(seed)

    p = min(block, m)
    last_theta = res = np.nan
    for restart in range(max_restarts + 1):
        # a small shift keeps clustered eigenvalues near zero well separated
        shift = -1e-9 * scale * 100.0**restart
        try:
            Fc = np.linalg.cholesky(C - shift * np.eye(m))
        except np.linalg.LinAlgError:
            continue
        Y = rng.standard_normal((m, p))
        for _ in range(max_iter):
            Y = np.linalg.solve(Fc.T, np.linalg.solve(Fc, Y))
            Y, _ = np.linalg.qr(Y)
            T = Y.T @ C @ Y
            theta, S = np.linalg.eigh(0.5 * (T + T.T))
            Y = Y @ S
            y = Y[:, 0]
            last_theta = theta[0]
            res = np.linalg.norm(C @ y - theta[0] * y)
            if res <= tol * scale:
                break
        else:
            logger.debug("smallest_genpair restart %d, residual %.3e", restart, res)
            continue
        x = Z @ np.linalg.solve(L.T, y)
        x /= np.sqrt(x @ B @ x)
        k = np.argmax(np.abs(x))
        if x[k] < 0:
            x = -x
        value = float(x @ A @ x)
        return value, x
    raise ConvergenceError(
        f"generalized eigensolver did not converge (last Rayleigh quotient {last_theta:.6e})",
        residual=float(res))
