"""Choosing the boundary sources of the two auxiliary problems.

Ideally the gradients of ``v1`` and ``v2`` are orthogonal everywhere.  The
minimax formulation (smallest worst-case ``|cos|`` between them) is relaxed
to alternating minimization of a quadratic alignment functional: with one
source fixed, the other minimizes a positive semidefinite quadratic form
over compatible boundary data, i.e. it is the smallest generalized
eigenvector of a reduced pencil.  Two functionals are available:

``"literal"``
    ``0.5 int |grad v1 . grad v2|^2 dx`` with ``||g||_{L2(boundary)} = 1``.
    Not scale invariant: on media with a resistive layer it rewards data
    whose interior gradients are small, and the iteration drifts to
    degenerate pairs.
``"normalized"`` (default)
    ``int (grad v1 . grad v2)^2 dx / int |grad v1|^2 |grad v2|^2 dx``, an
    energy-weighted mean of ``cos^2`` of the gradient angle.  Symmetric in
    the pair, so every half-step is monotone; the result is rescaled to unit
    boundary norm afterwards.

The map from source coefficients to auxiliary solutions is computed once
(one Neumann solve per basis function), so each half-step is dense linear
algebra only.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial import legendre

from .exceptions import AcoustoElectricError, InvalidArgumentError
from .fem import (BoundarySource, assemble_boundary_mass, assemble_stiffness, boundary_l2_norm,
                  boundary_weights, gradient_operator, make_compatible, neumann_operator)
from .mesh import Mesh, ScalarField, normalize_sides, p1_gradient
from .reconstruct import _region_mask, check_independence
from .solver import SolverConfig, smallest_genpair, solve_projected

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizeConfig:
    """Alternating-minimization settings.

    ``basis`` selects the admissible boundary data: ``"nodal"`` (all P1
    traces on the tagged sides) or ``"legendre"`` (polynomials of degree at
    most ``degree`` on each tagged side; degree 0 is one constant per side,
    the family the initial sources ``d . n`` belong to).  ``objective`` is
    ``"normalized"`` or ``"literal"``, see the module docstring.
    """

    max_outer_iter: int = 20
    increment_tol: float = 1e-6
    basis: str = "legendre"
    degree: int = 0
    objective: str = "normalized"
    eig_tol: float = 1e-10
    eig_max_iter: int = 500
    seed: int = 0
    theta: tuple = (0.0, np.pi / 2)

    def __post_init__(self):
        if self.max_outer_iter <= 0 or not self.increment_tol > 0:
            raise InvalidArgumentError("iteration count and tolerance must be positive")
        if self.basis not in ("nodal", "legendre"):
            raise InvalidArgumentError(f"unknown source basis {self.basis!r}")
        if self.objective not in ("normalized", "literal"):
            raise InvalidArgumentError(f"unknown objective {self.objective!r}")
        if self.degree < 0:
            raise InvalidArgumentError("degree must be nonnegative")


def initial_sources(theta1: float, theta2: float, mesh: Mesh, sides=None,
                    sigma0: ScalarField | None = None):
    """Sources ``g_j = (cos theta_j, sin theta_j) . n`` on the tagged sides.

    Each is made compatible with ``sigma0`` (if given) by removing a constant
    on the tagged sides, then scaled to unit boundary L2 norm.
    """
    sides = normalize_sides(sides)
    out = []
    for theta in (theta1, theta2):
        d = (np.cos(theta), np.sin(theta))
        g = BoundarySource.from_function(mesh, lambda x, y, nx, ny: d[0] * nx + d[1] * ny, sides)
        if sigma0 is not None:
            g = make_compatible(g, sigma0)
        out.append(g * (1.0 / boundary_l2_norm(g)))
    return tuple(out)


class Alignment(NamedTuple):
    max_cosine: float
    relaxed: float
    n_excluded: int
    normalized: float


def alignment_objective(v1: ScalarField, v2: ScalarField, region=None) -> Alignment:
    """Worst-case ``|cos|`` between the gradients and the relaxed values.

    Elements where either gradient is below ``1e-12`` times its mean
    magnitude are left out of the maximum and counted.  ``relaxed`` is
    ``0.5 int |grad v1 . grad v2|^2`` and ``normalized`` its ratio to
    ``int |grad v1|^2 |grad v2|^2``.
    """
    mesh = v1.mesh
    mask = _region_mask(mesh, region)
    g1 = p1_gradient(v1).values
    g2 = p1_gradient(v2).values
    n1 = np.hypot(*g1.T)
    n2 = np.hypot(*g2.T)
    keep = mask & (n1 > 1e-12 * n1[mask].mean()) & (n2 > 1e-12 * n2[mask].mean()) \
        if mask.any() else mask
    if not keep.any():
        raise AcoustoElectricError("degenerate fields: every gradient vanishes in the region")
    dots = np.einsum("ek,ek->e", g1, g2)
    cosines = np.abs(dots[keep]) / (n1[keep] * n2[keep])
    relaxed = 0.5 * float(np.sum(mesh.areas[mask] * dots[mask] ** 2))
    energy = 0.5 * float(np.sum(mesh.areas[mask] * (n1 * n2)[mask] ** 2))
    return Alignment(float(min(cosines.max(), 1.0)), relaxed, int(mask.sum() - keep.sum()),
                     relaxed / energy)


def source_basis(mesh: Mesh, sides=None, kind: str = "legendre", degree: int = 0) -> np.ndarray:
    """Columns spanning the admissible boundary data (slot values)."""
    sides = normalize_sides(sides)
    cols = []
    for side in sides:
        idx = mesh.side_slots(side)
        if kind == "nodal":
            block = np.zeros((mesh.n_slots, len(idx)))
            block[idx, np.arange(len(idx))] = 1.0
            cols.append(block)
        else:
            t = np.linspace(-1.0, 1.0, len(idx))
            V = legendre.legvander(t, min(degree, len(idx) - 1))
            block = np.zeros((mesh.n_slots, V.shape[1]))
            block[idx] = V
            cols.append(block)
    return np.hstack(cols)


def _null_space(row: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ``{c : row . c = 0}``."""
    q, _ = np.linalg.qr(np.column_stack([row, np.eye(len(row))]))
    return q[:, 1:]


class SourceSpace:
    """Compatible boundary data on the tagged sides and their auxiliary solutions.

    Building it costs one Neumann solve per basis function (batched).
    ``subspace`` spans the compatible coefficients that produce a nonzero
    field; ``n_silent`` counts the directions removed for producing none.
    """

    def __init__(self, sigma0: ScalarField, sides=None, basis="legendre", degree=0,
                 cfg: SolverConfig | None = None):
        mesh = sigma0.mesh
        self.mesh = mesh
        self.sigma0 = sigma0
        self.sides = normalize_sides(sides)
        if isinstance(basis, str):
            self.basis = source_basis(mesh, self.sides, basis, degree)
        else:
            self.basis = np.asarray(basis, dtype=float)
        B = self.basis
        self.compat = boundary_weights(mesh, sigma0) @ B
        self.subspace = _null_space(self.compat)
        M = assemble_boundary_mass(mesh)
        self.mass = B.T @ (M @ B)
        loads = neumann_operator(mesh, sigma0) @ B
        loads -= loads.mean(axis=0)
        K = assemble_stiffness(mesh, sigma0)
        self.solutions = solve_projected(K, loads, cfg)
        Gx, Gy = gradient_operator(mesh)
        self.grad_x = Gx @ self.solutions
        self.grad_y = Gy @ self.solutions
        # drop data that produce no field: with one slot per side at a corner,
        # patterns orthogonal to every continuous boundary trace have zero load
        Z = self.subspace
        Ex = self.grad_x @ Z
        Ey = self.grad_y @ Z
        E = (Ex.T * mesh.areas) @ Ex + (Ey.T * mesh.areas) @ Ey
        w, V = np.linalg.eigh(0.5 * (E + E.T))
        keep = w > 1e-10 * max(w.max(), np.finfo(float).tiny)
        self.n_silent = int((~keep).sum())
        self.subspace = Z @ V[:, keep]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def fields(self, coef):
        """Boundary source and auxiliary solution for a coefficient vector."""
        return (BoundarySource(self.mesh, self.basis @ coef, self.sides),
                ScalarField(self.mesh, self.solutions @ coef))

    def project(self, g: BoundarySource) -> np.ndarray:
        """Least-squares coefficients of ``g`` in the basis (boundary L2 sense)."""
        M = assemble_boundary_mass(self.mesh)
        rhs = self.basis.T @ (M @ g.values)
        return np.linalg.lstsq(self.mass, rhs, rcond=None)[0]

    def quadratic_form(self, v_fixed: ScalarField, weights) -> np.ndarray:
        """Matrix of ``c -> 0.5 int w |grad v(c) . grad v_fixed|^2``."""
        gv = p1_gradient(v_fixed).values
        R = gv[:, :1] * self.grad_x + gv[:, 1:] * self.grad_y
        return 0.5 * (R.T * weights) @ R

    def energy_form(self, v_fixed: ScalarField, weights) -> np.ndarray:
        """Matrix of ``c -> 0.5 int w |grad v(c)|^2 |grad v_fixed|^2``."""
        ww = weights * np.sum(p1_gradient(v_fixed).values ** 2, axis=1)
        return 0.5 * ((self.grad_x.T * ww) @ self.grad_x + (self.grad_y.T * ww) @ self.grad_y)

    def minimize(self, v_fixed, weights, cfg: OptimizeConfig):
        """Best partner of ``v_fixed``: ``(objective value, coefficients)``.

        The coefficients have unit boundary norm and a positive
        largest-magnitude boundary value.
        """
        Q = self.quadratic_form(v_fixed, weights)
        P = self.mass if cfg.objective == "literal" else self.energy_form(v_fixed, weights)
        value, coef = smallest_genpair(Q, P, self.subspace, tol=cfg.eig_tol,
                                       max_iter=cfg.eig_max_iter, seed=cfg.seed)
        coef = coef / np.sqrt(coef @ self.mass @ coef)
        g = self.basis @ coef
        if g[np.argmax(np.abs(g))] < 0:
            coef = -coef
        return value, coef


@dataclass
class OptimizeResult:
    g1: BoundarySource
    g2: BoundarySource
    v1: ScalarField
    v2: ScalarField
    history: list = field(default_factory=list)
    reason: str = ""
    fallback: bool = False

    HISTORY_COLUMNS = ("iter", "half", "objective", "max_cosine", "min_det")


def alternating_minimize(sigma0: ScalarField, g1_0: BoundarySource, g2_0: BoundarySource,
                         cfg: OptimizeConfig | None = None, solver_cfg: SolverConfig | None = None,
                         region=None, space: SourceSpace | None = None) -> OptimizeResult:
    """Relaxed alternating minimization of the source pair.

    Half-step ``(k, 2)`` replaces ``g2`` by the minimizer against the current
    ``v1``; half-step ``(k, 1)`` then replaces ``g1`` against the new ``v2``.
    Stops when both auxiliary solutions move by less than
    ``increment_tol`` (relative) or after ``max_outer_iter`` sweeps.  If the
    final pair fails the independence check on ``region`` a warning is
    issued and the best earlier pair (largest minimum determinant) is
    returned instead.

    Every row of ``history`` is ``(iter, half, objective, max_cosine, min_det)``
    with ``objective`` the functional selected by ``cfg.objective``; the
    initial pair is row ``(0, 0, ...)``.
    """
    cfg = cfg or OptimizeConfig()
    mesh = sigma0.mesh
    mask = _region_mask(mesh, region)
    weights = mesh.areas * mask
    sides = tuple(sorted(set(g1_0.sides) | set(g2_0.sides),
                         key=("left", "top", "right", "bottom").index))
    if space is None:
        space = SourceSpace(sigma0, sides, cfg.basis, cfg.degree, solver_cfg)
    c1 = space.project(g1_0)
    c2 = space.project(g2_0)
    g1, v1 = space.fields(c1)
    g2, v2 = space.fields(c2)
    if not np.any(p1_gradient(v1).norm()[mask] > 0):
        raise AcoustoElectricError("initial source gives a vanishing auxiliary gradient")

    def record(it, half, v1, v2):
        al = alignment_objective(v1, v2, mask)
        det, _ = check_independence(v1, v2, mask)
        value = al.relaxed if cfg.objective == "literal" else al.normalized
        history.append((it, half, value, al.max_cosine, det))

    history: list = []
    pairs = [(g1, g2, v1, v2)]
    record(0, 0, v1, v2)
    reason = "max_iter"
    for it in range(1, cfg.max_outer_iter + 1):
        v1_old, v2_old = v1, v2
        _, c2 = space.minimize(v1, weights, cfg)
        g2, v2 = space.fields(c2)
        record(it, 2, v1, v2)
        _, c1 = space.minimize(v2, weights, cfg)
        g1, v1 = space.fields(c1)
        record(it, 1, v1, v2)
        pairs.append((g1, g2, v1, v2))
        inc1 = np.linalg.norm(v1.values - v1_old.values) / max(np.linalg.norm(v1.values), 1e-300)
        inc2 = np.linalg.norm(v2.values - v2_old.values) / max(np.linalg.norm(v2.values), 1e-300)
        logger.debug("sweep %d: objective %.6e, increments %.2e %.2e",
                     it, history[-1][2], inc1, inc2)
        if max(inc1, inc2) < cfg.increment_tol:
            reason = "increment_tol"
            break

    result = OptimizeResult(g1, g2, v1, v2, history, reason)
    _, failing = check_independence(v1, v2, mask)
    if failing.any():
        dets = [check_independence(p[2], p[3], mask) for p in pairs]
        ok = [i for i, (_, f) in enumerate(dets) if not f.any()]
        warnings.warn("optimized sources have dependent gradients on the region; "
                      "falling back to the best earlier pair", RuntimeWarning, stacklevel=2)
        if ok:
            best = max(ok, key=lambda i: dets[i][0])
            result = OptimizeResult(*pairs[best], history, reason, fallback=True)
    return result
