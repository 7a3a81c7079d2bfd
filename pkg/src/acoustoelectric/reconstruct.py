"""Recover the source current from two internal functionals.

Per element the functionals satisfy ``[H1, H2] = A [grad v1, grad v2]`` with
the row vector ``A = beta sigma0 grad u0 - J0``.  Taking the divergence and
using the unmodulated forward equation gives
``div(sigma0 grad u0) = div(A) / (beta - 1)``, a Neumann problem for ``u0``
(``A . n = 0`` on the boundary), after which ``J0 = beta sigma0 grad u0 - A``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DegeneracyError, IllPosednessError, InvalidArgumentError
from .fem import assemble_current_load, assemble_stiffness
from .mesh import Mesh, ScalarField, VectorField, domain_l2_norm, p1_gradient
from .physics import InternalFunctional
from .solver import SolverConfig, solve_projected

logger = logging.getLogger(__name__)

DET_RTOL = 1e-8


@dataclass
class ReconstructionResult:
    J0_hat: VectorField
    u0_hat: ScalarField
    A: VectorField
    sigma0: ScalarField
    beta: float
    relative_l2_error: float | None = None
    min_abs_det: float | None = None
    stability_ratio: float | None = None
    solver_iterations: int = 0
    boundary_flux: float = 0.0
    extension_mismatch: float | None = None
    extra: dict = field(default_factory=dict)

    def report(self) -> dict:
        def num(x):
            return None if x is None else float(x)

        out = {
            "relative_l2_error": num(self.relative_l2_error),
            "min_abs_det": num(self.min_abs_det),
            "stability_ratio": num(self.stability_ratio),
            "solver_iterations": int(self.solver_iterations),
            "boundary_flux": float(self.boundary_flux),
            "beta": float(self.beta),
        }
        if self.extension_mismatch is not None:
            out["extension_mismatch"] = float(self.extension_mismatch)
        out.update(self.extra)
        return out

    def save(self, directory) -> Path:
        """Write ``J0_hat.csv``, ``u0_hat.csv``, ``A.csv`` and ``report.json``."""
        from .io import write_element_csv, write_json, write_nodal_csv

        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_element_csv(d / "J0_hat.csv", self.J0_hat)
        write_nodal_csv(d / "u0_hat.csv", self.u0_hat)
        write_element_csv(d / "A.csv", self.A)
        write_json(d / "report.json", self.report())
        return d


def _region_mask(mesh: Mesh, region) -> np.ndarray:
    if region is None or (isinstance(region, str) and region == "all"):
        return np.ones(mesh.n_elements, dtype=bool)
    mask = np.asarray(region, dtype=bool)
    if mask.shape != (mesh.n_elements,):
        raise InvalidArgumentError("region mask must have one entry per element")
    return mask


def gradient_determinants(v1: ScalarField, v2: ScalarField) -> np.ndarray:
    """``det[grad v1, grad v2]`` per element."""
    if v1.mesh is not v2.mesh:
        raise InvalidArgumentError("auxiliary solutions live on different meshes")
    g1 = p1_gradient(v1).values
    g2 = p1_gradient(v2).values
    return g1[:, 0] * g2[:, 1] - g1[:, 1] * g2[:, 0]


def check_independence(v1: ScalarField, v2: ScalarField, region=None, rtol: float = DET_RTOL):
    """Minimum ``|det[grad v1, grad v2]|`` over a region and the failing elements.

    An element fails when its determinant is below ``rtol`` times the largest
    one in the region, or below ``rtol`` times ``|grad v1| |grad v2|`` (so
    exactly parallel gradients always fail).

    Returns
    -------
    min_abs_det : float
    failing : ndarray of bool, shape (n_elements,)
    """
    mesh = v1.mesh
    mask = _region_mask(mesh, region)
    det = np.abs(gradient_determinants(v1, v2))
    scale = p1_gradient(v1).norm() * p1_gradient(v2).norm()
    biggest = det[mask].max() if mask.any() else 0.0
    failing = mask & ((det < rtol * biggest) | (det <= rtol * scale))
    return float(det[mask].min()) if mask.any() else 0.0, failing


def recover_A(H1: InternalFunctional, H2: InternalFunctional, v1: ScalarField, v2: ScalarField,
              region=None, rtol: float = DET_RTOL) -> VectorField:
    """Solve ``[H1, H2] = A [grad v1, grad v2]`` on each element of the region.

    Elements outside the region get ``A = 0``.

    Raises
    ------
    IllPosednessError
        If the gradients are dependent somewhere in the region; ``.mask``
        marks the offending elements.
    """
    mesh = v1.mesh
    if not (H1.mesh is mesh and H2.mesh is mesh and v2.mesh is mesh):
        raise InvalidArgumentError("fields live on different meshes")
    mask = _region_mask(mesh, region)
    _, failing = check_independence(v1, v2, mask, rtol)
    if failing.any():
        raise IllPosednessError(
            f"auxiliary gradients are linearly dependent on {int(failing.sum())} element(s)",
            mask=failing)
    g1 = p1_gradient(v1).values
    g2 = p1_gradient(v2).values
    det = g1[:, 0] * g2[:, 1] - g1[:, 1] * g2[:, 0]
    safe = np.where(mask, det, 1.0)
    h1, h2 = H1.values, H2.values
    # A . g1 = h1, A . g2 = h2
    ax = (h1 * g2[:, 1] - h2 * g1[:, 1]) / safe
    ay = (h2 * g1[:, 0] - h1 * g2[:, 0]) / safe
    A = np.column_stack([ax, ay])
    A[~mask] = 0.0
    return VectorField(mesh, A)


def boundary_normal_flux(A: VectorField) -> float:
    """``int_boundary |A . n| ds`` using the element adjacent to each edge."""
    mesh = A.mesh
    flux = np.abs(np.einsum("ek,ek->e", A.values[mesh.edge_elements], mesh.edge_normals))
    return float(flux @ mesh.edge_lengths)


def check_beta(beta: float) -> float:
    """Return ``beta`` as a float, raising :class:`DegeneracyError` for ``beta == 1``."""
    beta = float(beta)
    if not np.isfinite(beta):
        raise InvalidArgumentError(f"beta must be finite, got {beta}")
    if beta == 1:
        raise DegeneracyError("reconstruction is impossible for beta = 1 "
                              "(the divergence transfer divides by beta - 1)")
    return beta


def reconstruct_J0(A: VectorField, sigma0: ScalarField, beta: float,
                   cfg: SolverConfig | None = None, J_true: VectorField | None = None,
                   region=None) -> ReconstructionResult:
    """Divergence transfer and algebraic recovery of the source current.

    Solves ``div(sigma0 grad u) = div(A) / (beta - 1)`` weakly with the
    boundary term dropped, then returns ``J0 = beta sigma0 grad u - A``.
    With a ``region`` the returned current is zero outside it.

    Raises
    ------
    DegeneracyError
        If ``beta == 1``.
    """
    beta = check_beta(beta)
    mesh = A.mesh
    if sigma0.mesh is not mesh:
        raise InvalidArgumentError("fields live on different meshes")
    K = assemble_stiffness(mesh, sigma0)
    rhs = assemble_current_load(mesh, A, check_support=False) / (beta - 1.0)
    iterations = 0
    x = np.zeros(mesh.n_nodes)
    if rhs.any():
        # solved even for beta = 0, where grad u drops out of J0, to report u0_hat
        x, info = solve_projected(K, rhs - rhs.mean(), cfg, return_info=True)
        iterations = info.iterations
    u = ScalarField(mesh, x)
    J = beta * sigma0.element_mean()[:, None] * p1_gradient(u).values - A.values
    if region is not None:
        J[~_region_mask(mesh, region)] = 0.0
    J_hat = VectorField(mesh, J)
    result = ReconstructionResult(
        J0_hat=J_hat, u0_hat=u, A=A, sigma0=sigma0, beta=float(beta),
        solver_iterations=iterations, boundary_flux=boundary_normal_flux(A))
    if J_true is not None:
        result.relative_l2_error = relative_l2_error(J_hat, J_true)
    return result


def relative_l2_error(J_hat: VectorField, J_true: VectorField) -> float:
    """``||J_hat - J_true|| / ||J_true||`` in L2 over the domain."""
    if J_hat.mesh is not J_true.mesh:
        raise InvalidArgumentError("fields live on different meshes")
    denom = domain_l2_norm(J_true)
    if denom == 0:
        raise ZeroDivisionError("reference current has zero L2 norm")
    return domain_l2_norm(J_hat - J_true) / denom


def lipschitz_constant(sigma0: ScalarField, beta: float) -> float:
    """``1 + |beta| K2 / (|beta - 1| K1)`` with the element-averaged conductivity bounds."""
    s = sigma0.element_mean()
    return 1.0 + abs(beta) * s.max() / (abs(beta - 1.0) * s.min())


@dataclass
class StabilityReport:
    ratios: np.ndarray
    constant: float
    slack: float
    passed: bool
    h_ratios: np.ndarray | None = None

    @property
    def bound(self) -> float:
        return self.constant * (1.0 + self.slack)


def stability_audit(pairs, h_pairs=None, slack: float = 0.1) -> StabilityReport:
    """Empirical Lipschitz ratios ``||dJ|| / ||dA||`` for reconstructed pairs.

    Parameters
    ----------
    pairs : sequence of (ReconstructionResult, ReconstructionResult)
        Both members must share conductivity and ``beta``.
    h_pairs : sequence of (list of InternalFunctional, list of InternalFunctional), optional
        The functionals behind each pair, for the ratio
        ``||dJ|| / sqrt(sum_j ||dH_j||^2)`` (reported, not judged).
    slack : float
        Relative allowance on the constant for discretisation effects.
    """
    ratios, constant = [], None
    for r, rt in pairs:
        if rt.sigma0 is not r.sigma0 and not np.array_equal(rt.sigma0.values, r.sigma0.values):
            raise InvalidArgumentError("stability pairs must share the conductivity")
        if rt.beta != r.beta:
            raise InvalidArgumentError("stability pairs must share beta")
        c = lipschitz_constant(r.sigma0, r.beta)
        constant = c if constant is None else max(constant, c)
        dA = domain_l2_norm(r.A - rt.A)
        dJ = domain_l2_norm(r.J0_hat - rt.J0_hat)
        ratios.append(0.0 if dA == 0 and dJ == 0 else dJ / dA)
    ratios = np.array(ratios)
    h_ratios = None
    if h_pairs is not None:
        h_ratios = []
        for (r, rt), (H, Ht) in zip(pairs, h_pairs):
            dH = np.sqrt(sum(domain_l2_norm(InternalFunctional(a.mesh, a.values - b.values)) ** 2
                             for a, b in zip(H, Ht)))
            dJ = domain_l2_norm(r.J0_hat - rt.J0_hat)
            h_ratios.append(0.0 if dH == 0 and dJ == 0 else dJ / dH)
        h_ratios = np.array(h_ratios)
    constant = 1.0 if constant is None else constant
    passed = bool(np.all(ratios <= constant * (1.0 + slack)))
    for (r, _), q in zip(pairs, ratios):
        r.stability_ratio = float(q)
    return StabilityReport(ratios=ratios, constant=constant, slack=slack, passed=passed,
                           h_ratios=h_ratios)
