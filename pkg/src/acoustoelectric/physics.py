"""Acousto-electric forward model, boundary functionals and internal functionals.

A standing acoustic wave ``cos(k . x + phi)`` of small amplitude ``eps``
modulates the conductivity and the source current::

    sigma_eps = sigma0 (1 + eps beta cos(k . x + phi))      (nodal)
    J_eps     = J0     (1 + eps cos(k . x + phi))           (element centroids)

and the potential solves ``div(sigma_eps grad u_eps) = div J_eps`` with zero
Neumann data.  Pairing ``u_eps`` with an auxiliary solution ``v`` of
``div(sigma0 grad v) = 0``, ``dv/dn = g`` on the boundary gives the
functional ``Sigma_eps = int_boundary u_eps sigma0 g ds``.  Its first-order
coefficient in ``eps`` is a Fourier sample of the internal functional
``H = (beta sigma0 grad u0 - J0) . grad v``::

    Sigma_1(k, phi) = - int H cos(k . x + phi) dx

(the minus sign follows from integrating by parts with ``J0 = 0`` on the
boundary).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError, ModulationAmplitudeError
from .fem import (BoundarySource, assemble_current_load, assemble_neumann_load,
                  assemble_stiffness, boundary_integral)
from .mesh import Mesh, ScalarField, VectorField, p1_gradient
from .solver import SolverConfig, solve_projected

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AcousticWave:
    """One modulation experiment: wave vector ``k``, phase ``phi``, amplitude ``eps``."""

    k: tuple = (0.0, 0.0)
    phi: float = 0.0
    eps: float = 1e-3
    beta: float = 0.5

    def __post_init__(self):
        k = tuple(float(c) for c in np.ravel(self.k))
        if len(k) != 2:
            raise InvalidArgumentError("wave vector must have two components")
        object.__setattr__(self, "k", k)
        if not self.eps >= 0:
            raise InvalidArgumentError("modulation amplitude eps must be nonnegative")
        if self.beta == 1:
            logger.warning("beta = 1: internal functionals cannot be inverted for the source")

    @property
    def degenerate(self) -> bool:
        return self.beta == 1

    def profile(self, points) -> np.ndarray:
        """``cos(k . x + phi)`` at the given points."""
        points = np.asarray(points)
        return np.cos(points @ np.asarray(self.k) + self.phi)

    def with_eps(self, eps):
        return AcousticWave(self.k, self.phi, eps, self.beta)


@dataclass(frozen=True, eq=False)
class InternalFunctional:
    """Per-element values of ``H_j`` for auxiliary index ``index``."""

    mesh: Mesh
    values: np.ndarray
    index: int = 1

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.mesh.n_elements,):
            raise InvalidArgumentError(
                f"expected {self.mesh.n_elements} element values, got shape {vals.shape}")
        if not np.isfinite(vals).all():
            raise InvalidArgumentError("internal functional has non-finite values")
        object.__setattr__(self, "values", vals)


def modulate(sigma0: ScalarField, J0: VectorField, w: AcousticWave):
    """Apply the acoustic modulation to conductivity and current.

    Raises
    ------
    ModulationAmplitudeError
        If the modulated conductivity is not positive everywhere.
    """
    mesh = sigma0.mesh
    if J0.mesh is not mesh:
        raise InvalidArgumentError("conductivity and current live on different meshes")
    if w.eps == 0:
        return sigma0, J0
    sig = sigma0.values * (1.0 + w.eps * w.beta * w.profile(mesh.nodes))
    if sig.min() <= 0:
        raise ModulationAmplitudeError(
            f"eps * |beta| = {w.eps * abs(w.beta):g} drives the conductivity to {sig.min():g}")
    J = J0.values * (1.0 + w.eps * w.profile(mesh.centroids))[:, None]
    return ScalarField(mesh, sig), VectorField(mesh, J)


def solve_forward(sigma: ScalarField, J: VectorField, cfg: SolverConfig | None = None,
                  return_info: bool = False):
    """Mean-zero potential of ``div(sigma grad u) = div J``, ``du/dn = 0``."""
    mesh = sigma.mesh
    K = assemble_stiffness(mesh, sigma)
    b = assemble_current_load(mesh, J)
    if not b.any():
        u = ScalarField(mesh, np.zeros(mesh.n_nodes))
        return (u, None) if return_info else u
    x, info = solve_projected(K, b, cfg, return_info=True)
    u = ScalarField(mesh, x)
    return (u, info) if return_info else u


def solve_auxiliary(sigma0: ScalarField, g: BoundarySource, cfg: SolverConfig | None = None,
                    return_info: bool = False):
    """Mean-zero solution of ``div(sigma0 grad v) = 0`` with ``dv/dn = g``."""
    mesh = sigma0.mesh
    K = assemble_stiffness(mesh, sigma0)
    b = assemble_neumann_load(mesh, sigma0, g)
    if not b.any():
        v = ScalarField(mesh, np.zeros(mesh.n_nodes))
        return (v, None) if return_info else v
    x, info = solve_projected(K, b, cfg, return_info=True)
    v = ScalarField(mesh, x)
    return (v, info) if return_info else v


def boundary_functional(u: ScalarField, sigma0: ScalarField, g: BoundarySource) -> float:
    """``Sigma = int_boundary u sigma0 g ds``."""
    if not (u.mesh is sigma0.mesh is g.mesh):
        raise InvalidArgumentError("fields live on different meshes")
    return boundary_integral(u, sigma0, g)


def sigma1_measured(sigma0, J0, w: AcousticWave, g: BoundarySource,
                    cfg: SolverConfig | None = None, u0: ScalarField | None = None) -> float:
    """One-sided difference ``(Sigma_eps - Sigma_0) / eps`` from two forward problems.

    The modulated problem is solved for the increment ``u_eps - u0``
    (``K_eps du = b_eps - K_eps u0``), which is algebraically the same as
    subtracting two full solves but keeps the solver tolerance relative to
    the increment rather than to ``u0``.  Pass ``u0`` to reuse an
    unmodulated solution.
    """
    if not w.eps > 0:
        raise InvalidArgumentError("finite-difference estimate needs eps > 0")
    if u0 is None:
        u0 = solve_forward(sigma0, J0, cfg)
    mesh = sigma0.mesh
    sig_eps, J_eps = modulate(sigma0, J0, w)
    K_eps = assemble_stiffness(mesh, sig_eps)
    rhs = assemble_current_load(mesh, J_eps) - K_eps @ u0.values
    rhs -= rhs.mean()
    du = solve_projected(K_eps, rhs, cfg) if rhs.any() else np.zeros(mesh.n_nodes)
    return boundary_functional(ScalarField(mesh, du), sigma0, g) / w.eps


def sigma1_linearized(sigma0, J0, w: AcousticWave, g: BoundarySource,
                      cfg: SolverConfig | None = None, u0: ScalarField | None = None) -> float:
    """Exact eps-derivative of the discrete ``Sigma_eps`` at ``eps = 0``.

    Differentiating ``K_eps u_eps = b_eps`` gives ``K0 u1 = b1 - K1 u0`` with
    ``K1`` the stiffness of ``beta sigma0 cos(...)`` and ``b1`` the load of
    ``J0 cos(...)``.  The difference to :func:`sigma1_predicted` is the
    eps-independent discretisation floor of the measured estimate.
    """
    mesh = sigma0.mesh
    if u0 is None:
        u0 = solve_forward(sigma0, J0, cfg)
    c_nodes = w.profile(mesh.nodes)
    c_elem = w.profile(mesh.centroids)
    sig1 = (w.beta * sigma0.values * c_nodes)[mesh.elements].mean(axis=1)
    flux = p1_gradient(u0).values * sig1[:, None]
    rhs = assemble_current_load(mesh, VectorField(mesh, J0.values * c_elem[:, None]))
    rhs -= assemble_current_load(mesh, VectorField(mesh, flux), check_support=False)
    K0 = assemble_stiffness(mesh, sigma0)
    u1 = solve_projected(K0, rhs - rhs.mean(), cfg) if rhs.any() else np.zeros(mesh.n_nodes)
    return boundary_functional(ScalarField(mesh, u1), sigma0, g)


def sigma1_predicted(H: InternalFunctional, w: AcousticWave) -> float:
    """Internal-side prediction ``-int H cos(k . x + phi) dx`` (centroid rule)."""
    m = H.mesh
    return -float(np.sum(m.areas * H.values * w.profile(m.centroids)))


def internal_functional(sigma0: ScalarField, u0: ScalarField, J0: VectorField,
                        v: ScalarField, beta: float, index: int = 1) -> InternalFunctional:
    """``H = (beta sigma0 grad u0 - J0) . grad v`` per element."""
    mesh = sigma0.mesh
    if not (u0.mesh is mesh and J0.mesh is mesh and v.mesh is mesh):
        raise InvalidArgumentError("fields live on different meshes")
    A = beta * sigma0.element_mean()[:, None] * p1_gradient(u0).values - J0.values
    return InternalFunctional(mesh, np.einsum("ek,ek->e", A, p1_gradient(v).values), index)


def wave_lattice(mesh: Mesh, m_max: int, n_max: int, eps: float = 1e-3, beta: float = 0.5):
    """Half lattice of wave vectors ``2 pi (m / Lx, n / Ly)`` with both phases.

    Only one of each ``+-k`` pair is generated; :func:`fourier_recover_H`
    fills in the mirror image by symmetry.
    """
    x0, x1, y0, y1 = mesh.bounds
    Lx, Ly = x1 - x0, y1 - y0
    waves = [AcousticWave((0.0, 0.0), 0.0, eps, beta)]
    for m in range(0, m_max + 1):
        for n in range(-n_max, n_max + 1):
            if m == 0 and n <= 0:
                continue
            k = (2 * np.pi * m / Lx, 2 * np.pi * n / Ly)
            waves.append(AcousticWave(k, 0.0, eps, beta))
            waves.append(AcousticWave(k, np.pi / 2, eps, beta))
    return waves


def fourier_recover_H(sigma0, J0, waves, g: BoundarySource, cfg: SolverConfig | None = None,
                      index: int = 1) -> InternalFunctional:
    """Invert the truncated Fourier series of ``H`` sampled through ``Sigma_1``.

    Each wave vector ``k != 0`` needs the phases ``0`` and ``pi / 2``, which
    give ``int H cos(k.x) = -Sigma_1(k, 0)`` and
    ``int H sin(k.x) = Sigma_1(k, pi/2)``.  Wave vectors whose mirror ``-k``
    is absent are counted twice.  The series is that of the periodic
    extension of ``H`` from the bounding box, so it suffers Gibbs
    oscillations wherever ``H`` jumps, including the box edges; the error
    is O(1) there and decays like the tail of the spectrum in the interior.
    """
    mesh = sigma0.mesh
    by_k: dict = {}
    for w in waves:
        by_k.setdefault(w.k, {})[round(float(np.mod(w.phi, 2 * np.pi)), 12)] = w
    u0 = solve_forward(sigma0, J0, cfg)
    vol = mesh.area
    xc = mesh.centroids
    H = np.zeros(mesh.n_elements)
    half_pi = round(np.pi / 2, 12)
    for k, phases in by_k.items():
        zero = k == (0.0, 0.0)
        if 0.0 not in phases or (not zero and half_pi not in phases):
            raise InvalidArgumentError(f"wave vector {k} needs both phases 0 and pi/2")
        cos_coef = -sigma1_measured(sigma0, J0, phases[0.0], g, cfg, u0=u0)
        arg = xc @ np.asarray(k)
        if zero:
            H += cos_coef / vol
            continue
        sin_coef = sigma1_measured(sigma0, J0, phases[half_pi], g, cfg, u0=u0)
        weight = 1.0 if (-k[0], -k[1]) in by_k else 2.0
        H += weight * (cos_coef * np.cos(arg) + sin_coef * np.sin(arg)) / vol
    return InternalFunctional(mesh, H, index)
