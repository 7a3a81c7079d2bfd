"""P1 assembly for the pure-Neumann conductivity problems.

Weak forms (``phi_i`` the nodal hat functions)::

    stiffness   K_ij = int sigma grad(phi_j) . grad(phi_i) dx
    current     b_i  = + int J . grad(phi_i) dx
    Neumann     b_i  = int_boundary sigma g phi_i ds

The plus sign in the current load comes from integrating
``div(sigma grad u) = div J`` by parts against ``phi_i`` with ``J = 0`` and
``du/dn = 0`` on the boundary; with it, a synthetic source run through the
forward model and the reconstruction comes back as ``+J``.

Conductivities are nodal; the stiffness uses the element average (midpoint
rule).  Boundary integrals of products of P1 traces use 3-point Gauss, which
is exact for the cubic integrands involved.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import InvalidArgumentError, ModelAssumptionError, SolvabilityError, SupportViolationError
from .mesh import Mesh, ScalarField, VectorField, normalize_sides

COMPATIBILITY_RTOL = 1e-10

_GAUSS_T = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 18.0


@dataclass(frozen=True, eq=False)
class BoundarySource:
    """Neumann datum ``g``: one value per boundary slot, linear along each edge.

    ``sides`` lists the sides on which ``g`` may be nonzero; values elsewhere
    are forced to zero.
    """

    mesh: Mesh
    values: np.ndarray
    sides: tuple = field(default=("left", "top", "right", "bottom"))

    def __post_init__(self):
        sides = normalize_sides(self.sides)
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.mesh.n_slots,):
            raise InvalidArgumentError(
                f"expected {self.mesh.n_slots} boundary values, got shape {vals.shape}")
        if not np.isfinite(vals).all():
            raise InvalidArgumentError("non-finite boundary values")
        vals[~self.mesh.slot_mask(sides)] = 0.0
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "sides", sides)

    @classmethod
    def from_function(cls, mesh, func, sides=None):
        """Sample ``func(x, y, nx, ny)`` at the boundary slots."""
        x, y = mesh.nodes[mesh.slot_nodes].T
        n = mesh.slot_normals()
        vals = np.broadcast_to(func(x, y, n[:, 0], n[:, 1]), (mesh.n_slots,))
        return cls(mesh, vals, normalize_sides(sides))

    @property
    def is_full(self) -> bool:
        return len(self.sides) == 4

    def norm(self) -> float:
        return boundary_l2_norm(self)

    def compatibility_residual(self, sigma0: ScalarField) -> float:
        """``int_boundary sigma0 g ds``."""
        return float(boundary_weights(self.mesh, sigma0) @ self.values)

    def __mul__(self, scalar):
        return BoundarySource(self.mesh, self.values * scalar, self.sides)

    __rmul__ = __mul__

    def __add__(self, other):
        sides = tuple(sorted(set(self.sides) | set(other.sides),
                             key=("left", "top", "right", "bottom").index))
        return BoundarySource(self.mesh, self.values + other.values, sides)


def _check_sigma(mesh, sigma0):
    if not isinstance(sigma0, ScalarField) or sigma0.mesh is not mesh:
        raise InvalidArgumentError("conductivity must be a nodal field on the same mesh")
    low = sigma0.values.min()
    if low <= 0.0:
        raise ModelAssumptionError(
            f"conductivity must satisfy 0 < K1 <= sigma0; found K1 = min(sigma0) = {low:g}")


def assemble_stiffness(mesh: Mesh, sigma0: ScalarField) -> sp.csr_matrix:
    """Conductivity-weighted P1 stiffness matrix (symmetric, kernel = constants)."""
    _check_sigma(mesh, sigma0)
    coef = sigma0.element_mean() * mesh.areas
    g = mesh.basis_gradients
    local = np.einsum("e,eak,ebk->eab", coef, g, g)
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    K = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))
    K.sum_duplicates()
    return K


def gradient_operator(mesh: Mesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse maps from nodal values to element gradient components."""
    rows = np.repeat(np.arange(mesh.n_elements), 3)
    cols = mesh.elements.ravel()
    shape = (mesh.n_elements, mesh.n_nodes)
    Gx = sp.csr_matrix((mesh.basis_gradients[:, :, 0].ravel(), (rows, cols)), shape=shape)
    Gy = sp.csr_matrix((mesh.basis_gradients[:, :, 1].ravel(), (rows, cols)), shape=shape)
    return Gx, Gy


def assemble_current_load(mesh: Mesh, J: VectorField, check_support: bool = True) -> np.ndarray:
    """Load vector ``b_i = int J . grad(phi_i) dx`` of an element vector field.

    With ``check_support`` the field must vanish on every element touching
    the boundary.

    Raises
    ------
    SupportViolationError
        If ``J`` is nonzero next to the boundary.
    """
    if J.mesh is not mesh:
        raise InvalidArgumentError("current density lives on a different mesh")
    if check_support:
        bad = mesh.boundary_element_mask & np.any(J.values != 0.0, axis=1)
        if bad.any():
            raise SupportViolationError(
                f"current density must be compactly supported: nonzero on {int(bad.sum())} "
                "element(s) touching the boundary")
    local = np.einsum("e,ek,eak->ea", mesh.areas, J.values, mesh.basis_gradients)
    return np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def _edge_quadrature(mesh, slot_values, node_values=None):
    """Per-edge Gauss samples of a boundary trace and of the hat functions."""
    a, b = mesh.edge_slots.T
    t = _GAUSS_T[None, :]
    gq = slot_values[a][:, None] * (1 - t) + slot_values[b][:, None] * t
    if node_values is not None:
        na, nb = mesh.edge_nodes.T
        gq = gq * (node_values[na][:, None] * (1 - t) + node_values[nb][:, None] * t)
    return gq, t


def _neumann_vector(mesh, sigma0, g_values):
    gq, t = _edge_quadrature(mesh, g_values, sigma0.values)
    w = _GAUSS_W[None, :] * mesh.edge_lengths[:, None]
    to_a = np.sum(w * gq * (1 - t), axis=1)
    to_b = np.sum(w * gq * t, axis=1)
    b = np.bincount(mesh.edge_nodes[:, 0], weights=to_a, minlength=mesh.n_nodes)
    b += np.bincount(mesh.edge_nodes[:, 1], weights=to_b, minlength=mesh.n_nodes)
    return b


def boundary_weights(mesh: Mesh, sigma0: ScalarField) -> np.ndarray:
    """Vector ``w`` with ``w . g = int_boundary sigma0 g ds`` for slot data ``g``."""
    na, nb = mesh.edge_nodes.T
    t = _GAUSS_T[None, :]
    s = sigma0.values[na][:, None] * (1 - t) + sigma0.values[nb][:, None] * t
    w = _GAUSS_W[None, :] * mesh.edge_lengths[:, None] * s
    a, b = mesh.edge_slots.T
    out = np.bincount(a, weights=np.sum(w * (1 - t), axis=1), minlength=mesh.n_slots)
    out += np.bincount(b, weights=np.sum(w * t, axis=1), minlength=mesh.n_slots)
    return out


def neumann_operator(mesh: Mesh, sigma0: ScalarField) -> sp.csr_matrix:
    """Sparse map ``N`` from slot data ``g`` to the Neumann load ``N @ g``."""
    rows, cols, vals = [], [], []
    na, nb = mesh.edge_nodes.T
    sa, sb = mesh.edge_slots.T
    t = _GAUSS_T
    s = sigma0.values
    for q in range(3):
        w = _GAUSS_W[q] * mesh.edge_lengths * (s[na] * (1 - t[q]) + s[nb] * t[q])
        for node, phi in ((na, 1 - t[q]), (nb, t[q])):
            for slot, psi in ((sa, 1 - t[q]), (sb, t[q])):
                rows.append(node)
                cols.append(slot)
                vals.append(w * phi * psi)
    N = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(mesh.n_nodes, mesh.n_slots))
    N.sum_duplicates()
    return N


def assemble_neumann_load(mesh: Mesh, sigma0: ScalarField, g: BoundarySource,
                          rtol: float = COMPATIBILITY_RTOL) -> np.ndarray:
    """Load vector ``b_i = int_boundary sigma0 g phi_i ds``.

    Raises
    ------
    SolvabilityError
        If ``|int sigma0 g ds| > rtol * max(sigma0) * ||g||``.
    """
    _check_sigma(mesh, sigma0)
    if g.mesh is not mesh:
        raise InvalidArgumentError("boundary source lives on a different mesh")
    residual = g.compatibility_residual(sigma0)
    scale = sigma0.values.max() * boundary_l2_norm(g)
    if abs(residual) > rtol * max(scale, np.finfo(float).tiny):
        raise SolvabilityError(
            f"incompatible Neumann data: int sigma0 g ds = {residual:.3e}", residual=residual)
    return _neumann_vector(mesh, sigma0, g.values)


def boundary_integral(u: ScalarField, sigma0: ScalarField, g: BoundarySource) -> float:
    """``int_boundary u sigma0 g ds``."""
    return float(u.values @ _neumann_vector(u.mesh, sigma0, g.values))


def assemble_boundary_mass(mesh: Mesh, sides=None) -> sp.csr_matrix:
    """Consistent P1 boundary mass matrix on the slot space of the given sides.

    ``g @ M @ g`` equals the squared L2 norm of the trace over those sides.
    Rows and columns of slots on other sides are empty.
    """
    if sides is not None and not isinstance(sides, str) and len(list(sides)) == 0:
        raise InvalidArgumentError("empty side set")
    mask = mesh.edge_mask(sides)
    L = mesh.edge_lengths[mask]
    a, b = mesh.edge_slots[mask].T
    rows = np.concatenate([a, a, b, b])
    cols = np.concatenate([a, b, a, b])
    vals = np.concatenate([L / 3, L / 6, L / 6, L / 3])
    M = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_slots, mesh.n_slots))
    M.sum_duplicates()
    return M


def boundary_l2_norm(g: BoundarySource) -> float:
    """L2 norm of ``g`` over the whole boundary (exact for P1 traces)."""
    M = assemble_boundary_mass(g.mesh)
    scale = np.abs(g.values).max()
    if scale == 0:
        return 0.0
    v = g.values / scale  # avoid under/overflow in the square
    return float(scale * np.sqrt(max(v @ (M @ v), 0.0)))


def make_compatible(g: BoundarySource, sigma0: ScalarField) -> BoundarySource:
    """Remove a constant on the tagged sides so that ``int sigma0 g ds = 0``."""
    ones = BoundarySource(g.mesh, np.ones(g.mesh.n_slots), g.sides)
    w = boundary_weights(g.mesh, sigma0)
    shift = (w @ g.values) / (w @ ones.values)
    return BoundarySource(g.mesh, g.values - shift * ones.values, g.sides)


def to_matrix_market(A: sp.spmatrix, path) -> None:
    """Write a sparse matrix in MatrixMarket coordinate format."""
    import scipy.io

    scipy.io.mmwrite(str(path), sp.coo_matrix(A))
