"""Structured P1 triangulations of rectangles and the fields that live on them.

Every cell of an ``nx`` by ``ny`` grid is cut along its lower-left to
upper-right diagonal into two counter-clockwise triangles.  Scalar fields are
nodal (continuous piecewise linear), vector fields are piecewise constant per
element.

The boundary is walked clockwise starting from the bottom-left corner: left
side upwards, top side rightwards, right side downwards, bottom side
leftwards.  Boundary data are stored per *slot*, one slot per (side, node)
pair, so a corner node owns two slots and data such as ``d . n`` may jump
there.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .exceptions import InvalidArgumentError

SIDES = ("left", "top", "right", "bottom")
_OUTWARD = {
    "left": (-1.0, 0.0),
    "top": (0.0, 1.0),
    "right": (1.0, 0.0),
    "bottom": (0.0, -1.0),
}


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def normalize_sides(sides: str | Iterable[str] | None) -> tuple[str, ...]:
    """Return a canonical tuple of side tags; ``None``/``"all"`` mean every side."""
    if sides is None or sides == "all" or sides == "full":
        return SIDES
    if isinstance(sides, str):
        sides = [s for s in sides.replace("+", ",").split(",") if s.strip()]
    out = []
    for s in sides:
        s = s.strip().lower()
        if s not in SIDES:
            raise InvalidArgumentError(f"unknown side tag {s!r}; expected one of {SIDES}")
        if s not in out:
            out.append(s)
    if not out:
        raise InvalidArgumentError("empty side set")
    return tuple(sorted(out, key=SIDES.index))


class Mesh:
    """Immutable structured triangulation of ``[x0, x1] x [y0, y1]``.

    Attributes
    ----------
    nodes : ndarray, shape (n_nodes, 2)
    elements : ndarray, shape (n_elements, 3)
        Counter-clockwise node triples.
    areas, centroids : ndarray
        Per-element area and centroid.
    basis_gradients : ndarray, shape (n_elements, 3, 2)
        Constant gradients of the three local hat functions.
    edge_nodes, edge_slots : ndarray, shape (n_edges, 2)
        Boundary edges in clockwise order, oriented along the walk.
    edge_normals : ndarray, shape (n_edges, 2)
        Outward unit normals.
    edge_sides : ndarray of str
    slot_nodes, slot_sides : ndarray, shape (n_slots,)
    """

    def __init__(self, x0, x1, y0, y1, nx, ny):
        self.bounds = (float(x0), float(x1), float(y0), float(y1))
        self.resolution = (int(nx), int(ny))
        hx = (x1 - x0) / nx
        hy = (y1 - y0) / ny
        self.spacing = (hx, hy)

        ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
        self.nodes = _frozen(np.column_stack([x0 + ii.ravel() * hx, y0 + jj.ravel() * hy]))

        ci, cj = np.meshgrid(np.arange(nx), np.arange(ny))
        ci, cj = ci.ravel(), cj.ravel()
        n00 = self.node_index(ci, cj)
        n10 = self.node_index(ci + 1, cj)
        n01 = self.node_index(ci, cj + 1)
        n11 = self.node_index(ci + 1, cj + 1)
        lower = np.column_stack([n00, n10, n11])
        upper = np.column_stack([n00, n11, n01])
        # interleave so the two triangles of a cell are adjacent
        elements = np.empty((2 * nx * ny, 3), dtype=np.int64)
        elements[0::2] = lower
        elements[1::2] = upper
        self.elements = _frozen(elements)

        p = self.nodes[self.elements]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        self.areas = _frozen(signed)
        self.centroids = _frozen(p.mean(axis=1))
        # grad(phi_a) = rot90(opposite edge) / (2 * area)
        grads = np.empty((len(elements), 3, 2))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            edge = p[:, c] - p[:, b]
            grads[:, a, 0] = -edge[:, 1]
            grads[:, a, 1] = edge[:, 0]
        grads /= (2.0 * signed)[:, None, None]
        self.basis_gradients = _frozen(grads)

        self._build_boundary(nx, ny)

    def _build_boundary(self, nx, ny):
        walks = {
            "left": [(0, j) for j in range(ny + 1)],
            "top": [(i, ny) for i in range(nx + 1)],
            "right": [(nx, j) for j in range(ny, -1, -1)],
            "bottom": [(i, 0) for i in range(nx, -1, -1)],
        }
        slot_nodes, slot_sides, slot_offsets = [], [], {}
        edge_nodes, edge_slots, edge_sides, edge_normals = [], [], [], []
        for side in SIDES:
            walk = [self.node_index(i, j) for i, j in walks[side]]
            start = len(slot_nodes)
            slot_offsets[side] = start
            slot_nodes.extend(walk)
            slot_sides.extend([side] * len(walk))
            for k in range(len(walk) - 1):
                edge_nodes.append((walk[k], walk[k + 1]))
                edge_slots.append((start + k, start + k + 1))
                edge_sides.append(side)
                edge_normals.append(_OUTWARD[side])
        self.slot_nodes = _frozen(np.array(slot_nodes, dtype=np.int64))
        self.slot_sides = _frozen(np.array(slot_sides))
        self._slot_offsets = slot_offsets
        self.edge_nodes = _frozen(np.array(edge_nodes, dtype=np.int64))
        self.edge_slots = _frozen(np.array(edge_slots, dtype=np.int64))
        self.edge_sides = _frozen(np.array(edge_sides))
        self.edge_normals = _frozen(np.array(edge_normals, dtype=float))
        seg = self.nodes[self.edge_nodes[:, 1]] - self.nodes[self.edge_nodes[:, 0]]
        self.edge_lengths = _frozen(np.hypot(seg[:, 0], seg[:, 1]))

        # owner element of each boundary edge, via sorted node-pair keys
        n = self.n_nodes
        tri = self.elements
        pairs = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        keys = pairs.min(axis=1) * n + pairs.max(axis=1)
        owners = np.tile(np.arange(len(tri)), 3)
        order = np.argsort(keys, kind="stable")
        e = self.edge_nodes
        pos = np.searchsorted(keys[order], e.min(axis=1) * n + e.max(axis=1))
        self.edge_elements = _frozen(owners[order][pos])

        on_boundary = np.zeros(self.n_nodes, dtype=bool)
        on_boundary[self.slot_nodes] = True
        self.boundary_node_mask = _frozen(on_boundary)
        self.boundary_element_mask = _frozen(on_boundary[self.elements].any(axis=1))

    # ------------------------------------------------------------------ sizes
    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edge_nodes)

    @property
    def n_slots(self) -> int:
        return len(self.slot_nodes)

    @property
    def area(self) -> float:
        x0, x1, y0, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)

    @property
    def h(self) -> float:
        return max(self.spacing)

    def node_index(self, i, j):
        return np.asarray(j) * (self.resolution[0] + 1) + np.asarray(i)

    def __repr__(self):
        x0, x1, y0, y1 = self.bounds
        nx, ny = self.resolution
        return f"Mesh([{x0:g}, {x1:g}] x [{y0:g}, {y1:g}], {nx}x{ny})"

    # -------------------------------------------------------------- boundary
    def side_slots(self, side: str) -> np.ndarray:
        """Slot indices of one side, in clockwise order."""
        nx, ny = self.resolution
        count = ny + 1 if side in ("left", "right") else nx + 1
        start = self._slot_offsets[side]
        return np.arange(start, start + count)

    def slot_mask(self, sides) -> np.ndarray:
        return np.isin(self.slot_sides, normalize_sides(sides))

    def edge_mask(self, sides) -> np.ndarray:
        return np.isin(self.edge_sides, normalize_sides(sides))

    def slot_arclength(self) -> np.ndarray:
        """Clockwise arclength from the bottom-left corner, per slot."""
        out = np.empty(self.n_slots)
        offset = 0.0
        for side in SIDES:
            idx = self.side_slots(side)
            pts = self.nodes[self.slot_nodes[idx]]
            step = np.hypot(*np.diff(pts, axis=0).T)
            out[idx] = offset + np.concatenate([[0.0], np.cumsum(step)])
            offset = out[idx[-1]]
        return out

    def slot_normals(self) -> np.ndarray:
        return np.array([_OUTWARD[s] for s in self.slot_sides])

    # ------------------------------------------------------------- sampling
    def nodal(self, func: Callable) -> "ScalarField":
        """Sample ``func(x, y)`` at the nodes."""
        x, y = self.nodes.T
        return ScalarField(self, np.broadcast_to(func(x, y), (self.n_nodes,)).astype(float))

    def elemental(self, func: Callable) -> "VectorField":
        """Sample a vector-valued ``func(x, y) -> (fx, fy)`` at element centroids."""
        x, y = self.centroids.T
        fx, fy = func(x, y)
        vals = np.column_stack([np.broadcast_to(fx, x.shape), np.broadcast_to(fy, x.shape)])
        return VectorField(self, vals.astype(float))

    def refine(self, factor: int) -> "Mesh":
        nx, ny = self.resolution
        return Mesh(*self.bounds, nx * factor, ny * factor)

    def distance_to_sides(self, points, sides=None) -> np.ndarray:
        """Distance from ``points`` to the union of the given sides."""
        x0, x1, y0, y1 = self.bounds
        x, y = np.asarray(points, dtype=float).T
        dist = {"left": x - x0, "right": x1 - x, "bottom": y - y0, "top": y1 - y}
        return np.min([dist[s] for s in normalize_sides(sides)], axis=0)


def build_rect_mesh(x0: float, x1: float, y0: float, y1: float, nx: int, ny: int) -> Mesh:
    """Triangulate ``[x0, x1] x [y0, y1]`` with ``nx * ny`` cells, two triangles each.

    Raises
    ------
    InvalidArgumentError
        If the extent or the resolution is not positive.
    """
    if not (np.isfinite([x0, x1, y0, y1]).all() and x1 > x0 and y1 > y0):
        raise InvalidArgumentError(f"degenerate domain [{x0}, {x1}] x [{y0}, {y1}]")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgumentError(f"resolution must be positive integers, got ({nx}, {ny})")
    return Mesh(x0, x1, y0, y1, int(nx), int(ny))


def _check_mesh(mesh, *fields):
    for f in fields:
        if f.mesh is not mesh:
            raise InvalidArgumentError("fields live on different meshes")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Continuous piecewise-linear field given by its nodal values."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.mesh.n_nodes,):
            raise InvalidArgumentError(
                f"expected {self.mesh.n_nodes} nodal values, got shape {vals.shape}")
        if not np.isfinite(vals).all():
            raise InvalidArgumentError("non-finite nodal values")
        object.__setattr__(self, "values", vals)

    def element_mean(self) -> np.ndarray:
        return self.values[self.mesh.elements].mean(axis=1)

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _check_mesh(self.mesh, other)
            other = other.values
        return ScalarField(self.mesh, self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            _check_mesh(self.mesh, other)
            other = other.values
        return ScalarField(self.mesh, self.values - other)

    def __mul__(self, scalar):
        return ScalarField(self.mesh, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.mesh, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Piecewise-constant 2-vector field, one value per element."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.mesh.n_elements, 2):
            raise InvalidArgumentError(
                f"expected ({self.mesh.n_elements}, 2) element values, got {vals.shape}")
        if not np.isfinite(vals).all():
            raise InvalidArgumentError("non-finite element values")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros((mesh.n_elements, 2)))

    def norm(self) -> np.ndarray:
        return np.hypot(self.values[:, 0], self.values[:, 1])

    def __add__(self, other):
        if isinstance(other, VectorField):
            _check_mesh(self.mesh, other)
            other = other.values
        return VectorField(self.mesh, self.values + other)

    def __sub__(self, other):
        if isinstance(other, VectorField):
            _check_mesh(self.mesh, other)
            other = other.values
        return VectorField(self.mesh, self.values - other)

    def __mul__(self, scalar):
        scalar = np.asarray(scalar)
        if scalar.ndim == 1:
            scalar = scalar[:, None]
        return VectorField(self.mesh, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(self.mesh, -self.values)


def p1_gradient(field: ScalarField, mesh: Mesh | None = None) -> VectorField:
    """Exact element gradients of a nodal field."""
    if mesh is not None:
        _check_mesh(mesh, field)
    m = field.mesh
    local = field.values[m.elements]
    return VectorField(m, np.einsum("ea,eak->ek", local, m.basis_gradients))


def gradient_matrix(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Element gradients for a stack of nodal vectors.

    ``values`` has shape ``(n_nodes, k)``; returns ``(n_elements, 2, k)``.
    """
    local = values[mesh.elements]  # (E, 3, k)
    return np.einsum("eak,eac->eck", local, mesh.basis_gradients)


def domain_l2_norm(f) -> float:
    """L2(domain) norm of a nodal or element field.

    Nodal fields use the edge-midpoint rule, which is exact for the square of
    a P1 function; element fields are integrated exactly.
    """
    m = f.mesh
    if isinstance(f, ScalarField):
        loc = f.values[m.elements]
        mids = 0.5 * (loc + np.roll(loc, -1, axis=1))
        return float(np.sqrt(np.sum(m.areas / 3.0 * np.sum(mids**2, axis=1))))
    if isinstance(f, VectorField):
        return float(np.sqrt(np.sum(m.areas * np.sum(f.values**2, axis=1))))
    vals = np.asarray(getattr(f, "values", f), dtype=float)
    if vals.shape == (m.n_elements,):
        return float(np.sqrt(np.sum(m.areas * vals**2)))
    raise InvalidArgumentError(f"cannot integrate {type(f).__name__}")


def integrate_elements(mesh: Mesh, values: np.ndarray) -> float:
    """Integral of a piecewise-constant scalar given per element."""
    return float(mesh.areas @ np.asarray(values, dtype=float))
