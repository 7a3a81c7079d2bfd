"""Test problems: ellipse-based head conductivity, synthetic sources, noise."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError, ModelAssumptionError
from .mesh import Mesh, ScalarField, VectorField
from .physics import InternalFunctional

# arbitrary conductivity units
DEFAULT_TISSUES = {
    "scalp": 0.33,
    "skull": 0.05,
    "csf": 1.5,
    "grey": 0.33,
    "white": 0.14,
}


@dataclass(frozen=True)
class Ellipse:
    center: tuple
    axes: tuple
    angle: float = 0.0  # degrees, counter-clockwise
    tag: str = "grey"

    def contains(self, x, y):
        c, s = np.cos(np.radians(self.angle)), np.sin(np.radians(self.angle))
        dx, dy = x - self.center[0], y - self.center[1]
        u = (c * dx + s * dy) / self.axes[0]
        v = (-s * dx + c * dy) / self.axes[1]
        return u * u + v * v <= 1.0


@dataclass(frozen=True)
class PhantomSpec:
    """Ellipses drawn in order (last one wins) over a background tissue.

    Ellipse geometry is given in a reference frame mapped affinely onto the
    domain: ``x = frame_center + frame_scale * X``.
    """

    ellipses: tuple = ()
    tissues: dict = field(default_factory=lambda: dict(DEFAULT_TISSUES))
    background: str = "scalp"
    frame_center: tuple = (0.0, 0.0)
    frame_scale: tuple = (1.0, 1.0)
    bounds: tuple | None = None

    def __post_init__(self):
        for e in self.ellipses:
            if e.tag not in self.tissues:
                raise InvalidArgumentError(f"ellipse tissue {e.tag!r} missing from the table")
        if self.background not in self.tissues:
            raise InvalidArgumentError(f"background tissue {self.background!r} missing from the table")
        vals = np.array(list(self.tissues.values()), dtype=float)
        if np.any(vals <= 0):
            raise ModelAssumptionError("tissue conductivities must be positive")
        if self.bounds is not None:
            k1, k2 = self.bounds
            if vals.min() < k1 or vals.max() > k2:
                raise ModelAssumptionError(
                    f"tissue conductivities [{vals.min():g}, {vals.max():g}] exceed declared "
                    f"bounds K1={k1:g}, K2={k2:g}")

    def to_reference(self, x, y):
        return ((x - self.frame_center[0]) / self.frame_scale[0],
                (y - self.frame_center[1]) / self.frame_scale[1])

    def check_inside(self, mesh: Mesh):
        """Raise if an ellipse reaches outside the mesh domain."""
        x0, x1, y0, y1 = mesh.bounds
        t = np.linspace(0, 2 * np.pi, 721)
        for e in self.ellipses:
            c, s = np.cos(np.radians(e.angle)), np.sin(np.radians(e.angle))
            X = e.center[0] + e.axes[0] * np.cos(t) * c - e.axes[1] * np.sin(t) * s
            Y = e.center[1] + e.axes[0] * np.cos(t) * s + e.axes[1] * np.sin(t) * c
            x = self.frame_center[0] + self.frame_scale[0] * X
            y = self.frame_center[1] + self.frame_scale[1] * Y
            if x.min() < x0 or x.max() > x1 or y.min() < y0 or y.max() > y1:
                raise InvalidArgumentError(f"ellipse {e} leaves the domain")


# Shepp-Logan geometry on [-1, 1]^2 with tissue labels
_SHEPP_LOGAN = (
    Ellipse((0.0, 0.0), (0.69, 0.92), 0.0, "skull"),
    Ellipse((0.0, -0.0184), (0.6624, 0.874), 0.0, "grey"),
    Ellipse((0.22, 0.0), (0.11, 0.31), -18.0, "csf"),
    Ellipse((-0.22, 0.0), (0.16, 0.41), 18.0, "csf"),
    Ellipse((0.0, 0.35), (0.21, 0.25), 0.0, "white"),
    Ellipse((0.0, 0.1), (0.046, 0.046), 0.0, "white"),
    Ellipse((0.0, -0.1), (0.046, 0.046), 0.0, "white"),
    Ellipse((-0.08, -0.605), (0.046, 0.023), 0.0, "white"),
    Ellipse((0.0, -0.605), (0.023, 0.023), 0.0, "white"),
    Ellipse((0.06, -0.605), (0.023, 0.046), 0.0, "white"),
)


def shepp_logan_head(bounds=(0.1, 0.9, 0.0, 1.0), tissues=None) -> PhantomSpec:
    """Shepp-Logan head scaled into the box, surrounded by scalp."""
    x0, x1, y0, y1 = bounds
    return PhantomSpec(
        ellipses=_SHEPP_LOGAN,
        tissues=dict(tissues or DEFAULT_TISSUES),
        background="scalp",
        frame_center=(0.5 * (x0 + x1), 0.5 * (y0 + y1)),
        frame_scale=(0.5 * (x1 - x0), 0.5 * (y1 - y0)),
    )


def build_conductivity(spec: PhantomSpec, mesh: Mesh) -> ScalarField:
    """Rasterize the phantom at the nodes, last ellipse wins."""
    spec.check_inside(mesh)
    X, Y = spec.to_reference(*mesh.nodes.T)
    sigma = np.full(mesh.n_nodes, float(spec.tissues[spec.background]))
    for e in spec.ellipses:
        sigma[e.contains(X, Y)] = spec.tissues[e.tag]
    return ScalarField(mesh, sigma)


@dataclass(frozen=True)
class Blob:
    center: tuple
    width: float
    amplitude: float = 1.0
    direction: tuple = (0.0, 1.0)


@dataclass(frozen=True)
class SourceSpec:
    """Synthetic source current.

    ``kind`` is ``"gaussian-dipole-pair"`` (each blob is ``a d exp(-r^2 / 2w^2)``
    truncated at ``cutoff`` widths), ``"curl-bump"`` (divergence-free curl of
    ``a (1 - r^2/R^2)^3``) or ``"user-grid"`` (explicit element values).
    ``margin`` is the number of element layers along the boundary forced to zero.
    """

    kind: str = "gaussian-dipole-pair"
    blobs: tuple = (
        Blob((0.44, 0.56), 0.05, 1.0, (0.0, 1.0)),
        Blob((0.58, 0.44), 0.05, 1.0, (0.0, -1.0)),
    )
    cutoff: float = 3.0
    center: tuple = (0.5, 0.5)
    radius: float = 0.2
    amplitude: float = 1.0
    values: np.ndarray | None = None
    margin: int = 2

    def __post_init__(self):
        if self.kind not in ("gaussian-dipole-pair", "curl-bump", "user-grid"):
            raise InvalidArgumentError(f"unknown source kind {self.kind!r}")
        if self.margin < 2:
            raise InvalidArgumentError("source margin must be at least two element layers")


def margin_mask(mesh: Mesh, layers: int) -> np.ndarray:
    """Elements whose centroid lies within ``layers`` cells of the boundary."""
    hx, hy = mesh.spacing
    x0, x1, y0, y1 = mesh.bounds
    cx, cy = mesh.centroids.T
    return ((cx - x0 < layers * hx) | (x1 - cx < layers * hx)
            | (cy - y0 < layers * hy) | (y1 - cy < layers * hy))


def build_source(spec: SourceSpec, mesh: Mesh) -> VectorField:
    """Element current of the source spec, zeroed inside the boundary margin."""
    x, y = mesh.centroids.T
    J = np.zeros((mesh.n_elements, 2))
    if spec.kind == "gaussian-dipole-pair":
        for b in spec.blobs:
            r2 = (x - b.center[0]) ** 2 + (y - b.center[1]) ** 2
            prof = b.amplitude * np.exp(-r2 / (2 * b.width**2))
            prof[r2 > (spec.cutoff * b.width) ** 2] = 0.0
            d = np.asarray(b.direction, dtype=float)
            J += prof[:, None] * d[None, :]
    elif spec.kind == "curl-bump":
        dx, dy = x - spec.center[0], y - spec.center[1]
        R2 = spec.radius**2
        q = np.clip(1.0 - (dx * dx + dy * dy) / R2, 0.0, None)
        # psi = a q^3, J = (dpsi/dy, -dpsi/dx)
        dpsi = -6.0 * spec.amplitude * q**2 / R2
        J[:, 0] = dpsi * dy
        J[:, 1] = -dpsi * dx
    else:
        vals = np.asarray(spec.values, dtype=float)
        if vals.shape != (mesh.n_elements, 2):
            raise InvalidArgumentError(
                f"user-grid source needs ({mesh.n_elements}, 2) values, got {vals.shape}")
        J = vals.copy()
    J[margin_mask(mesh, spec.margin)] = 0.0
    return VectorField(mesh, J)


def support_mask(J: VectorField) -> np.ndarray:
    return np.any(J.values != 0.0, axis=1)


def add_noise(H: InternalFunctional, level: float, seed: int, mode: str = "relative"):
    """Gaussian measurement noise on an internal functional.

    ``relative``: ``H (1 + level xi)``; ``additive``: ``H + level max|H| xi``,
    with ``xi`` i.i.d. standard normal per element drawn from ``seed``.
    """
    if level < 0:
        raise InvalidArgumentError("noise level must be nonnegative")
    if level == 0:
        return H
    xi = np.random.default_rng(seed).standard_normal(H.values.shape)
    if mode == "relative":
        vals = H.values * (1.0 + level * xi)
    elif mode == "additive":
        vals = H.values + level * np.abs(H.values).max() * xi
    else:
        raise InvalidArgumentError(f"unknown noise mode {mode!r}")
    return InternalFunctional(H.mesh, vals, H.index)
