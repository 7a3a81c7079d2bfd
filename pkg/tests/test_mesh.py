import numpy as np
import pytest
from hypothesis import given, strategies as st

from acoustoelectric.exceptions import InvalidArgumentError
from acoustoelectric.mesh import ScalarField, VectorField, build_rect_mesh, domain_l2_norm, p1_gradient

dims = st.integers(min_value=1, max_value=12)


@pytest.mark.parametrize("args, counts", [
    ((0, 1, 0, 1, 1, 1), (4, 2, 4)),
    ((0.1, 0.9, 0, 1, 2, 2), (9, 8, 8)),
])
def test_counts(args, counts):
    m = build_rect_mesh(*args)
    assert (m.n_nodes, m.n_elements, m.n_edges) == counts


def test_head_area():
    m = build_rect_mesh(0.1, 0.9, 0, 1, 64, 80)
    assert abs(m.areas.sum() - 0.8) < 1e-12
    assert abs(m.area - 0.8) < 1e-12


@pytest.mark.parametrize("args", [(1, 0, 0, 1, 2, 2), (0, 1, 0, 0, 2, 2), (0, 1, 0, 1, 0, 2),
                                  (0, 1, 0, 1, 2, -1)])
def test_bad_arguments(args):
    with pytest.raises(InvalidArgumentError):
        build_rect_mesh(*args)


@given(nx=dims, ny=dims)
def test_structure_invariants(nx, ny):
    m = build_rect_mesh(0.1, 0.9, 0.0, 1.0, nx, ny)
    assert m.n_nodes == (nx + 1) * (ny + 1)
    assert m.n_elements == 2 * nx * ny
    assert m.n_edges == 2 * (nx + ny)
    assert np.all(m.areas > 0)
    # each boundary edge belongs to exactly one element
    edges = {}
    for tri in m.elements:
        for a in range(3):
            e = tuple(sorted((tri[a], tri[(a + 1) % 3])))
            edges[e] = edges.get(e, 0) + 1
    for a, b in m.edge_nodes:
        assert edges[tuple(sorted((a, b)))] == 1
    # normals: unit, orthogonal to the edge, outward
    t = m.nodes[m.edge_nodes[:, 1]] - m.nodes[m.edge_nodes[:, 0]]
    n = m.edge_normals
    assert np.allclose(np.hypot(*n.T), 1.0)
    assert np.allclose(np.einsum("ek,ek->e", n, t), 0.0)
    mid = m.nodes[m.edge_nodes].mean(axis=1)
    centre = np.array([0.5, 0.5])
    assert np.all(np.einsum("ek,ek->e", n, mid - centre) > 0)
    # side tags agree with geometry
    x0, x1, y0, y1 = m.bounds
    for side, coord, val in (("left", 0, x0), ("right", 0, x1), ("bottom", 1, y0), ("top", 1, y1)):
        sel = m.edge_sides == side
        assert np.allclose(mid[sel, coord], val)


def test_slots_clockwise_from_bottom_left():
    m = build_rect_mesh(0, 1, 0, 1, 2, 3)
    xy = m.nodes[m.slot_nodes]
    assert np.allclose(xy[0], (0, 0))
    assert list(dict.fromkeys(m.slot_sides)) == ["left", "top", "right", "bottom"]
    s = m.slot_arclength()
    assert np.all(np.diff(s) >= 0)
    assert np.isclose(s[-1], 4.0)


def test_gradient_constant_and_linear(unit_mesh):
    x, y = unit_mesh.nodes.T
    assert np.all(p1_gradient(ScalarField(unit_mesh, np.full(unit_mesh.n_nodes, 4.2))).values == 0)
    g = p1_gradient(ScalarField(unit_mesh, 3 * x - 2 * y)).values
    assert np.abs(g - [3.0, -2.0]).max() < 1e-13


@given(a=st.floats(-10, 10), b=st.floats(-10, 10), c=st.floats(-10, 10), nx=dims, ny=dims)
def test_gradient_reproduces_linears(a, b, c, nx, ny):
    m = build_rect_mesh(-0.5, 1.5, 0.0, 2.0, nx, ny)
    x, y = m.nodes.T
    g = p1_gradient(ScalarField(m, a * x + b * y + c)).values
    assert np.abs(g - [a, b]).max() <= 1e-12 * (1 + abs(a) + abs(b) + abs(c))


def test_gradient_of_quadratic_converges():
    errs = []
    for n in (8, 16, 32, 64):
        m = build_rect_mesh(0, 1, 0, 1, n, n)
        g = p1_gradient(ScalarField(m, m.nodes[:, 0] ** 2)).values
        errs.append(np.sum(m.areas * np.abs(g[:, 0] - 2 * m.centroids[:, 0])))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    # centroid sampling is superconvergent on this grid; at least first order
    assert np.all(rates > 0.9)


def test_gradient_mesh_mismatch(unit_mesh, head_mesh):
    with pytest.raises(InvalidArgumentError):
        p1_gradient(ScalarField(unit_mesh, np.zeros(unit_mesh.n_nodes)), head_mesh)


def test_field_shape_checks(unit_mesh):
    with pytest.raises(InvalidArgumentError):
        ScalarField(unit_mesh, np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        ScalarField(unit_mesh, np.full(unit_mesh.n_nodes, np.nan))
    with pytest.raises(InvalidArgumentError):
        VectorField(unit_mesh, np.zeros((unit_mesh.n_elements, 3)))


def test_domain_norms():
    m = build_rect_mesh(0.1, 0.9, 0, 1, 10, 12)
    assert domain_l2_norm(ScalarField(m, np.zeros(m.n_nodes))) == 0
    assert abs(domain_l2_norm(ScalarField(m, np.ones(m.n_nodes))) - np.sqrt(0.8)) < 1e-12
    x, y = m.nodes.T
    # edge-midpoint rule is exact for squares of P1 functions: int x^2 over the box
    exact = np.sqrt((0.9**3 - 0.1**3) / 3)
    assert abs(domain_l2_norm(ScalarField(m, x)) - exact) < 1e-12
    assert abs(domain_l2_norm(VectorField(m, np.tile([3.0, 4.0], (m.n_elements, 1))))
               - 5 * np.sqrt(0.8)) < 1e-12


@given(st.lists(st.floats(-5, 5), min_size=25, max_size=25))
def test_domain_norm_zero_iff_zero(vals):
    m = build_rect_mesh(0, 1, 0, 1, 4, 4)
    v = np.array(vals)
    n = domain_l2_norm(ScalarField(m, v))
    assert n >= 0
    assert (n == 0) == (not v.any())


def test_refine_nests(unit_mesh):
    f = unit_mesh.refine(2)
    assert f.resolution == (16, 16)
    assert f.bounds == unit_mesh.bounds
