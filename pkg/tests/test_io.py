import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from acoustoelectric import io
from acoustoelectric.exceptions import ConfigError
from acoustoelectric.fem import BoundarySource
from acoustoelectric.mesh import ScalarField, VectorField, build_rect_mesh
from acoustoelectric.physics import InternalFunctional


def test_nodal_csv_roundtrip(tmp_path, head_mesh):
    vals = np.random.default_rng(0).standard_normal(head_mesh.n_nodes)
    p = io.write_nodal_csv(tmp_path / "f.csv", ScalarField(head_mesh, vals))
    lines = p.read_text().splitlines()
    assert lines[0] == "x,y,value" and len(lines) == head_mesh.n_nodes + 1
    data = np.loadtxt(p, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 2], vals)
    assert np.array_equal(data[:, :2], head_mesh.nodes)


def test_element_csv(tmp_path, head_mesh):
    J = np.random.default_rng(1).standard_normal((head_mesh.n_elements, 2))
    p = io.write_element_csv(tmp_path / "J.csv", VectorField(head_mesh, J))
    assert p.read_text().splitlines()[0] == "cx,cy,vx,vy"
    assert np.array_equal(np.loadtxt(p, delimiter=",", skiprows=1)[:, 2:], J)
    H = InternalFunctional(head_mesh, J[:, 0])
    p = io.write_element_csv(tmp_path / "H.csv", H)
    assert p.read_text().splitlines()[0] == "cx,cy,value"


@given(vals=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=18, max_size=18),
       perm_seed=st.integers(0, 100))
def test_boundary_csv_roundtrip(tmp_path_factory, vals, perm_seed):
    m = build_rect_mesh(0.1, 0.9, 0, 1, 3, 4)  # 18 slots
    g = BoundarySource(m, np.array(vals))
    d = tmp_path_factory.mktemp("b")
    p = io.write_boundary_csv(d / "g.csv", g)
    lines = p.read_text().splitlines()
    assert lines[0] == "s,x,y,side,value"
    # row order is irrelevant on reading
    body = lines[1:]
    np.random.default_rng(perm_seed).shuffle(body)
    (d / "h.csv").write_text("\n".join([lines[0]] + body) + "\n")
    assert np.array_equal(io.read_boundary_csv(d / "h.csv", m).values, g.values)


def test_boundary_csv_clockwise(tmp_path, head_mesh):
    g = BoundarySource(head_mesh, np.arange(head_mesh.n_slots, dtype=float))
    rows = io.write_boundary_csv(tmp_path / "g.csv", g)
    data = np.genfromtxt(rows, delimiter=",", skip_header=1, dtype=None, encoding=None)
    first = data[0]
    assert (first[1], first[2], first[3]) == (0.1, 0.0, "left")
    s = np.array([r[0] for r in data])
    assert np.all(np.diff(s) >= 0)


def test_boundary_csv_errors(tmp_path, head_mesh):
    (tmp_path / "a.csv").write_text("x,y,value\n0.1,0,1\n")
    with pytest.raises(ConfigError, match="column"):
        io.read_boundary_csv(tmp_path / "a.csv", head_mesh)
    (tmp_path / "b.csv").write_text("s,x,y,side,value\n0,0.5,0.5,left,1\n")
    with pytest.raises(ConfigError, match=":2:"):
        io.read_boundary_csv(tmp_path / "b.csv", head_mesh)
    g = BoundarySource(head_mesh, np.ones(head_mesh.n_slots))
    p = io.write_boundary_csv(tmp_path / "c.csv", g)
    lines = p.read_text().splitlines()
    (tmp_path / "d.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ConfigError, match="missing"):
        io.read_boundary_csv(tmp_path / "d.csv", head_mesh)


def test_history_csv(tmp_path):
    p = io.write_history_csv(tmp_path / "h.csv", [(0, 0, 0.5, 0.9, 1e-3), (1, 2, 0.25, 0.5, 2e-3)])
    assert p.read_text().splitlines() == ["iter,half,objective,max_cosine,min_det",
                                          "0,0,0.5,0.90000000000000002,0.001",
                                          "1,2,0.25,0.5,0.002"]


def test_pgm_roundtrip(tmp_path, head_mesh):
    s = ScalarField(head_mesh, head_mesh.nodes[:, 1])
    p = io.write_pgm(tmp_path / "s.pgm", s)
    img = io.read_pgm(p)
    nx, ny = head_mesh.resolution
    assert img.shape == (ny + 1, nx + 1)
    assert img[0].min() == 255 and img[-1].max() == 0  # top row is the largest y
    J = VectorField(head_mesh, np.ones((head_mesh.n_elements, 2)))
    img = io.read_pgm(io.write_pgm(tmp_path / "j.pgm", J))
    assert img.shape == (ny, nx) and not img.any()


def test_read_pgm_rejects_other(tmp_path):
    (tmp_path / "x.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(ConfigError):
        io.read_pgm(tmp_path / "x.pgm")


def test_json(tmp_path):
    p = io.write_json(tmp_path / "r.json", {"b": np.float64(1.5), "a": [np.int64(2), np.nan],
                                            "c": np.array([True, False])})
    assert json.loads(p.read_text()) == {"a": [2, None], "b": 1.5, "c": [True, False]}
    assert p.read_text().index('"a"') < p.read_text().index('"b"')
