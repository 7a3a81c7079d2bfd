import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from acoustoelectric.estimators import BoundarySourceSelector, CurrentDensityReconstructor
from acoustoelectric.exceptions import DegeneracyError, IllPosednessError, InvalidArgumentError
from acoustoelectric.fem import boundary_l2_norm
from acoustoelectric.mesh import build_rect_mesh
from acoustoelectric.optimize import initial_sources
from acoustoelectric.phantom import SourceSpec, build_conductivity, build_source, shepp_logan_head
from acoustoelectric.physics import internal_functional, solve_forward


@pytest.fixture(scope="module")
def data():
    m = build_rect_mesh(0.1, 0.9, 0, 1, 24, 30)
    sigma = build_conductivity(shepp_logan_head(m.bounds), m)
    J = build_source(SourceSpec(), m)
    return m, sigma, J, solve_forward(sigma, J)


def functionals(est, sigma, u0, J, beta):
    return np.column_stack([internal_functional(sigma, u0, J, v, beta, j).values
                            for j, v in ((1, est.v1_), (2, est.v2_))])


def test_reconstructor_round_trip(data):
    m, sigma, J, u0 = data
    est = CurrentDensityReconstructor(mesh=m, beta=0.5).fit(sigma.values)
    H = functionals(est, sigma, u0, J, 0.5)
    assert np.abs(est.transform(H) - J.values).max() < 1e-8
    assert est.score(H, J.values) > -1e-8
    assert est.min_abs_det_ > 0


def test_reconstructor_explicit_sources(data):
    m, sigma, J, u0 = data
    g = initial_sources(0.3, 1.9, m)
    est = CurrentDensityReconstructor(mesh=m, beta=2.0).fit(sigma.values, sources=g)
    H = functionals(est, sigma, u0, J, 2.0)
    assert np.abs(est.transform(H) - J.values).max() < 1e-8
    arr = np.column_stack([gg.values for gg in g])
    est2 = CurrentDensityReconstructor(mesh=m, beta=2.0).fit(sigma.values, sources=arr)
    assert np.allclose(est2.v1_.values, est.v1_.values)


def test_reconstructor_guards(data):
    m, sigma, J, u0 = data
    with pytest.raises(NotFittedError):
        CurrentDensityReconstructor(mesh=m).transform(np.zeros((m.n_elements, 2)))
    with pytest.raises(DegeneracyError):
        CurrentDensityReconstructor(mesh=m, beta=1.0).fit(sigma.values)
    with pytest.raises(InvalidArgumentError):
        CurrentDensityReconstructor(mesh=m).fit(sigma.values[:-1])
    with pytest.raises(InvalidArgumentError):
        CurrentDensityReconstructor(mesh=None).fit(sigma.values)
    est = CurrentDensityReconstructor(mesh=m).fit(sigma.values)
    with pytest.raises(InvalidArgumentError):
        est.transform(np.zeros((m.n_elements, 3)))
    par = initial_sources(0.3, 0.3, m)
    est = CurrentDensityReconstructor(mesh=m).fit(sigma.values, sources=par)
    with pytest.raises(IllPosednessError):
        est.transform(np.ones((m.n_elements, 2)))


def test_sklearn_protocol(data):
    m = data[0]
    est = CurrentDensityReconstructor(mesh=m, beta=0.25, tol_rel=1e-9)
    c = clone(est)
    assert c.get_params()["beta"] == 0.25 and c.get_params()["tol_rel"] == 1e-9
    c.set_params(beta=3.0)
    assert c.beta == 3.0 and est.beta == 0.25
    sel = BoundarySourceSelector(mesh=m, optimize=False)
    assert set(clone(sel).get_params()) >= {"mesh", "theta", "optimize", "objective"}


def test_selector(data):
    m, sigma, *_ = data
    sel = BoundarySourceSelector(mesh=m, theta=(5 * np.pi / 6, np.pi), max_outer_iter=5).fit(sigma.values)
    obj = [r[2] for r in sel.history_]
    assert np.all(np.diff(obj) <= 1e-8)
    g1, g2 = sel.sources_
    assert boundary_l2_norm(g1) == pytest.approx(1.0)
    base = BoundarySourceSelector(mesh=m, theta=(5 * np.pi / 6, np.pi), optimize=False).fit(sigma.values)
    assert base.history_ == []
    assert sel.min_abs_det_ > base.min_abs_det_
    with pytest.raises(NotFittedError):
        BoundarySourceSelector(mesh=m).sources_
