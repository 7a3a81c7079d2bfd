import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from acoustoelectric.exceptions import DegeneracyError, IllPosednessError, InvalidArgumentError
from acoustoelectric.mesh import ScalarField, VectorField, build_rect_mesh, p1_gradient
from acoustoelectric.optimize import initial_sources
from acoustoelectric.phantom import SourceSpec, build_conductivity, build_source, shepp_logan_head, support_mask
from acoustoelectric.physics import InternalFunctional, internal_functional, solve_auxiliary, solve_forward
from acoustoelectric.reconstruct import (check_beta, check_independence, lipschitz_constant, recover_A,
                                         reconstruct_J0, relative_l2_error, stability_audit)
from acoustoelectric.solver import SolverConfig

from conftest import ones, smooth_sigma

TIGHT = SolverConfig(tol_rel=1e-12)


def linear(mesh, a, b):
    return ScalarField(mesh, a * mesh.nodes[:, 0] + b * mesh.nodes[:, 1])


@pytest.fixture(scope="module")
def problem():
    m = build_rect_mesh(0.1, 0.9, 0, 1, 24, 30)
    sigma = smooth_sigma(m)
    J = build_source(SourceSpec(), m)
    u0 = solve_forward(sigma, J, TIGHT)
    g1, g2 = initial_sources(0.0, np.pi / 2, m, None, sigma)
    v1, v2 = solve_auxiliary(sigma, g1, TIGHT), solve_auxiliary(sigma, g2, TIGHT)
    return m, sigma, J, u0, v1, v2


def test_independence_examples(head_mesh):
    d, bad = check_independence(linear(head_mesh, 1, 0), linear(head_mesh, 0, 1))
    assert d == pytest.approx(1.0) and not bad.any()
    d, bad = check_independence(linear(head_mesh, 1, 0), linear(head_mesh, 2, 0))
    assert d == 0.0 and bad.all()


def test_independence_region(head_mesh):
    region = np.zeros(head_mesh.n_elements, dtype=bool)
    region[:10] = True
    d, bad = check_independence(linear(head_mesh, 1, 0), linear(head_mesh, 1, 1), region)
    assert d == pytest.approx(1.0) and not bad[~region].any()


def test_independence_phantom_orderings():
    m = build_rect_mesh(0.1, 0.9, 0, 1, 32, 40)
    sigma = build_conductivity(shepp_logan_head(m.bounds), m)
    dets = []
    for th in ((0.0, np.pi / 2), (5 * np.pi / 6, np.pi)):
        g1, g2 = initial_sources(*th, m, None, sigma)
        dets.append(check_independence(solve_auxiliary(sigma, g1), solve_auxiliary(sigma, g2))[0])
    assert 0 < dets[1] < dets[0]


def test_recover_A_identity(head_mesh):
    rng = np.random.default_rng(0)
    h1, h2 = rng.standard_normal((2, head_mesh.n_elements))
    A = recover_A(InternalFunctional(head_mesh, h1, 1), InternalFunctional(head_mesh, h2, 2),
                  linear(head_mesh, 1, 0), linear(head_mesh, 0, 1))
    assert np.allclose(A.values, np.column_stack([h1, h2]), atol=1e-12)


def test_recover_A_zero(head_mesh):
    z = InternalFunctional(head_mesh, np.zeros(head_mesh.n_elements))
    A = recover_A(z, z, linear(head_mesh, 1, 0), linear(head_mesh, 1, 1))
    assert not A.values.any()


def test_recover_A_singular(head_mesh):
    z = InternalFunctional(head_mesh, np.ones(head_mesh.n_elements))
    with pytest.raises(IllPosednessError) as exc:
        recover_A(z, z, linear(head_mesh, 1, 0), linear(head_mesh, 3, 0))
    assert exc.value.mask.all()


def test_recover_A_round_trip(problem):
    m, sigma, J, u0, v1, v2 = problem
    A = recover_A(internal_functional(sigma, u0, J, v1, 0.5, 1),
                  internal_functional(sigma, u0, J, v2, 0.5, 2), v1, v2)
    truth = 0.5 * sigma.element_mean()[:, None] * p1_gradient(u0).values - J.values
    assert np.abs(A.values - truth).max() <= 1e-10 * max(1.0, np.abs(truth).max())


@pytest.mark.parametrize("beta", [1, 1.0, np.float64(1.0)])
def test_beta_one_rejected(head_mesh, beta):
    with pytest.raises(DegeneracyError):
        reconstruct_J0(VectorField.zeros(head_mesh), ones(head_mesh), beta)
    with pytest.raises(DegeneracyError):
        check_beta(beta)


def test_zero_A(head_mesh):
    r = reconstruct_J0(VectorField.zeros(head_mesh), smooth_sigma(head_mesh), 0.5)
    assert not r.J0_hat.values.any() and not r.u0_hat.values.any()


@given(seed=st.integers(0, 1000))
def test_beta_zero_shortcut(seed):
    m = build_rect_mesh(0.1, 0.9, 0, 1, 10, 12)
    rng = np.random.default_rng(seed)
    A = VectorField(m, rng.standard_normal((m.n_elements, 2)))
    r = reconstruct_J0(A, smooth_sigma(m), 0.0, TIGHT)
    assert np.array_equal(r.J0_hat.values, -A.values)


@pytest.mark.parametrize("beta", [0.0, 0.5, 2.0, -1.5])
def test_exact_round_trip_same_mesh(problem, beta):
    m, sigma, J, u0, v1, v2 = problem
    A = recover_A(internal_functional(sigma, u0, J, v1, beta, 1),
                  internal_functional(sigma, u0, J, v2, beta, 2), v1, v2)
    r = reconstruct_J0(A, sigma, beta, TIGHT, J_true=J)
    assert r.relative_l2_error < 1e-8
    # the potential is recovered too (mean zero)
    if beta != 0:
        assert np.abs(r.u0_hat.values - u0.values).max() < 1e-8 * np.abs(u0.values).max()


def test_partial_region_matches_full_for_beta_zero(problem):
    m, sigma, J, u0, v1, v2 = problem
    H = [internal_functional(sigma, u0, J, v, 0.0, j) for j, v in ((1, v1), (2, v2))]
    region = support_mask(J)
    full = reconstruct_J0(recover_A(*H, v1, v2), sigma, 0.0, TIGHT)
    part = reconstruct_J0(recover_A(*H, v1, v2, region), sigma, 0.0, TIGHT, region=region)
    assert np.abs(full.J0_hat.values[region] - part.J0_hat.values[region]).max() < 1e-12
    assert not part.J0_hat.values[~region].any()


def test_relative_error_examples(problem):
    m, _, J, *_ = problem
    assert relative_l2_error(J, J) == 0
    assert relative_l2_error(J * 1.01, J) == pytest.approx(0.01)
    assert relative_l2_error(VectorField.zeros(m), J) == pytest.approx(1.0)
    with pytest.raises(ZeroDivisionError):
        relative_l2_error(J, VectorField.zeros(m))


def test_relative_error_mesh_mismatch(problem, head_mesh):
    with pytest.raises(InvalidArgumentError):
        relative_l2_error(problem[2], VectorField.zeros(head_mesh))


def test_lipschitz_constant(head_mesh):
    assert lipschitz_constant(ones(head_mesh), 0.5) == pytest.approx(2.0)
    assert lipschitz_constant(ones(head_mesh), 0.0) == 1.0
    assert lipschitz_constant(ones(head_mesh), 2.0) == pytest.approx(3.0)


def _pair(m, sigma, beta, A, dA):
    return (reconstruct_J0(VectorField(m, A), sigma, beta, TIGHT),
            reconstruct_J0(VectorField(m, A + dA), sigma, beta, TIGHT))


def test_stability_identical_pair(head_mesh):
    A = np.random.default_rng(1).standard_normal((head_mesh.n_elements, 2))
    rep = stability_audit([_pair(head_mesh, ones(head_mesh), 0.5, A, 0 * A)])
    assert rep.ratios[0] == 0.0 and rep.passed


def test_stability_beta_zero_exact(head_mesh):
    rng = np.random.default_rng(2)
    pairs = [_pair(head_mesh, ones(head_mesh), 0.0, *rng.standard_normal((2, head_mesh.n_elements, 2)))
             for _ in range(3)]
    rep = stability_audit(pairs)
    assert rep.constant == 1.0
    assert np.all(np.abs(rep.ratios - 1.0) <= 1e-12)


def test_stability_monte_carlo_beta_half(head_mesh):
    rng = np.random.default_rng(3)
    pairs = [_pair(head_mesh, ones(head_mesh), 0.5, *rng.standard_normal((2, head_mesh.n_elements, 2)))
             for _ in range(20)]
    rep = stability_audit(pairs)
    assert rep.constant == pytest.approx(2.0)
    assert rep.passed and rep.ratios.max() <= 2.2
    assert all(p[0].stability_ratio is not None for p in pairs)


def test_stability_h_ratios(problem):
    m, sigma, J, u0, v1, v2 = problem
    H = [internal_functional(sigma, u0, J, v, 0.5, j) for j, v in ((1, v1), (2, v2))]
    Ht = [InternalFunctional(m, h.values * 1.01, h.index) for h in H]
    pairs = [(reconstruct_J0(recover_A(*H, v1, v2), sigma, 0.5, TIGHT),
              reconstruct_J0(recover_A(*Ht, v1, v2), sigma, 0.5, TIGHT))]
    rep = stability_audit(pairs, h_pairs=[(H, Ht)])
    assert rep.h_ratios.shape == (1,) and rep.h_ratios[0] > 0


def test_stability_mismatched_pairs(head_mesh):
    A = np.ones((head_mesh.n_elements, 2))
    r1 = reconstruct_J0(VectorField(head_mesh, A), ones(head_mesh), 0.5)
    r2 = reconstruct_J0(VectorField(head_mesh, A), ones(head_mesh), 0.3)
    with pytest.raises(InvalidArgumentError):
        stability_audit([(r1, r2)])
    r3 = reconstruct_J0(VectorField(head_mesh, A), smooth_sigma(head_mesh), 0.5)
    with pytest.raises(InvalidArgumentError):
        stability_audit([(r1, r3)])


def test_result_save(tmp_path, problem):
    m, sigma, J, u0, v1, v2 = problem
    r = reconstruct_J0(VectorField(m, -J.values), sigma, 0.0, J_true=J)
    r.min_abs_det = 0.5
    d = r.save(tmp_path / "res")
    rep = json.loads((d / "report.json").read_text())
    assert {"relative_l2_error", "min_abs_det", "stability_ratio", "solver_iterations"} <= set(rep)
    assert rep["relative_l2_error"] == 0.0
    for name in ("J0_hat.csv", "u0_hat.csv", "A.csv"):
        assert (d / name).exists()
    assert (d / "J0_hat.csv").read_text().splitlines()[0] == "cx,cy,vx,vy"
