"""scikit-learn style wrappers around the reconstruction pipeline.

``fit`` takes the nodal conductivity (the known background) and prepares
the auxiliary solutions; ``transform`` maps internal functionals, one
column per source, to the reconstructed element current.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvalidArgumentError
from .fem import BoundarySource, boundary_l2_norm, make_compatible
from .mesh import Mesh, ScalarField, VectorField
from .optimize import OptimizeConfig, alternating_minimize, initial_sources
from .physics import InternalFunctional, solve_auxiliary
from .reconstruct import check_beta, check_independence, recover_A, reconstruct_J0, relative_l2_error
from .solver import SolverConfig


def _sigma(mesh: Mesh, X) -> ScalarField:
    if not isinstance(mesh, Mesh):
        raise InvalidArgumentError("the estimator needs a Mesh (parameter 'mesh')")
    x = check_array(np.asarray(X, dtype=float).reshape(-1, 1))
    if x.shape[0] != mesh.n_nodes:
        raise InvalidArgumentError(f"expected {mesh.n_nodes} nodal conductivities, got {x.shape[0]}")
    return ScalarField(mesh, x[:, 0].copy())


def _solver(tol_rel, preconditioner):
    return SolverConfig(tol_rel=tol_rel, preconditioner=None if preconditioner == "none" else preconditioner)


class BoundarySourceSelector(BaseEstimator):
    """Choose a boundary source pair with well-separated auxiliary gradients.

    Parameters
    ----------
    mesh : Mesh
    theta : tuple of float
        Angles of the initial sources ``(cos t, sin t) . n``.
    sides : sequence of str, optional
        Sides carrying the sources; all four by default.
    optimize : bool
        Run the alternating minimization; otherwise the initial pair is kept.
    max_outer_iter, increment_tol, basis, degree, objective
        See :class:`~acoustoelectric.optimize.OptimizeConfig`.
    tol_rel, preconditioner
        Linear solver settings.

    Attributes
    ----------
    g1_, g2_ : BoundarySource
    v1_, v2_ : ScalarField
    history_ : list of tuple
        Empty when ``optimize`` is false.
    min_abs_det_ : float
    """

    def __init__(self, mesh=None, theta=(0.0, np.pi / 2), sides=None, optimize=True,
                 max_outer_iter=20, increment_tol=1e-6, basis="legendre", degree=0,
                 objective="normalized", tol_rel=1e-10, preconditioner="jacobi"):
        self.mesh = mesh
        self.theta = theta
        self.sides = sides
        self.optimize = optimize
        self.max_outer_iter = max_outer_iter
        self.increment_tol = increment_tol
        self.basis = basis
        self.degree = degree
        self.objective = objective
        self.tol_rel = tol_rel
        self.preconditioner = preconditioner

    def fit(self, X, y=None):
        """Select sources for the nodal conductivity ``X`` (shape ``(n_nodes,)``)."""
        sigma0 = _sigma(self.mesh, X)
        solver = _solver(self.tol_rel, self.preconditioner)
        g1, g2 = initial_sources(*self.theta, self.mesh, self.sides, sigma0)
        if self.optimize:
            cfg = OptimizeConfig(max_outer_iter=self.max_outer_iter, increment_tol=self.increment_tol,
                                 basis=self.basis, degree=self.degree, objective=self.objective,
                                 theta=tuple(self.theta))
            res = alternating_minimize(sigma0, g1, g2, cfg, solver)
            self.g1_, self.g2_, self.v1_, self.v2_ = res.g1, res.g2, res.v1, res.v2
            self.history_ = list(res.history)
        else:
            self.g1_, self.g2_ = g1, g2
            self.v1_ = solve_auxiliary(sigma0, g1, solver)
            self.v2_ = solve_auxiliary(sigma0, g2, solver)
            self.history_ = []
        self.min_abs_det_, _ = check_independence(self.v1_, self.v2_)
        return self

    @property
    def sources_(self):
        check_is_fitted(self, "g1_")
        return self.g1_, self.g2_


class CurrentDensityReconstructor(TransformerMixin, BaseEstimator):
    """Reconstruct the element current from two internal functionals.

    Parameters
    ----------
    mesh : Mesh
    beta : float
        Elasto-electric constant, ``beta != 1``.
    region : ndarray of bool, optional
        Elements where the current is reconstructed (partial data).
    tol_rel, preconditioner
        Linear solver settings.

    Attributes
    ----------
    sigma0_ : ScalarField
    v1_, v2_ : ScalarField
        Auxiliary solutions of the fitted sources.
    min_abs_det_ : float
    result_ : ReconstructionResult
        Set by the last :meth:`transform`.
    """

    def __init__(self, mesh=None, beta=0.5, region=None, tol_rel=1e-10, preconditioner="jacobi"):
        self.mesh = mesh
        self.beta = beta
        self.region = region
        self.tol_rel = tol_rel
        self.preconditioner = preconditioner

    def fit(self, X, y=None, sources=None):
        """Solve for the auxiliary fields of ``sources`` on the conductivity ``X``.

        ``sources`` is a pair of :class:`BoundarySource` or an array of slot
        values of shape ``(n_slots, 2)``; each is made compatible with the
        conductivity.  Without sources the orthogonal pair ``theta = (0, pi/2)``
        on all sides is used.
        """
        check_beta(self.beta)
        sigma0 = _sigma(self.mesh, X)
        solver = _solver(self.tol_rel, self.preconditioner)
        if sources is None:
            gs = initial_sources(0.0, np.pi / 2, self.mesh, None, sigma0)
        elif isinstance(sources, (tuple, list)) and all(isinstance(g, BoundarySource) for g in sources):
            gs = tuple(make_compatible(g, sigma0) for g in sources)
        else:
            vals = check_array(sources)
            if vals.shape != (self.mesh.n_slots, 2):
                raise InvalidArgumentError(f"sources must have shape ({self.mesh.n_slots}, 2)")
            gs = tuple(make_compatible(BoundarySource(self.mesh, vals[:, j].copy()), sigma0)
                       for j in range(2))
        if len(gs) != 2:
            raise InvalidArgumentError("exactly two sources are needed in two dimensions")
        gs = tuple(g * (1.0 / boundary_l2_norm(g)) for g in gs)
        self.sigma0_ = sigma0
        self.sources_ = gs
        self.v1_ = solve_auxiliary(sigma0, gs[0], solver)
        self.v2_ = solve_auxiliary(sigma0, gs[1], solver)
        self.min_abs_det_, _ = check_independence(self.v1_, self.v2_, self.region)
        return self

    def transform(self, X):
        """Element current ``(n_elements, 2)`` from functionals ``X`` of shape ``(n_elements, 2)``."""
        check_is_fitted(self, "v1_")
        H = check_array(X)
        if H.shape != (self.mesh.n_elements, 2):
            raise InvalidArgumentError(f"expected functionals of shape ({self.mesh.n_elements}, 2), "
                                       f"got {H.shape}")
        H1 = InternalFunctional(self.mesh, H[:, 0].copy(), 1)
        H2 = InternalFunctional(self.mesh, H[:, 1].copy(), 2)
        A = recover_A(H1, H2, self.v1_, self.v2_, self.region)
        self.result_ = reconstruct_J0(A, self.sigma0_, self.beta,
                                      _solver(self.tol_rel, self.preconditioner), region=self.region)
        return self.result_.J0_hat.values.copy()

    def score(self, X, y):
        """Negative relative L2 error of the reconstruction against the true current ``y``."""
        J = self.transform(X)
        return -relative_l2_error(VectorField(self.mesh, J), VectorField(self.mesh, check_array(y)))
