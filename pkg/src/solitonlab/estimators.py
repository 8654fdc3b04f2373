"""scikit-learn style wrappers: entropy and weighted spectra as fitted estimators.

The estimators take a ``SampledHypersurface`` as ``X`` (no feature matrix) and
follow the ``fit`` / ``get_params`` / ``set_params`` conventions so they can be
cloned and parameter-swept.  ``predict`` and ``transform`` are not provided.
"""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, check_scalar

from .gaussian import entropy
from .stability import TOL_DISC, first_eigenvalue, is_delta_stable
from .surfaces import SampledHypersurface, SurfaceError
from .translators import translator_first_eigenvalue


def check_surface(X) -> SampledHypersurface:
    if not isinstance(X, SampledHypersurface):
        raise TypeError(f"expected a SampledHypersurface, got {type(X).__name__}")
    return X


def check_radius(R, name="R", allow_none=False):
    if R is None and allow_none:
        return None
    return float(check_scalar(R, name, numbers.Real, min_val=0.0, include_boundaries="neither"))


def check_count(m, name="m", min_val=1):
    return int(check_scalar(m, name, numbers.Integral, min_val=min_val))


class EntropyEstimator(BaseEstimator):
    """Supremum of the F-functional over centres and scales."""

    def __init__(self, lambda0_hint=None, grid=5, t_grid=9, maxiter=4000, xatol=1e-6):
        self.lambda0_hint = lambda0_hint
        self.grid = grid
        self.t_grid = t_grid
        self.maxiter = maxiter
        self.xatol = xatol

    def fit(self, X, y=None):
        surface = check_surface(X)
        check_count(self.grid, "grid", 2)
        check_count(self.t_grid, "t_grid", 2)
        check_count(self.maxiter, "maxiter")
        check_scalar(self.xatol, "xatol", numbers.Real, min_val=0.0, include_boundaries="neither")
        if self.lambda0_hint is not None:
            check_scalar(self.lambda0_hint, "lambda0_hint", numbers.Real, min_val=0.0, include_boundaries="neither")
        res = entropy(surface, self.lambda0_hint, self.grid, self.t_grid, self.maxiter, self.xatol)
        self.result_ = res
        self.value_ = res.value
        self.x0_ = res.x0
        self.t0_ = res.t0
        self.flat_directions_ = res.flat_directions
        return self

    def score(self, X=None, y=None):
        check_is_fitted(self, "value_")
        return self.value_


class StabilitySpectrum(BaseEstimator):
    """Least ``m`` Dirichlet eigenvalues of ``-L`` on ``B_R`` (``R=None``: whole surface)."""

    def __init__(self, R=None, m=1, tol_disc=TOL_DISC):
        self.R = R
        self.m = m
        self.tol_disc = tol_disc

    def _solve(self, surface):
        return first_eigenvalue(surface, check_radius(self.R, allow_none=True), check_count(self.m))

    def fit(self, X, y=None):
        surface = check_surface(X)
        res = self._solve(surface)
        self.result_ = res
        self.eigenvalues_ = np.asarray(res.eigenvalues)
        self.eigenfields_ = res.eigenfields
        self.first_ = res.first
        return self

    def is_delta_stable(self, delta):
        check_is_fitted(self, "first_")
        return is_delta_stable(None, self.R, delta, self.tol_disc, spectrum=self.result_)

    def score(self, X=None, y=None):
        check_is_fitted(self, "first_")
        return self.first_


class TranslatorSpectrum(StabilitySpectrum):
    """Least eigenvalues of minus the translator operator on the region of radius ``R``."""

    def __init__(self, R=None, m=1, tol_disc=TOL_DISC, potential_scale=1.0):
        super().__init__(R=R, m=m, tol_disc=tol_disc)
        self.potential_scale = potential_scale

    def _solve(self, surface):
        if self.R is None:
            raise SurfaceError("the translator region radius R is required")
        return translator_first_eigenvalue(surface, check_radius(self.R), check_count(self.m),
                                           float(self.potential_scale))
