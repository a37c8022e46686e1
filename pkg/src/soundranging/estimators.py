"""Estimator-style wrappers: sensors are ``X``, arrival times are ``y``."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_sensors, check_times
from .euclid import RESID_TOL, solve_instance
from .geometry import PIVOT_TOL, SOLVE_TOL, SrpInstance
from .scenarios import forward_simulate
from .sphere import ACCEPT_TOL, SPH3B_TOL, T_CONV_TOL, solve_sphere_instance


class _RangingMixin:
    def predict(self, X):
        """Arrival times at sensors ``X`` for the fitted source and emission time."""
        check_is_fitted(self, "source_")
        X = check_sensors(X)
        return forward_simulate(X, self.source_, self.emission_time_, self._geometry)

    def score(self, X, y):
        """Negative root-mean-square arrival-time error (higher is better)."""
        y = check_times(y, n_sensors=check_sensors(X).shape[0])
        err = self.predict(X) - y
        return -float(np.sqrt(np.mean(err * err)))


class SoundRanging(_RangingMixin, BaseEstimator):
    """Locate a source in Euclidean (sequence) space from arrival times.

    ``fit`` runs the full pipeline; every admissible source and dual
    solution ends up in ``solutions_`` and the first source solution in
    ``source_`` / ``emission_time_``.
    """

    _geometry = "euclidean"

    def __init__(self, anchor=0, resid_tol=RESID_TOL, solve_tol=SOLVE_TOL,
                 pivot_tol=PIVOT_TOL, tail="none", finite=None, method="auto"):
        self.anchor = anchor
        self.resid_tol = resid_tol
        self.solve_tol = solve_tol
        self.pivot_tol = pivot_tol
        self.tail = tail
        self.finite = finite
        self.method = method

    def fit(self, X, y):
        inst = SrpInstance(X, y, finite=self.finite)
        res = solve_instance(inst, self.anchor, resid_tol=self.resid_tol,
                             solve_tol=self.solve_tol, pivot_tol=self.pivot_tol,
                             tail=self.tail, method=self.method)
        self.result_ = res
        self.solutions_ = res.solutions
        self.case_ = res.case_label
        self.uniqueness_ = res.uniqueness
        self.n_features_in_ = inst.truncation
        sources = res.sources
        if sources:
            self.source_ = sources[0].s
            self.emission_time_ = sources[0].t
        return self


class SphereSoundRanging(_RangingMixin, BaseEstimator):
    """Locate a source on the unit sphere under the geodesic metric.

    For a continuum of solutions ``source_`` is the midpoint of the interval.
    """

    _geometry = "sphere"

    def __init__(self, solve_tol=SOLVE_TOL, pivot_tol=PIVOT_TOL, tail="none",
                 accept_tol=ACCEPT_TOL, sph3b_tol=SPH3B_TOL, t_conv_tol=T_CONV_TOL,
                 finite=None, method="auto"):
        self.solve_tol = solve_tol
        self.pivot_tol = pivot_tol
        self.tail = tail
        self.accept_tol = accept_tol
        self.sph3b_tol = sph3b_tol
        self.t_conv_tol = t_conv_tol
        self.finite = finite
        self.method = method

    def fit(self, X, y):
        inst = SrpInstance(X, y, geometry="sphere", finite=self.finite)
        res = solve_sphere_instance(inst, solve_tol=self.solve_tol, pivot_tol=self.pivot_tol,
                                    tail=self.tail, accept_tol=self.accept_tol,
                                    sph3b_tol=self.sph3b_tol, t_conv_tol=self.t_conv_tol,
                                    method=self.method)
        self.result_ = res
        self.solutions_ = res.solutions
        self.case_ = res.case_label
        self.n_features_in_ = inst.truncation
        best = res.best
        self.source_ = best.s
        self.emission_time_ = best.t
        return self
