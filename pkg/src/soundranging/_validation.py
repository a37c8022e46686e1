"""Input validation shared by the functional API and the estimators."""

import numpy as np
import scipy.sparse as sp
from sklearn.utils import check_array, check_consistent_length, column_or_1d

from .exceptions import InvalidInstance

GEOMETRIES = ("euclidean", "sphere")


def check_sensors(X, name="sensors"):
    """Return sensors as a float64 2-D ndarray or CSR matrix, one row per sensor."""
    try:
        X = check_array(
            X,
            accept_sparse="csr",
            dtype=np.float64,
            ensure_all_finite=True,
            ensure_min_samples=1,
            ensure_min_features=1,
            input_name=name,
        )
    except ValueError as exc:
        raise InvalidInstance(f"{name}: {exc}") from exc
    if sp.issparse(X):
        X = X.tocsr()
        X.sum_duplicates()
        X.eliminate_zeros()
    return X


def check_times(y, n_sensors=None, name="times"):
    try:
        y = column_or_1d(np.asarray(y, dtype=np.float64), warn=False)
    except ValueError as exc:
        raise InvalidInstance(f"{name}: {exc}") from exc
    if not np.all(np.isfinite(y)):
        raise InvalidInstance(f"{name}: contains NaN or infinity")
    if n_sensors is not None:
        try:
            check_consistent_length(np.empty(n_sensors), y)
        except ValueError as exc:
            raise InvalidInstance(
                f"{name}: {len(y)} arrival times for {n_sensors} sensors"
            ) from exc
    return y


def check_point(x, dim=None, name="point"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInstance(f"{name}: expected a non-empty 1-D coordinate vector")
    if not np.all(np.isfinite(x)):
        raise InvalidInstance(f"{name}: contains NaN or infinity")
    if dim is not None:
        if x.size > dim:
            raise InvalidInstance(f"{name}: {x.size} coordinates exceed truncation {dim}")
        if x.size < dim:
            x = np.concatenate([x, np.zeros(dim - x.size)])
    return x


def check_geometry(geometry):
    if geometry not in GEOMETRIES:
        raise InvalidInstance(f"geometry must be one of {GEOMETRIES}, got {geometry!r}")
    return geometry


def row_norms(X):
    if sp.issparse(X):
        return np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    return np.linalg.norm(X, axis=1)
