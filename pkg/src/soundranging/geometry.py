"""Problem instances, anchor normalization and triangular frames.

Sensors are stored as rows of a 2-D array (dense ``ndarray`` or CSR matrix);
column ``j`` is coordinate ``j`` in the working orthonormal basis and the
number of columns is the truncation ``N``.  A *frame* is the orthonormal basis
obtained from the sensor rows by Gram-Schmidt together with the sensor
coordinates in that basis, which form a lower-triangular matrix.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from ._validation import (
    check_geometry,
    check_point,
    check_sensors,
    check_times,
    row_norms,
)
from .exceptions import InvalidInstance, NotOnSphere, PivotTooSmall

#: Below this many coefficients a series cannot be classified, so instances
#: with a smaller truncation are treated as genuinely finite-dimensional.
MIN_SERIES_LENGTH = 16

#: Largest sparse frame (rows x columns) that is densified for Householder QR.
DENSE_LIMIT = 50_000_000

PIVOT_TOL = 1e-10
SOLVE_TOL = 1e-11
SPHERE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SrpInstance:
    """Sensors, arrival times and the metric they live in.

    Parameters
    ----------
    sensors : array-like or sparse matrix of shape (n_sensors, N)
        Row ``i`` holds the coordinates of sensor ``i``.
    times : array-like of shape (n_sensors,)
        Arrival moment of the wave at each sensor (sound speed is 1).
    geometry : {"euclidean", "sphere"}
    finite : bool or None
        Whether the coordinates describe a genuinely finite-dimensional space
        rather than a truncation of sequence space.  ``None`` picks finite
        when ``N < MIN_SERIES_LENGTH``.
    """

    sensors: object
    times: object
    geometry: str = "euclidean"
    finite: object = None
    sphere_tol: float = SPHERE_TOL

    def __post_init__(self):
        sensors = check_sensors(self.sensors)
        times = check_times(self.times, sensors.shape[0])
        check_geometry(self.geometry)
        if not sp.issparse(sensors):
            sensors = np.array(sensors, copy=True)
            sensors.flags.writeable = False
        times = np.array(times, copy=True)
        times.flags.writeable = False
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "times", times)
        if self.geometry == "sphere":
            dev = np.abs(row_norms(sensors) - 1.0)
            bad = np.flatnonzero(dev > self.sphere_tol)
            if bad.size:
                raise NotOnSphere(
                    f"sensors {bad[:8].tolist()} are not unit vectors "
                    f"(max deviation {dev.max():.3e})"
                )

    @property
    def truncation(self):
        return self.sensors.shape[1]

    @property
    def n_sensors(self):
        return self.sensors.shape[0]

    @property
    def is_finite(self):
        if self.finite is None:
            return self.truncation < MIN_SERIES_LENGTH
        return bool(self.finite)

    @property
    def is_sparse(self):
        return sp.issparse(self.sensors)

    def sensor(self, i):
        row = self.sensors[i]
        if sp.issparse(row):
            return row.toarray().ravel()
        return np.array(row, dtype=np.float64)

    def with_truncation(self, n):
        """Zero-pad every sensor to ``n`` coordinates."""
        if n < self.truncation:
            raise InvalidInstance(
                f"truncation {n} is below the sensor dimension {self.truncation}"
            )
        if n == self.truncation:
            return self
        pad = n - self.truncation
        if self.is_sparse:
            sensors = sp.hstack(
                [self.sensors, sp.csr_matrix((self.n_sensors, pad))], format="csr"
            )
        else:
            sensors = np.hstack([self.sensors, np.zeros((self.n_sensors, pad))])
        return SrpInstance(sensors, self.times, self.geometry, self.finite, self.sphere_tol)

    def replace(self, **changes):
        fields = dict(
            sensors=self.sensors,
            times=self.times,
            geometry=self.geometry,
            finite=self.finite,
            sphere_tol=self.sphere_tol,
        )
        fields.update(changes)
        return SrpInstance(**fields)


@dataclass(frozen=True)
class Normalization:
    """Record of the shift that moved the anchor sensor to the origin at time 0.

    ``order[k]`` is the original index of the normalized sensor ``k``.
    """

    anchor: int
    shift: np.ndarray
    time_shift: float
    order: np.ndarray

    @property
    def is_identity(self):
        return (
            self.anchor == 0
            and self.time_shift == 0.0
            and not np.any(self.shift)
            and np.array_equal(self.order, np.arange(len(self.order)))
        )

    def to_original(self, s, t):
        return np.asarray(s, dtype=np.float64) + self.shift, float(t) + self.time_shift

    def to_normalized(self, s, t):
        return np.asarray(s, dtype=np.float64) - self.shift, float(t) - self.time_shift


def normalize(instance, anchor=0):
    """Move sensor ``anchor`` to the origin and its arrival time to zero.

    The anchor becomes sensor 0; the remaining sensors keep their relative
    order.  Returns the normalized instance and the :class:`Normalization`
    needed to map solutions back.
    """
    if instance.geometry != "euclidean":
        raise InvalidInstance("only Euclidean instances can be anchor-normalized")
    m = instance.n_sensors
    if not 0 <= anchor < m:
        raise InvalidInstance(f"anchor {anchor} out of range for {m} sensors")
    order = np.concatenate([[anchor], np.delete(np.arange(m), anchor)])
    shift = instance.sensor(anchor)
    time_shift = float(instance.times[anchor])
    X = instance.sensors[order] if anchor else instance.sensors
    if np.any(shift):
        if sp.issparse(X):
            ones = sp.csr_matrix(np.ones((m, 1)))
            X = (X - ones @ sp.csr_matrix(shift)).tocsr()
            X.eliminate_zeros()
        else:
            X = X - shift
    times = instance.times[order] - time_shift
    record = Normalization(int(anchor), shift, time_shift, order)
    return instance.replace(sensors=X, times=times), record


def is_normalized(instance, tol=0.0):
    first = instance.sensor(0)
    return bool(np.all(np.abs(first) <= tol) and abs(instance.times[0]) <= tol)


def euclidean_distances(X, s):
    """Distances from every row of ``X`` to the point ``s``."""
    s = np.asarray(s, dtype=np.float64)
    if not sp.issparse(X):
        return np.linalg.norm(X - s, axis=1)
    if X.shape[0] * X.shape[1] <= 4_000_000:
        return np.linalg.norm(X.toarray() - s, axis=1)
    # ||r - s||^2 = ||s||^2 - sum_{supp r} s_j^2 + sum_{supp r} (r_j - s_j)^2
    Xc = X.tocsr()
    rows = np.repeat(np.arange(Xc.shape[0]), np.diff(Xc.indptr))
    sj = s[Xc.indices]
    on_supp = np.bincount(rows, weights=sj * sj, minlength=Xc.shape[0])
    diff = np.bincount(rows, weights=(Xc.data - sj) ** 2, minlength=Xc.shape[0])
    off = np.maximum(s @ s - on_supp, 0.0)
    return np.sqrt(off + diff)


def inner_products(X, s):
    return np.asarray(X @ np.asarray(s, dtype=np.float64)).ravel()


@dataclass(frozen=True, eq=False)
class TriangularFrame:
    """Orthonormal basis built from sensor rows and their triangular coordinates.

    Attributes
    ----------
    a : ndarray or CSR matrix of shape (K, K)
        Lower-triangular coordinates; row ``i`` is frame sensor ``i``.
    pivots : ndarray of shape (K,)
        Diagonal of ``a``; all strictly positive.
    basis : ndarray of shape (K, N) or None
        Orthonormal basis vectors as rows.  ``None`` when the basis consists of
        signed standard unit vectors, described by ``columns`` and ``signs``.
    rows : ndarray
        Instance row indices of the frame sensors.
    surplus_rows : ndarray
        Instance row indices of sensors beyond the frame (the frame already
        spans the ambient space when these exist).
    surplus : ndarray of shape (len(surplus_rows), K)
        Frame coordinates of the surplus sensors.
    """

    a: object
    pivots: np.ndarray
    dim: int
    basis: object = None
    columns: object = None
    signs: object = None
    rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    surplus_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    surplus: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def size(self):
        return len(self.pivots)

    @property
    def spans(self):
        """True when the frame spans the whole truncated space."""
        return self.size == self.dim

    @property
    def is_standard(self):
        return self.basis is None

    def coordinates(self, v):
        """Frame coordinates of an ambient vector (its projection onto the span)."""
        v = np.asarray(v, dtype=np.float64)
        if self.basis is None:
            return self.signs * v[self.columns]
        return self.basis @ v

    def embed(self, coords):
        """Ambient vector with the given frame coordinates."""
        coords = np.asarray(coords, dtype=np.float64)
        if self.basis is None:
            out = np.zeros(self.dim)
            out[self.columns] = self.signs * coords
            return out
        return coords @ self.basis

    def basis_matrix(self):
        if self.basis is not None:
            return self.basis
        E = np.zeros((self.size, self.dim))
        E[np.arange(self.size), self.columns] = self.signs
        return E

    def dense_a(self):
        return self.a.toarray() if sp.issparse(self.a) else np.asarray(self.a)

    def reconstruct(self):
        """Ambient coordinates of the frame sensors, rebuilt from ``a``."""
        if self.basis is None:
            if sp.issparse(self.a):
                coo = self.a.tocoo()
                return sp.csr_matrix(
                    (coo.data * self.signs[coo.col], (coo.row, self.columns[coo.col])),
                    shape=(self.size, self.dim),
                )
            out = np.zeros((self.size, self.dim))
            out[:, self.columns] = self.a * self.signs
            return out
        return self.dense_a() @ self.basis


def _pattern_order(F):
    """Column order making ``F`` lower triangular, if each row adds one new column."""
    if sp.issparse(F):
        coo = F.tocoo()
        r, c = coo.row, coo.col
    else:
        r, c = np.nonzero(F)
    if r.size == 0:
        return None
    first_row = np.full(F.shape[1], F.shape[0], dtype=np.int64)
    np.minimum.at(first_row, c, r)
    used = np.flatnonzero(first_row < F.shape[0])
    if used.size != F.shape[0]:
        return None
    new_per_row = np.bincount(first_row[used], minlength=F.shape[0])
    if np.any(new_per_row != 1):
        return None
    return used[np.argsort(first_row[used], kind="stable")]


def _standard_frame(F, order, tol_abs, row_ids):
    if sp.issparse(F):
        C = F.tocsc()[:, order].tocsr()
        diag = C.diagonal()
    else:
        C = F[:, order]
        diag = np.diag(C).copy()
    small = np.flatnonzero(np.abs(diag) <= tol_abs)
    if small.size:
        i = small[0]
        raise PivotTooSmall(int(row_ids[i]), float(abs(diag[i])), tol_abs)
    signs = np.sign(diag)
    if sp.issparse(C):
        a = (C @ sp.diags(signs)).tocsr()
    else:
        a = C * signs
    return a, np.abs(diag), signs


def _householder(F, tol_abs, row_ids):
    Q, T = np.linalg.qr(F.T, mode="reduced")
    diag = np.diag(T)
    small = np.flatnonzero(np.abs(diag) <= tol_abs)
    if small.size:
        i = small[0]
        raise PivotTooSmall(int(row_ids[i]), float(abs(diag[i])), tol_abs)
    signs = np.sign(diag)
    basis = (Q * signs).T
    a = np.tril((T * signs[:, None]).T)
    return a, np.abs(diag), basis


def _modified_gram_schmidt(F, tol_abs, row_ids):
    K, N = F.shape
    W = np.array(F, dtype=np.float64, copy=True)
    basis = np.zeros((K, N))
    a = np.zeros((K, K))
    for i in range(K):
        nrm = np.linalg.norm(W[i])
        if nrm <= tol_abs:
            raise PivotTooSmall(int(row_ids[i]), float(nrm), tol_abs)
        e = W[i] / nrm
        basis[i] = e
        a[i, i] = nrm
        proj = W[i + 1 :] @ e
        a[i + 1 :, i] = proj
        W[i + 1 :] -= np.outer(proj, e)
    return a, np.diag(a).copy(), basis


def gram_schmidt(rows, pivot_tol=PIVOT_TOL, method="auto", row_ids=None):
    """Orthonormalize sensor rows in order and return their :class:`TriangularFrame`.

    The first ``min(m, N)`` rows form the frame; any further rows are kept as
    surplus sensors expressed in the frame.

    ``method`` is ``"householder"`` (LAPACK QR with positive diagonal, the
    default for dense data), ``"mgs"`` (modified Gram-Schmidt) or ``"auto"``,
    which first tries the structural shortcut for rows that are already
    triangular in the standard basis and falls back to Householder.

    Raises
    ------
    PivotTooSmall
        When a frame row lies within ``pivot_tol * max_norm`` of the span of
        the rows before it.
    """
    if method not in ("auto", "householder", "mgs"):
        raise ValueError(f"unknown method {method!r}")
    X = check_sensors(rows)
    m, N = X.shape
    row_ids = np.arange(m) if row_ids is None else np.asarray(row_ids)
    K = min(m, N)
    F, S = X[:K], X[K:]
    norms = row_norms(F)
    tol_abs = pivot_tol * max(float(norms.max()), np.finfo(float).tiny)

    order = _pattern_order(F) if method == "auto" else None
    if order is not None:
        a, pivots, signs = _standard_frame(F, order, tol_abs, row_ids)
        if S.shape[0]:
            Sd = S.toarray() if sp.issparse(S) else np.asarray(S)
            surplus = Sd[:, order] * signs
        else:
            surplus = np.zeros((0, K))
        return TriangularFrame(
            a=a,
            pivots=pivots,
            dim=N,
            columns=order,
            signs=signs,
            rows=row_ids[:K],
            surplus_rows=row_ids[K:],
            surplus=surplus,
        )

    if sp.issparse(F):
        if F.shape[0] * F.shape[1] > DENSE_LIMIT:
            raise InvalidInstance(
                f"sparse sensors of shape {F.shape} are not triangular in the "
                "standard basis and too large to orthonormalize densely"
            )
        F = F.toarray()
    if method == "mgs":
        a, pivots, basis = _modified_gram_schmidt(F, tol_abs, row_ids)
    else:
        a, pivots, basis = _householder(F, tol_abs, row_ids)
    if S.shape[0]:
        surplus = np.asarray(S @ basis.T)
    else:
        surplus = np.zeros((0, K))
    return TriangularFrame(
        a=a,
        pivots=pivots,
        dim=N,
        basis=basis,
        rows=row_ids[:K],
        surplus_rows=row_ids[K:],
        surplus=surplus,
    )


def build_frame(instance, pivot_tol=PIVOT_TOL, method="auto"):
    """Frame of an instance: all sensors on the sphere, non-anchor ones otherwise."""
    if instance.geometry == "sphere":
        return gram_schmidt(instance.sensors, pivot_tol, method)
    if not is_normalized(instance):
        raise InvalidInstance("Euclidean frames need a normalized instance (see normalize)")
    if instance.n_sensors < 2:
        raise InvalidInstance("need at least one sensor besides the anchor")
    rows = np.arange(1, instance.n_sensors)
    return gram_schmidt(instance.sensors[1:], pivot_tol, method, row_ids=rows)


def forward_substitute(frame, rhs):
    """Solve ``a @ x = rhs`` for the frame's lower-triangular ``a``.

    ``rhs`` may be a vector of length K or a (K, r) matrix.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != frame.size:
        raise InvalidInstance(
            f"right-hand side has {rhs.shape[0]} rows, frame has {frame.size}"
        )
    a = frame.a
    if sp.issparse(a):
        if a.nnz == frame.size:
            d = a.diagonal()
            return rhs / (d if rhs.ndim == 1 else d[:, None])
        return scipy.sparse.linalg.spsolve_triangular(a.tocsr(), rhs, lower=True)
    return scipy.linalg.solve_triangular(a, rhs, lower=True, check_finite=False)


def as_point(x, dim=None):
    return check_point(x, dim)
