"""Sound ranging in (truncated) Euclidean sequence space.

Pipeline: normalize on an anchor sensor, triangularize the remaining sensors,
express the source coordinates as affine functions ``s_j = b~_j + t c~_j`` of
the emission time, and pick emission times from the resulting quadratic.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np
import scipy.sparse as sp

from ._roots import quadratic_roots
from ._validation import check_point, row_norms
from .exceptions import (
    InvalidInstance,
    MissingArrivalTime,
    Mixed,
    NoSolution,
    NotConverging,
    SeriesUndetermined,
)
from .geometry import (
    PIVOT_TOL,
    SOLVE_TOL,
    build_frame,
    euclidean_distances,
    forward_substitute,
    normalize,
)
from .series import CONV_MARGIN, DIV_MARGIN, classify_series, power_tail

RESID_TOL = 1e-9
DISC_SCALE = 1e-9
Z_CONV_TOL = 1e-3
SURPLUS_TOL = 1e-6
ORTHO_TOL = 1e-9
BAND_FLOOR = 0.1

SOURCE = "source"
DUAL = "dual"
CASE0 = "case0"
CASE1A = "case1a"
CASE1B = "case1b"


@dataclass(frozen=True, eq=False)
class LinearCoefficients:
    """Right-hand data ``b, c`` and their triangular eliminations ``b~, c~``."""

    b: np.ndarray
    c: np.ndarray
    b_tilde: np.ndarray
    c_tilde: np.ndarray

    def source_coordinates(self, t):
        return self.b_tilde + t * self.c_tilde


def _matvec(a, x):
    return np.asarray(a @ x).ravel()


def build_coefficients(instance, frame, solve_tol=SOLVE_TOL):
    """``b_i = (|r_i|^2 - t_i^2) / 2`` and ``c_i = t_i`` over the frame sensors, eliminated."""
    rows = frame.rows
    norms2 = row_norms(instance.sensors[rows]) ** 2
    t = np.asarray(instance.times[rows], dtype=np.float64)
    b = 0.5 * (norms2 - t * t)
    c = t.copy()
    sol = forward_substitute(frame, np.column_stack([b, c]))
    b_tilde = np.ascontiguousarray(sol[:, 0])
    c_tilde = np.ascontiguousarray(sol[:, 1])

    abs_a = abs(frame.a) if sp.issparse(frame.a) else np.abs(frame.a)
    for rhs, x, name in ((b, b_tilde, "b"), (c, c_tilde, "c")):
        resid = np.abs(_matvec(frame.a, x) - rhs)
        bound = solve_tol * (1.0 + np.abs(rhs).max() + _matvec(abs_a, np.abs(x)).max())
        if resid.max() > bound:
            raise InvalidInstance(
                f"triangular solve for {name} left residual {resid.max():.3e}; "
                "sensor frame is too ill-conditioned"
            )
    return LinearCoefficients(b, c, b_tilde, c_tilde)


@dataclass(frozen=True, eq=False)
class EmissionQuadratic:
    """``alpha z^2 + beta z + gamma`` in ``z = 1/t`` with its prefix sums.

    ``alpha_n[n-1]`` etc. are the sums over the first ``n`` coefficients;
    ``tail`` holds the extrapolated corrections added to the totals.
    """

    alpha: float
    beta: float
    gamma: float
    alpha_n: np.ndarray
    beta_n: np.ndarray
    gamma_n: np.ndarray
    tail: tuple = (0.0, 0.0, 0.0)

    @property
    def discriminant(self):
        return self.beta * self.beta - 4.0 * self.alpha * self.gamma

    @property
    def disc_scale(self):
        return self.beta * self.beta + abs(4.0 * self.alpha * self.gamma) + 1.0

    def vertex(self, n):
        """Centre ``-beta_n / (2 alpha_n)`` of the sublevel set of the n-term form."""
        return -self.beta_n[n - 1] / (2.0 * self.alpha_n[n - 1])

    def __call__(self, z):
        return (self.alpha * z + self.beta) * z + self.gamma


def emission_quadratic(coeffs, tail="none"):
    """Coefficients of the emission quadratic, optionally with power-law tails."""
    bt, ct = coeffs.b_tilde, coeffs.c_tilde
    alpha_n = np.cumsum(bt * bt)
    beta_n = 2.0 * np.cumsum(bt * ct)
    gamma_n = np.cumsum(ct * ct) - 1.0
    corr = (0.0, 0.0, 0.0)
    if tail == "power":
        pieces = (power_tail(bt), power_tail(bt, ct), power_tail(ct))
        if all(p is not None for p in pieces):
            corr = (pieces[0], 2.0 * pieces[1], pieces[2])
    elif tail != "none":
        raise ValueError(f"tail must be 'none' or 'power', got {tail!r}")
    return EmissionQuadratic(
        float(alpha_n[-1] + corr[0]),
        float(beta_n[-1] + corr[1]),
        float(gamma_n[-1] + corr[2]),
        alpha_n,
        beta_n,
        gamma_n,
        corr,
    )


@dataclass(frozen=True, eq=False)
class EmissionSolution:
    """A candidate source point and emission time.

    ``s`` and ``t`` are in the caller's original coordinates; ``s_frame`` holds
    the source in the frame basis of the normalized instance.  ``residuals``
    are per-sensor ``|t_i - t -+ d(r_i, s)|`` with the sign matching ``kind``.
    """

    s: np.ndarray
    t: float
    kind: str
    case_label: str
    residuals: np.ndarray
    z: object = None
    s_frame: object = None
    unique: bool = False
    details: dict = field(default_factory=dict)

    @property
    def max_residual(self):
        return float(np.max(self.residuals)) if len(self.residuals) else 0.0


def _residual_pair(instance, s, t):
    d = euclidean_distances(instance.sensors, s)
    times = np.asarray(instance.times)
    return np.abs(times - t - d), np.abs(times - t + d)


def _time_tol(instance, t, resid_tol):
    return resid_tol * max(1.0, abs(t), float(np.abs(instance.times).max()))


def verify_solution(instance, s, t, resid_tol=RESID_TOL):
    """Classify ``(s, t)`` as a forward (source) or time-reversed (dual) solution.

    Returns ``(kind, residuals)``.  Raises :class:`Mixed` when neither
    residual vector is uniformly within tolerance.
    """
    s = check_point(s, instance.truncation, "s")
    fwd, rev = _residual_pair(instance, s, t)
    tol = _time_tol(instance, t, resid_tol)
    if fwd.max() <= tol:
        return SOURCE, fwd
    if rev.max() <= tol:
        return DUAL, rev
    raise Mixed(np.flatnonzero(fwd > tol), np.flatnonzero(rev > tol), fwd.max(), rev.max())


def reconstruct_source(coeffs, t, frame=None, normalization=None):
    """Source point ``b~ + t c~``, embedded by ``frame`` and un-normalized if given."""
    s = coeffs.source_coordinates(t)
    if frame is not None:
        s = frame.embed(s)
    if normalization is not None:
        s, _ = normalization.to_original(s, t)
    return s


def _make_solution(instance, frame, coeffs, t, kind, case_label, normalization,
                   z=None, unique=False, details=None):
    s_frame = coeffs.source_coordinates(t)
    s = frame.embed(s_frame)
    fwd, rev = _residual_pair(instance, s, t)
    residuals = fwd if kind == SOURCE else rev
    if normalization is not None:
        s, t = normalization.to_original(s, t)
    return EmissionSolution(
        s=s,
        t=float(t),
        kind=kind,
        case_label=case_label,
        residuals=residuals,
        z=z,
        s_frame=s_frame,
        unique=unique,
        details=details or {},
    )


def _surplus_defects(instance, frame, coeffs, t):
    """Implied-equation defects of the sensors that lie beyond the frame."""
    if not len(frame.surplus_rows):
        return np.zeros(0), np.zeros(0)
    rows = frame.surplus_rows
    norms2 = row_norms(instance.sensors[rows]) ** 2
    ti = np.asarray(instance.times[rows])
    rhs = 0.5 * (norms2 - ti * ti) + t * ti
    s_frame = coeffs.source_coordinates(t)
    lhs = frame.surplus @ s_frame
    scale = 1.0 + np.abs(rhs) + np.linalg.norm(frame.surplus, axis=1) * np.linalg.norm(s_frame)
    return np.abs(lhs - rhs), scale


def _surplus_time(instance, frame, coeffs):
    """Least-squares ``t`` from the surplus implied equations, which are linear in ``t``.

    Returns ``None`` without surplus sensors or when no equation involves ``t``.
    """
    if not len(frame.surplus_rows):
        return None
    rows = frame.surplus_rows
    norms2 = row_norms(instance.sensors[rows]) ** 2
    ti = np.asarray(instance.times[rows])
    d = np.asarray(frame.surplus @ coeffs.b_tilde).ravel() - 0.5 * (norms2 - ti * ti)
    e = np.asarray(frame.surplus @ coeffs.c_tilde).ravel() - ti
    ee = float(e @ e)
    if ee <= 1e-24 * (1.0 + float(d @ d)):
        return None
    return -float(d @ e) / ee


def dispatch_case(coeffs, instance, resid_tol=RESID_TOL, div_margin=DIV_MARGIN,
                  conv_margin=CONV_MARGIN):
    """Decide Case 0, Subcase 1a or Subcase 1b.

    Returns ``(label, verdicts)`` where ``verdicts`` maps ``"b_tilde"`` and
    ``"c_tilde"`` to :class:`ConvergenceVerdict` (empty for finite instances).
    """
    n = len(coeffs.b_tilde)
    case0_tol = resid_tol * resid_tol * n
    if float(coeffs.b_tilde @ coeffs.b_tilde) <= case0_tol:
        return CASE0, {}
    if instance.is_finite:
        return CASE1B, {}
    verdicts = {
        "b_tilde": classify_series(coeffs.b_tilde, div_margin, conv_margin),
        "c_tilde": classify_series(coeffs.c_tilde, div_margin, conv_margin),
    }
    v = verdicts["c_tilde"]
    if v.diverges:
        return CASE1A, verdicts
    if v.converges:
        return CASE1B, verdicts
    raise SeriesUndetermined(
        f"convergence of sum c~_j^2 undetermined at truncation {n} "
        f"(growth {v.growth_ratio:.4f}, tail fraction {v.tail_fraction:.4f}); "
        "raise the truncation"
    )


def solve_case0(instance, frame, coeffs, normalization=None, resid_tol=RESID_TOL):
    """The anchor itself, emitting at its arrival time.

    With all ``t_i >= 0`` this is a source solution, with all ``t_i <= 0`` a
    dual one (a source beyond a sensor on a line).  Any other solution would
    be collinear with every sensor, so it is unique once two independent
    sensors exist; on a line every point behind the anchor also solves.
    """
    times = np.asarray(instance.times)
    tol = _time_tol(instance, 0.0, resid_tol)
    if times.min() >= -tol:
        kind = SOURCE
    elif times.max() <= tol:
        kind = DUAL
    else:
        raise NoSolution("b~ vanishes but arrival times lie on both sides of the anchor's")
    ct2 = float(coeffs.c_tilde @ coeffs.c_tilde)
    unique = frame.size >= 2 or abs(ct2 - 1.0) > resid_tol
    return _make_solution(instance, frame, coeffs, 0.0, kind, CASE0, normalization,
                          unique=unique, details={"sum_c_tilde_sq": ct2})


def solve_case1b(coeffs, instance, frame, quadratic=None, normalization=None,
                 resid_tol=RESID_TOL, disc_scale=DISC_SCALE, surplus_tol=SURPLUS_TOL):
    """Roots of the emission quadratic, split into source and dual solutions.

    A root ``z < 0`` with ``1/z <= min t_i`` is a source solution, a root with
    ``1/z >= max t_i`` a dual one; both are returned when they qualify.
    Candidates that break the implied equation of a surplus sensor are
    dropped.
    """
    quad = quadratic if quadratic is not None else emission_quadratic(coeffs)
    disc_tol = disc_scale * quad.disc_scale
    roots = quadratic_roots(quad.alpha, quad.beta, quad.gamma, disc_tol)
    times = np.asarray(instance.times)
    t_min, t_max = float(times.min()), float(times.max())
    t_lin = _surplus_time(instance, frame, coeffs)
    found = []
    for z in roots:
        if z == 0.0 or not np.isfinite(1.0 / z):
            continue
        t = 1.0 / z
        tol = _time_tol(instance, t, resid_tol)
        if z < 0 and t <= t_min + tol:
            kind = SOURCE
        elif t >= t_max - tol:
            kind = DUAL
        else:
            continue
        if any(abs(t - u) <= tol for u, _, _ in found):
            continue
        defects, scale = _surplus_defects(instance, frame, coeffs, t)
        if np.any(defects > surplus_tol * scale):
            continue
        found.append((t, z, kind))
    if not found:
        raise NoSolution("no root of the emission quadratic passes the time filter")

    out = []
    for t, z, kind in found:
        unique = sum(k == kind for _, _, k in found) == 1
        details = {"discriminant": quad.discriminant, "disc_tol": disc_tol}
        sol = _make_solution(instance, frame, coeffs, t, kind, CASE1B, normalization, z=z,
                             unique=unique, details=details)
        if t_lin is not None and t_lin != 0.0 and \
                abs(t_lin - t) <= surplus_tol * max(1.0, abs(t)):
            # a near-double root is ill-conditioned; the surplus equations are linear
            alt = _make_solution(instance, frame, coeffs, t_lin, kind, CASE1B, normalization,
                                 z=1.0 / t_lin, unique=unique,
                                 details={**details, "root_t": t, "polished": True})
            if alt.max_residual < sol.max_residual:
                sol = alt
        out.append(sol)
    return out


def default_schedule(n):
    return sorted({max(1, n // 8), max(1, n // 4), max(1, n // 2), n})


def solve_case1a(coeffs, instance, frame, quadratic=None, normalization=None,
                 n_schedule=None, z_conv_tol=Z_CONV_TOL):
    """Limit of the parabola vertices ``z_n = -beta_n / (2 alpha_n)``.

    The iterate at the largest ``n`` of the schedule is returned as the unique
    source solution; ``details["iterates"]`` lists ``(n, z_n)`` and
    ``details["z_delta"]`` is ``|z_N - z_{N/2}|``.
    """
    quad = quadratic if quadratic is not None else emission_quadratic(coeffs)
    n_total = len(coeffs.b_tilde)
    schedule = sorted(set(n_schedule)) if n_schedule is not None else default_schedule(n_total)
    iterates = [(n, float(quad.vertex(n))) for n in schedule if quad.alpha_n[n - 1] > 0]
    if not iterates or iterates[-1][0] != schedule[-1]:
        raise NoSolution("sum of b~_j^2 vanishes on the schedule; no vertex iterate")
    z = iterates[-1][1]
    prev = iterates[-2][1] if len(iterates) > 1 else z
    delta = abs(z - prev)
    if delta > z_conv_tol:
        raise NotConverging(delta, z_conv_tol)
    if not z < 0:
        raise NoSolution(f"vertex iterate z = {z:.6g} is not negative")
    steps = [abs(b - a) for (_, a), (_, b) in zip(iterates, iterates[1:])]
    return _make_solution(
        instance, frame, coeffs, 1.0 / z, SOURCE, CASE1A, normalization, z=z, unique=True,
        details={"iterates": iterates, "z_delta": delta, "steps": steps},
    )


@dataclass(frozen=True)
class UniquenessReport:
    """Sufficient conditions for a unique forward solution.

    ``dual_exists``: a time-reversed solution was found.
    ``sensor_coincident``: a source solution sits on a sensor.
    ``orthogonal_subsequence``: sensors orthogonal to all earlier ones recur to
    the end of the truncation with norms bounded away from zero.
    ``antipodal_pair``: the sensor set contains the reflection of the first
    non-anchor sensor through the anchor.
    """

    dual_exists: bool
    sensor_coincident: bool
    orthogonal_subsequence: bool
    antipodal_pair: bool
    evidence: dict = field(default_factory=dict)

    @property
    def guaranteed_unique(self):
        return (
            self.dual_exists
            or self.sensor_coincident
            or self.orthogonal_subsequence
            or self.antipodal_pair
        )

    def as_dict(self):
        return {
            "dual_exists": self.dual_exists,
            "sensor_coincident": self.sensor_coincident,
            "orthogonal_subsequence": self.orthogonal_subsequence,
            "antipodal_pair": self.antipodal_pair,
            "guaranteed_unique": self.guaranteed_unique,
            "evidence": self.evidence,
        }


def _orthogonal_members(frame, ortho_tol):
    a = frame.a
    if sp.issparse(a):
        A = sp.tril(a, k=-1).tocsr()
        off = np.zeros(frame.size)
        if A.nnz:
            off = np.asarray(abs(A).max(axis=1).toarray()).ravel()
        norms = row_norms(a)
    else:
        A = np.asarray(a)
        off = np.abs(np.tril(A, k=-1)).max(axis=1) if frame.size > 1 else np.zeros(1)
        norms = np.linalg.norm(A, axis=1)
    return np.flatnonzero(off <= ortho_tol * norms), norms


def diagnose_uniqueness(instance, frame, solutions, normalization=None,
                        resid_tol=RESID_TOL, ortho_tol=ORTHO_TOL, band_floor=BAND_FLOOR):
    """Evaluate the four uniqueness certificates on a solved, normalized instance."""
    evidence = {}
    duals = [s for s in solutions if s.kind == DUAL]
    sources = [s for s in solutions if s.kind == SOURCE]
    dual_exists = bool(duals)
    evidence["dual_times"] = [s.t for s in duals]

    coincident = []
    for k, sol in enumerate(sources):
        s = sol.s
        if normalization is not None:
            s, _ = normalization.to_normalized(s, sol.t)
        d = euclidean_distances(instance.sensors, s)
        scale = 1.0 + row_norms(instance.sensors)
        hits = np.flatnonzero(d <= resid_tol * scale)
        if hits.size:
            idx = hits if normalization is None else normalization.order[hits]
            coincident.append({"solution": k, "sensors": idx.tolist()})
    evidence["coincident"] = coincident
    if frame.size < 2:
        # the argument needs two independent sensors; on a line it fails
        coincident = []

    ortho_ok = False
    if instance.is_finite:
        evidence["orthogonal_subsequence"] = "needs an infinite sensor sequence"
    else:
        members, norms = _orthogonal_members(frame, ortho_tol)
        K = frame.size
        info = {"count": int(members.size)}
        if members.size >= 2 and members[-1] >= (3 * K) // 4:
            tail = members[members >= K // 2]
            lam = float(norms[tail].min())
            mu = float(norms[members].max())
            info.update(lam=lam, mu=mu, last=int(members[-1]) + 1)
            ortho_ok = lam >= band_floor * mu
        evidence["orthogonal_subsequence"] = info

    antipodal = False
    if instance.n_sensors >= 3:
        r1 = instance.sensor(1)
        d = euclidean_distances(instance.sensors, -r1)
        d[1] = np.inf
        hit = np.flatnonzero(d <= resid_tol * (1.0 + np.linalg.norm(r1)))
        antipodal = bool(hit.size)
        if antipodal:
            idx = hit if normalization is None else normalization.order[hit]
            evidence["antipodal_sensors"] = idx.tolist()
    return UniquenessReport(dual_exists, bool(coincident), ortho_ok, antipodal, evidence)


def extend_antipodal(instance, ground_truth=None, t_extra=None, anchor=0, tol=1e-12):
    """Append the reflection of the first non-anchor sensor through the anchor.

    In normalized coordinates the new sensor is ``-r^(1)``.  Its arrival time
    is ``t_extra`` when measured, otherwise simulated from
    ``ground_truth = (s, t_e)``.  A sensor set that already holds the
    reflection is returned unchanged with a warning.
    """
    first = 1 if anchor == 0 else 0
    r0, r1 = instance.sensor(anchor), instance.sensor(first)
    new = 2.0 * r0 - r1
    d = euclidean_distances(instance.sensors, new)
    if np.any(d <= tol * (1.0 + np.linalg.norm(r1 - r0))):
        warnings.warn("sensor set already contains the antipodal sensor; not added",
                      UserWarning, stacklevel=2)
        return instance
    if t_extra is None:
        if ground_truth is None:
            raise MissingArrivalTime(
                "arrival time at the antipodal sensor needs a measurement or a ground truth"
            )
        s, t_e = ground_truth
        s = check_point(s, instance.truncation, "ground truth source")
        t_extra = float(t_e) + float(np.linalg.norm(new - s))
    if instance.is_sparse:
        sensors = sp.vstack([instance.sensors, sp.csr_matrix(new)], format="csr")
    else:
        sensors = np.vstack([instance.sensors, new])
    times = np.append(instance.times, float(t_extra))
    return instance.replace(sensors=sensors, times=times)


@dataclass(frozen=True, eq=False)
class EuclideanResult:
    """Everything the Euclidean pipeline produced for one instance."""

    instance: object
    normalized: object
    normalization: object
    frame: object
    coefficients: LinearCoefficients
    quadratic: EmissionQuadratic
    case_label: str
    verdicts: dict
    solutions: list
    uniqueness: UniquenessReport

    @property
    def sources(self):
        return [s for s in self.solutions if s.kind == SOURCE]

    @property
    def duals(self):
        return [s for s in self.solutions if s.kind == DUAL]


def solve_instance(instance, anchor=0, *, resid_tol=RESID_TOL, solve_tol=SOLVE_TOL,
                   pivot_tol=PIVOT_TOL, disc_scale=DISC_SCALE, tail="none",
                   n_schedule=None, z_conv_tol=Z_CONV_TOL, surplus_tol=SURPLUS_TOL,
                   div_margin=DIV_MARGIN, conv_margin=CONV_MARGIN, method="auto",
                   ortho_tol=ORTHO_TOL, band_floor=BAND_FLOOR):
    """Run the full Euclidean pipeline and return an :class:`EuclideanResult`."""
    if instance.geometry != "euclidean":
        raise InvalidInstance("solve_instance expects a Euclidean instance")
    normed, record = normalize(instance, anchor)
    frame = build_frame(normed, pivot_tol, method)
    coeffs = build_coefficients(normed, frame, solve_tol)
    quad = emission_quadratic(coeffs, tail)
    label, verdicts = dispatch_case(coeffs, normed, resid_tol, div_margin, conv_margin)
    if label == CASE0:
        solutions = [solve_case0(normed, frame, coeffs, record, resid_tol)]
    elif label == CASE1A:
        solutions = [solve_case1a(coeffs, normed, frame, quad, record, n_schedule, z_conv_tol)]
    else:
        solutions = solve_case1b(coeffs, normed, frame, quad, record, resid_tol,
                                 disc_scale, surplus_tol)
    report = diagnose_uniqueness(normed, frame, solutions, record, resid_tol,
                                 ortho_tol, band_floor)
    return EuclideanResult(instance, normed, record, frame, coeffs, quad, label,
                           verdicts, solutions, report)
