"""Sound ranging on the unit sphere with the geodesic metric.

Sensors are triangularized as in the Euclidean solver, but no anchor shift is
applied: the source coordinates become ``s_j = p~_j cos t + q~_j sin t`` and
the emission time is confined to ``Delta = [max t_i - pi, min t_i]``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from ._roots import quadratic_roots
from ._validation import check_point
from .exceptions import (
    EmptyDelta,
    EmptyIntersection,
    InvalidInstance,
    NegativeDiscriminant,
    NoRootInDelta,
    NotOnSphere,
    SeriesUndetermined,
)
from .geometry import PIVOT_TOL, SOLVE_TOL, SPHERE_TOL, build_frame, forward_substitute, inner_products
from .series import CONV_MARGIN, DIV_MARGIN, classify_series, power_tail

RESID_TOL = 1e-9
ACCEPT_TOL = 1e-8
DELTA_TOL = 1e-9
SPH3B_TOL = 1e-9
T_CONV_TOL = 1e-6
DISC_SCALE = 1e-9
EXCLUSION_TOL = 1e-12

SPH1A = "sph1a"
SPH1B = "sph1b"
SPH2 = "sph2"
SPH3A = "sph3a"
SPH3B = "sph3b"
FINITE = "finite"
INTERVAL = "interval"


def _check_unit(x, tol, name):
    n = np.linalg.norm(x)
    if abs(n - 1.0) > tol:
        raise NotOnSphere(f"{name} has norm {n:.12g}, expected 1")


def geodesic_distance(x, y, tol=SPHERE_TOL):
    """Great-circle distance ``arccos <x, y>`` between unit vectors, in ``[0, pi]``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        dim = max(x.size, y.size)
        x, y = check_point(x, dim, "x"), check_point(y, dim, "y")
    _check_unit(x, tol, "x")
    _check_unit(y, tol, "y")
    return float(np.arccos(np.clip(x @ y, -1.0, 1.0)))


def sphere_triangle_check(x, y, z, tol=1e-12):
    """Whether ``d(x, z) <= d(x, y) + d(y, z)`` holds within ``tol``."""
    return geodesic_distance(x, z) <= geodesic_distance(x, y) + geodesic_distance(y, z) + tol


@dataclass(frozen=True, eq=False)
class SphereCoefficients:
    """``p~, q~`` with ``A p~ = cos t_i``, ``A q~ = sin t_i``, plus ``Delta`` and the sums.

    ``alpha_n`` etc. are prefix sums; ``alpha, beta, gamma`` include any tail
    correction.
    """

    p_tilde: np.ndarray
    q_tilde: np.ndarray
    delta: tuple
    alpha: float
    beta: float
    gamma: float
    alpha_n: np.ndarray
    beta_n: np.ndarray
    gamma_n: np.ndarray

    def coordinates(self, t):
        return self.p_tilde * math.cos(t) + self.q_tilde * math.sin(t)

    def f(self, t, n=None):
        """``sum_{j<=n} (p~_j cos t + q~_j sin t)^2 - 1`` from the sums."""
        if n is None:
            a, b, c = self.alpha, self.beta, self.gamma
        else:
            a, b, c = self.alpha_n[n - 1], self.beta_n[n - 1], self.gamma_n[n - 1]
        return _trig_form(a - 1.0, b - 1.0, c, t)


def _trig_form(a, b, c, t):
    ct, st = np.cos(t), np.sin(t)
    return a * ct * ct + b * st * st + c * st * ct


def build_sphere_coefficients(instance, frame=None, solve_tol=SOLVE_TOL, tail="none",
                              delta_tol=DELTA_TOL):
    """Eliminated coefficients of a sphere instance; times are used as given.

    Raises
    ------
    EmptyDelta
        When ``max t_i - pi > min t_i``: no emission time is consistent.
    """
    if instance.geometry != "sphere":
        raise InvalidInstance("sphere coefficients need a sphere instance")
    times = np.asarray(instance.times)
    lo, hi = float(times.max()) - math.pi, float(times.min())
    if lo > hi + delta_tol:
        raise EmptyDelta(f"arrival times span {times.max() - times.min():.6g} > pi")
    delta = (min(lo, hi), hi)
    if frame is None:
        frame = build_frame(instance)
    t = times[frame.rows]
    rhs = np.column_stack([np.cos(t), np.sin(t)])
    sol = forward_substitute(frame, rhs)
    p, q = np.ascontiguousarray(sol[:, 0]), np.ascontiguousarray(sol[:, 1])
    resid = np.abs(np.asarray(frame.a @ sol) - rhs).max()
    if resid > solve_tol * (1.0 + np.abs(sol).max()) * max(1, frame.size):
        raise InvalidInstance(f"triangular solve left residual {resid:.3e}")
    alpha_n = np.cumsum(p * p)
    beta_n = np.cumsum(q * q)
    gamma_n = 2.0 * np.cumsum(p * q)
    corr = (0.0, 0.0, 0.0)
    if tail == "power":
        pieces = (power_tail(p), power_tail(q), power_tail(p, q))
        if all(x is not None for x in pieces):
            corr = (pieces[0], pieces[1], 2.0 * pieces[2])
    elif tail != "none":
        raise ValueError(f"tail must be 'none' or 'power', got {tail!r}")
    return SphereCoefficients(
        p, q, delta,
        float(alpha_n[-1] + corr[0]), float(beta_n[-1] + corr[1]), float(gamma_n[-1] + corr[2]),
        alpha_n, beta_n, gamma_n,
    )


def dispatch_sphere_case(coeffs, instance=None, sph3b_tol=SPH3B_TOL, div_margin=DIV_MARGIN,
                         conv_margin=CONV_MARGIN):
    """Pick one of the five sphere cases; returns ``(label, verdicts)``.

    Finite instances always fall into Case 3.  Otherwise the convergence of
    ``sum p~^2`` and ``sum q~^2`` decides.
    """
    verdicts = {}
    finite = instance is not None and instance.is_finite
    if not finite:
        vp = classify_series(coeffs.p_tilde, div_margin, conv_margin)
        vq = classify_series(coeffs.q_tilde, div_margin, conv_margin)
        verdicts = {"p_tilde": vp, "q_tilde": vq}
        if not (vp.converges or vp.diverges) or not (vq.converges or vq.diverges):
            raise SeriesUndetermined(
                f"convergence of sum p~^2 ({vp.verdict}) or sum q~^2 ({vq.verdict}) "
                f"undetermined at truncation {vp.length}; raise the truncation"
            )
        if vp.converges and vq.diverges:
            return SPH1A, verdicts
        if vp.diverges and vq.converges:
            return SPH1B, verdicts
        if vp.diverges and vq.diverges:
            return SPH2, verdicts
    if (abs(coeffs.alpha - 1.0) <= sph3b_tol and abs(coeffs.beta - 1.0) <= sph3b_tol
            and abs(coeffs.gamma) <= sph3b_tol):
        return SPH3B, verdicts
    return SPH3A, verdicts


@dataclass(frozen=True, eq=False)
class SphereSolution:
    """A source on the sphere and its emission time.

    ``cos_residuals`` are ``|cos(t_i - t) - <r_i, s>|``, ``residuals`` the
    geodesic ``|t_i - t - d(r_i, s)|``.  ``verified`` is false only for an
    unconverged Case 2 estimate.
    """

    s: np.ndarray
    t: float
    case_label: str
    residuals: np.ndarray
    cos_residuals: np.ndarray
    norm_defect: float
    verified: bool = True
    solution_set_kind: str = FINITE
    details: dict = field(default_factory=dict)

    @property
    def max_residual(self):
        return float(np.max(self.residuals)) if len(self.residuals) else 0.0


@dataclass(frozen=True, eq=False)
class SphereInterval:
    """Continuum of solutions ``s(t) = p~ cos t + q~ sin t`` for ``t`` in ``[lo, hi]``."""

    lo: float
    hi: float
    coeffs: SphereCoefficients
    frame: object
    instance: object
    case_label: str = SPH3B
    solution_set_kind: str = INTERVAL

    @property
    def t(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self):
        return self.hi - self.lo

    def source_at(self, t):
        if not self.lo - DELTA_TOL <= t <= self.hi + DELTA_TOL:
            raise InvalidInstance(f"t = {t} lies outside [{self.lo}, {self.hi}]")
        return self.frame.embed(self.coeffs.coordinates(t))

    def solution_at(self, t):
        return _make_solution(self.instance, self.frame, self.coeffs, float(t), self.case_label)

    def sample(self, k=5, rng=None):
        """``k`` solutions, evenly spaced over the interval or drawn from ``rng``."""
        if rng is None:
            ts = np.linspace(self.lo, self.hi, k)
        else:
            ts = rng.uniform(self.lo, self.hi, k)
        return [self.solution_at(t) for t in ts]


def _residuals(instance, s, t):
    ip = inner_products(instance.sensors, s)
    times = np.asarray(instance.times)
    cos_res = np.abs(np.cos(times - t) - ip)
    geo = np.abs(times - t - np.arccos(np.clip(ip, -1.0, 1.0)))
    return geo, cos_res


def _make_solution(instance, frame, coeffs, t, label, verified=True, details=None):
    coords = coeffs.coordinates(t)
    s = frame.embed(coords)
    geo, cos_res = _residuals(instance, s, t)
    defect = abs(float(np.linalg.norm(coords)) - 1.0)
    return SphereSolution(s, float(t), label, geo, cos_res, defect, verified,
                          details=details or {})


def _accept_tol(coeffs, accept_tol):
    scale = 1.0 + float(np.linalg.norm(coeffs.p_tilde)) + float(np.linalg.norm(coeffs.q_tilde))
    return accept_tol * scale


def _in_delta(t, delta, tol=DELTA_TOL):
    lo, hi = delta
    if lo - tol <= t <= hi + tol:
        return min(max(t, lo), hi)
    return None


def _lattice(offset, delta, tol=DELTA_TOL):
    """Points ``offset + pi k`` inside ``delta``."""
    lo, hi = delta
    k0 = math.ceil((lo - tol - offset) / math.pi)
    k1 = math.floor((hi + tol - offset) / math.pi)
    out = []
    for k in range(k0, k1 + 1):
        t = _in_delta(offset + k * math.pi, delta, tol)
        if t is not None:
            out.append(t)
    return out


def _verified(instance, frame, coeffs, candidates, label, accept_tol):
    tol = _accept_tol(coeffs, accept_tol)
    out, rejected = [], []
    for t in candidates:
        sol = _make_solution(instance, frame, coeffs, t, label)
        if sol.norm_defect <= tol and sol.cos_residuals.max() <= tol:
            if not any(abs(sol.t - o.t) <= DELTA_TOL for o in out):
                out.append(sol)
        else:
            rejected.append({"t": sol.t, "norm_defect": sol.norm_defect,
                             "max_cos_residual": float(sol.cos_residuals.max())})
    if not out:
        raise NoRootInDelta(
            f"{label}: no candidate in Delta = [{coeffs.delta[0]:.6g}, {coeffs.delta[1]:.6g}] "
            f"passes the unit-norm and residual checks (rejected: {rejected})"
        )
    return out


def _polish(a, b, c, t, delta, steps=3):
    """Newton steps on ``a cos^2 t + b sin^2 t + c sin t cos t``."""
    for _ in range(steps):
        f = _trig_form(a, b, c, t)
        d = (b - a) * math.sin(2 * t) + c * math.cos(2 * t)
        if d == 0.0 or not math.isfinite(f / d):
            break
        step = f / d
        if abs(step) > 1e-3:
            break
        t -= step
    return min(max(t, delta[0]), delta[1])


def trig_zeros(a, b, c, delta, disc_scale=DISC_SCALE):
    """Zeros of ``a cos^2 t + b sin^2 t + c sin t cos t`` in ``delta``.

    Away from ``cos t = 0`` they are ``arctan`` of the roots of
    ``b x^2 + c x + a``; the points ``cos t = 0`` are zeros when ``b`` vanishes.
    Returns ``(zeros, cos_zero_points)``.
    """
    scale = abs(a) + abs(b) + abs(c) + 1.0
    lin_tol = 1e-14 * scale
    zeros = []
    if max(abs(a), abs(b), abs(c)) > lin_tol:
        try:
            roots = quadratic_roots(b, c, a, disc_scale * (c * c + abs(4 * a * b) + 1.0), lin_tol)
        except NegativeDiscriminant:
            roots = []
        for x in roots:
            for t in _lattice(math.atan(x), delta):
                zeros.append(_polish(a, b, c, t, delta))
    cos_pts = _lattice(math.pi / 2, delta)
    if abs(b) <= lin_tol:
        zeros.extend(cos_pts)
    return sorted(zeros), cos_pts


def sublevel_set(a, b, c, delta, disc_scale=DISC_SCALE):
    """``{t in delta : a cos^2 t + b sin^2 t + c sin t cos t <= 0}`` as closed intervals.

    The zeros and the ``cos t = 0`` points split ``delta`` into pieces of
    constant sign; each piece is tested at its midpoint.
    """
    lo, hi = delta
    zeros, cos_pts = trig_zeros(a, b, c, delta, disc_scale)
    pts = sorted({lo, hi, *zeros, *cos_pts})
    ftol = 1e-12 * (abs(a) + abs(b) + abs(c) + 1.0)
    pieces = []
    for p, q in zip(pts, pts[1:]):
        if _trig_form(a, b, c, 0.5 * (p + q)) <= 0.0:
            pieces.append([p, q])
    for p in set(zeros) | {lo, hi}:
        if _trig_form(a, b, c, p) <= ftol:
            pieces.append([p, p])
    return _merge(pieces)


def _merge(pieces, tol=0.0):
    pieces = sorted(pieces)
    out = []
    for p, q in pieces:
        if out and p <= out[-1][1] + tol:
            out[-1][1] = max(out[-1][1], q)
        else:
            out.append([p, q])
    return [tuple(x) for x in out]


def intersect_intervals(first, second, tol=1e-10):
    """Intersection of two interval lists; overlaps short by ``tol`` collapse to points."""
    out = []
    for a0, a1 in first:
        for b0, b1 in second:
            lo, hi = max(a0, b0), min(a1, b1)
            if lo <= hi:
                out.append([lo, hi])
            elif lo <= hi + tol:
                mid = 0.5 * (lo + hi)
                out.append([mid, mid])
    return _merge(out)


def doubling_schedule(n, start=16):
    if n <= start:
        return [n]
    out = []
    k = start
    while k < n:
        out.append(k)
        k *= 2
    out.append(n)
    return out


def solve_sph2(coeffs, n_schedule=None, t_conv_tol=T_CONV_TOL, disc_scale=DISC_SCALE):
    """Narrow ``Delta`` by the nested sublevel sets of the prefix forms.

    Returns ``(t, info)`` where ``info`` records every ``U_n``, the final
    intersection, its width and whether it shrank below ``t_conv_tol``.
    """
    n_total = len(coeffs.p_tilde)
    schedule = sorted(set(n_schedule)) if n_schedule is not None else doubling_schedule(n_total)
    current = [coeffs.delta]
    history = []
    converged = False
    for n in schedule:
        u = sublevel_set(coeffs.alpha_n[n - 1] - 1.0, coeffs.beta_n[n - 1] - 1.0,
                         coeffs.gamma_n[n - 1], coeffs.delta, disc_scale)
        history.append((n, u))
        current = intersect_intervals(current, u)
        if not current:
            raise EmptyIntersection(f"sublevel sets have empty intersection at n = {n}")
        width = current[-1][1] - current[0][0]
        if width <= t_conv_tol:
            converged = True
            break
    lo, hi = current[0][0], current[-1][1]
    info = {"sublevel_sets": history, "intersection": current, "width": hi - lo,
            "converged": converged, "n_used": history[-1][0], "estimate": "midpoint"}
    t = 0.5 * (lo + hi)
    if not converged:
        # The sets shrink like 1/n; refine with the tail direction, which must
        # lie in every U_n if it is the convergent one.
        for cand in tail_direction(coeffs, (lo, hi)):
            t, info["estimate"] = cand, "tail_direction"
            break
    return t, info


def tail_direction(coeffs, window, start=None):
    """Times in ``window`` minimizing ``sum_{j>=start} (p~_j cos t + q~_j sin t)^2``.

    Only the convergent combination of two divergent families can make the
    tail terms vanish, so the minimizer of the tail energy estimates it.
    """
    n = len(coeffs.p_tilde)
    start = n // 2 if start is None else start
    p, q = coeffs.p_tilde[start:], coeffs.q_tilde[start:]
    m = np.array([[p @ p, p @ q], [p @ q, q @ q]])
    _, vecs = np.linalg.eigh(m)
    t0 = math.atan2(vecs[1, 0], vecs[0, 0])
    return _lattice(t0, window, tol=1e-9)


def _surplus_cuts(coeffs, instance, frame, tol):
    """Times in ``Delta`` where the surplus sensors agree with a Subcase 3b continuum.

    A surplus sensor with frame coordinates ``a`` requires
    ``(<a, p~> - cos t_r) cos t + (<a, q~> - sin t_r) sin t = 0``.  Returns
    ``None`` when every such equation holds identically.
    """
    if not len(frame.surplus_rows):
        return None
    A = np.asarray(frame.surplus @ coeffs.p_tilde).ravel()
    B = np.asarray(frame.surplus @ coeffs.q_tilde).ravel()
    tr = np.asarray(instance.times)[frame.surplus_rows]
    A, B = A - np.cos(tr), B - np.sin(tr)
    live = np.hypot(A, B) > tol
    if not live.any():
        return None
    cands = []
    for a, b in zip(A[live], B[live]):
        cands.extend(_lattice(math.atan2(-a, b), coeffs.delta))
    return cands


def solve_sphere(coeffs, instance, frame, case_label=None, *, accept_tol=ACCEPT_TOL,
                 sph3b_tol=SPH3B_TOL, n_schedule=None, t_conv_tol=T_CONV_TOL,
                 disc_scale=DISC_SCALE):
    """Solutions for a dispatched case.

    Returns a list of :class:`SphereSolution`, or for Subcase 3b a one-element
    list holding a :class:`SphereInterval`.

    Raises
    ------
    NoRootInDelta
        When no candidate survives the unit-norm and residual checks.
    EmptyIntersection
        When the Case 2 sublevel sets stop overlapping.
    """
    if case_label is None:
        case_label, _ = dispatch_sphere_case(coeffs, instance, sph3b_tol)
    delta = coeffs.delta
    if case_label == SPH1A:
        return _verified(instance, frame, coeffs, _lattice(0.0, delta), SPH1A, accept_tol)
    if case_label == SPH1B:
        return _verified(instance, frame, coeffs, _lattice(math.pi / 2, delta), SPH1B,
                         accept_tol)
    if case_label == SPH2:
        t, info = solve_sph2(coeffs, n_schedule, t_conv_tol, disc_scale)
        sol = _make_solution(instance, frame, coeffs, t, SPH2, details=info)
        tol = _accept_tol(coeffs, accept_tol)
        ok = info["converged"] or (sol.norm_defect <= tol and sol.cos_residuals.max() <= tol)
        if not ok:
            sol = _make_solution(instance, frame, coeffs, t, SPH2, False, info)
        return [sol]
    if case_label == SPH3B:
        cuts = _surplus_cuts(coeffs, instance, frame, _accept_tol(coeffs, accept_tol))
        if cuts is None:
            return [SphereInterval(delta[0], delta[1], coeffs, frame, instance)]
        return _verified(instance, frame, coeffs, cuts, SPH3B, accept_tol)
    if case_label == SPH3A:
        a, b, c = coeffs.alpha - 1.0, coeffs.beta - 1.0, coeffs.gamma
        zeros, cos_pts = trig_zeros(a, b, c, delta, disc_scale)
        candidates = list(zeros)
        if abs(b) <= sph3b_tol:
            candidates.extend(cos_pts)
        return _verified(instance, frame, coeffs, candidates, SPH3A, accept_tol)
    raise ValueError(f"unknown sphere case {case_label!r}")


def check_exclusion_3b(coeffs, tol=EXCLUSION_TOL):
    """Certificate that Subcase 3b cannot occur: ``sum_{j<=3}(p~_j^2 + q~_j^2) > 2``.

    Returns ``(excluded, evidence)``; ``excluded`` is ``None`` when fewer than
    three sensors are available.
    """
    if len(coeffs.p_tilde) < 3:
        return None, {"applicable": False, "reason": "needs at least 3 sensors"}
    p, q = coeffs.p_tilde[:3], coeffs.q_tilde[:3]
    total = float(p @ p + q @ q)
    return total > 2.0 + tol, {"applicable": True, "sum": total}


@dataclass(frozen=True, eq=False)
class SphereResult:
    instance: object
    frame: object
    coefficients: SphereCoefficients
    case_label: str
    verdicts: dict
    solutions: list
    exclusion_3b: tuple

    @property
    def is_interval(self):
        return bool(self.solutions) and self.solutions[0].solution_set_kind == INTERVAL

    @property
    def best(self):
        """Solution with the smallest cosine-form residual (midpoint for an interval)."""
        if self.is_interval:
            return self.solutions[0].solution_at(self.solutions[0].t)
        return min(self.solutions, key=lambda s: (not s.verified, s.cos_residuals.max()))


def solve_sphere_instance(instance, *, solve_tol=SOLVE_TOL, pivot_tol=PIVOT_TOL, tail="none",
                          accept_tol=ACCEPT_TOL, sph3b_tol=SPH3B_TOL, n_schedule=None,
                          t_conv_tol=T_CONV_TOL, disc_scale=DISC_SCALE, div_margin=DIV_MARGIN,
                          conv_margin=CONV_MARGIN, method="auto"):
    """Run the sphere pipeline and return a :class:`SphereResult`."""
    if instance.geometry != "sphere":
        raise InvalidInstance("solve_sphere_instance expects a sphere instance")
    frame = build_frame(instance, pivot_tol, method)
    coeffs = build_sphere_coefficients(instance, frame, solve_tol, tail)
    label, verdicts = dispatch_sphere_case(coeffs, instance, sph3b_tol, div_margin, conv_margin)
    solutions = solve_sphere(coeffs, instance, frame, label, accept_tol=accept_tol,
                             sph3b_tol=sph3b_tol, n_schedule=n_schedule,
                             t_conv_tol=t_conv_tol, disc_scale=disc_scale)
    return SphereResult(instance, frame, coeffs, label, verdicts, solutions,
                        check_exclusion_3b(coeffs))
