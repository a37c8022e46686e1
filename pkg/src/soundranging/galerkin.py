"""Downdimensioned problems: the first ``n`` sensors solved inside their own span."""

from dataclasses import dataclass, field

import numpy as np

from ._roots import quadratic_roots
from .euclid import (
    DISC_SCALE,
    RESID_TOL,
    SOURCE,
    build_coefficients,
    solve_instance,
)
from .exceptions import InvalidInstance, NoSolution, SoundRangingError
from .geometry import PIVOT_TOL, SOLVE_TOL, euclidean_distances, gram_schmidt, normalize

#: A reference solution whose residual exceeds this is not treated as a solution.
CONSISTENCY_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class GalerkinResult:
    """Solution of the problem restricted to sensors ``0..n``.

    ``coords`` are the source coordinates in the frame of the first ``n``
    sensors, which is the leading part of the full frame; ``s`` is the source
    in original coordinates; ``candidates`` lists every qualifying emission
    time, of which ``t`` is the least.  ``case_label`` names the branch of the
    root choice (``"alpha>0"``, ``"alpha<0"`` or ``"alpha=0"``), or
    ``"degenerate"`` when the equation vanishes identically and
    ``n_qualifying`` is infinite.
    """

    n: int
    t: float
    s: np.ndarray
    coords: np.ndarray
    case_label: str
    residuals: np.ndarray
    n_qualifying: int
    candidates: tuple = ()

    @property
    def unique(self):
        return self.n_qualifying == 1

    def frame_coordinates(self, size):
        """Coordinates padded with exact zeros to a frame of ``size`` vectors."""
        out = np.zeros(size)
        out[: self.n] = self.coords
        return out


def solve_srp_n(instance, n, anchor=0, resid_tol=RESID_TOL, pivot_tol=PIVOT_TOL,
                solve_tol=SOLVE_TOL, disc_scale=DISC_SCALE, method="auto",
                normalized=None):
    """Solve the problem on sensors ``0..n`` inside their span.

    The finite equation ``(sum c~^2 - 1) t^2 + 2 sum b~c~ t + sum b~^2 = 0`` is
    solved directly in ``t`` and the lesser root with ``t <= min t_i`` is taken.

    Raises
    ------
    NoSolution
        When no real root passes the time filter.
    """
    if normalized is None:
        normalized = normalize(instance, anchor)
    normed, record = normalized
    m = normed.n_sensors - 1
    if not 1 <= n <= m:
        raise InvalidInstance(f"n must lie in 1..{m}, got {n}")
    sub = normed.replace(sensors=normed.sensors[: n + 1], times=normed.times[: n + 1])
    frame = gram_schmidt(sub.sensors[1:], pivot_tol, method, row_ids=np.arange(1, n + 1))
    coeffs = build_coefficients(sub, frame, solve_tol)
    bt, ct = coeffs.b_tilde, coeffs.c_tilde
    a2 = float(ct @ ct) - 1.0
    b2 = 2.0 * float(bt @ ct)
    g2 = float(bt @ bt)
    scale = b2 * b2 + abs(4.0 * a2 * g2) + 1.0
    t_min = float(sub.times.min())
    tol = resid_tol * max(1.0, float(np.abs(sub.times).max()))
    if max(abs(a2), abs(b2), abs(g2)) <= tol:
        # every t solves the equation; the sensors admit a continuum of
        # solutions, reported at the latest admissible emission time
        t, label, n_qual, qualifying = t_min, "degenerate", np.inf, [t_min]
    else:
        roots = quadratic_roots(a2, b2, g2, disc_scale * scale,
                                linear_tol=1e-14 * (1.0 + abs(b2)))
        qualifying = sorted({t for t in roots if t <= t_min + tol * max(1.0, abs(t))})
        if not qualifying:
            raise NoSolution(f"restricted problem with n = {n} has no root t <= min t_i")
        t, n_qual = qualifying[0], len(qualifying)
        if abs(a2) <= 1e-14 * (1.0 + abs(b2)):
            label = "alpha=0"
        else:
            label = "alpha>0" if a2 > 0 else "alpha<0"
    coords = coeffs.source_coordinates(t)
    s_norm = frame.embed(coords)
    d = euclidean_distances(sub.sensors, s_norm)
    residuals = np.abs(sub.times - t - d)
    s, t_orig = record.to_original(s_norm, t)
    shift = t_orig - t
    return GalerkinResult(n, t_orig, s, coords, label, residuals, n_qual,
                          tuple(x + shift for x in qualifying))


@dataclass(frozen=True, eq=False)
class GalerkinSummary:
    """Sequence of restricted solutions compared against a full-truncation reference."""

    results: list
    failures: dict
    reference: object
    t_errors: object
    s_errors: object
    s_errors_identity: object
    hypotheses: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def ns(self):
        return [r.n for r in self.results]

    def table(self):
        rows = []
        for i, r in enumerate(self.results):
            row = {"n": r.n, "t": r.t, "case": r.case_label, "max_residual": float(r.residuals.max())}
            if self.t_errors is not None:
                row["t_error"] = float(self.t_errors[i])
                row["s_error"] = float(self.s_errors[i])
                row["s_error_identity"] = float(self.s_errors_identity[i])
            rows.append(row)
        return rows


def galerkin_sequence(instance, n_max=None, *, n_values=None, anchor=0, reference_t=None,
                      tail="power", resid_tol=RESID_TOL, consistency_tol=CONSISTENCY_TOL,
                      **solve_kwargs):
    """Solve the restricted problems for ``n = 1..n_max`` (or ``n_values``).

    The reference is the full-truncation Euclidean solution; among several
    source solutions the one nearest ``reference_t`` is used, else the one
    with the least emission time (the root the restricted problems select).
    Source errors are reported twice: measured directly, and from
    ``(t_n - t)^2 sum_{j<=n} c~_j^2 + sum_{j>n} s_j^2``.
    """
    normalized = normalize(instance, anchor)
    m = normalized[0].n_sensors - 1
    if n_values is None:
        if n_max is None:
            raise InvalidInstance("give n_max or n_values")
        n_values = range(1, n_max + 1)
    n_values = sorted(set(int(n) for n in n_values))
    if n_values[0] < 1 or n_values[-1] > m:
        raise InvalidInstance(f"n values must lie in 1..{m} (number of non-anchor sensors)")

    results, failures = [], {}
    for n in n_values:
        try:
            results.append(solve_srp_n(instance, n, anchor, resid_tol=resid_tol,
                                       normalized=normalized))
        except NoSolution as exc:
            failures[n] = str(exc)

    notes = []
    hypotheses = {
        "restricted_unique": all(r.unique for r in results),
        "restricted_nonzero": all(np.any(r.coords) for r in results),
    }
    full = None
    try:
        full = solve_instance(instance, anchor, tail=tail, resid_tol=resid_tol, **solve_kwargs)
    except SoundRangingError as exc:
        notes.append(f"no full-truncation reference: {exc}")

    reference = None
    if full is not None and full.sources:
        sources = full.sources
        if reference_t is not None:
            reference = min(sources, key=lambda s: abs(s.t - reference_t))
        else:
            reference = min(sources, key=lambda s: s.t)
        hypotheses["reference_unique"] = len(sources) == 1 or full.uniqueness.guaranteed_unique
        v = full.verdicts.get("c_tilde")
        hypotheses["c_tilde_converges"] = True if v is None else v.converges
        hypotheses["reference_consistent"] = reference.max_residual <= consistency_tol
        if not hypotheses["reference_consistent"]:
            notes.append(
                "reference residual is large; sub-selections of the sensors must be "
                "finite prefixes for the restricted problems to approximate a solution"
            )

    t_err = s_err = s_id = None
    if reference is not None and results:
        ct = full.coefficients.c_tilde
        ref_coords = reference.s_frame
        K = len(ref_coords)
        t_err = np.array([abs(r.t - reference.t) for r in results])
        s_err = np.array([np.linalg.norm(r.s - reference.s) for r in results])
        s_id = np.array([
            np.sqrt((r.t - reference.t) ** 2 * float(ct[: r.n] @ ct[: r.n])
                    + float(ref_coords[r.n:K] @ ref_coords[r.n:K]))
            for r in results
        ])
    return GalerkinSummary(results, failures, reference, t_err, s_err, s_id, hypotheses, notes)
