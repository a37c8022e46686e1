"""Scenario generators and the forward simulator.

Every generator returns a :class:`Scenario` whose instance is stored sparsely,
so truncations in the hundreds of thousands stay cheap.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._validation import check_point, check_sensors, row_norms
from .exceptions import InvalidInstance, NotOnSphere, UnknownScenario
from .geometry import SPHERE_TOL, SrpInstance, euclidean_distances, inner_products

SQRT2 = np.sqrt(2.0)
ZETA2 = np.pi ** 2 / 6.0


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    truncation: int
    instance: SrpInstance
    ground_truth: object = None
    extras: dict = field(default_factory=dict)


def geodesic_distances(X, s, tol=SPHERE_TOL):
    """``arccos <r_i, s>`` for every row of ``X``; all points must be unit vectors."""
    s = np.asarray(s, dtype=np.float64)
    if abs(np.linalg.norm(s) - 1.0) > tol:
        raise NotOnSphere(f"point has norm {np.linalg.norm(s):.12g}")
    dev = np.abs(row_norms(X) - 1.0)
    if np.any(dev > tol):
        raise NotOnSphere(f"sensors {np.flatnonzero(dev > tol)[:8].tolist()} are not unit vectors")
    return np.arccos(np.clip(inner_products(X, s), -1.0, 1.0))


def forward_simulate(sensors, s, t_e, geometry="euclidean"):
    """Arrival times ``t_e + d(r_i, s)`` under the geometry's metric."""
    X = check_sensors(sensors)
    s = check_point(s, X.shape[1], "source")
    if geometry == "euclidean":
        return float(t_e) + euclidean_distances(X, s)
    if geometry == "sphere":
        return float(t_e) + geodesic_distances(X, s)
    raise InvalidInstance(f"unknown geometry {geometry!r}")


def two_solutions_times(k):
    """Closed-form arrival times ``3 / (k^2 (pi/sqrt6 + sqrt(pi^2/6 + 3/k^2)))``."""
    k = np.asarray(k, dtype=np.float64)
    return 3.0 / (k * k * (np.sqrt(ZETA2) + np.sqrt(ZETA2 + 3.0 / (k * k))))


def two_solutions_coefficients(k):
    """Closed-form ``(b~_k, c~_k)`` for the two-solution instance."""
    k = np.asarray(k, dtype=np.float64)
    den = np.sqrt(ZETA2) + np.sqrt(ZETA2 + 3.0 / (k * k))
    b = 0.5 * (1.0 - 9.0 / (k * k * den * den)) / k
    c = 3.0 / den / k
    return b, c


def ellipsoid_dual(n):
    """Sensors on an ellipsoid whose foci are a source and a dual source.

    ``r0 = -sqrt2 e_1``, ``r1 = sqrt2 e_1``, ``r_k = e_k`` for ``k >= 2``;
    source ``-e_1`` emitting at ``-sqrt2``, dual source ``e_1`` at ``sqrt2``.
    """
    rows = np.arange(n + 1)
    cols = np.concatenate([[0, 0], np.arange(1, n)])
    vals = np.concatenate([[-SQRT2, SQRT2], np.ones(n - 1)])
    X = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))
    times = np.concatenate([[-1.0, 1.0], np.zeros(n - 1)])
    s1 = np.zeros(n)
    s1[0] = -1.0
    s2 = np.zeros(n)
    s2[0] = 1.0
    inst = SrpInstance(X, times, finite=False)
    return Scenario("ellipsoid_dual", n, inst, (s1, -SQRT2), {"dual": (s2, SQRT2)})


def two_solutions(n):
    """Sensors ``e_k / k`` with the source ``-(1, 1/2, 1/3, ...)`` emitting at ``-pi/sqrt6``."""
    k = np.arange(1, n + 1, dtype=np.float64)
    X = sp.csr_matrix(
        (1.0 / k, (np.arange(1, n + 1), np.arange(n))), shape=(n + 1, n)
    )
    times = np.concatenate([[0.0], two_solutions_times(k)])
    inst = SrpInstance(X, times, finite=False)
    s = -1.0 / k
    tail2 = max(ZETA2 - float(s @ s), 0.0)
    return Scenario("two_solutions", n, inst, (s, -np.sqrt(ZETA2)),
                    {"source_tail_norm": np.sqrt(tail2)})


def orthonormal_basis(n, source=None):
    """Anchor at the origin plus sensors ``e_1..e_n``.

    The default source ``e_1`` emits at ``-1``; a custom ``source`` emits at
    ``-|source|`` so that the anchor's arrival time is zero.
    """
    X = sp.vstack([sp.csr_matrix((1, n)), sp.identity(n, format="csr")], format="csr")
    if source is None:
        s = np.zeros(n)
        s[0] = 1.0
        t_e = -1.0
        times = np.full(n + 1, SQRT2 - 1.0)
        times[0], times[1] = 0.0, -1.0
    else:
        s = check_point(source, n, "source")
        t_e = -float(np.linalg.norm(s))
        times = forward_simulate(X, s, t_e)
        times[0] = 0.0
    inst = SrpInstance(X, times, finite=False)
    return Scenario("orthonormal_basis", n, inst, (s, t_e))


def sphere_orthonormal(n):
    """Unit sensors ``e_1..e_n`` on the sphere, source ``e_1`` emitting at time 0."""
    X = sp.identity(n, format="csr")
    times = np.full(n, np.pi / 2.0)
    times[0] = 0.0
    s = np.zeros(n)
    s[0] = 1.0
    inst = SrpInstance(X, times, geometry="sphere", finite=False)
    return Scenario("sphere_orthonormal", n, inst, (s, 0.0))


def custom(n=None, sensors=None, source=None, t_e=0.0, geometry="euclidean", finite=None):
    """Forward-simulated instance from arbitrary sensors and ground truth."""
    if sensors is None or source is None:
        raise InvalidInstance("custom scenario needs sensors and a source")
    X = check_sensors(sensors)
    if n is not None and n > X.shape[1]:
        pad = n - X.shape[1]
        X = sp.hstack([X, sp.csr_matrix((X.shape[0], pad))], format="csr") if sp.issparse(X) \
            else np.hstack([X, np.zeros((X.shape[0], pad))])
    s = check_point(source, X.shape[1], "source")
    times = forward_simulate(X, s, t_e, geometry)
    inst = SrpInstance(X, times, geometry=geometry, finite=finite)
    return Scenario("custom", X.shape[1], inst, (s, float(t_e)))


GENERATORS = {
    "ellipsoid_dual": ellipsoid_dual,
    "two_solutions": two_solutions,
    "orthonormal_basis": orthonormal_basis,
    "sphere_orthonormal": sphere_orthonormal,
    "custom": custom,
}

DESCRIPTIONS = {
    "ellipsoid_dual": "sensors on an ellipsoid; one source and one dual solution",
    "two_solutions": "sensors e_k/k; two distinct source solutions",
    "orthonormal_basis": "orthonormal sensors; source e_1 emitting at -1",
    "sphere_orthonormal": "orthonormal sensors on the unit sphere; source e_1 at time 0",
    "custom": "forward simulation from given sensors, source and emission time",
}


def generate(name, n=64, **kwargs):
    """Build scenario ``name`` at truncation ``n`` (at least 4)."""
    if name not in GENERATORS:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {sorted(GENERATORS)}")
    if name != "custom" and n < 4:
        raise InvalidInstance(f"scenario truncation must be at least 4, got {n}")
    return GENERATORS[name](n, **kwargs)


def infinite_subselect(instance, keep):
    """Sub-instance over the sensors whose index satisfies ``keep``.

    ``keep`` is a predicate on sensor indices or a boolean mask.  On Euclidean
    instances the anchor (index 0) is always kept.
    """
    m = instance.n_sensors
    if callable(keep):
        mask = np.array([bool(keep(i)) for i in range(m)])
    else:
        mask = np.asarray(keep, dtype=bool)
        if mask.shape != (m,):
            raise InvalidInstance(f"mask has shape {mask.shape}, expected ({m},)")
    if instance.geometry == "euclidean":
        mask[0] = True
    idx = np.flatnonzero(mask)
    return instance.replace(sensors=instance.sensors[idx], times=instance.times[idx])
