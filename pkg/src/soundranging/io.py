"""JSON instance files and solution reports.

An instance file holds ``geometry``, ``truncation``, ``sensors`` and
``times``, plus optional ``scenario`` (which regenerates sensors and times),
``ground_truth`` and ``finite``.  A sensor is either a coordinate array
(trailing zeros may be omitted) or ``{"indices": [...], "values": [...]}``.
"""

from dataclasses import dataclass
import json
import math

import numpy as np
import scipy.sparse as sp

from ._validation import GEOMETRIES
from .euclid import SOURCE, verify_solution
from .exceptions import InvalidInstance, Mixed, SoundRangingError
from .geometry import SrpInstance, inner_products
from .scenarios import GENERATORS, generate

FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class InstanceFile:
    instance: SrpInstance
    ground_truth: object = None
    scenario: object = None

    @property
    def truncation(self):
        return self.instance.truncation


def _fail(path, msg):
    raise InvalidInstance(f"{path}: {msg}")


def _number(x, path):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        _fail(path, f"expected a number, got {type(x).__name__}")
    if not math.isfinite(x):
        _fail(path, "expected a finite number")
    return float(x)


def _int(x, path, minimum=1):
    if isinstance(x, bool) or not isinstance(x, int):
        _fail(path, f"expected an integer, got {type(x).__name__}")
    if x < minimum:
        _fail(path, f"must be at least {minimum}, got {x}")
    return x


def _numbers(xs, path):
    if not isinstance(xs, list):
        _fail(path, f"expected an array, got {type(xs).__name__}")
    return [_number(x, f"{path}[{i}]") for i, x in enumerate(xs)]


def _sensor_entries(row, path, n):
    if isinstance(row, dict):
        missing = {"indices", "values"} - row.keys()
        if missing:
            _fail(path, f"sparse sensor needs {sorted(missing)}")
        idx = row["indices"]
        if not isinstance(idx, list):
            _fail(f"{path}.indices", "expected an array")
        idx = [_int(j, f"{path}.indices[{k}]", 0) for k, j in enumerate(idx)]
        vals = _numbers(row["values"], f"{path}.values")
        if len(idx) != len(vals):
            _fail(path, f"{len(idx)} indices but {len(vals)} values")
    else:
        vals = _numbers(row, path)
        idx = list(range(len(vals)))
    for k, j in enumerate(idx):
        if j >= n:
            _fail(f"{path}", f"coordinate {j} exceeds truncation {n}")
    return idx, vals


def parse_instance(doc, source="<input>"):
    """Build an :class:`InstanceFile` from a decoded JSON document.

    Every error names the offending field, e.g. ``sensors[3][1]``.
    """
    if not isinstance(doc, dict):
        _fail(source, "top level must be an object")
    geometry = doc.get("geometry", "euclidean")
    if geometry not in GEOMETRIES:
        _fail("geometry", f"must be one of {list(GEOMETRIES)}, got {geometry!r}")
    finite = doc.get("finite")
    if finite is not None and not isinstance(finite, bool):
        _fail("finite", "expected true or false")

    scenario = doc.get("scenario")
    if scenario is not None:
        if not isinstance(scenario, dict) or "name" not in scenario:
            _fail("scenario", 'expected {"name": ..., "truncation": ...}')
        name = scenario["name"]
        if name not in GENERATORS or name == "custom":
            _fail("scenario.name", f"unknown scenario {name!r}")
        n = _int(scenario.get("truncation", doc.get("truncation", 1024)), "scenario.truncation", 4)
        sc = generate(name, n)
        inst = sc.instance
        if inst.geometry != geometry and "geometry" in doc:
            _fail("geometry", f"scenario {name!r} is {inst.geometry}, file says {geometry}")
        return InstanceFile(inst, sc.ground_truth, {"name": name, "truncation": n})

    for key in ("sensors", "times"):
        if key not in doc:
            _fail(key, "missing (give it or a scenario)")
    rows = doc["sensors"]
    if not isinstance(rows, list) or not rows:
        _fail("sensors", "expected a non-empty array of sensors")
    dense_len = max((len(r) for r in rows if isinstance(r, list)), default=0)
    n = doc.get("truncation", dense_len)
    n = _int(n, "truncation")
    ri, ci, vv = [], [], []
    for i, row in enumerate(rows):
        idx, vals = _sensor_entries(row, f"sensors[{i}]", n)
        ri.extend([i] * len(idx))
        ci.extend(idx)
        vv.extend(vals)
    X = sp.csr_matrix((vv, (ri, ci)), shape=(len(rows), n))
    if X.nnz > 0.25 * X.shape[0] * X.shape[1] or n < 64:
        X = X.toarray()
    times = _numbers(doc["times"], "times")
    if len(times) != len(rows):
        _fail("times", f"{len(times)} arrival times for {len(rows)} sensors")
    try:
        inst = SrpInstance(X, np.array(times), geometry=geometry, finite=finite)
    except InvalidInstance as exc:
        _fail("sensors", str(exc))

    truth = doc.get("ground_truth")
    if truth is not None:
        if not isinstance(truth, dict) or "s" not in truth or "t" not in truth:
            _fail("ground_truth", 'expected {"s": [...], "t": number}')
        s = _numbers(truth["s"], "ground_truth.s")
        if len(s) > n:
            _fail("ground_truth.s", f"{len(s)} coordinates exceed truncation {n}")
        s = np.concatenate([s, np.zeros(n - len(s))])
        truth = (s, _number(truth["t"], "ground_truth.t"))
    return InstanceFile(inst, truth, None)


def loads_instance(text, source="<input>"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInstance(
            f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    return parse_instance(doc, source)


def load_instance(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidInstance(f"{path}: {exc.strerror}") from exc
    return loads_instance(text, str(path))


def _sensor_json(row):
    row = np.asarray(row, dtype=np.float64)
    nz = np.flatnonzero(row)
    if nz.size < row.size // 2:
        return {"indices": nz.tolist(), "values": row[nz].tolist()}
    last = nz[-1] + 1 if nz.size else 0
    return row[:last].tolist()


def instance_to_dict(instance, ground_truth=None, scenario=None):
    """JSON-ready form of an instance; sparse rows are written sparsely."""
    X = instance.sensors
    if sp.issparse(X):
        rows = []
        for i in range(X.shape[0]):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            idx, vals = X.indices[lo:hi], X.data[lo:hi]
            if len(idx) < X.shape[1] // 2:
                order = np.argsort(idx)
                rows.append({"indices": idx[order].tolist(), "values": vals[order].tolist()})
            else:
                rows.append(_sensor_json(X[i].toarray().ravel()))
    else:
        rows = [_sensor_json(r) for r in X]
    doc = {
        "format": FORMAT_VERSION,
        "geometry": instance.geometry,
        "truncation": int(instance.truncation),
        "sensors": rows,
        "times": np.asarray(instance.times).tolist(),
    }
    if instance.finite is not None:
        doc["finite"] = bool(instance.finite)
    if scenario is not None:
        doc["scenario"] = dict(scenario)
    if ground_truth is not None:
        s, t = ground_truth
        doc["ground_truth"] = {"s": _trim(np.asarray(s, dtype=np.float64)), "t": float(t)}
    return doc


def _trim(x):
    nz = np.flatnonzero(x)
    return x[: nz[-1] + 1 if nz.size else 0].tolist()


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    if hasattr(obj, "as_dict"):
        return obj.as_dict()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc, indent=None):
    """JSON text; floats use the shortest representation that round-trips."""
    return json.dumps(doc, default=_default, indent=indent, allow_nan=False)


def write_json(doc, path, indent=None):
    text = dumps(doc, indent)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def euclidean_report(result):
    """SolutionReport for an :class:`~soundranging.euclid.EuclideanResult`."""
    sols = [{
        "kind": s.kind,
        "case": s.case_label,
        "t": s.t,
        "s": np.asarray(s.s).tolist(),
        "max_residual": s.max_residual,
        **({"z": s.z} if s.z is not None else {}),
    } for s in result.solutions]
    return {
        "format": FORMAT_VERSION,
        "geometry": "euclidean",
        "truncation": int(result.instance.truncation),
        "case": result.case_label,
        "solutions": sols,
        "diagnostics": {
            "uniqueness": result.uniqueness.as_dict(),
            "series": {k: v.as_dict() for k, v in result.verdicts.items()},
            "min_pivot": float(np.min(np.abs(result.frame.pivots))),
            "quadratic": {"alpha": result.quadratic.alpha, "beta": result.quadratic.beta,
                          "gamma": result.quadratic.gamma, "tail": result.quadratic.tail},
        },
    }


def sphere_report(result):
    """SolutionReport for a :class:`~soundranging.sphere.SphereResult`."""
    sols = []
    for s in result.solutions:
        if s.solution_set_kind == "interval":
            mid = s.solution_at(s.t)
            sols.append({"kind": "interval", "case": s.case_label, "t": mid.t,
                         "t_range": [s.lo, s.hi], "s": mid.s.tolist(),
                         "max_residual": mid.max_residual})
        else:
            entry = {"kind": SOURCE, "case": s.case_label, "t": s.t, "s": s.s.tolist(),
                     "max_residual": s.max_residual, "verified": s.verified}
            if s.case_label == "sph2":
                entry["width"] = s.details["width"]
                entry["converged"] = s.details["converged"]
            sols.append(entry)
    excluded, evidence = result.exclusion_3b
    c = result.coefficients
    return {
        "format": FORMAT_VERSION,
        "geometry": "sphere",
        "truncation": int(result.instance.truncation),
        "case": result.case_label,
        "solutions": sols,
        "diagnostics": {
            "series": {k: v.as_dict() for k, v in result.verdicts.items()},
            "min_pivot": float(np.min(np.abs(result.frame.pivots))),
            "delta": list(c.delta),
            "sums": {"alpha": c.alpha, "beta": c.beta, "gamma": c.gamma},
            "exclusion_3b": {"excluded": excluded, **evidence},
        },
    }


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def verify_report(report, instance, resid_tol=1e-9):
    """Recompute each reported solution's maximum residual against ``instance``.

    Returns one ``(reported, recomputed)`` pair per solution.
    """
    out = []
    for k, sol in enumerate(report.get("solutions", [])):
        s = np.asarray(sol["s"], dtype=np.float64)
        t = float(sol["t"])
        if instance.geometry == "sphere":
            ip = inner_products(instance.sensors, s)
            res = np.abs(instance.times - t - np.arccos(np.clip(ip, -1.0, 1.0)))
            out.append((sol["max_residual"], float(res.max())))
            continue
        try:
            kind, res = verify_solution(instance, s, t, resid_tol)
        except Mixed as exc:
            which = exc.max_source if sol["kind"] == SOURCE else exc.max_dual
            out.append((sol["max_residual"], float(which)))
            continue
        except SoundRangingError as exc:
            raise InvalidInstance(f"solutions[{k}]: {exc}") from exc
        out.append((sol["max_residual"], float(res.max())))
    return out
