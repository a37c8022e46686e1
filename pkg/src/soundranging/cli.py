"""Command-line front end.

Exit codes: 0 solved, 2 no solution found, 3 invalid instance or input,
4 series convergence undetermined after retries.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import io
from .euclid import RESID_TOL, solve_instance
from .exceptions import (
    InvalidInstance,
    NoSolution,
    NotConverging,
    SeriesUndetermined,
    SoundRangingError,
)
from .galerkin import galerkin_sequence
from .geometry import SOLVE_TOL, SrpInstance, build_frame, normalize
from .scenarios import DESCRIPTIONS, GENERATORS, forward_simulate, generate
from .series import classify_series
from .sphere import build_sphere_coefficients, check_exclusion_3b, solve_sphere_instance

log = logging.getLogger("soundranging")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_SOLUTION = 2
EXIT_INVALID = 3
EXIT_UNDETERMINED = 4

DEFAULT_TRUNCATION = 1024
DEFAULT_RETRIES = 3
TOL_ENV = "SRP_DEFAULT_TOL"


def default_tol():
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return RESID_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise InvalidInstance(f"{TOL_ENV}={raw!r} is not a number") from None
    if not tol > 0:
        raise InvalidInstance(f"{TOL_ENV} must be positive, got {raw}")
    return tol


def _load(args):
    """Instance file from ``--input``, re-generated or padded to ``--truncate``."""
    spec = io.load_instance(args.input)
    n = getattr(args, "truncate", None)
    if n is not None:
        if spec.scenario is not None:
            sc = generate(spec.scenario["name"], n)
            spec = io.InstanceFile(sc.instance, sc.ground_truth, {"name": sc.name, "truncation": n})
        else:
            spec = io.InstanceFile(spec.instance.with_truncation(n), spec.ground_truth, None)
    return spec


def _solve(instance, args, tol):
    if instance.geometry == "sphere":
        res = solve_sphere_instance(instance, solve_tol=args.solve_tol, tail=args.tail)
        return res, io.sphere_report(res)
    res = solve_instance(instance, resid_tol=tol, solve_tol=args.solve_tol, tail=args.tail)
    return res, io.euclidean_report(res)


def _summary(report):
    lines = [f"{report['geometry']} instance, truncation {report['truncation']}, "
             f"case {report['case']}"]
    for k, s in enumerate(report["solutions"]):
        extra = f" over [{s['t_range'][0]:.12g}, {s['t_range'][1]:.12g}]" if "t_range" in s else ""
        lines.append(f"  [{k}] {s['kind']:<8} t = {s['t']:.15g}{extra}  "
                     f"max residual {s['max_residual']:.3e}")
    u = report["diagnostics"].get("uniqueness")
    if u is not None:
        flags = ", ".join(k for k in ("dual_exists", "sensor_coincident",
                                      "orthogonal_subsequence", "antipodal_pair") if u[k])
        lines.append(f"  uniqueness guaranteed: {u['guaranteed_unique']}"
                     + (f" ({flags})" if flags else ""))
    ex = report["diagnostics"].get("exclusion_3b")
    if ex is not None:
        lines.append(f"  subcase 3b excluded: {ex['excluded']}")
    return "\n".join(lines)


def _emit(doc, args, text):
    if args.output:
        io.write_json(doc, args.output, indent=1)
    if args.json or not args.output:
        if args.json:
            print(io.dumps(doc, indent=1))
        else:
            print(text)


def cmd_solve(args):
    tol = args.tol if args.tol is not None else default_tol()
    spec = _load(args)
    instance = spec.instance
    retries = args.retry_doubling
    while True:
        try:
            res, report = _solve(instance, args, tol)
            break
        except SeriesUndetermined as exc:
            if spec.scenario is None or retries <= 0:
                raise
            retries -= 1
            n = 2 * instance.truncation
            log.info("%s; retrying at truncation %d", exc, n)
            instance = generate(spec.scenario["name"], n).instance
    if args.galerkin:
        g = galerkin_sequence(instance, min(args.galerkin, instance.n_sensors - 1),
                              resid_tol=tol, tail=args.tail)
        report["galerkin"] = {"table": g.table(), "hypotheses": g.hypotheses,
                              "notes": g.notes,
                              "failures": {str(k): v for k, v in g.failures.items()}}
    _emit(report, args, _summary(report))
    return EXIT_OK


def _parse_vector(text, name):
    try:
        vals = json.loads(text) if text.strip().startswith("[") else \
            [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise InvalidInstance(f"{name}: cannot parse {text!r} as numbers") from None
    if not isinstance(vals, list):
        raise InvalidInstance(f"{name}: expected a list of numbers")
    return np.asarray(vals, dtype=np.float64)


def _read_sensors(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InvalidInstance(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInstance(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    rows = doc.get("sensors") if isinstance(doc, dict) else doc
    if not isinstance(rows, list) or not rows:
        raise InvalidInstance(f"{path}: expected an array of sensors or an object with 'sensors'")
    dim = max(len(r) if isinstance(r, list) else 0 for r in rows)
    X = np.zeros((len(rows), dim))
    for i, r in enumerate(rows):
        if not isinstance(r, list):
            raise InvalidInstance(f"{path}: sensors[{i}]: expected an array of numbers")
        for j, v in enumerate(r):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise InvalidInstance(f"{path}: sensors[{i}][{j}]: expected a number")
            X[i, j] = v
    return X


def _scenario_doc(name, n):
    sc = generate(name, n)
    scenario = {"name": name, "truncation": n} if name != "custom" else None
    return io.instance_to_dict(sc.instance, sc.ground_truth, scenario)


def cmd_simulate(args):
    n = args.truncate
    if args.scenario:
        if args.scenario == "custom":
            raise InvalidInstance("use --sensors-file/--source/--emission for custom instances")
        doc = _scenario_doc(args.scenario, n or DEFAULT_TRUNCATION)
    else:
        if not (args.sensors_file and args.source is not None):
            raise InvalidInstance("give --scenario NAME or --sensors-file PATH with --source")
        X = _read_sensors(args.sensors_file)
        s = _parse_vector(args.source, "--source")
        dim = max(X.shape[1], s.size, n or 0)
        if X.shape[1] < dim:
            X = np.hstack([X, np.zeros((X.shape[0], dim - X.shape[1]))])
        s = np.concatenate([s, np.zeros(dim - s.size)])
        times = forward_simulate(X, s, args.emission, args.geometry)
        inst = SrpInstance(X, times, geometry=args.geometry,
                           finite=True if args.finite else None)
        doc = io.instance_to_dict(inst, (s, args.emission))
    io.write_json(doc, args.output, indent=None)
    return EXIT_OK


def cmd_scenario(args):
    if not args.name:
        for name in GENERATORS:
            print(f"{name:<20} {DESCRIPTIONS[name]}")
        return EXIT_OK
    if args.name not in GENERATORS or args.name == "custom":
        raise InvalidInstance(f"unknown scenario {args.name!r}; choose from "
                              f"{[n for n in GENERATORS if n != 'custom']}")
    io.write_json(_scenario_doc(args.name, args.truncate or DEFAULT_TRUNCATION), args.output)
    return EXIT_OK


def _diagnose(instance, tol, tail):
    out = {"geometry": instance.geometry, "truncation": int(instance.truncation),
           "finite": instance.is_finite}
    if instance.geometry == "sphere":
        frame = build_frame(instance)
        c = build_sphere_coefficients(instance, frame, tail=tail)
        if not instance.is_finite:
            out["series"] = {"p_tilde": classify_series(c.p_tilde).as_dict(),
                             "q_tilde": classify_series(c.q_tilde).as_dict()}
        excluded, evidence = check_exclusion_3b(c)
        out["exclusion_3b"] = {"excluded": excluded, **evidence}
        out["delta"] = list(c.delta)
        out["min_pivot"] = float(np.min(np.abs(frame.pivots)))
        try:
            out["case"] = solve_sphere_instance(instance, tail=tail).case_label
        except SoundRangingError as exc:
            out["solve_error"] = f"{type(exc).__name__}: {exc}"
        return out
    try:
        res = solve_instance(instance, resid_tol=tol, tail=tail)
    except (NoSolution, NotConverging, SeriesUndetermined) as exc:
        out["solve_error"] = f"{type(exc).__name__}: {exc}"
        normed, _ = normalize(instance)
        frame = build_frame(normed)
        from .euclid import build_coefficients, diagnose_uniqueness
        coeffs = build_coefficients(normed, frame)
        if not instance.is_finite:
            out["series"] = {"b_tilde": classify_series(coeffs.b_tilde).as_dict(),
                             "c_tilde": classify_series(coeffs.c_tilde).as_dict()}
        out["uniqueness"] = diagnose_uniqueness(normed, frame, []).as_dict()
        out["min_pivot"] = float(np.min(np.abs(frame.pivots)))
        return out
    out["case"] = res.case_label
    out["series"] = {k: v.as_dict() for k, v in res.verdicts.items()}
    out["uniqueness"] = res.uniqueness.as_dict()
    out["min_pivot"] = float(np.min(np.abs(res.frame.pivots)))
    out["n_sources"] = len(res.sources)
    out["n_duals"] = len(res.duals)
    return out


def cmd_diagnose(args):
    tol = args.tol if args.tol is not None else default_tol()
    spec = _load(args)
    out = _diagnose(spec.instance, tol, args.tail)
    lines = [f"{out['geometry']} instance, truncation {out['truncation']}"]
    if "case" in out:
        lines.append(f"  case: {out['case']}")
    if "solve_error" in out:
        lines.append(f"  solve failed: {out['solve_error']}")
    for k, v in out.get("series", {}).items():
        lines.append(f"  sum {k}^2: {v['verdict']} (growth {v['growth_ratio']:.4f}, "
                     f"tail fraction {v['tail_fraction']:.4f})")
    if "uniqueness" in out:
        u = out["uniqueness"]
        for key, label in (("dual_exists", "a"), ("sensor_coincident", "b"),
                           ("orthogonal_subsequence", "c"), ("antipodal_pair", "d")):
            lines.append(f"  finding ({label}) {key}: {u[key]}")
        lines.append(f"  uniqueness guaranteed: {u['guaranteed_unique']}")
    if "exclusion_3b" in out:
        ex = out["exclusion_3b"]
        lines.append(f"  subcase 3b excluded: {ex['excluded']}"
                     + (f" (sum {ex['sum']:.15g})" if "sum" in ex else ""))
    _emit(out, args, "\n".join(lines))
    return EXIT_OK


def cmd_galerkin(args):
    tol = args.tol if args.tol is not None else default_tol()
    spec = _load(args)
    inst = spec.instance
    if inst.geometry != "euclidean":
        raise InvalidInstance("galerkin needs a Euclidean instance")
    m = inst.n_sensors - 1
    if args.max_n > m:
        raise InvalidInstance(f"--max-n {args.max_n} exceeds the {m} non-anchor sensors")
    g = galerkin_sequence(inst, args.max_n, resid_tol=tol, tail=args.tail)
    doc = {"table": g.table(), "hypotheses": g.hypotheses, "notes": g.notes,
           "failures": {str(k): v for k, v in g.failures.items()},
           "reference_t": None if g.reference is None else g.reference.t}
    lines = [f"{'n':>6} {'t_n':>22} {'|t_n - t|':>12} {'|s_n - s|':>12}"]
    for row in doc["table"]:
        te = f"{row['t_error']:12.4e}" if "t_error" in row else f"{'-':>12}"
        se = f"{row['s_error']:12.4e}" if "s_error" in row else f"{'-':>12}"
        lines.append(f"{row['n']:>6} {row['t']:>22.15g} {te} {se}")
    for n, msg in g.failures.items():
        lines.append(f"{n:>6} no solution: {msg}")
    if doc["reference_t"] is not None:
        lines.append(f"reference t = {doc['reference_t']:.15g}")
    lines.extend(f"note: {x}" for x in g.notes)
    _emit(doc, args, "\n".join(lines))
    return EXIT_OK


def _positive_int(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {n}")
    return n


def build_parser():
    parser = argparse.ArgumentParser(
        prog="soundranging",
        description="Recover a source point and emission time from arrival times.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, input_required=True):
        p.add_argument("--input", "-i", required=input_required, help="instance JSON file")
        p.add_argument("--tol", type=float, default=None,
                       help=f"residual tolerance (default ${TOL_ENV} or {RESID_TOL:g})")
        p.add_argument("--truncate", type=_positive_int, default=None,
                       help="working dimension N (regenerates scenario inputs)")
        p.add_argument("--tail", choices=("none", "power"), default="power",
                       help="tail correction of the coefficient sums")
        p.add_argument("--output", "-o", default=None, help="write the JSON report here")
        p.add_argument("--json", action="store_true", help="print JSON instead of a summary")

    p = sub.add_parser("solve", help="solve an instance file")
    common(p)
    p.add_argument("--retry-doubling", type=int, default=DEFAULT_RETRIES,
                   help="doublings of a scenario truncation when convergence is undetermined")
    p.add_argument("--solve-tol", type=float, default=SOLVE_TOL)
    p.add_argument("--galerkin", type=_positive_int, default=None, metavar="M",
                   help="append a restricted-problem table up to n = M")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="write an instance file from ground truth")
    p.add_argument("--scenario", choices=[n for n in GENERATORS if n != "custom"])
    p.add_argument("--sensors-file", help="JSON array of sensor coordinate arrays")
    p.add_argument("--source", help="source coordinates, e.g. '1,0,0' or '[1, 0, 0]'")
    p.add_argument("--emission", type=float, default=0.0, help="emission time")
    p.add_argument("--geometry", choices=("euclidean", "sphere"), default="euclidean")
    p.add_argument("--finite", action="store_true",
                   help="mark the instance as genuinely finite-dimensional")
    p.add_argument("--truncate", type=_positive_int, default=None)
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="uniqueness findings and series verdicts")
    common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("galerkin", help="restricted problems for n = 1..M")
    common(p)
    p.add_argument("--max-n", type=_positive_int, required=True, metavar="M")
    p.set_defaults(func=cmd_galerkin)

    p = sub.add_parser("scenario", help="list scenarios or write one as an instance file")
    p.add_argument("name", nargs="?")
    p.add_argument("--truncate", type=_positive_int, default=None)
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InvalidInstance as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SeriesUndetermined as exc:
        print(f"undetermined: {exc}", file=sys.stderr)
        return EXIT_UNDETERMINED
    except (NoSolution, NotConverging) as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except SoundRangingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION


if __name__ == "__main__":
    sys.exit(main())
