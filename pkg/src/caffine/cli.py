"""Command-line front end.

Exit codes: 0 success or all checks passed, 1 checks failed, 2 invalid
input, 3 I/O failure, 4 extraction failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import families as fam
from .blaschke import eigen_split, extract
from .errors import CaffineError, CalibrationError, ExtractionError, InvalidInput
from .grid import Axis, GridSpec
from .parallel import worker_count
from .surfaces import CLASSICAL
from .verify import CHECK_GROUPS, Evaluation, Tolerances, dumps, run_checks, run_suite

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_EXTRACTION = 4

INTEGRATION_CONSTANTS = ("n1", "n2", "e0", "phi0", "B")


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with the invalid-input code and a one-line message."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# -- configuration -----------------------------------------------------------


def _add_params_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("family parameters")
    g.add_argument("--params", metavar="FILE", help="JSON file with FamilyParams fields; flags win")
    g.add_argument("--case", type=str.upper, choices=["A", "B"])
    g.add_argument("--n", type=int)
    g.add_argument("--r", "--ratio", dest="r", type=float, help="eigenvalue ratio l0/l1")
    g.add_argument("--calibration", choices=["unit", "paper_exact"])
    g.add_argument("--seed", help="seed name from the catalog (default per case)")
    for name in INTEGRATION_CONSTANTS:
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--surface", choices=sorted(CLASSICAL), help="use a classical test surface instead of a family")
    g.add_argument("--dim", type=int, default=2, help="dimension of a classical surface")


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("grid")
    g.add_argument("--t-range", nargs=3, type=float, metavar=("LO", "HI", "COUNT"))
    g.add_argument("--u-count", type=int, help="points per chart axis")


def _add_tolerance_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("tolerances")
    g.add_argument("--tol-analytic", type=float)
    g.add_argument("--tol-fallback", type=float)
    g.add_argument("--tol-fit", type=float)
    g.add_argument("--tol-entries", type=float)
    p.add_argument("--mode", choices=["analytic", "fallback"], default="analytic")


def _read_params_file(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read params file {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"params file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidInput(f"params file {path} must hold a JSON object")
    return data


def _resolve_family(args) -> tuple[fam.FamilyParams, str]:
    spec = _read_params_file(args.params) if args.params else {}
    calibration = args.calibration or spec.pop("calibration", "unit")
    spec.pop("calibration", None)
    known = {f for f in fam.FamilyParams.__dataclass_fields__}
    unknown = sorted(set(spec) - known)
    if unknown:
        raise InvalidInput(f"unknown FamilyParams fields: {', '.join(unknown)}")
    flags = {k: getattr(args, k) for k in ("n", "r") if getattr(args, k) is not None}
    if args.case is not None:
        flags["case"] = args.case
    consts = {k: getattr(args, k) for k in INTEGRATION_CONSTANTS if getattr(args, k) is not None}
    complete = set(spec) == known
    if complete and not ({"n", "r"} & set(flags)):
        params = fam.FamilyParams.from_json(spec).validate()
    else:
        n = flags.get("n", spec.get("n"))
        if n is None:
            raise InvalidInput("dimension --n is required")
        case = flags.get("case", spec.get("case"))
        r = flags.get("r", spec.get("r"))
        if r is None:
            if case == "B":
                r = fam.ratio_for_case_b(int(n))
            else:
                raise InvalidInput("eigenvalue ratio --ratio is required for case A")
        params = fam.resolve_params(int(n), float(r))
        if case is not None and case != params.case:
            need = "(n+2) r + n = 0" if case == "B" else "(n+2) r + n != 0"
            raise fam.CaseMismatch(f"ratio r = {float(r)!r} gives case {params.case}; case {case} needs {need}")
        for k in INTEGRATION_CONSTANTS:
            if k in spec:
                consts.setdefault(k, float(spec[k]))
    if consts:
        params = replace(params, **consts)
    return params, calibration


def _seed_for(args, params: fam.FamilyParams):
    if args.seed is None:
        return fam.default_seed(params)
    return fam.make_seed(args.seed, params.n)


def _target(args):
    """``(surface, params or None, calibration)`` from the parsed flags."""
    if args.surface is not None:
        if args.dim < 1:
            raise InvalidInput("--dim must be positive")
        return CLASSICAL[args.surface](args.dim), None, "unit"
    params, calibration = _resolve_family(args)
    seed = _seed_for(args, params)
    if calibration == "paper_exact":
        params = fam.calibrate_constants(params, seed)
    return fam.FamilySurface(params, seed), params, calibration


def _grid(args, surface) -> GridSpec:
    grid = surface.default_grid()
    t_range = grid.t_range
    if args.t_range is not None:
        if grid.t_range is None:
            raise InvalidInput("--t-range applies to constructed families only")
        lo, hi, count = args.t_range
        if count != int(count):
            raise InvalidInput("t-range count must be an integer")
        t_range = (lo, hi, int(count))
    u_spec = grid.u_spec
    if args.u_count is not None:
        u_spec = tuple(Axis(a.lo, a.hi, args.u_count, a.periodic) for a in u_spec)
    return GridSpec(t_range, u_spec)


def _tolerances(args) -> Tolerances:
    base = Tolerances()
    return Tolerances(
        analytic=base.analytic if args.tol_analytic is None else args.tol_analytic,
        fallback=base.fallback if args.tol_fallback is None else args.tol_fallback,
        fit_residual=base.fit_residual if args.tol_fit is None else args.tol_fit,
        entries=base.entries if args.tol_entries is None else args.tol_entries,
    )


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


# -- construct ------------------------------------------------------------------


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _coordinate_names(surface) -> list[str]:
    if isinstance(surface, fam.FamilySurface):
        return ["t"] + [f"u_{i}" for i in range(1, surface.dim)]
    return [f"u_{i}" for i in range(1, surface.dim + 1)]


def points_csv(surface, grid: GridSpec) -> str:
    pts = grid.points()
    pos = surface(pts)
    header = _coordinate_names(surface) + [f"x_{i}" for i in range(surface.dim + 1)]
    return _csv_text(header, (list(p) + list(x) for p, x in zip(pts, pos)))


def points_json(surface, grid: GridSpec, params) -> str:
    pts = grid.points()
    doc = {
        "params": params.to_json() if params is not None else surface.describe(),
        "grid": grid.to_json(),
        "columns": _coordinate_names(surface) + [f"x_{i}" for i in range(surface.dim + 1)],
        "rows": [list(p) + list(x) for p, x in zip(pts, surface(pts))],
    }
    return dumps(doc) + "\n"


def obj_mesh(surface, grid: GridSpec, params) -> str:
    """Triangulated grid with faces counter-clockwise seen from the affine-normal side."""
    if surface.dim != 2:
        raise InvalidInput("OBJ export needs a surface in R^3 (n = 2)")
    pts = grid.points()
    pos = surface(pts)
    xi = extract(surface, pts, order=4).xi
    a0, a1 = grid.axes
    n0, n1 = a0.count, a1.count
    index = np.arange(n0 * n1).reshape(n0, n1)
    faces = []
    for i in range(n0 - 1 + int(a0.periodic)):
        for j in range(n1 - 1 + int(a1.periodic)):
            i2, j2 = (i + 1) % n0, (j + 1) % n1
            quad = (index[i, j], index[i2, j], index[i2, j2], index[i, j2])
            for tri in ((quad[0], quad[1], quad[2]), (quad[0], quad[2], quad[3])):
                p0, p1, p2 = (pos[k] for k in tri)
                normal = np.cross(p1 - p0, p2 - p0)
                if np.dot(normal, xi[list(tri)].sum(axis=0)) < 0:
                    tri = (tri[0], tri[2], tri[1])
                faces.append(tri)
    header = params.dumps() if params is not None else json.dumps(surface.describe())
    lines = [f"# caffine params: {header}"]
    lines += ["v " + " ".join(_fmt(c) for c in p) for p in pos]
    lines += ["f " + " ".join(str(k + 1) for k in tri) for tri in faces]
    return "\n".join(lines) + "\n"


def cmd_construct(args) -> int:
    surface, params, _ = _target(args)
    grid = _grid(args, surface)
    fmt = args.format
    if fmt is None:
        suffix = Path(args.out).suffix.lower() if args.out else ""
        fmt = {".obj": "obj", ".json": "json"}.get(suffix, "csv")
    if fmt == "obj":
        text = obj_mesh(surface, grid, params)
    elif fmt == "json":
        text = points_json(surface, grid, params)
    else:
        text = points_csv(surface, grid)
    _write(args.out, text)
    return EXIT_OK


# -- verify ------------------------------------------------------------------


def cmd_verify(args) -> int:
    surface, _, calibration = _target(args)
    grid = _grid(args, surface)
    report = run_suite(surface, grid, _tolerances(args), mode=args.mode, calibration=calibration)
    _write(args.out, report.dumps() + "\n")
    if not args.quiet and args.out not in (None, "-"):
        for item in report.items:
            res = "n/a" if item.max_residual is None else f"{item.max_residual:.3e}"
            print(f"{item.status:>14}  {item.name:<30} {res}")
        print("overall:", "pass" if report.overall_pass else "fail")
    return EXIT_OK if report.overall_pass else EXIT_FAILED


# -- invariants ---------------------------------------------------------------


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def cmd_invariants(args) -> int:
    surface, params, _ = _target(args)
    point = np.array([args.point], dtype=float)
    if point.shape[1] != surface.dim:
        raise InvalidInput(f"--point needs {surface.dim} coordinates, got {point.shape[1]}")
    data = extract(surface, point, order=4)
    split = eigen_split(data)
    zstar = data.Zstar[0]
    doc = {
        "point": point[0].tolist(),
        "position": data.position[0].tolist(),
        "h": data.h[0].tolist(),
        "xi": data.xi[0].tolist(),
        "spectrum": sorted(split.eigenvalues[0].tolist()),
        "rho": float(data.rho[0]),
        "Zstar": zstar.tolist(),
        "quasi_umbilical": bool(split.valid[0]),
        "a0": _finite(split.a0[0]) if split.valid[0] else None,
        "K0": _finite(split.K0[0]) if split.valid[0] else None,
        "K1": _finite(split.K1[0]) if split.valid[0] else None,
        "centre": data.centre[0].tolist(),
    }
    if args.json:
        text = dumps(doc) + "\n"
    else:
        lines = []
        for key, value in doc.items():
            if isinstance(value, list):
                value = json.dumps(np.round(np.asarray(value, float), 12).tolist())
            lines.append(f"{key}: {value}")
        text = "\n".join(lines) + "\n"
    _write(args.out, text)
    return EXIT_OK


# -- catalog -------------------------------------------------------------------


def catalog() -> list[dict]:
    entries = [
        {"name": "ellipsoid", "role": "seed", "kind": "ellipsoid",
         "parameters": {"dim": "n - 1", "Q": "SPD (n x n)", "scale": "positive"},
         "note": "proper affine hypersphere x^T Q x = scale^2, case A"},
        {"name": "circle", "role": "seed", "kind": "ellipsoid", "parameters": {"dim": 1}, "note": "alias, n = 2"},
        {"name": "ellipse", "role": "seed", "kind": "ellipsoid", "parameters": {"dim": 1, "Q": "SPD (2 x 2)"}, "note": "alias, n = 2"},
        {"name": "sphere", "role": "seed", "kind": "ellipsoid", "parameters": {"dim": 2}, "note": "alias, n = 3"},
        {"name": "hyperboloid_branch", "role": "seed", "kind": "hyperboloid_branch",
         "parameters": {"dim": "n - 1", "Q": "SPD (n x n)", "scale": "positive"}, "note": "experimental"},
        {"name": "ma_quadratic_graph", "role": "seed", "kind": "ma_quadratic_graph",
         "parameters": {"dim": "n - 1", "Q": "SPD (n-1 x n-1), det Q = 1"},
         "note": "improper affine hypersphere, graph of u^T Q u / 2, case B"},
    ]
    for name in sorted(CLASSICAL):
        entries.append({"name": name, "role": "classical", "kind": name, "parameters": {"dim": "n >= 1"},
                        "note": CLASSICAL[name].__doc__.strip().splitlines()[0].replace("``", "")})
    return entries


def cmd_catalog(args) -> int:
    entries = catalog()
    if args.json:
        text = dumps(entries) + "\n"
    else:
        text = "".join(f"{e['role']:<10} {e['name']:<20} {e['note']}\n" for e in entries)
    _write(None, text)
    return EXIT_OK


# -- sweep --------------------------------------------------------------------


def _sweep_ratios(args) -> list[float]:
    if args.ratios:
        return list(args.ratios)
    if args.ratio_range is None:
        raise InvalidInput("sweep needs --ratios or --ratio-range")
    start, stop, step = args.ratio_range
    if step == 0 or (stop - start) / step < 0:
        raise InvalidInput("--ratio-range step must move from start towards stop")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(count)]


def _check_sweep(args, ratios: list[float]) -> None:
    n = args.n
    excluded = {1.0: "r = 1", -1.0: "r = -1"}
    if args.case == "A":
        excluded[fam.ratio_for_case_b(n)] = "the case-B locus (n+2) r + n = 0"
    lo, hi = min(ratios), max(ratios)
    span = args.ratio_range is not None
    for value, label in excluded.items():
        touched = (lo - 1e-12 <= value <= hi + 1e-12) if span else any(abs(r - value) <= 1e-12 for r in ratios)
        if touched:
            raise InvalidInput(f"ratio range touches excluded value {label}")


def cmd_sweep(args) -> int:
    if args.n is None:
        raise InvalidInput("dimension --n is required")
    ratios = _sweep_ratios(args)
    _check_sweep(args, ratios)
    tol = _tolerances(args)
    rows = []
    all_pass = True
    for r in ratios:
        params = fam.resolve_params(args.n, r)
        if args.case is not None and params.case != args.case:
            raise fam.CaseMismatch(f"ratio r = {r!r} gives case {params.case}, not {args.case}")
        seed = fam.default_seed(params) if args.seed is None else fam.make_seed(args.seed, args.n)
        calibration = args.calibration or "unit"
        if calibration == "paper_exact":
            params = fam.calibrate_constants(params, seed)
        surface = fam.FamilySurface(params, seed)
        ev = Evaluation(surface, _grid(args, surface), args.mode)
        groups = dict(run_checks(ev, tol, calibration))
        row = [r, params.case]
        passed = True
        for name in CHECK_GROUPS:
            items = groups[name]
            passed &= all(it.passed for it in items)
            values = [it.max_residual for it in items if it.max_residual is not None]
            row.append(max(values) if values else "")
        row.append("true" if passed else "false")
        all_pass &= passed
        rows.append(row)
    header = ["r", "case"] + [f"max_residual_{name}" for name in CHECK_GROUPS] + ["overall_pass"]
    _write(args.out, _csv_text(header, rows))
    return EXIT_OK if all_pass else EXIT_FAILED


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="caffine", description="Hypersurfaces congruent to their centre map: construction and verification.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("construct", help="sample a hypersurface and export it")
    _add_params_flags(p)
    _add_grid_flags(p)
    p.add_argument("--out", help="output file (default: standard output)")
    p.add_argument("--format", choices=["csv", "obj", "json"], help="default: from --out suffix, else csv")
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("verify", help="run the verification suite and write a JSON report")
    _add_params_flags(p)
    _add_grid_flags(p)
    _add_tolerance_flags(p)
    p.add_argument("--out", help="report file (default: standard output)")
    p.add_argument("--quiet", action="store_true", help="no summary when writing to a file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("invariants", help="Blaschke invariants at one parameter point")
    _add_params_flags(p)
    p.add_argument("--point", nargs="+", type=float, required=True, metavar="X")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_invariants)

    p = sub.add_parser("catalog", help="list seeds and classical test surfaces")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("sweep", help="run the suite over a range of ratios")
    p.add_argument("--n", type=int)
    p.add_argument("--case", type=str.upper, choices=["A", "B"])
    p.add_argument("--seed")
    p.add_argument("--calibration", choices=["unit", "paper_exact"])
    g = p.add_mutually_exclusive_group()
    g.add_argument("--ratios", nargs="+", type=float, metavar="R")
    g.add_argument("--ratio-range", nargs=3, type=float, metavar=("START", "STOP", "STEP"))
    _add_grid_flags(p)
    _add_tolerance_flags(p)
    p.add_argument("--out", help="CSV file (default: standard output)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        worker_count()  # reject a malformed CAFFINE_THREADS before any work
        return args.func(args)
    except ExtractionError as exc:
        print(f"caffine: extraction failed: {exc}", file=sys.stderr)
        return EXIT_EXTRACTION
    except (InvalidInput, CalibrationError) as exc:
        print(f"caffine: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"caffine: {exc}", file=sys.stderr)
        return EXIT_IO
    except CaffineError as exc:
        print(f"caffine: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
