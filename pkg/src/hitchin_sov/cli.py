"""Command-line front end: JSON ingestion, verification suites and SoV transforms."""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hitchin_sov import higgs_forms as hf
from hitchin_sov import sov_engine as se
from hitchin_sov import surface_kernel as sk
from hitchin_sov import verify_harness as vh
from hitchin_sov.errors import ParseError, SovError
from hitchin_sov.moduli_charts import ReferenceData
from hitchin_sov.surface_kernel import Divisor, SurfacePoint

SCHEMA_VERSION = 1
CONFIG_DIR_ENV = "HITCHIN_SOV_CONFIG_DIR"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


# ------------------------------------------------------------ JSON output ---

def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float at 17 significant digits and complex numbers as [re, im]."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, complex, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return f"[{_fmt_float(obj.real)}, {_fmt_float(obj.imag)}]"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def cpair(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def point_json(p: SurfacePoint) -> dict:
    return {"z": cpair(p.base), "sheet": p.sheet}


# ------------------------------------------------------------- JSON input ---

def _check_keys(doc: dict, required: set, optional: set, where: str):
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: expected an object")
    unknown = set(doc) - required - optional
    if unknown:
        raise ParseError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ParseError(f"{where}: missing field(s) {sorted(missing)}")


def _complex(v, where: str) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in v):
        return complex(v[0], v[1])
    raise ParseError(f"{where}: expected [re, im]")


def _cvec(v, where: str) -> np.ndarray:
    if not isinstance(v, list):
        raise ParseError(f"{where}: expected a list of [re, im] pairs")
    return np.array([_complex(t, f"{where}[{i}]") for i, t in enumerate(v)], dtype=complex)


def _point(doc, where: str) -> SurfacePoint:
    _check_keys(doc, {"z"}, {"sheet"}, where)
    sheet = doc.get("sheet", 1)
    if sheet not in (1, -1):
        raise ParseError(f"{where}: sheet must be 1 or -1")
    return SurfacePoint(_complex(doc["z"], f"{where}.z"), sheet)


def _points(v, where: str) -> list[SurfacePoint]:
    if not isinstance(v, list):
        raise ParseError(f"{where}: expected a list of points")
    return [_point(t, f"{where}[{i}]") for i, t in enumerate(v)]


def _header(doc: dict, kind: str, where: str):
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ParseError(f"{where}: unsupported schema_version {doc.get('schema_version')!r}")
    if doc.get("kind") != kind:
        raise ParseError(f"{where}: expected kind {kind!r}, found {doc.get('kind')!r}")


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from exc


@dataclass
class CurveConfig:
    genus: int
    f_coeffs: tuple | None = None
    basepoint: tuple | None = None
    reference: ReferenceData | None = None


def parse_curve(doc: dict, where: str = "curve") -> CurveConfig:
    """Curve document: either ``genus`` alone (built-in curve) or explicit f coefficients or roots."""
    _check_keys(doc, {"schema_version", "kind"}, {"genus", "f_coeffs", "roots", "basepoint", "reference"}, where)
    _header(doc, "curve", where)
    if "f_coeffs" in doc and "roots" in doc:
        raise ParseError(f"{where}: give f_coeffs or roots, not both")
    coeffs = None
    if "f_coeffs" in doc:
        coeffs = _cvec(doc["f_coeffs"], f"{where}.f_coeffs")
    elif "roots" in doc:
        coeffs = np.polynomial.polynomial.polyfromroots(_cvec(doc["roots"], f"{where}.roots"))
    if coeffs is not None:
        deg = len(np.trim_zeros(coeffs, "b")) - 1
        genus = (deg - 1) // 2
        if "genus" in doc and doc["genus"] != genus:
            raise ParseError(f"{where}: genus does not match the degree of f")
    else:
        genus = doc.get("genus", 2)
        if genus not in (2, 3):
            raise ParseError(f"{where}: built-in curves exist for genus 2 and 3 only")
    base = None
    if "basepoint" in doc:
        bp = _point(doc["basepoint"], f"{where}.basepoint")
        base = (bp.base, bp.sheet)
    ref = parse_reference(doc["reference"], f"{where}.reference") if "reference" in doc else None
    return CurveConfig(genus, None if coeffs is None else tuple(coeffs), base, ref)


def parse_reference(doc: dict, where: str) -> ReferenceData:
    _check_keys(doc, {"p", "q_check", "Lambda_degree", "d"}, {"q_check_0"}, where)
    q0 = doc.get("q_check_0")
    try:
        return ReferenceData(Divisor.from_points(_points(doc["p"], f"{where}.p")),
                             Divisor.from_points(_points(doc["q_check"], f"{where}.q_check")),
                             None if q0 is None else _point(q0, f"{where}.q_check_0"),
                             doc["Lambda_degree"], doc["d"])
    except SovError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def reference_json(ref: ReferenceData) -> dict:
    return {"p": [point_json(p) for p in ref.p_points],
            "q_check": [point_json(p) for p in ref.q_check.expanded()],
            "q_check_0": None if ref.q_check_0 is None else point_json(ref.q_check_0),
            "Lambda_degree": ref.Lambda_degree, "d": ref.d}


def parse_darboux(doc: dict, ref: ReferenceData, where: str = "scenario") -> se.DarbouxPoint:
    _check_keys(doc, {"schema_version", "kind", "lam", "x", "kappa", "k"}, {"q", "scenario_id"}, where)
    _header(doc, "darboux_point", where)
    lam, x, kappa, k = (_cvec(doc[f], f"{where}.{f}") for f in ("lam", "x", "kappa", "k"))
    if len(lam) != ref.genus or len(kappa) != ref.genus:
        raise ParseError(f"{where}: lam and kappa need {ref.genus} entries")
    if len(x) != ref.N or len(k) != ref.N:
        raise ParseError(f"{where}: x and k need {ref.N} entries")
    q = Divisor.from_points(_points(doc["q"], f"{where}.q")) if "q" in doc else None
    return se.DarbouxPoint(lam, x, kappa, k, ref, q)


def darboux_json(pt: se.DarbouxPoint, scenario_id: int | None = None) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "kind": "darboux_point"}
    if scenario_id is not None:
        out["scenario_id"] = scenario_id
    out.update({"lam": [cpair(t) for t in pt.lam], "x": [cpair(t) for t in pt.x],
                "kappa": [cpair(t) for t in pt.kappa], "k": [cpair(t) for t in pt.k]})
    if pt.q is not None:
        out["q"] = [point_json(p) for p in pt.q.expanded()]
    return out


def parse_ba(doc: dict, where: str = "ba"):
    """(BAConfiguration, quadratic coefficients or None, sqrt_choice or None)."""
    _check_keys(doc, {"schema_version", "kind", "points"}, {"u0", "quadratic", "sqrt_choice", "scenario_id"}, where)
    _header(doc, "ba_configuration", where)
    if not isinstance(doc["points"], list):
        raise ParseError(f"{where}.points: expected a list")
    pts = []
    for i, entry in enumerate(doc["points"]):
        _check_keys(entry, {"u", "v"}, set(), f"{where}.points[{i}]")
        pts.append((_point(entry["u"], f"{where}.points[{i}].u"), _complex(entry["v"], f"{where}.points[{i}].v")))
    u0 = _complex(doc.get("u0", [1.0, 0.0]), f"{where}.u0")
    quad = _cvec(doc["quadratic"], f"{where}.quadratic") if "quadratic" in doc else None
    choice = doc.get("sqrt_choice")
    if choice is not None and (not isinstance(choice, int) or isinstance(choice, bool)):
        raise ParseError(f"{where}.sqrt_choice: expected an integer")
    return se.BAConfiguration(tuple(pts), u0), quad, choice


def ba_json(ba: se.BAConfiguration, quadratic=None, sqrt_choice=None, scenario_id=None) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "kind": "ba_configuration"}
    if scenario_id is not None:
        out["scenario_id"] = scenario_id
    out["points"] = [{"u": point_json(u), "v": cpair(v)} for u, v in ba.points]
    out["u0"] = cpair(ba.u0)
    if quadratic is not None:
        out["quadratic"] = [cpair(c) for c in quadratic]
    if sqrt_choice is not None:
        out["sqrt_choice"] = int(sqrt_choice)
    return out


# ------------------------------------------------------------ run config ---

@dataclass
class RunConfig:
    command: str
    target: str
    curve: CurveConfig
    scenario_path: str | None = None
    seed: int = 0
    count: int = 50
    out: str | None = None
    tolerances: dict = field(default_factory=dict)
    fd_step: float = 1e-5
    workers: int = 1
    higgs: bool = False
    sqrt_choice: int | None = None


def _resolve(path: str) -> str:
    base = os.environ.get(CONFIG_DIR_ENV)
    if base and not os.path.isabs(path) and not os.path.exists(path):
        return str(Path(base) / path)
    return path


def _parse_tolerances(items) -> dict:
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ParseError(f"tolerance {item!r}: expected name=value")
        if name not in vh.DEFAULT_TOLERANCES:
            raise ParseError(f"tolerance {name!r}: unknown name (known: {', '.join(sorted(vh.DEFAULT_TOLERANCES))})")
        try:
            val = float(value)
        except ValueError as exc:
            raise ParseError(f"tolerance {item!r}: value is not a number") from exc
        if not val > 0:
            raise ParseError(f"tolerance {item!r}: value must be positive")
        out[name] = val
    return out


def build_run_config(args) -> RunConfig:
    if args.scenario is not None and (args.seed is not None or args.count is not None):
        raise ParseError("give --scenario or --seed/--count, not both")
    curve_path = args.curve
    if curve_path is None and os.environ.get(CONFIG_DIR_ENV):
        default = Path(os.environ[CONFIG_DIR_ENV]) / "curve.json"
        if default.exists():
            curve_path = str(default)
    curve = parse_curve(load_json(_resolve(curve_path))) if curve_path else CurveConfig(2)
    scenario = _resolve(args.scenario) if args.scenario is not None else None
    if scenario is not None and not os.path.exists(scenario):
        raise ParseError(f"{scenario}: file not found")
    if args.count is not None and args.count < 1:
        raise ParseError("--count must be positive")
    if args.workers < 1:
        raise ParseError("--workers must be positive")
    if not args.fd_step > 0:
        raise ParseError("--fd-step must be positive")
    return RunConfig(args.command, args.target, curve, scenario,
                     0 if args.seed is None else args.seed,
                     (50 if args.command == "verify" else 1) if args.count is None else args.count,
                     args.out, _parse_tolerances(args.tolerance), args.fd_step, args.workers,
                     getattr(args, "higgs", False), getattr(args, "sqrt_choice", None))


def _context(cfg: RunConfig):
    c = cfg.curve
    curve = se.default_curve(c.genus) if c.f_coeffs is None else sk.HyperellipticCurve(np.asarray(c.f_coeffs))
    base = se.default_basepoint(c.genus) if c.basepoint is None else SurfacePoint(*c.basepoint)
    ctx = sk.build_context(curve, base)
    ref = c.reference if c.reference is not None else se.default_reference(ctx.genus)
    if ref.genus != ctx.genus:
        raise ParseError("reference divisors do not match the curve genus")
    return ctx, ref


def _scenario_docs(cfg: RunConfig) -> list[dict]:
    doc = load_json(cfg.scenario_path)
    if isinstance(doc, dict) and doc.get("kind") == "scenario_list":
        _check_keys(doc, {"schema_version", "kind", "items"}, {"command", "timestamp"}, "scenario")
        _header(doc, "scenario_list", "scenario")
        if not isinstance(doc["items"], list):
            raise ParseError("scenario.items: expected a list")
        return doc["items"]
    return [doc]


def _write(cfg: RunConfig, payload: dict):
    payload = {"schema_version": SCHEMA_VERSION, **payload,
               "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
    text = dumps(payload) + "\n"
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------- commands ---

def cmd_verify(cfg: RunConfig) -> int:
    suites = vh.SUITES if cfg.target == "all" else (cfg.target,)
    points = ()
    c = cfg.curve
    if cfg.scenario_path is not None:
        _, ref = _context(cfg)
        points = tuple(parse_darboux(d, ref, f"scenario[{i}]") for i, d in enumerate(_scenario_docs(cfg)))
    suite = vh.SuiteConfig(genus=c.genus, f_coeffs=c.f_coeffs, basepoint=c.basepoint, reference=c.reference,
                           suites=suites, scenario_seeds=tuple(range(cfg.seed, cfg.seed + cfg.count)),
                           seed=cfg.seed, tolerances=cfg.tolerances, fd_step=cfg.fd_step,
                           fd_scenarios=min(20, cfg.count), points=points)
    t0 = time.perf_counter()
    report = vh.run_suite(suite, workers=cfg.workers)
    elapsed = time.perf_counter() - t0
    for r in report["checks"]:
        if not r["pass"]:
            print(f"FAIL {r['check_name']} scenario={r['scenario_id']} residual={r['residual']:.3e} "
                  f"tolerance={r['tolerance']:.1e}", file=sys.stderr)
    print(f"{'PASS' if report['pass'] else 'FAIL'}: {len(report['checks'])} checks, "
          f"{report['failures']} failed ({elapsed:.1f} s)", file=sys.stderr)
    _write(cfg, {"command": f"verify {cfg.target}", "genus": c.genus, "seed": cfg.seed, "count": cfg.count,
                 "fd_step": cfg.fd_step, "tolerances": {**vh.DEFAULT_TOLERANCES, **cfg.tolerances}, **report})
    return EXIT_OK if report["pass"] else EXIT_FAIL


def _forward_items(cfg: RunConfig, ctx, ref):
    """(scenario id, DarbouxPoint) pairs from the scenario file or from seeds."""
    if cfg.scenario_path is not None:
        return [(i, parse_darboux(d, ref, f"scenario[{i}]")) for i, d in enumerate(_scenario_docs(cfg))]
    return [(s, se.make_scenario(ctx, ref, s).point) for s in range(cfg.seed, cfg.seed + cfg.count)]


def cmd_sov(cfg: RunConfig) -> int:
    ctx, ref = _context(cfg)
    tol = {**vh.DEFAULT_TOLERANCES, **cfg.tolerances}
    if cfg.target == "forward":
        items = []
        for sid, pt in _forward_items(cfg, ctx, ref):
            if cfg.higgs:
                sc = se.scenario_from_point(ctx, ref, pt, sid)
                choice = se.find_sqrt_choice(ctx, ref, sc.ba.u, sc.point.q)
                items.append(ba_json(sc.ba, sc.higgs_report.quadratic.coeffs, choice, sid))
            else:
                items.append(ba_json(se.sov_forward(ctx, ref, pt, enforce_moment=False), scenario_id=sid))
        _write(cfg, {"kind": "scenario_list", "command": "sov forward", "items": items})
        return EXIT_OK
    if cfg.target == "inverse":
        if cfg.scenario_path is None:
            raise ParseError("sov inverse needs --scenario with BA data")
        items = []
        for i, doc in enumerate(_scenario_docs(cfg)):
            ba, quad, choice = parse_ba(doc, f"scenario[{i}]")
            if quad is None:
                raise ParseError(f"scenario[{i}]: inverse needs the quadratic differential coefficients")
            if len(quad) != 3 * ctx.genus - 3:
                raise ParseError(f"scenario[{i}].quadratic: expected {3 * ctx.genus - 3} coefficients")
            choice = cfg.sqrt_choice if cfg.sqrt_choice is not None else (choice or 0)
            qd = hf.QuadraticDifferential(ctx, quad)
            pt, _, rep = se.sov_inverse(ctx, ref, ba, qd, choice)
            items.append({"point": darboux_json(pt, doc.get("scenario_id", i)), "sqrt_choice": choice,
                          "report": {"step0_residual": rep.step0_residual,
                                     "phi_plus_crosscheck": rep.phi_plus_crosscheck,
                                     "system_shape": list(rep.system_shape),
                                     "system_residual": rep.system_residual,
                                     "system_condition": rep.system_condition,
                                     "phi_minus_residue_sum": rep.phi_minus_residue_sum,
                                     "phi_minus_mismatch": rep.phi_minus_mismatch}})
        _write(cfg, {"command": "sov inverse", "items": items})
        return EXIT_OK
    # roundtrip
    worst = 0.0
    rows = []
    for sid, pt in _forward_items(cfg, ctx, ref):
        sc = se.scenario_from_point(ctx, ref, pt, sid)
        choice = se.find_sqrt_choice(ctx, ref, sc.ba.u, sc.point.q)
        back, _, _ = se.sov_inverse(ctx, ref, sc.ba, sc.higgs_report.quadratic, choice, k1=sc.point.k[0],
                                    guess=sc.point.q)
        dev = se.darboux_distance(ctx, sc.point, back)
        worst = max(worst, dev)
        rows.append({"scenario_id": sid, "sqrt_choice": choice, "deviation": dev})
    ok = worst < tol["roundtrip"]
    print(f"{'PASS' if ok else 'FAIL'}: max round-trip deviation {worst:.3e}", file=sys.stderr)
    _write(cfg, {"command": "sov roundtrip", "max_deviation": worst, "tolerance": tol["roundtrip"],
                 "pass": ok, "items": rows})
    return EXIT_OK if ok else EXIT_FAIL


# ----------------------------------------------------------------- parser ---

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--curve", help=f"curve JSON (relative paths also searched in ${CONFIG_DIR_ENV})")
    p.add_argument("--scenario", help="JSON file with a point, BA data, or a scenario_list")
    p.add_argument("--seed", type=int, help="first scenario seed")
    p.add_argument("--count", type=int, help="number of seeded scenarios")
    p.add_argument("--out", help="output JSON path (default: stdout)")
    p.add_argument("--tolerance", action="append", metavar="NAME=VALUE", help="override a named tolerance")
    p.add_argument("--fd-step", type=float, default=1e-5, help="finite-difference step")
    p.add_argument("--workers", type=int, default=1, help="worker processes")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hitchin-sov", description="Verify and run separation of variables for rank-2 Higgs data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    pv = sub.add_parser("verify", help="run verification checks and write a JSON report")
    pv.add_argument("target", choices=list(vh.SUITES) + ["all"])
    _common(pv)
    ps = sub.add_parser("sov", help="forward, inverse or round-trip transform")
    ps.add_argument("target", choices=["forward", "inverse", "roundtrip"])
    ps.add_argument("--higgs", action="store_true",
                    help="forward: require a Higgs pull-back (x.k = 0) and emit the quadratic differential")
    ps.add_argument("--sqrt-choice", type=int, help="inverse: index of the square-root bundle")
    _common(ps)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = build_run_config(args)
        if cfg.command == "verify":
            return cmd_verify(cfg)
        return cmd_sov(cfg)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SovError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
