"""Command line entry point: ``curvlab <subcommand> ...``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on input
errors (bad flags, unreadable or malformed files).  ``CURVLAB_SEED`` in the
environment overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import acceptance as acc
from . import bending as bd
from . import conditions as cd
from . import disc_deformations as dd
from . import warped_metrics as wm
from .curvature_algebra import CurvOp, DomainError, identity, model_operator

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


# ----------------------------------------------------------------------------
# parsing helpers


def parse_range(text: str) -> list[int]:
    """``"5"``, ``"5..8"`` or ``"2,4,6"`` to a list of integers."""
    out = []
    for part in text.split(","):
        m = re.fullmatch(r"\s*(-?\d+)\s*(?:\.\.\s*(-?\d+)\s*)?", part)
        if not m:
            raise InputError(f"cannot read integer range {text!r}")
        lo = int(m.group(1))
        hi = int(m.group(2)) if m.group(2) is not None else lo
        if hi < lo:
            raise InputError(f"empty range {part!r}")
        out.extend(range(lo, hi + 1))
    return out


def parse_spec(text: str) -> tuple[str, dict]:
    """``"model:n=5,q=1"`` to ``("model", {"n": 5.0, "q": 1.0})``."""
    head, _, tail = text.partition(":")
    params = {}
    for item in filter(None, tail.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise InputError(f"expected key=value in {text!r}")
        try:
            params[key.strip()] = float(val)
        except ValueError:
            raise InputError(f"{key.strip()} must be a number in {text!r}") from None
    return head.strip(), params


def condition_params(args, name: str) -> dict:
    params = {}
    for key in ("p", "k"):
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    for key in ("alpha", "beta"):
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    return params


def make_condition(args, n: int, seed: int) -> cd.Condition:
    if n is None:
        raise InputError("the dimension is unknown; pass --n")
    try:
        return cd.builtin(args.condition, n, condition_params(args, args.condition), seed=seed)
    except DomainError as exc:
        raise InputError(str(exc)) from None


def load_operator(ref: str, n: int | None) -> CurvOp:
    """Builtin reference (``identity``, ``model:n=..,q=..``) or a JSON file."""
    head, params = parse_spec(ref)
    try:
        if head == "identity":
            dim = int(params.get("n", n or 0))
            if dim < 2:
                raise InputError("identity needs a dimension: --n or identity:n=...")
            return identity(dim)
        if head == "model":
            dim = int(params.get("n", n or 0))
            if "q" not in params or dim < 2:
                raise InputError("model reference needs n and q, e.g. model:n=5,q=1")
            return model_operator(dim, int(params["q"]))
        path = Path(ref)
        if not path.exists():
            raise InputError(f"no operator file {ref!r} (builtins: identity, model:n=..,q=..)")
        return CurvOp.from_json(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed operator JSON in {ref}: {exc}") from None
    except DomainError as exc:
        raise InputError(str(exc)) from None


def load_profile(ref: str, rbar: float) -> wm.WarpProfile | None:
    """``flat``, ``torpedo:mu=..`` or a profile JSON file."""
    head, params = parse_spec(ref)
    try:
        if head == "flat":
            return None
        if head == "torpedo":
            mu = params.get("mu", 1.0)
            delta = params.get("delta", 2.0 * max(rbar, mu * math.pi / 2))
            return wm.TorpedoProfile(mu, delta, "mollified" if params.get("mollified") else "piecewise")
        path = Path(ref)
        if not path.exists():
            raise InputError(f"no ambient profile {ref!r} (builtins: flat, torpedo:mu=..)")
        return wm.profile_from_dict(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed profile JSON in {ref}: {exc}") from None
    except DomainError as exc:
        raise InputError(str(exc)) from None


def effective_seed(args) -> int:
    env = os.environ.get("CURVLAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"CURVLAB_SEED must be an integer, got {env!r}") from None
    return args.seed


def dump(doc: dict) -> str:
    return json.dumps(acc._clean(doc), sort_keys=True, indent=1) + "\n"


def write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from None


def base_report(command: str, config: dict, checks: list[acc.Check]) -> dict:
    rep = acc.report(checks, config)
    rep["command"] = command
    return rep


# ----------------------------------------------------------------------------
# subcommands


def cmd_check(args) -> int:
    seed = effective_seed(args)
    R = load_operator(args.operator, args.n)
    if args.n is not None and args.n != R.n:
        raise InputError(f"--n {args.n} does not match the operator dimension {R.n}")
    C = make_condition(args, R.n, seed)
    mem = C.membership(R)
    wit = None if mem.witness is None else mem.witness.to_dict()
    chk = acc.Check(f"membership {C.label()}", mem.inside, mem.margin, None if mem.inside else {"frame": wit})
    print(f"{C.label()}: {'in' if mem.inside else 'out'}, margin {mem.margin:.12g}")
    if args.json:
        write_text(args.json, dump(base_report("check", {"operator": args.operator, "condition": C.to_dict(),
                                                         "seed": seed}, [chk])))
    return EXIT_OK if mem.inside else EXIT_FAIL


def cmd_stability(args) -> int:
    seed = effective_seed(args)
    ns = parse_range(args.n)
    if args.condition == "p_curv":
        if args.p is None:
            raise InputError("p_curv needs --p (a value or a range such as 0..2)")
        rows = [(n, {"p": p}) for n in ns for p in parse_range(args.p)]
    elif args.condition == "k_pos_ric":
        if args.k is None:
            raise InputError("k_pos_ric needs --k (a value or a range such as 2..7)")
        rows = [(n, {"k": k}) for n in ns for k in parse_range(args.k)]
    else:
        rows = [(n, {}) for n in ns]
    expected = None
    if args.expected:
        expected = parse_range(args.expected) if args.expected != "claimed" else "claimed"
        if isinstance(expected, list) and len(expected) != len(rows):
            raise InputError(f"--expected has {len(expected)} entries for {len(rows)} rows")
    checks = []
    print(f"{'condition':<24} {'codim':>5} {'radius':>12} {'refuted':>8} {'expected':>8}")
    for i, (n, params) in enumerate(rows):
        try:
            row = acc.stability_row(args.condition, n, params, seed, args.directions)
        except DomainError as exc:
            raise InputError(str(exc)) from None
        want = None
        if expected == "claimed":
            want = cd.builtin(args.condition, n, params).claimed_codim
        elif expected is not None:
            want = expected[i]
        ok = row["codim"] is not None and row["refuted_below"] and (want is None or row["codim"] == want)
        row["expected"] = want
        checks.append(acc.Check(f"stability {row['condition']}", ok,
                                row["radius"] if ok else -1.0, None if ok else row, row))
        print(f"{row['condition']:<24} {str(row['codim']):>5} {row['radius']:>12.6g} "
              f"{str(row['refuted_below']):>8} {str(want):>8}")
    config = {"condition": args.condition, "n": ns, "p": args.p, "k": args.k, "expected": args.expected,
              "directions": args.directions, "seed": seed}
    if args.json:
        write_text(args.json, dump(base_report("stability", config, checks)))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


PARTITION_CLAUSES = ("initial_bend", "second_bend", "vertical_stretch", "descent_to_axis")


def partition_clauses(cls: bd.CurveClass) -> list[str]:
    """Names of the partition clauses a classified curve satisfies."""
    part = cls.partition
    if not part:
        return []
    out = []
    if part["s2"] > part["s1"]:
        out.append("initial_bend")
    if part["s4"] > part["s3"]:
        out.append("second_bend")
    if part["s5"] > part["s4"]:
        out.append("vertical_stretch")
    if part["s6"] > part["s5"] and cls.b >= part["s6"]:
        out.append("descent_to_axis")
    return out


def cmd_bend(args) -> int:
    seed = effective_seed(args)
    C = make_condition(args, args.n, seed)
    if not 2 <= args.q <= C.n:
        raise InputError(f"need 2 <= q <= n, got q={args.q}")
    ambient = load_profile(args.ambient, args.rbar)
    if args.rho is not None:
        rho, c2 = args.rho, args.c2 if args.c2 is not None else bd.bend_constants(C, args.q)["C2"]
    else:
        if ambient is None:
            raise InputError("a flat ambient gives no cone opening; pass --rho or a curved --ambient")
        consts = bd.bend_constants(C, args.q, ambient, rbar=args.rbar, seed=seed)
        rho, c2 = consts["rho"], args.c2 if args.c2 is not None else consts["C2"]
    try:
        params = bd.BendParams(rho=rho, C2=c2, theta0=args.theta0, rbar=args.rbar, r_target=args.r_target,
                               bend_grid=args.grid_n)
        bent = bd.build_curve(params)
        trace, _ = bd.flat_model_check(bent.curve, C.n - args.q, args.q, C, ambient, identity=False)
    except DomainError as exc:
        raise InputError(str(exc)) from None
    except bd.CurveError as exc:
        print(f"bending failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    cls = bd.classify(bent.curve)
    ineq = bd.bending_inequality(bent.curve, rho, c2, factor=2.0, only_roles=("bend",))
    clauses = partition_clauses(cls)
    if args.out:
        bent.curve.write_csv(args.out)
    checks = [
        acc.Check("curve class", cls.tag == "Gamma_tilde_b", 1.0 if cls.tag == "Gamma_tilde_b" else -1.0,
                  None if cls.tag == "Gamma_tilde_b" else {"reason": cls.reason},
                  {"tag": cls.tag, "b": cls.b, "partition": cls.partition, "clauses": clauses}),
        acc.Check("bending inequality", ineq.holds(), 1.0 - ineq.max_ratio,
                  None if ineq.holds() else {"s": ineq.worst_s}, {"max_ratio": ineq.max_ratio, "points": ineq.points}),
        acc.Check("tube margins", trace.all_positive(cd.EPS_STRICT), trace.min_margin,
                  None if trace.all_positive(cd.EPS_STRICT) else trace.witness().to_dict()),
        acc.Check("step halving", bent.log.halving_ok, 1.0 if bent.log.halving_ok else -1.0),
    ]
    config = {"condition": C.to_dict(), "q": args.q, "ambient": args.ambient, "rbar": args.rbar,
              "r_target": args.r_target, "theta0": args.theta0, "rho": rho, "C2": c2, "grid_n": args.grid_n,
              "seed": seed}
    rep = base_report("bend", config, checks)
    rep["curve"] = bent.to_dict()
    rep["trace"] = {"min_margin": trace.min_margin, "samples": len(trace), "flags": trace.flags}
    if args.trace:
        write_text(args.trace, dump(rep))
    print(f"class {cls.tag}; clauses {', '.join(clauses) or 'none'}")
    print(f"steps {bent.log.steps} (bound {bent.log.bound}), tube radius {bent.r_tube:.6g}"
          f"{'' if bent.r_target_exact or args.r_target is None else ' (target not reachable; smaller radius used)'}")
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def _deform_input(args, seed):
    if args.metric:
        try:
            g = dd.RotMetric.from_json(Path(args.metric).read_text())
        except OSError as exc:
            raise InputError(f"cannot read {args.metric}: {exc}") from None
        except DomainError as exc:
            raise InputError(str(exc)) from None
        if args.condition is None:
            raise InputError("--metric needs --condition")
        return g, make_condition(args, g.n, seed)
    path = Path(args.fixture) if args.fixture else dd.fixture_path(cd.builtin("psc", 7), 4)
    try:
        doc, metrics = dd.load_fixture(path)
    except OSError as exc:
        raise InputError(f"cannot read fixture {path}: {exc}") from None
    except (json.JSONDecodeError, KeyError, DomainError) as exc:
        raise InputError(f"malformed fixture {path}: {exc}") from None
    if not 0 <= args.index < len(metrics):
        raise InputError(f"fixture has {len(metrics)} inputs; --index {args.index} is out of range")
    C = cd.Condition.from_dict(doc["condition"], seed=seed) if args.condition is None else make_condition(
        args, metrics[args.index].n, seed)
    return metrics[args.index], C


def cmd_deform(args) -> int:
    seed = effective_seed(args)
    g, C = _deform_input(args, seed)
    try:
        res = dd.deform(g, C)
    except dd.PipelineError as exc:
        print(f"pipeline failed: {exc}", file=sys.stderr)
        print(f"witness: {json.dumps(acc._clean(exc.witness), sort_keys=True)}", file=sys.stderr)
        if args.out:
            write_text(args.out, dump({"condition": C.to_dict(), "error": str(exc), "witness": exc.witness}))
        return EXIT_FAIL
    except DomainError as exc:
        raise InputError(str(exc)) from None
    summary = res.summary()
    if args.trace:
        write_text(args.trace, res.to_jsonl())
    if args.out:
        write_text(args.out, dump({"summary": summary, "final": res.final.to_dict()}))
    if args.csv:
        prof = dd.normalize(res.final).beta
        x = np.linspace(0.0, prof.delta, 513)
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "beta", "torpedo"])
            for xi, b, t in zip(x, prof(x), res.psi2.torpedo(np.minimum(x, res.psi2.torpedo.delta))):
                w.writerow([f"{xi:.17g}", f"{b:.17g}", f"{t:.17g}"])
    ok = res.all_positive() and res.final_torpedo_error <= 1e-6 and summary["boundary_fixed"]
    print(f"{C.label()}: sigma {res.sigma:.6g}, delta* {res.delta_star:.6g}, min margin {summary['min_margin']:.6g}, "
          f"final torpedo error {res.final_torpedo_error:.3g}")
    print("ok" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    seed = effective_seed(args)
    only = set(parse_range(args.only)) if args.only else None
    if only and not only <= set(acc.CRITERIA):
        raise InputError(f"--only must name checks among {sorted(acc.CRITERIA)}")
    clock = [time.perf_counter()]

    def progress(chk):
        now = time.perf_counter()
        print(f"{chk.line()}  ({now - clock[0]:.1f} s)", flush=True)
        clock[0] = now

    checks = acc.run(seed, only, progress)
    config = {"seed": seed, "only": sorted(only) if only else "all"}
    rep = base_report("verify", config, checks)
    text = dump(rep)
    if args.out:
        write_text(args.out, text)
    s = rep["summary"]
    print(f"scoreboard: {s['passed']}/{s['total']} passed")
    return EXIT_OK if s["failed"] == 0 else EXIT_FAIL


# ----------------------------------------------------------------------------
# export


SVG_SIZE = (640, 480)
SVG_PAD = 40


def read_columns(path) -> dict:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if len(rows) < 2:
        raise InputError(f"{path} has no data rows")
    head = rows[0]
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise InputError(f"non-numeric entry in {path}: {exc}") from None
    if data.shape[1] != len(head):
        raise InputError(f"{path}: rows do not match the header")
    return {name: data[:, i] for i, name in enumerate(head)}


def svg_polylines(series: list[tuple[str, np.ndarray, np.ndarray]], x_label: str, y_label: str,
                  equal_aspect: bool = False) -> str:
    """Static SVG of one or more polylines on shared axes."""
    w, h = SVG_SIZE
    xs = np.concatenate([s[1] for s in series])
    ys = np.concatenate([s[2] for s in series])
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = float(np.min(ys)), float(np.max(ys))
    sx = (w - 2 * SVG_PAD) / (x1 - x0 if x1 > x0 else 1.0)
    sy = (h - 2 * SVG_PAD) / (y1 - y0 if y1 > y0 else 1.0)
    if equal_aspect:
        sx = sy = min(sx, sy)
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
           f'<rect width="{w}" height="{h}" fill="white"/>',
           f'<line x1="{SVG_PAD}" y1="{h - SVG_PAD}" x2="{w - SVG_PAD}" y2="{h - SVG_PAD}" stroke="black"/>',
           f'<line x1="{SVG_PAD}" y1="{SVG_PAD}" x2="{SVG_PAD}" y2="{h - SVG_PAD}" stroke="black"/>',
           f'<text x="{w / 2:.0f}" y="{h - 8}" font-size="14" text-anchor="middle">{x_label}</text>',
           f'<text x="12" y="{h / 2:.0f}" font-size="14" text-anchor="middle" '
           f'transform="rotate(-90 12 {h / 2:.0f})">{y_label}</text>',
           f'<text x="{SVG_PAD}" y="{h - SVG_PAD + 16}" font-size="11">{x0:.4g}</text>',
           f'<text x="{w - SVG_PAD}" y="{h - SVG_PAD + 16}" font-size="11" text-anchor="end">{x1:.4g}</text>',
           f'<text x="{SVG_PAD - 4}" y="{h - SVG_PAD}" font-size="11" text-anchor="end">{y0:.4g}</text>',
           f'<text x="{SVG_PAD - 4}" y="{SVG_PAD + 4}" font-size="11" text-anchor="end">{y1:.4g}</text>']
    for i, (name, x, y) in enumerate(series):
        px = SVG_PAD + (x - x0) * sx
        py = h - SVG_PAD - (y - y0) * sy
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        col = colors[i % len(colors)]
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{w - SVG_PAD}" y="{SVG_PAD + 14 * (i + 1)}" font-size="12" '
                   f'text-anchor="end" fill="{col}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_export(args) -> int:
    cols = read_columns(args.csv)
    names = list(cols)
    x_name = args.x or ("r" if "r" in cols and "t" in cols else names[0])
    if args.y:
        y_names = args.y.split(",")
    elif x_name == "r" and "t" in cols:
        y_names = ["t"]
    else:
        y_names = [nm for nm in names if nm != x_name]
    for nm in [x_name, *y_names]:
        if nm not in cols:
            raise InputError(f"column {nm!r} not in {args.csv} (have {', '.join(names)})")
    series = [(nm, cols[x_name], cols[nm]) for nm in y_names]
    write_text(args.svg, svg_polylines(series, x_name, ",".join(y_names), args.equal_aspect))
    print(f"wrote {args.svg}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# argument parser


def _add_condition(p, required=True, default=None):
    p.add_argument("--condition", required=required and default is None, default=default,
                   choices=cd.BUILTIN_NAMES, help="builtin curvature condition")
    p.add_argument("--alpha", type=float, help="Ricci bound for ric_lt")
    p.add_argument("--beta", type=float, help="scalar bound for scal_lt")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curvlab", description=__doc__.splitlines()[0],
                                     allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"curvlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="membership margin of one operator", allow_abbrev=False)
    _add_condition(p)
    p.add_argument("--operator", required=True, help="identity, model:n=..,q=.. or an operator JSON file")
    p.add_argument("--n", type=int, help="dimension (inferred from the operator when omitted)")
    p.add_argument("--p", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int, default=cd.DEFAULT_SEED)
    p.add_argument("--json", help="write a JSON report here")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("stability", help="minimal surgery codimension table", allow_abbrev=False)
    _add_condition(p)
    p.add_argument("--n", required=True, help="dimension or range, e.g. 5..8")
    p.add_argument("--p", help="p or a range for p_curv")
    p.add_argument("--k", help="k or a range for k_pos_ric")
    p.add_argument("--expected", help="comma list of expected codimensions, or 'claimed'")
    p.add_argument("--directions", type=int, default=cd.DEFAULT_DIRECTIONS)
    p.add_argument("--seed", type=int, default=cd.DEFAULT_SEED)
    p.add_argument("--json", help="write a JSON report here")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("bend", help="build a bending curve and check the bent tube", allow_abbrev=False)
    _add_condition(p, default="psc")
    p.add_argument("--n", type=int, default=7)
    p.add_argument("--q", type=int, default=4)
    p.add_argument("--p", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--ambient", default="torpedo:mu=1", help="flat, torpedo:mu=.. or a profile JSON file")
    p.add_argument("--rbar", type=float, default=1.0)
    p.add_argument("--r-target", type=float, default=0.05, dest="r_target")
    p.add_argument("--theta0", type=float, default=0.1)
    p.add_argument("--rho", type=float, help="cone opening (computed from the ambient when omitted)")
    p.add_argument("--c2", type=float, help="L-operator constant (exact value when omitted)")
    p.add_argument("--grid-n", type=int, default=4096, dest="grid_n")
    p.add_argument("--seed", type=int, default=cd.DEFAULT_SEED)
    p.add_argument("--out", help="curve CSV (s, theta, kappa, r, t)")
    p.add_argument("--trace", help="JSON report with the bending log and tube margins")
    p.set_defaults(func=cmd_bend)

    p = sub.add_parser("deform", help="deform a disc metric to a torpedo", allow_abbrev=False)
    _add_condition(p, required=False)
    p.add_argument("--fixture", help="fixture JSON (default: the packaged psc family)")
    p.add_argument("--index", type=int, default=0, help="input within the fixture")
    p.add_argument("--metric", help="metric JSON instead of a fixture")
    p.add_argument("--p", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int, default=cd.DEFAULT_SEED)
    p.add_argument("--trace", help="trace JSONL")
    p.add_argument("--out", help="final profile and summary JSON")
    p.add_argument("--csv", help="final arc-length profile CSV (r, beta, torpedo)")
    p.set_defaults(func=cmd_deform)

    p = sub.add_parser("verify", help="run the acceptance suite", allow_abbrev=False)
    p.add_argument("--seed", type=int, default=acc.DEFAULT_SEED)
    p.add_argument("--only", help="subset of checks, e.g. 1..3,7")
    p.add_argument("--out", help="JSON report")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export", help="draw CSV columns as a static SVG", allow_abbrev=False)
    p.add_argument("--csv", required=True)
    p.add_argument("--svg", required=True)
    p.add_argument("--x", help="x column (default r for curves, else the first column)")
    p.add_argument("--y", help="comma list of y columns")
    p.add_argument("--equal-aspect", action="store_true", dest="equal_aspect")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad flags, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
