"""Command-line front end.

Five commands: curve condition checks, exponent-region export, scaling
experiments, stationary-decay fits, and curvature-rank sweeps.  Artifacts
are written under --out with fixed names; identical configurations yield
byte-identical files (fixed seeds, fixed summation orders, repr float
formatting).  Figures are emitted as gnuplot scripts so no graphics
dependency is needed.

Exit codes: 0 success, 2 parse or parameter validation, 3 unsupported,
4 resolution exhausted, 5 admissibility, 1 negative verdict or internal
error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .curves import (check_conditions, omega as curve_omega, parse_curve,
                     rescale, verify_rescaled_bounds)
from .errors import (AdmissibilityError, CavlabError, CurveParseError,
                     DomainError, FlatCurveError, GridBudgetError,
                     InvalidCurveError, QuadratureError, ResolutionError,
                     UnsupportedOrderError)
from .oscillatory import PhasePoint, curvature_check, symbol_decay_fit
from .regions import FAMILY_KINDS, LATTICE_COLUMNS, ExponentPair, \
    classify_lattice, vertices
from .sharpness import ExtremizerFamily, fit_exponent, run_experiment, verdict

__all__ = ["RunConfig", "main"]

SCHEMA = 1

_EXPECTED_RANKS = {"mixed": 2, "xi": 1, "cone": 1}


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters of one command run, fixed before any compute."""

    command: str
    curve: str | None
    out: str
    fmt: str
    params: dict


def _fail(code: int, exc: Exception) -> int:
    print(f"error: {exc}", file=sys.stderr)
    return code


def _workers(n_tasks: int):
    raw = os.environ.get("CAVLAB_THREADS", "")
    if not raw:
        return None
    try:
        cap = int(raw)
    except ValueError:
        raise DomainError(f"CAVLAB_THREADS must be an integer, got {raw!r}")
    if cap < 1:
        raise DomainError("CAVLAB_THREADS must be at least 1")
    w = min(cap, n_tasks)
    return w if w > 1 else None


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, Fraction):
        return float(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    return value


def _write_json(path: str, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    with open(path, "w", newline="") as fh:
        fh.write(text + "\n")


def _write_text(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_csv(path: str, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    _write_text(path, "\n".join(lines) + "\n")


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _wants(fmt: str, kind: str) -> bool:
    return fmt in ("both", kind)


def _pair_from_exponents(p: float, q: float) -> ExponentPair:
    for name, val in (("p", p), ("q", q)):
        if math.isnan(val) or val <= 0.0:
            raise DomainError(
                f"--{name} must be a positive exponent (inf for the sup norm)")

    def inv(v):
        return Fraction(0) if math.isinf(v) else 1 / Fraction(v)

    return ExponentPair(inv(p), inv(q))


def _parse_direction(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 2:
        raise DomainError("--dir takes two comma-separated components")
    try:
        a, b = float(parts[0]), float(parts[1])
    except ValueError:
        raise DomainError(f"--dir components must be numbers, got {text!r}")
    if not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError("--dir components must be finite")
    if a * b >= 0.0:
        raise AdmissibilityError(
            "decay fit needs a direction with strictly opposite-sign "
            "components; same-sign frequencies carry no critical time")
    return a, b


def _parse_eps_list(text: str) -> tuple:
    # argparse type hook, so failures must raise ArgumentTypeError
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"--eps must be comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("--eps must name at least one width")
    return values


# ---------------------------------------------------------------------------
# check-curve


def cmd_check_curve(config: RunConfig) -> int:
    curve = parse_curve(config.curve)
    p = config.params
    report = check_conditions(curve, n_orders=p["orders"], samples=p["samples"])
    om = curve_omega(curve)
    bracket = None
    if report.passed:
        sweep = verify_rescaled_bounds(curve, range(0, p["j_min"] - 1, -1),
                                       report=report, n_orders=p["orders"])
        bracket = {
            "j_range": list(sweep.j_range),
            "items": sweep.items,
            "extremes": sweep.extremes,
            "inverse_sup": sweep.inverse_sup,
            "composite_min_d2": sweep.composite_min_d2,
            "passed": sweep.passed,
        }
    passed = bool(report.passed and (bracket is None or bracket["passed"]))
    payload = {
        "schema": SCHEMA,
        "curve": config.curve,
        "omega": om,
        "passed": passed,
        "conditions": {
            "n_orders": report.n_orders,
            "lower": report.lower,
            "upper": report.upper,
            "doubling": list(report.doubling),
            "monotone": report.monotone,
            "underflow_fraction": report.underflow_fraction,
            "growth_flags": report.growth_flags,
            "failures": list(report.failures),
        },
        "rescaled_bounds": bracket,
    }
    _write_json(os.path.join(config.out, "conditions.json"), payload)
    label = "pass" if passed else "fail"
    detail = "" if passed else " " + "; ".join(report.failures[:2])
    print(f"check-curve: {label} omega={om}{detail}")
    return 0 if passed else 1


# ---------------------------------------------------------------------------
# region


def _polyline(points) -> str:
    return "\n".join(f"{x!r},{y!r}" for x, y in points) + "\ne"


def _region_script(omega: float) -> str:
    pts = {k: tuple(map(float, v.as_floats()))
           for k, v in vertices(omega).items()}
    trap = [pts[k] for k in ("O", "A", "D", "C", "O")]
    tri = [pts[k] for k in ("O", "A", "D", "O")]
    if "E" in pts:
        line = [pts["E"], pts["F"]]
    else:
        c = 1.0 / (omega + 1.0)
        line = [(c, 0.0), (1.0, 1.0 - c)]
    head = [
        "# exponent-region figure; run: gnuplot region.gp",
        f"# flatness exponent omega = {omega!r}",
        "set terminal pngcairo size 900,900",
        "set output 'region.png'",
        "set datafile separator ','",
        "set xlabel '1/p'",
        "set ylabel '1/q'",
        "set xrange [-0.05:1.10]",
        "set yrange [-0.05:1.10]",
        "set key top left",
    ]
    for name in ("O", "A", "D", "C", "M"):
        x, y = pts[name]
        head.append(f"set label '{name}' at {x!r},{y!r} point pt 7 ps 0.6 "
                    "offset char 0.7,0.7 front")
    plot = [
        "plot 'region.csv' skip 1 using ($6==1?$1:1/0):2 with dots "
        "lc rgb '#99bbee' title 'bounded', \\",
        "     'region.csv' skip 1 using ($7==1&&$6==0?$1:1/0):2 with dots "
        "lc rgb '#eebb99' title 'undecided strip', \\",
        "     '-' with lines lw 2 lc rgb 'black' title 'trapezium', \\",
        "     '-' with lines lw 2 dt 2 lc rgb 'gray40' title 'triangle', \\",
        "     '-' with lines lw 2 lc rgb 'red' title 'flatness line'",
        _polyline(trap),
        _polyline(tri),
        _polyline(line),
    ]
    return "\n".join(head + plot) + "\n"


def cmd_region(config: RunConfig) -> int:
    omega = float(config.params["omega"])
    if math.isnan(omega) or math.isinf(omega):
        raise UnsupportedOrderError(
            "region export needs a finite flatness exponent")
    n = config.params["n"]
    lattice = classify_lattice(omega, n)
    if _wants(config.fmt, "csv"):
        rows = zip(*(lattice[col] for col in LATTICE_COLUMNS))
        _write_csv(os.path.join(config.out, "region.csv"),
                   LATTICE_COLUMNS, rows)
        _write_text(os.path.join(config.out, "region.gp"),
                    _region_script(omega))
    frac = float(np.mean(lattice["in_sufficient"]))
    print(f"region: omega={omega!r} lattice {n}x{n} "
          f"bounded fraction {frac:.6f}")
    return 0


# ---------------------------------------------------------------------------
# sharpness


def _sharpness_script(kind: str, fit, v) -> str:
    stem = f"sharpness_{kind}"
    return "\n".join([
        f"# log-log scaling fit; run: gnuplot {stem}.gp",
        "set terminal pngcairo size 700,500",
        f"set output '{stem}.png'",
        "set datafile separator ','",
        "set logscale xy",
        "set xlabel 'width'",
        "set ylabel 'norm ratio'",
        "set key bottom right",
        f"plot '{stem}.csv' skip 1 using 1:2 with points pt 7 "
        "title 'measured', \\",
        f"     exp({fit.intercept!r})*x**({fit.slope!r}) with lines "
        f"title 'fit, slope {fit.slope:.4f}', \\",
        f"     exp({fit.intercept!r})*x**({v.predicted!r}) with lines dt 2 "
        f"title 'predicted, slope {v.predicted:.4f}'",
    ]) + "\n"


def cmd_sharpness(config: RunConfig) -> int:
    p = config.params
    curve = parse_curve(config.curve)
    family = ExtremizerFamily(p["family"], curve, delta=p["delta"])
    pair = _pair_from_exponents(p["p"], p["q"])
    eps_seq = p["eps"]
    n_tasks = len(eps_seq) if eps_seq is not None else 5
    samples = run_experiment(family, pair, eps_seq,
                             workers=_workers(n_tasks))
    fit = fit_exponent(samples, tolerance=p["tolerance"])
    v = verdict(fit, pair, curve, family.kind, tolerance=p["tolerance"])
    stem = f"sharpness_{family.kind}"
    if _wants(config.fmt, "json"):
        payload = {
            "schema": SCHEMA,
            "family": family.kind,
            "curve": config.curve,
            "delta": family.delta,
            "inv_p": v.inv_p,
            "inv_q": v.inv_q,
            "samples": [[e, r] for e, r in samples],
            "slope": v.slope,
            "stderr": v.stderr,
            "intercept": fit.intercept,
            "predicted": v.predicted,
            "tolerance": v.tolerance,
            "matched": v.matched,
            "consistent": v.consistent,
            "mode": v.mode,
            "in_necessary": v.in_necessary,
            "in_sufficient": v.in_sufficient,
            "region_requirement": v.region_requirement,
            "region_consistent": v.region_consistent,
            "ok": bool(v),
        }
        _write_json(os.path.join(config.out, stem + ".json"), payload)
    if _wants(config.fmt, "csv"):
        _write_csv(os.path.join(config.out, stem + ".csv"),
                   ("eps", "ratio"), samples)
        _write_text(os.path.join(config.out, stem + ".gp"),
                    _sharpness_script(family.kind, fit, v))
    print(f"sharpness: {family.kind} slope {v.slope:.4f} "
          f"predicted {v.predicted:.4f} mode {v.mode}"
          + ("" if v.region_consistent else " (region mismatch)"))
    return 0 if bool(v) else 1


# ---------------------------------------------------------------------------
# phase


def cmd_phase(config: RunConfig) -> int:
    p = config.params
    direction = _parse_direction(p["direction"])
    if not 0.0 < p["lmin"] < p["lmax"]:
        raise DomainError("need 0 < --lmin < --lmax")
    if p["points"] < 3:
        raise DomainError("--points must be at least 3")
    curve = parse_curve(config.curve)
    lambdas = np.geomspace(p["lmin"], p["lmax"], p["points"])
    fit = symbol_decay_fit(curve, p["j"], p["u"], direction, lambdas)
    ok = abs(fit.slope - fit.expected) <= p["tolerance"]
    if _wants(config.fmt, "csv"):
        _write_csv(os.path.join(config.out, "phase.csv"),
                   ("lambda", "abs_H"),
                   zip(fit.lambdas, fit.abs_values))
    if _wants(config.fmt, "json"):
        payload = {
            "schema": SCHEMA,
            "curve": config.curve,
            "j": p["j"],
            "u": p["u"],
            "direction": list(direction),
            "slope": fit.slope,
            "stderr": fit.stderr,
            "expected": fit.expected,
            "tolerance": p["tolerance"],
            "ok": ok,
        }
        _write_json(os.path.join(config.out, "phase.json"), payload)
    print(f"phase: slope {fit.slope:.4f} expected {fit.expected:.4f} "
          f"{'ok' if ok else 'off'}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# rank


def _random_phase_points(curve, j: int, count: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    ts = np.linspace(0.55, 1.95, 257)
    slopes = np.asarray(rescale(curve, j).eval(ts, 1), dtype=float)
    lo, hi = np.quantile(slopes, [0.1, 0.9])
    points = []
    for _ in range(count):
        r = rng.uniform(lo, hi)
        mag = 10.0 ** rng.uniform(0.0, 1.7)
        xi = np.array([-r, 1.0]) * (mag / math.hypot(r, 1.0))
        if rng.uniform() < 0.5:
            xi = -xi
        z = (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
             rng.uniform(1.0, 2.0))
        points.append(PhasePoint(z, (float(xi[0]), float(xi[1])), j))
    return points


def cmd_rank(config: RunConfig) -> int:
    p = config.params
    if p["samples"] < 1:
        raise DomainError("--samples must be at least 1")
    if p["seed"] < 0:
        raise DomainError("--seed must be nonnegative")
    curve = parse_curve(config.curve)
    counts: dict = {}
    matched = 0
    max_fd = 0.0
    max_grad = 0.0
    for point in _random_phase_points(curve, p["j"], p["samples"], p["seed"]):
        report = curvature_check(curve, point)
        key = ",".join(str(report.ranks[k]) for k in ("mixed", "xi", "cone"))
        counts[key] = counts.get(key, 0) + 1
        if report.ranks == _EXPECTED_RANKS:
            matched += 1
        max_fd = max(max_fd, float(report.fd_max_rel))
        max_grad = max(max_grad, float(report.gauss_gradient_residual))
    all_matched = matched == p["samples"]
    payload = {
        "schema": SCHEMA,
        "curve": config.curve,
        "j": p["j"],
        "samples": p["samples"],
        "seed": p["seed"],
        "expected_ranks": _EXPECTED_RANKS,
        "rank_counts": counts,
        "matched": matched,
        "all_matched": all_matched,
        "max_fd_rel": max_fd,
        "max_gauss_gradient_residual": max_grad,
    }
    _write_json(os.path.join(config.out, "rank.json"), payload)
    print(f"rank: {matched}/{p['samples']} at (2,1,1), "
          f"max fd {max_fd:.2e}")
    return 0 if all_matched else 1


# ---------------------------------------------------------------------------
# parser and dispatch


def _add_common(sub, curve_default="kind=power d=2"):
    sub.add_argument("--curve", default=curve_default,
                     help="curve spec, e.g. 'kind=power d=2'")
    sub.add_argument("--out", default=".",
                     help="output directory (created if missing)")
    sub.add_argument("--format", choices=("csv", "json", "both"),
                     default="both", help="artifact formats to write")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavlab",
        description="numerical laboratory for dilated averages along "
                    "flat plane curves")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("check-curve",
                          help="verify the derivative and doubling "
                               "conditions and the rescaled-bound sweep")
    _add_common(sub)
    sub.add_argument("--orders", type=int, default=6)
    sub.add_argument("--samples", type=int, default=512)
    sub.add_argument("--j-min", type=int, default=-40, dest="j_min")
    sub.set_defaults(handler=cmd_check_curve)

    sub = subs.add_parser("region",
                          help="classify the exponent lattice and emit the "
                               "region figure script")
    _add_common(sub)
    sub.add_argument("--omega", type=float, required=True)
    sub.add_argument("--n", type=int, default=200)
    sub.set_defaults(handler=cmd_region)

    sub = subs.add_parser("sharpness",
                          help="run one extremizer-family scaling experiment")
    _add_common(sub)
    sub.add_argument("--family", choices=FAMILY_KINDS, required=True)
    sub.add_argument("--p", type=float, required=True,
                     help="input Lebesgue exponent")
    sub.add_argument("--q", type=float, required=True,
                     help="output Lebesgue exponent (inf for sup)")
    sub.add_argument("--eps", type=_parse_eps_list, default=None,
                     help="comma-separated width sequence")
    sub.add_argument("--delta", type=float, default=0.125)
    sub.add_argument("--tolerance", type=float, default=0.15)
    sub.set_defaults(handler=cmd_sharpness)

    sub = subs.add_parser("phase",
                          help="fit the stationary decay rate of the "
                               "oscillatory symbol")
    # let '--dir -2,1' pass: the stock matcher stops at bare negative
    # numbers and would read '-2,1' as an option string
    sub._negative_number_matcher = re.compile(r"^-\d+(?:[.,]\d+)*,?\d*$")
    _add_common(sub)
    sub.add_argument("--dir", required=True, dest="direction",
                     help="frequency direction 'a,b' with opposite signs")
    sub.add_argument("--lmin", type=float, default=16.0)
    sub.add_argument("--lmax", type=float, default=4096.0)
    sub.add_argument("--points", type=int, default=9)
    sub.add_argument("--j", type=int, default=0)
    sub.add_argument("--u", type=float, default=1.5)
    sub.add_argument("--tolerance", type=float, default=0.05)
    sub.set_defaults(handler=cmd_phase)

    sub = subs.add_parser("rank",
                          help="check curvature ranks at random admissible "
                               "phase points")
    _add_common(sub)
    sub.add_argument("--samples", type=int, default=100)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--j", type=int, default=0)
    sub.set_defaults(handler=cmd_rank)
    return parser


_PARAM_KEYS = {
    cmd_check_curve: ("orders", "samples", "j_min"),
    cmd_region: ("omega", "n"),
    cmd_sharpness: ("family", "p", "q", "eps", "delta", "tolerance"),
    cmd_phase: ("direction", "lmin", "lmax", "points", "j", "u", "tolerance"),
    cmd_rank: ("samples", "seed", "j"),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    params = {key: getattr(args, key) for key in _PARAM_KEYS[args.handler]}
    config = RunConfig(command=args.command,
                       curve=getattr(args, "curve", None),
                       out=args.out, fmt=args.format, params=params)
    os.makedirs(config.out, exist_ok=True)
    try:
        return args.handler(config)
    except CurveParseError as exc:
        return _fail(2, exc)
    except (UnsupportedOrderError, FlatCurveError) as exc:
        return _fail(3, exc)
    except (ResolutionError, GridBudgetError, QuadratureError) as exc:
        return _fail(4, exc)
    except AdmissibilityError as exc:
        return _fail(5, exc)
    except (DomainError, InvalidCurveError) as exc:
        return _fail(2, exc)
    except CavlabError as exc:
        return _fail(1, exc)


if __name__ == "__main__":
    sys.exit(main())
