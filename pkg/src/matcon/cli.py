"""Command-line entry point: ``matcon <command> ...``.

Results go to files under ``--out``; diagnostics go to stderr. Exit status is
0 when every verdict passes, 1 on a failed verdict and 2 on a configuration
error. Artifacts contain no timestamps or thread counts, so reruns with the
same scenario, seed and flags are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bounds, verification
from . import linalg_core as la
from .scenario import Scenario, ScenarioError, load_scenario, preset_scenario, save_scenario

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
TAIL_COLUMNS = ("scenario", "x", "replicates", "exceed_count", "emp_prob", "upper_cl", "cap", "verdict")


class ConfigError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _resolve_scenario(ref: str) -> Scenario:
    """A JSON file path, or the name of a preset with its default parameters."""
    if os.path.exists(ref):
        return load_scenario(ref)
    if ref in bounds.PRESETS:
        return preset_scenario(ref)
    raise ConfigError(f"{ref}: neither a scenario file nor a preset name")


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"{flag}: expected a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{flag}: empty list")
    return vals


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        raw = os.environ.get("MATCON_THREADS", "1")
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"MATCON_THREADS: expected an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("--threads must be at least 1")
    return n


def _artifact(command: str, scenario: Scenario | None, seed, flags: dict, result: dict, passed) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": seed,
        "flags": flags,
        "scenario": scenario.to_dict() if scenario is not None else None,
        "result": result,
        "verdict": None if passed is None else ("PASS" if passed else "FAIL"),
    }


def _status(passed: bool) -> int:
    return EXIT_PASS if passed else EXIT_FAIL


# -- commands ------------------------------------------------------------------


def cmd_bound(args) -> int:
    sc = _resolve_scenario(args.scenario)
    rep = sc.variance_report()
    m, n = sc.dims[:2]
    xs = _parse_floats(args.x, "--x") if args.x else []
    rows = []
    for x in xs:
        q = bounds.BoundQuery(x, rep.sigma_sq, rep.b_t, m, n)
        rows.append({
            "x": x,
            "threshold": bounds.freedman_threshold(q, args.form),
            "cap": bounds.tail_cap(x, m, n, args.form),
        })
    mean = bounds.mean_bound(np.sqrt(rep.sigma_sq), rep.b_t, m, n)
    print(f"sigma_sq={rep.sigma_sq:.12g}")
    print(f"b_t={rep.b_t:.12g}")
    print(f"mean_bound={mean:.12g}")
    for r in rows:
        print(f"x={r['x']:g} threshold={r['threshold']:.12g} cap={r['cap']:.12g}")
    result = {"variance": rep.to_dict(), "mean_bound": mean, "form": args.form, "thresholds": rows}
    _write_json(Path(args.out) / f"bound_{sc.name}.json",
                _artifact("bound", sc, None, {"x": xs, "form": args.form}, result, None))
    return EXIT_PASS


def cmd_simulate(args) -> int:
    sc = _resolve_scenario(args.scenario)
    Z = sc.sample_terminal(args.reps, args.seed, _threads(args))["Z"]
    norms = la.batch_op_norm(Z)
    out = Path(args.out)
    _write_csv(out / f"simulate_{sc.name}.csv", ("replicate", "op_norm"), enumerate(norms.tolist()))
    mean, se = verification.mean_and_se(norms)
    result = {"replicates": args.reps, "mean_op_norm": mean, "se": se, "max_op_norm": float(norms.max())}
    _write_json(out / f"simulate_{sc.name}.json",
                _artifact("simulate", sc, args.seed, {"reps": args.reps}, result, None))
    print(f"mean_op_norm={mean:.12g} se={se:.6g}")
    return EXIT_PASS


def tail_rows(exp: verification.TailExperiment):
    for r in exp.rows:
        yield (exp.scenario, r.x, r.replicates, r.exceed_count, r.emp_prob, r.upper_cl, r.cap,
               "PASS" if r.passed else "FAIL")


def cmd_verify_tail(args) -> int:
    sc = _resolve_scenario(args.scenario)
    xs = _parse_floats(args.x, "--x")
    if any(x <= 0 for x in xs):
        raise ConfigError("--x: values must be positive")
    exp = verification.run_tail_experiment(sc, xs, args.reps, args.seed, args.form, _threads(args))
    out = Path(args.out)
    _write_csv(out / f"tail_{sc.name}.csv", TAIL_COLUMNS, tail_rows(exp))
    flags = {"x": xs, "reps": args.reps, "form": args.form}
    _write_json(out / f"tail_{sc.name}.json",
                _artifact("verify-tail", sc, args.seed, flags, exp.to_dict(), exp.passed))
    for row in tail_rows(exp):
        print(" ".join(_fmt(v) for v in row))
    return _status(exp.passed)


def cmd_check_supermartingale(args) -> int:
    sc = _resolve_scenario(args.scenario)
    xis = _parse_floats(args.xi, "--xi")
    check = (verification.check_supermartingale_jump if sc.is_jump
             else verification.check_supermartingale_continuous)
    results = [check(sc, xi, args.reps, args.seed, _threads(args)) for xi in xis]
    passed = all(r.passed for r in results)
    for r in results:
        print(f"xi={r.xi:g} mean={r.mean:.12g} se={r.se:.6g} cap={r.cap:g} "
              f"{'PASS' if r.passed else 'FAIL'}")
    _write_json(Path(args.out) / f"supermartingale_{sc.name}.json",
                _artifact("check-supermartingale", sc, args.seed, {"xi": xis, "reps": args.reps},
                          {"checks": [r.to_dict() for r in results]}, passed))
    return _status(passed)


def run_lemma_suite(seed: int, reps: int) -> list[verification.Verdict]:
    out = [
        verification.check_odd_power_bound(100, (4, 6), (0, 1, 2), seed),
        verification.check_golden_thompson(100, 5, seed),
        verification.check_trace_exp_monotone(100, 5, seed),
    ]
    for kind in ("identical", "noise", "wigner"):
        X, Y = verification.deviation_pairs(kind, reps, 3, seed)
        v = verification.check_deviation_lemma(X, Y, (1.0, 2.0))
        v.name = f"deviation_lemma_{kind}"
        out.append(v)
    return out


def cmd_check_lemmas(args) -> int:
    verdicts = run_lemma_suite(args.seed, args.reps)
    passed = all(v.passed for v in verdicts)
    for v in verdicts:
        print(f"{v.name} {'PASS' if v.passed else 'FAIL'}")
    _write_json(Path(args.out) / "lemmas.json",
                _artifact("check-lemmas", None, args.seed, {"reps": args.reps},
                          {"checks": [v.to_dict() for v in verdicts]}, passed))
    return _status(passed)


def cmd_check_compensator(args) -> int:
    sc = _resolve_scenario(args.scenario)
    if args.K < 2:
        raise ConfigError("--K must be at least 2")
    xis = _parse_floats(args.xi, "--xi")
    results = [verification.check_compensator_domination(sc, xi, args.K) for xi in xis]
    passed = all(r.passed for r in results)
    for r in results:
        print(f"xi={r.xi:g} K={r.K} min_gap={r.margin:.6g} tail={r.tail_estimate:.3g} "
              f"{'PASS' if r.passed else 'FAIL'}")
    _write_json(Path(args.out) / f"compensator_{sc.name}.json",
                _artifact("check-compensator", sc, None, {"xi": xis, "K": args.K},
                          {"checks": [r.to_dict() for r in results]}, passed))
    return _status(passed)


def cmd_report(args) -> int:
    out = Path(args.out)
    target = out / "report.json"
    parts = []
    for path in sorted(out.glob("*.json")):
        if path == target:
            continue
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON: {exc}") from None
        if not isinstance(data, dict) or "command" not in data:
            continue
        parts.append({"file": path.name, **data})
    if not parts:
        raise ConfigError(f"{out}: no artifacts to aggregate")
    verdicts = [p["verdict"] for p in parts if p.get("verdict") is not None]
    passed = all(v == "PASS" for v in verdicts)
    summary = {
        "version": __version__,
        "artifacts": parts,
        "verdict_counts": {"PASS": verdicts.count("PASS"), "FAIL": verdicts.count("FAIL")},
        "verdict": "PASS" if passed else "FAIL",
    }
    _write_json(target, summary)
    for p in parts:
        print(f"{p['file']}: {p.get('verdict') or '-'}")
    print(f"overall: {summary['verdict']}")
    return _status(passed)


def cmd_presets(args) -> int:
    for name, description in bounds.PRESETS.items():
        print(f"{name}: {description}")
    if args.write:
        d = Path(args.write)
        d.mkdir(parents=True, exist_ok=True)
        for name in bounds.PRESETS:
            save_scenario(preset_scenario(name), d / f"{name}.json")
    return EXIT_PASS


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matcon", description="Matrix martingale concentration toolkit")
    parser.add_argument("--version", action="version", version=f"matcon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True, seed=True, reps=None, out=True):
        if scenario:
            p.add_argument("scenario", help="scenario JSON file or preset name")
        if seed:
            p.add_argument("--seed", type=int, default=0)
        if reps is not None:
            p.add_argument("--reps", type=int, default=reps)
            p.add_argument("--threads", type=int, default=None,
                           help="worker threads (default: $MATCON_THREADS or 1)")
        if out:
            p.add_argument("--out", default="results", help="output directory")

    p = sub.add_parser("bound", help="variance report and thresholds")
    common(p, seed=False)
    p.add_argument("--x", default="")
    p.add_argument("--form", choices=("theorem", "union"), default="theorem")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("simulate", help="sample terminal values and their operator norms")
    common(p, reps=1000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-tail", help="Monte Carlo tail experiment")
    common(p, reps=100_000)
    p.add_argument("--x", default="1,2,3")
    p.add_argument("--form", choices=("theorem", "union"), default="theorem")
    p.set_defaults(func=cmd_verify_tail)

    p = sub.add_parser("check-supermartingale", help="terminal mean of the trace-exponential")
    common(p, reps=10_000)
    p.add_argument("--xi", default="1")
    p.set_defaults(func=cmd_check_supermartingale)

    p = sub.add_parser("check-lemmas", help="deterministic and Monte Carlo lemma checks")
    common(p, scenario=False, reps=20_000)
    p.set_defaults(func=cmd_check_lemmas)

    p = sub.add_parser("check-compensator", help="truncated compensator series domination")
    common(p, seed=False)
    p.add_argument("--xi", default="1")
    p.add_argument("--K", type=int, default=25)
    p.set_defaults(func=cmd_check_compensator)

    p = sub.add_parser("report", help="aggregate artifacts in --out into report.json")
    common(p, scenario=False, seed=False)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("presets", help="list corollary presets")
    p.add_argument("--write", metavar="DIR", help="also write each preset scenario as JSON")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "reps", 1) < 1:
        print("error: --reps must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    start = time.perf_counter()
    try:
        code = args.func(args)
    except (ConfigError, ScenarioError, la.DimensionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"[{args.command}] {time.perf_counter() - start:.2f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
