"""Command line front end.

    itermem compute <file>            evaluate the compute section of a scenario
    itermem verify <file|suite-name>  run every check and report

Exit codes: 0 when everything passes, 1 when a check fails or errors, 2 on
usage or validation errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from .exact import GaussianRational, format_rational, format_scalar, to_number
from .integrate import ENGINES, EngineError
from .scenario import ScenarioError, builtin_names, compute, dumps, load, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--engine", choices=ENGINES, help="override the engine of every scenario")
    common.add_argument("--seed", type=int, help="Monte-Carlo seed")
    common.add_argument("--mc-samples", type=int, help="Monte-Carlo sample count")
    common.add_argument("--quad-order", type=int, help="Gauss-Legendre points per dimension")
    common.add_argument("--tolerance", type=float,
                        help="relative tolerance for numeric engines (exact always demands equality)")
    common.add_argument("--report", choices=("text", "json"), default="text")
    common.add_argument("--out", help="write the report to this file instead of stdout")

    parser = argparse.ArgumentParser(prog="itermem",
                                     description="Iterated integrals over membranes: compute and verify.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("compute", parents=[common], help="evaluate a scenario's compute section")
    p.add_argument("source", help="scenario file or built-in name")
    p = sub.add_parser("verify", parents=[common], help="run a suite of checks")
    p.add_argument("source", help=f"suite file or built-in name ({', '.join(builtin_names())})")
    return parser


def _overrides(args) -> dict:
    out = {"engine": args.engine, "seed": args.seed, "mc_samples": args.mc_samples,
           "quad_order": args.quad_order}
    for key in ("seed", "mc_samples", "quad_order"):
        value = out[key]
        if value is not None and (value < 0 if key == "seed" else value < 1):
            raise ScenarioError(f"--{key.replace('_', '-')}", "value out of range")
    return {k: v for k, v in out.items() if v is not None}


def _check_seed(suite, overrides):
    if overrides.get("engine") != "montecarlo" or "seed" in overrides:
        return
    for scn in suite.scenarios:
        if scn.engine.get("seed") is None:
            raise ScenarioError("--seed", f"the montecarlo engine needs a seed (scenario {scn.id!r} has none)")


def _exact_text(x) -> str:
    if isinstance(x, GaussianRational):
        im = x.im
        sign = "-" if im < 0 else "+"
        return f"{format_rational(x.re)} {sign} {format_rational(abs(im))}i"
    return format_rational(Fraction(x))


def _decimal(x) -> str:
    v = to_number(x)
    if isinstance(v, complex):
        return f"{v.real!r} {'-' if v.imag < 0 else '+'} {abs(v.imag)!r}i"
    return repr(v)


def _emit(text: str, args, summary: str | None = None):
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        if summary:
            print(summary)
    else:
        sys.stdout.write(text)


def cmd_compute(args) -> int:
    overrides = _overrides(args)
    suite = load(args.source)
    _check_seed(suite, overrides)
    targets = [s for s in suite.scenarios if s.compute is not None]
    if not targets:
        raise ScenarioError("compute", "no scenario in this file has a compute section")
    records = []
    for scn in targets:
        try:
            result = compute(scn, overrides)
        except EngineError as exc:
            raise ScenarioError(f"{scn.id}.engine", str(exc)) from None
        records.append((scn, result))
    if args.report == "json":
        doc = {"suite": suite.name, "results": [
            {"id": scn.id, "value": format_scalar(r.value), "decimal": format_scalar(to_number(r.value)),
             "error_estimate": r.error_estimate, "engine": r.metadata} for scn, r in records]}
        text = dumps(doc)
    else:
        lines = []
        for scn, r in records:
            meta = ", ".join(f"{k}={v}" for k, v in sorted(r.metadata.items()))
            if r.is_exact:
                lines.append(f"{scn.id}: {_exact_text(r.value)}")
                lines.append(f"  decimal: {_decimal(r.value)}")
            else:
                lines.append(f"{scn.id}: {_decimal(r.value)}")
            lines.append(f"  error estimate: {r.error_estimate!r}")
            lines.append(f"  engine: {meta}")
        text = "\n".join(lines) + "\n"
    _emit(text, args, f"{len(records)} result(s) written to {args.out}")
    return EXIT_OK


def _text_report(suite_name, reports) -> str:
    lines = [f"suite {suite_name}"]
    width = max([len(r.scenario_id) for r in reports] + [2])
    for r in reports:
        if r.verdict == "error":
            lines.append(f"{r.verdict.upper():5}  {r.scenario_id:<{width}}  {r.check}: {r.message}")
            continue
        dev = r.deviation
        dev_text = format_rational(dev) if isinstance(dev, Fraction) else f"{float(dev):.3e}"
        lines.append(f"{r.verdict.upper():5}  {r.scenario_id:<{width}}  {r.check}: deviation {dev_text}"
                     f" (tolerance {r.tolerance:.3e})")
    lines.append(_summary(reports))
    return "\n".join(lines) + "\n"


def _summary(reports) -> str:
    counts = {v: sum(r.verdict == v for r in reports) for v in ("pass", "fail", "error")}
    return f"{len(reports)} checks: {counts['pass']} passed, {counts['fail']} failed, {counts['error']} errors"


def cmd_verify(args) -> int:
    overrides = _overrides(args)
    suite = load(args.source)
    _check_seed(suite, overrides)
    reports = run_suite(suite, overrides, args.tolerance)
    if args.report == "json":
        text = dumps({"suite": suite.name, "scenarios": [r.to_dict() for r in reports]})
    else:
        text = _text_report(suite.name, reports)
    _emit(text, args, _summary(reports))
    return EXIT_OK if reports and all(r.passed for r in reports) else EXIT_FAIL


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "compute":
            return cmd_compute(args)
        return cmd_verify(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
