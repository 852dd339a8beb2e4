"""Command-line interface: ``topoflock run|verify|convergence|preset|keys``."""
from __future__ import annotations

import argparse
import sys

from . import config as cfgmod
from . import harness, presets, verify
from .errors import ConfigError


def _print_kv(d: dict) -> None:
    for k, v in d.items():
        print(f"{k} = {harness._fmt(v)}")


def cmd_run(args) -> int:
    cfg = cfgmod.load(args.config)
    over = {}
    if args.output:
        over["output"] = args.output
    if args.summary:
        over["summary"] = args.summary
    if over:
        cfg = cfg.with_overrides(**over)
    out = harness.execute(cfg, write=True, run_verify=not args.no_verify)
    _print_kv(out.summary)
    if out.exit_code:
        print(f"run failed: status={out.summary['status']} "
              f"{out.summary.get('error', '')}".rstrip(), file=sys.stderr)
    return out.exit_code


def cmd_verify(args) -> int:
    inject = tuple(args.inject or ())
    results = verify.run_suite(quick=args.quick, inject=inject)
    print(f"suite {verify.suite_hash()}" + (f" (injected: {', '.join(inject)})" if inject else ""))
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if failed:
        f = failed[0]
        print(f"first failure: {f.name}: {f.value:.6e} > {f.tol:.1e}", file=sys.stderr)
        return harness.EXIT_VIOLATION
    print(f"all {len(results)} checks passed")
    return harness.EXIT_OK


def cmd_convergence(args) -> int:
    cfg = cfgmod.load(args.config)
    report = harness.convergence(cfg, args.levels)
    _print_kv(report)
    if args.output:
        harness.write_summary(report, args.output)
    return harness.EXIT_OK if report["flags"] == "none" else harness.EXIT_VIOLATION


def cmd_preset(args) -> int:
    for name in cfgmod.PRESETS:
        print(f"{name:<15} {presets.DESCRIPTIONS[name]}")
    return harness.EXIT_OK


def cmd_keys(args) -> int:
    defaults = cfgmod.ScenarioConfig()
    for key, (typ, unit, text) in cfgmod.KEYS.items():
        print(f"{key:<17} {typ.__name__:<6} {unit:<12} default={getattr(defaults, key)!r:<18} {text}")
    return harness.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="topoflock", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario config; writes CSV and summary")
    p.add_argument("config")
    p.add_argument("--output", help="override the CSV path")
    p.add_argument("--summary", help="override the summary path")
    p.add_argument("--no-verify", action="store_true", help="skip the quick identity suite")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run the operator identity suite")
    p.add_argument("--quick", action="store_true")
    p.add_argument("--inject", action="append", choices=verify.MUTATIONS,
                   help="inject a known defect (mutation test)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("convergence", help="self-convergence study at N, 2N, 4N, ...")
    p.add_argument("config")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--output", help="write the report as key = value lines")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("preset", help="initial-data presets")
    p.add_argument("action", choices=["list"])
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("keys", help="list config keys with types and units")
    p.set_defaults(func=cmd_keys)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return harness.EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
