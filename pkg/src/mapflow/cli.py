"""Command-line entry points.

Subcommands: run (scenario configs or shipped names), kernel, linheat,
picard, flow, exhaustion (ad-hoc single runs), and report (JSON report to
markdown).  Artifacts land in --out; exit status is nonzero iff any
non-advisory bound entry failed.
"""

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import MapflowError
from .report import BoundsReport, emit_report
from .scenarios import (
    resolve_scenario,
    run_scenario,
    shipped_scenarios,
)


def _add_common(p):
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--workers", type=int, default=1, help="concurrent scenarios in a batch")
    p.add_argument("--past-T0", action="store_true", dest="past_t0",
                   help="integrate flows past the existence window (entries beyond it turn advisory)")


def build_parser():
    ap = argparse.ArgumentParser(prog="mapflow",
                                 description="harmonic map heat flow laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run scenario configs (paths or shipped names)")
    p_run.add_argument("scenarios", nargs="*", help="config paths or shipped names; empty runs all shipped")
    p_run.add_argument("--list", action="store_true", help="list shipped scenarios and exit")
    _add_common(p_run)

    for module, helptext in (
        ("kernel", "build a fundamental-solution table"),
        ("linheat", "solve linear heat problems with bound checks"),
        ("picard", "run the frozen-coefficient iteration"),
        ("flow", "run the map flow"),
        ("exhaustion", "verify the cutoff/blow-up construction"),
    ):
        p = sub.add_parser(module, help=helptext)
        p.add_argument("--config", required=True, help="scenario config (module must match)")
        _add_common(p)

    p_rep = sub.add_parser("report", help="render a report JSON as markdown")
    p_rep.add_argument("report_json", help="path to a *-report.json artifact")
    return ap


def _run_one(args_tuple):
    path, out_dir, past_t0 = args_tuple
    report = run_scenario(path, out_dir, past_T0=past_t0)
    return report.scenario, report.all_passed()


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)

    if args.command == "report":
        data = json.loads(Path(args.report_json).read_text())
        report = BoundsReport(scenario=data["scenario"], meta=data.get("meta", {}))
        from .report import BoundsEntry

        for e in data["entries"]:
            report.add(BoundsEntry(
                name=e["name"], statement=e["statement"], passed=e["passed"],
                advisory=e.get("advisory", False), times=e.get("times", []),
                margins=e.get("margins", []), fitted=e.get("fitted", {}),
                violation=e.get("violation"), details=e.get("details", {}),
            ))
        sys.stdout.write(emit_report(report, "markdown"))
        return 0

    if args.command == "run":
        if args.list:
            for name in shipped_scenarios():
                print(name)
            return 0
        specs = args.scenarios or shipped_scenarios()
        try:
            paths = [resolve_scenario(s) for s in specs]
        except MapflowError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        jobs = [(str(p), args.out, args.past_t0) for p in paths]
        results = []
        try:
            if args.workers > 1 and len(jobs) > 1:
                with ProcessPoolExecutor(max_workers=args.workers) as pool:
                    results = list(pool.map(_run_one, jobs))
            else:
                results = [_run_one(j) for j in jobs]
        except MapflowError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        ok = True
        for name, passed in results:
            print(f"{name}: {'pass' if passed else 'FAIL'}")
            ok = ok and passed
        return 0 if ok else 1

    # single-module commands share the scenario machinery
    try:
        path = resolve_scenario(args.config)
        report = run_scenario(path, args.out, past_T0=args.past_t0)
    except MapflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{report.scenario}: {'pass' if report.all_passed() else 'FAIL'}")
    return 0 if report.all_passed() else 1


if __name__ == "__main__":
    raise SystemExit(main())
