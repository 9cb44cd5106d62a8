"""``bench`` command line: run scenarios, sweep families, verify store files."""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

from .bench import BACKENDS, GroundTruthMismatch, RunMetrics, report, run
from .paged import verify_file
from .protocol import ProtocolParams
from .scenario import FAMILIES, ScenarioSpec, generate_scenario


def _params(args: argparse.Namespace) -> ProtocolParams:
    return ProtocolParams(args.branch_factor, args.threshold)


def _emit(metrics: list[RunMetrics], args: argparse.Namespace) -> None:
    text = report(metrics, args.format, args.out)
    if not args.out or args.out == "-":
        sys.stdout.write(text)


def cmd_run(args: argparse.Namespace) -> int:
    spec = ScenarioSpec(args.family, args.i, args.seed)
    try:
        metrics = run(args.backend, spec, args.repeats, _params(args))
    except GroundTruthMismatch as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return 1
    _emit([metrics], args)
    return 0


def cmd_all(args: argparse.Namespace) -> int:
    params = _params(args)
    cells = [(family, i) for family in FAMILIES for i in range(1, args.max_i + 1)]
    failures = 0

    def sweep(cell: tuple[str, int]) -> list[RunMetrics]:
        spec = ScenarioSpec(cell[0], cell[1], args.seed)
        scenario = generate_scenario(spec)
        return [run(b, spec, args.repeats, params, scenario) for b in args.backends]

    results: list[RunMetrics] = []
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        futures = [pool.submit(sweep, cell) for cell in cells]
        for cell, fut in zip(cells, futures):
            try:
                rows = fut.result()
            except GroundTruthMismatch as exc:
                failures += 1
                print(f"FAIL: {exc}", file=sys.stderr)
                continue
            hashes = {m.transcript_hash for m in rows}
            if len(hashes) != 1:
                failures += 1
                print(f"FAIL: {cell} transcripts differ across backends", file=sys.stderr)
            results.extend(rows)
    if results:
        _emit(results, args)
    return 1 if failures else 0


def cmd_verify(args: argparse.Namespace) -> int:
    rep = verify_file(args.file)
    print(f"{rep.path}: txn {rep.txn_id}, {rep.pages_checked} pages, {rep.entries} entries")
    for v in rep.violations:
        print(f"  {v}")
    print("OK" if rep.ok else f"{len(rep.violations)} violation(s)")
    return 0 if rep.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--repeats", type=int, default=10)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--branch-factor", type=int, default=16)
        p.add_argument("--threshold", type=int, default=32)

    p_run = sub.add_parser("run", help="reconcile one scenario on one backend")
    p_run.add_argument("--family", required=True, choices=sorted(FAMILIES))
    p_run.add_argument("--i", type=int, required=True)
    p_run.add_argument("--backend", required=True, choices=BACKENDS)
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_all = sub.add_parser("all", help="sweep every family x backend")
    p_all.add_argument("--max-i", type=int, default=3)
    p_all.add_argument("--backends", nargs="+", choices=BACKENDS, default=list(BACKENDS))
    p_all.add_argument("--jobs", type=int, default=1, help="cells run on this many threads")
    common(p_all)
    p_all.set_defaults(func=cmd_all)

    p_verify = sub.add_parser("verify", help="check a paged store file")
    p_verify.add_argument("--file", required=True)
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
