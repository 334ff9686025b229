#!/usr/bin/env python3
"""Run every canned scenario end-to-end and print the score table.

Usage: python scripts/run_all_scenarios.py [--log-dir out/]
"""

import argparse
from pathlib import Path

from shopwatch.simulator import BUILTIN_SCENARIOS, builtin_scenario, run_scenario


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--log-dir", help="persist per-scenario decision logs under this dir")
    args = parser.parse_args()

    header = f"{'scenario':<24} {'alerts':>6} {'TP':>3} {'FP':>3} {'miss':>4} {'events':>6} {'prec':>6} {'rec':>6} {'wall':>7}"
    print(header)
    print("-" * len(header))
    failures = 0
    for name in BUILTIN_SCENARIOS:
        log_dir = Path(args.log_dir) / name if args.log_dir else None
        if log_dir:
            log_dir.mkdir(parents=True, exist_ok=True)
        report = run_scenario(builtin_scenario(name), log_dir=log_dir)
        failures += report.failed
        print(
            f"{name:<24} {len(report.alerts):>6} {report.true_positives:>3} "
            f"{report.false_positives:>3} {report.misses:>4} {report.events_emitted:>6} "
            f"{report.precision:>6.2f} {report.recall:>6.2f} "
            f"{report.wall_ms['total'] / 1000:>6.1f}s"
        )
        if report.audit_violations:
            print(f"  audit violations: {report.audit_violations}")
    raise SystemExit(1 if failures else 0)


if __name__ == "__main__":
    main()
