"""CI gate checker for throughput benchmark results."""

from __future__ import annotations

import argparse
import json
from pathlib import Path


def main() -> int:
    parser = argparse.ArgumentParser(description="Validate benchmark gates.")
    parser.add_argument("--input", type=Path, required=True, help="Path to benchmark JSON")
    parser.add_argument("--single-low", type=float, default=0.8)
    parser.add_argument("--single-high", type=float, default=1.3)
    parser.add_argument("--min-large-speedup", type=float, default=2.0)
    parser.add_argument("--large-m", type=int, default=256)
    parser.add_argument("--monotone-slack", type=float, default=0.05, help="Relative dip allowed between points.")
    args = parser.parse_args()

    data = json.loads(args.input.read_text(encoding="utf-8"))
    rows = sorted(data["throughput"], key=lambda row: row["m"])
    by_m = {row["m"]: row["speedup"] for row in rows}

    failures: list[str] = []
    if 1 in by_m and not args.single_low <= by_m[1] <= args.single_high:
        failures.append(f"speedup at m=1 is {by_m[1]:.3f}, outside [{args.single_low}, {args.single_high}]")
    if args.large_m in by_m and by_m[args.large_m] <= args.min_large_speedup:
        failures.append(f"speedup at m={args.large_m} is {by_m[args.large_m]:.3f} <= {args.min_large_speedup}")
    for previous, current in zip(rows, rows[1:]):
        if current["speedup"] < previous["speedup"] * (1.0 - args.monotone_slack):
            failures.append(
                f"speedup drops from {previous['speedup']:.3f} (m={previous['m']}) "
                f"to {current['speedup']:.3f} (m={current['m']})"
            )
    mismatched = data.get("flops", {}).get("mismatched_components", [])
    if mismatched:
        failures.append(f"static and measured FLOPs differ for {mismatched}")

    if failures:
        print("CI gates: FAIL")
        for failure in failures:
            print(f"- {failure}")
        return 1

    print("CI gates: PASS")
    for m, speedup in by_m.items():
        print(f"- speedup m={m}: {speedup:.3f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
