"""Empirical throughput harness: cached multi-candidate scoring versus per-candidate forwards."""

from __future__ import annotations

import argparse
import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from climber.experiments import count_flops, measure_flops
from climber.model import ModelConfig
from climber.serving import REFERENCE_CONFIG, bench_throughput


def _flops_check(config: ModelConfig) -> Dict[str, object]:
    report = count_flops(config)
    measured = measure_flops(config)
    mismatched = [name for name, value in measured.items() if name != "embedding" and value != report.components[name]]
    return {
        "static_total": report.total,
        "measured_total": sum(measured.values()),
        "dominant_term": report.dominant_term,
        "constant_overhead": report.constant_overhead,
        "mismatched_components": mismatched,
    }


def run_benchmark(config: ModelConfig, m_values: List[int], repetitions: int, seed: int) -> Dict[str, object]:
    rows = bench_throughput(config, m_values, repetitions, seed=seed)
    return {
        "metadata": {
            "timestamp_utc": datetime.now(timezone.utc).isoformat(),
            "python_version": sys.version.replace("\n", " "),
            "platform": platform.platform(),
            "repetitions": repetitions,
            "seed": seed,
            "config": config.model_dump(mode="json", exclude={"strategies"}),
        },
        "throughput": [row.model_dump() for row in rows],
        "flops": _flops_check(config.variant(d_model=16, num_heads=2, budget=8)),
    }


def main() -> int:
    parser = argparse.ArgumentParser(description="Benchmark cached versus naive candidate scoring.")
    parser.add_argument("--candidates", default="1,16,64,256", help="Comma-separated candidate counts.")
    parser.add_argument("--reps", type=int, default=7, help="Timed repetitions per point (median reported).")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--output",
        type=Path,
        default=Path("results/benchmark_results.json"),
        help="Path to JSON output file.",
    )
    args = parser.parse_args()

    m_values = [int(part) for part in args.candidates.split(",") if part.strip()]
    results = run_benchmark(REFERENCE_CONFIG, m_values, args.reps, args.seed)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    args.output.write_text(json.dumps(results, indent=2), encoding="utf-8")

    print("Benchmark complete.")
    print(f"Output: {args.output}")
    for row in results["throughput"]:
        print(
            f"m={row['m']:>4}: cached {row['cached_ips']:.1f} items/s, "
            f"naive {row['naive_ips']:.1f} items/s, speedup {row['speedup']:.2f}x"
        )
    flops = results["flops"]
    print(f"Static FLOPs {flops['static_total']}, measured {flops['measured_total']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
