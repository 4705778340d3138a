"""Runs full lab-grade validation: tests + benchmark + report generation."""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from datetime import datetime, timezone
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from climber.experiments import count_flops
from climber.model import ModelConfig


def _run(cmd: list[str]) -> subprocess.CompletedProcess[str]:
    return subprocess.run(cmd, check=False, text=True, capture_output=True)


def _attention_identity_ok() -> bool:
    """History attention-score FLOPs with N_b blocks equal the single-block count over N_b."""
    single = count_flops(ModelConfig(num_blocks=1, budget=64, layers_per_block=1, gate_reduction=1))
    for blocks in (2, 4, 8):
        split = count_flops(ModelConfig(num_blocks=blocks, budget=64 // blocks, layers_per_block=1, gate_reduction=1))
        if split.history_attention_scores * blocks != single.history_attention_scores:
            return False
    return True


def _make_report(
    report_path: Path,
    test_result: subprocess.CompletedProcess[str],
    gates_result: subprocess.CompletedProcess[str],
    benchmark_path: Path,
    benchmark: dict,
    identity_ok: bool,
) -> None:
    flops = benchmark["flops"]
    lines = [
        "# Lab Validation Report",
        "",
        f"- Generated (UTC): {datetime.now(timezone.utc).isoformat()}",
        "- Method: deterministic test suite + cached/naive throughput benchmark + FLOPs accounting checks",
        "",
        "## Gate Status",
        "",
        f"- Test suite: {'PASS' if test_result.returncode == 0 else 'FAIL'}",
        f"- Throughput gates: {'PASS' if gates_result.returncode == 0 else 'FAIL'}",
        f"- Attention FLOPs identity: {'PASS' if identity_ok else 'FAIL'}",
        f"- Static vs measured FLOPs: {'PASS' if not flops['mismatched_components'] else 'FAIL'}",
        "",
        "## Throughput",
        "",
    ]
    for row in benchmark["throughput"]:
        lines.append(
            f"- m={row['m']}: cached {row['cached_ips']:.1f} items/s, naive {row['naive_ips']:.1f} items/s, "
            f"speedup {row['speedup']:.2f}x"
        )
    lines.extend(
        [
            "",
            "## FLOPs",
            "",
            f"- Static total: {flops['static_total']}",
            f"- Measured total: {flops['measured_total']}",
            f"- Dominant term: {flops['dominant_term']}",
            f"- Constant overhead: {flops['constant_overhead']}",
            "",
            "## Artifacts",
            "",
            f"- Benchmark JSON: `{benchmark_path.as_posix()}`",
            "",
            "## Test Output",
            "",
            "```text",
            test_result.stdout.strip() or "(no stdout)",
            test_result.stderr.strip() or "(no stderr)",
            "```",
        ]
    )
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main() -> int:
    parser = argparse.ArgumentParser(description="Lab-grade validator for climber.")
    parser.add_argument("--candidates", default="1,16,64,256")
    parser.add_argument("--reps", type=int, default=3)
    parser.add_argument("--benchmark-output", type=Path, default=Path("results/benchmark_results.json"))
    parser.add_argument("--report-output", type=Path, default=Path("results/lab_validation_report.md"))
    args = parser.parse_args()

    tests = _run([sys.executable, "-m", "pytest", "tests", "-q"])
    benchmark = _run(
        [
            sys.executable,
            "scripts/benchmark.py",
            "--candidates",
            args.candidates,
            "--reps",
            str(args.reps),
            "--output",
            str(args.benchmark_output),
        ]
    )
    if benchmark.returncode != 0:
        sys.stderr.write(benchmark.stdout + benchmark.stderr)
        return benchmark.returncode
    gates = _run([sys.executable, "scripts/check_gates.py", "--input", str(args.benchmark_output)])

    bench_data = json.loads(args.benchmark_output.read_text(encoding="utf-8"))
    identity_ok = _attention_identity_ok()
    _make_report(args.report_output, tests, gates, args.benchmark_output, bench_data, identity_ok)

    sys.stdout.write(tests.stdout)
    if tests.stderr:
        sys.stderr.write(tests.stderr)
    sys.stdout.write(benchmark.stdout)
    sys.stdout.write(gates.stdout)
    sys.stdout.write(f"Report written to {args.report_output}\n")

    if tests.returncode != 0:
        return tests.returncode
    if gates.returncode != 0 or not identity_ok:
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
