"""CLI for training, scoring, benchmarking and experiment sweeps."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from climber.errors import ClimberError, TrainingDivergedError
from climber.experiments import (
    AblationRow,
    ExperimentConfig,
    FlopsRow,
    GridRow,
    ScalingRow,
    count_flops,
    family_spread,
    fit_kappa,
    flops_spread,
    flops_table,
    load_experiment_config,
    median_by,
    run_ablation,
    run_grid,
    run_scaling,
    write_rows,
)
from climber.experiments.flops import cell_config
from climber.model import ClimberModel
from climber.serving import BenchRow, ScoringRequest, ServingEngine, bench_throughput
from climber.training import MetricRow, TrainState, resolve_data_source, train

logger = logging.getLogger("climber.cli")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _cells(text: str) -> tuple[tuple[int, int], ...]:
    """``64x1,32x2`` -> ``((64, 1), (32, 2))``."""
    cells = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        s, sep, l = part.partition("x")
        if not sep or not s.isdigit() or not l.isdigit():
            raise argparse.ArgumentTypeError(f"bad cell {part!r}; expected SxL")
        cells.append((int(s), int(l)))
    return tuple(cells)


def _nan_to_none(value: float) -> float | None:
    return None if math.isnan(value) else value


def _emit(payload: object) -> None:
    print(json.dumps(payload, indent=2))


def _cmd_train(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    hyper = cfg.train if args.steps is None else cfg.train.model_copy(update={"steps": args.steps})
    dataset = resolve_data_source(args.data or cfg.data.source, cfg.model)
    state = TrainState.load(args.resume, cfg.model) if args.resume else None
    try:
        result = train(dataset, cfg.model, hyper, state=state)
    except TrainingDivergedError as exc:
        if args.out_checkpoint and exc.last_good_state is not None:
            exc.last_good_state.save(args.out_checkpoint)
        _emit({"diverged": True, "step": exc.step})
        return 1
    metrics_path = args.metrics_csv or args.out
    if metrics_path:
        write_rows(metrics_path, result.curve, MetricRow)
    if args.out_checkpoint:
        result.state.save(args.out_checkpoint)
    _emit(
        {
            "steps": result.state.step,
            "final_loss": result.curve[-1].loss if result.curve else None,
            "final_auc": _nan_to_none(result.final_auc),
            "config_digest": cfg.model.digest(),
        }
    )
    return 0


def _cmd_score(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    state = TrainState.load(args.checkpoint)
    dataset = resolve_data_source(args.data or cfg.data.source, state.config)
    engine = ServingEngine(
        ClimberModel(state.config, state.params),
        dataset.users,
        capacity=cfg.serving.capacity,
        max_batch=cfg.serving.max_batch,
    )
    request = ScoringRequest(
        user_id=args.user,
        candidates=args.candidates,
        scenario_id=args.scenario,
        request_time=args.request_time,
    )
    logits = engine.score(request)
    _emit({"user_id": args.user, "scores": dict(zip(map(str, args.candidates), map(float, logits)))})
    return 0


def _cmd_bench(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    candidates = args.candidates or cfg.bench.candidates
    rows = bench_throughput(cfg.bench_model(), candidates, args.reps or cfg.bench.reps, seed=cfg.bench.seed)
    if args.out:
        write_rows(args.out, rows, BenchRow)
    _emit([row.model_dump() for row in rows])
    return 0


def _cmd_flops(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    cells = args.cells or tuple(cell for family in cfg.experiment.families for cell in family)
    rows = flops_table(cfg.model, cells)
    if args.out:
        write_rows(args.out, rows, FlopsRow)
    payload: dict[str, object] = {"rows": [row.model_dump() for row in rows]}
    if len(cells) >= 2:
        payload["fit"] = fit_kappa([count_flops(cell_config(cfg.model, s, l)) for s, l in cells]).model_dump()
    _emit(payload)
    return 0


def _cmd_grid(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    dataset = resolve_data_source(args.data or cfg.data.source, cfg.model)
    rows = run_grid(cfg.grid_spec(), cfg.model, dataset, cfg.train)
    if args.out:
        write_rows(args.out, rows, GridRow)
    payload = []
    for spread in family_spread(rows):
        entry = spread.model_dump()
        for key in ("best_auc", "worst_auc", "spread"):
            entry[key] = _nan_to_none(entry[key])
        payload.append(entry)
    _emit(payload)
    return 1 if any(row.diverged for row in rows) else 0


def _cmd_scaling(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    values = args.values or (cfg.experiment.layers if args.axis == "layers" else cfg.experiment.sequence)
    dataset = resolve_data_source(args.data or cfg.data.source, cfg.model)
    rows = run_scaling(
        cfg.model, args.axis, values, dataset, cfg.train, seeds=cfg.experiment.seeds, workers=cfg.experiment.workers
    )
    if args.out:
        write_rows(args.out, rows, ScalingRow)
    _emit({str(k): _nan_to_none(v) for k, v in median_by(rows, "value").items()})
    return 1 if any(row.diverged for row in rows) else 0


def _cmd_ablation(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    dataset = resolve_data_source(args.data or cfg.data.source, cfg.model)
    rows = run_ablation(cfg.model, dataset, cfg.train, seeds=cfg.experiment.seeds, workers=cfg.experiment.workers)
    if args.out:
        write_rows(args.out, rows, AblationRow)
    spread = flops_spread(rows)
    logger.info("ablation total FLOPs spread %.1f%%", 100.0 * spread)
    medians = {str(k): _nan_to_none(v) for k, v in median_by(rows, "variant").items()}
    _emit({"median_auc": medians, "flops_spread": spread})
    return 1 if any(row.diverged for row in rows) else 0


COMMANDS = {
    "train": _cmd_train,
    "score": _cmd_score,
    "bench": _cmd_bench,
    "flops": _cmd_flops,
    "grid": _cmd_grid,
    "scaling": _cmd_scaling,
    "ablation": _cmd_ablation,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment config")
    common.add_argument("--out", type=Path, help="CSV output path")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(description="Climber CLI")
    sub = parser.add_subparsers(dest="cmd", required=True)

    train_p = sub.add_parser("train", parents=[common], help="Train one model")
    train_p.add_argument("--data", help="TSV path or synthetic:seed=S,users=U")
    train_p.add_argument("--steps", type=int)
    train_p.add_argument("--resume", type=Path, help="checkpoint to resume from")
    train_p.add_argument("--out-checkpoint", type=Path)
    train_p.add_argument("--metrics-csv", type=Path, help="step,loss,eval_auc CSV (same as --out)")

    score_p = sub.add_parser("score", parents=[common], help="Score candidates for one user")
    score_p.add_argument("--checkpoint", type=Path, required=True)
    score_p.add_argument("--data", help="source holding the user's history")
    score_p.add_argument("--user", required=True)
    score_p.add_argument("--candidates", type=_int_list, required=True)
    score_p.add_argument("--scenario", type=int, default=0)
    score_p.add_argument("--request-time", type=int)

    bench_p = sub.add_parser("bench", parents=[common], help="Cached vs naive scoring throughput")
    bench_p.add_argument("--candidates", type=_int_list)
    bench_p.add_argument("--reps", type=int)

    flops_p = sub.add_parser("flops", parents=[common], help="Static FLOPs per (s, l) cell")
    flops_p.add_argument("--cells", type=_cells, help="e.g. 64x1,32x2,16x4")

    grid_p = sub.add_parser("grid", parents=[common], help="Equal-FLOPs allocation grid")
    grid_p.add_argument("--data")

    scaling_p = sub.add_parser("scaling", parents=[common], help="Scale layers or sequence length")
    scaling_p.add_argument("--axis", choices=["layers", "sequence"], required=True)
    scaling_p.add_argument("--values", type=_int_list)
    scaling_p.add_argument("--data")

    ablation_p = sub.add_parser("ablation", parents=[common], help="Nested ablation variants")
    ablation_p.add_argument("--data")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_experiment_config(args.config)
        return COMMANDS[args.cmd](args, cfg)
    except (ClimberError, ValueError, OSError) as exc:
        logger.error("%s failed: %s", args.cmd, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
