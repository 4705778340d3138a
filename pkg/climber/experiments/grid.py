"""Equal-FLOPs grids, scaling sweeps and ablation runs."""

from __future__ import annotations

import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from typing import Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, model_validator

from climber.errors import ConfigurationError, TrainingDivergedError
from climber.model import ABLATION_VARIANTS, ModelConfig, ablation_variant
from climber.sequence import InteractionDataset
from climber.training import TrainHyperParams, train

from .flops import cell_config, count_flops

logger = logging.getLogger(__name__)


class GridSpec(BaseModel):
    """Families of ``(s, l)`` cells sharing one ``s * l`` product."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    families: tuple[tuple[tuple[int, int], ...], ...] = Field(min_length=1)
    seeds: tuple[int, ...] = (0,)
    steps: int = Field(default=200, ge=1)
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _validate_families(self) -> "GridSpec":
        for index, family in enumerate(self.families):
            if not family:
                raise ValueError(f"family {index} is empty")
            products = {s * l for s, l in family}
            if len(products) != 1:
                raise ValueError(f"family {index} mixes s*l products {sorted(products)}")
            if any(s < 1 or l < 1 for s, l in family):
                raise ValueError(f"family {index} has non-positive extents")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        return self

    def cells(self) -> list[tuple[int, int, int]]:
        """``(family, s, l)`` in declaration order."""
        return [(f, s, l) for f, family in enumerate(self.families) for s, l in family]


class GridRow(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    family: int
    s: int
    l: int
    flops: int
    dominant_term: int
    seed: int
    auc: float
    diverged: bool = False


class ScalingRow(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    axis: str
    value: int
    flops: int
    seed: int
    auc: float
    diverged: bool = False


class AblationRow(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    variant: str
    seed: int
    flops: int
    dominant_term: int
    auc: float
    diverged: bool = False


class FamilySpread(BaseModel):
    """Best-to-worst spread of per-cell median AUC inside one family."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    family: int
    product: int
    cells: int
    best_s: Optional[int]
    best_l: Optional[int]
    best_auc: float
    worst_auc: float
    spread: float


def _train_cell(
    config: ModelConfig, dataset: InteractionDataset, hyper: TrainHyperParams, seed: int, label: str
) -> tuple[float, bool]:
    """Final eval AUC of one run; a diverged run gives NaN."""
    logger.info("start %s seed=%d", label, seed)
    try:
        result = train(dataset, config, hyper.model_copy(update={"seed": seed}))
    except TrainingDivergedError as exc:
        logger.warning("%s seed=%d diverged at step %d", label, seed, exc.step)
        return math.nan, True
    logger.info("finish %s seed=%d auc=%.4f", label, seed, result.final_auc)
    return result.final_auc, False


def _run_jobs(jobs: list[tuple], workers: int) -> list[tuple[float, bool]]:
    """Run ``_train_cell`` jobs, collecting results in submission order."""
    if workers <= 1 or len(jobs) <= 1:
        return [_train_cell(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_train_cell, *job) for job in jobs]
        return [future.result() for future in futures]


def run_grid(
    spec: GridSpec,
    base_config: ModelConfig,
    dataset: InteractionDataset,
    hyper: TrainHyperParams | None = None,
) -> list[GridRow]:
    """Train every ``(cell, seed)`` from scratch on identical data; one row each."""
    hyper = (hyper or TrainHyperParams()).model_copy(update={"steps": spec.steps})
    cells = spec.cells()
    configs = {(s, l): cell_config(base_config, s, l) for _, s, l in cells}
    jobs = [
        (configs[(s, l)], dataset, hyper, seed, f"cell s={s} l={l}")
        for _, s, l in cells
        for seed in spec.seeds
    ]
    outcomes = iter(_run_jobs(jobs, spec.workers))
    rows = []
    for family, s, l in cells:
        report = count_flops(configs[(s, l)])
        for seed in spec.seeds:
            value, diverged = next(outcomes)
            rows.append(
                GridRow(
                    family=family,
                    s=s,
                    l=l,
                    flops=report.total,
                    dominant_term=report.dominant_term,
                    seed=seed,
                    auc=value,
                    diverged=diverged,
                )
            )
    return rows


def _median(values: Sequence[float]) -> float:
    finite = [v for v in values if not math.isnan(v)]
    return statistics.median(finite) if finite else math.nan


def family_spread(rows: Sequence[GridRow]) -> list[FamilySpread]:
    """Per family: median AUC per cell over seeds, then best minus worst cell."""
    by_family: dict[int, dict[tuple[int, int], list[float]]] = {}
    for row in rows:
        by_family.setdefault(row.family, {}).setdefault((row.s, row.l), []).append(row.auc)
    spreads = []
    for family, cells in sorted(by_family.items()):
        medians = {cell: _median(values) for cell, values in cells.items()}
        finite = {cell: value for cell, value in medians.items() if not math.isnan(value)}
        product = next(iter(cells))[0] * next(iter(cells))[1]
        if not finite:
            nan = math.nan
            spreads.append(
                FamilySpread(family=family, product=product, cells=len(cells), best_s=None, best_l=None,
                             best_auc=nan, worst_auc=nan, spread=nan)
            )
            continue
        best = max(finite, key=finite.get)
        worst = min(finite.values())
        spreads.append(
            FamilySpread(
                family=family,
                product=product,
                cells=len(cells),
                best_s=best[0],
                best_l=best[1],
                best_auc=finite[best],
                worst_auc=worst,
                spread=finite[best] - worst,
            )
        )
    return spreads


def run_scaling(
    base_config: ModelConfig,
    axis: Literal["layers", "sequence"],
    values: Sequence[int],
    dataset: InteractionDataset,
    hyper: TrainHyperParams | None = None,
    *,
    seeds: Sequence[int] = (0,),
    workers: int = 1,
) -> list[ScalingRow]:
    """One trained model per value along ``axis``; everything else fixed.

    ``sequence`` values are the total history length ``N_b * n_k``.
    """
    if list(values) != sorted(values):
        raise ConfigurationError(f"scaling values must be sorted ascending, got {list(values)}")
    if axis not in ("layers", "sequence"):
        raise ConfigurationError(f"unknown scaling axis {axis!r}")
    hyper = hyper or TrainHyperParams()
    if axis == "layers":
        configs = [cell_config(base_config, base_config.total_budget, v) for v in values]
    else:
        configs = [cell_config(base_config, v, base_config.layers_per_block) for v in values]
    jobs = [(cfg, dataset, hyper, seed, f"{axis}={v}") for v, cfg in zip(values, configs) for seed in seeds]
    outcomes = iter(_run_jobs(jobs, workers))
    rows = []
    for v, cfg in zip(values, configs):
        flops = count_flops(cfg).total
        for seed in seeds:
            value, diverged = next(outcomes)
            rows.append(ScalingRow(axis=axis, value=v, flops=flops, seed=seed, auc=value, diverged=diverged))
    return rows


def run_ablation(
    base_config: ModelConfig,
    dataset: InteractionDataset,
    hyper: TrainHyperParams | None = None,
    *,
    seeds: Sequence[int] = (0,),
    workers: int = 1,
) -> list[AblationRow]:
    """Train the nested variants in order: transformer, -ATL-BGF, -BGF, full."""
    hyper = hyper or TrainHyperParams()
    configs = [(name, ablation_variant(base_config, name)) for name in ABLATION_VARIANTS]
    jobs = [(cfg, dataset, hyper, seed, f"variant {name}") for name, cfg in configs for seed in seeds]
    outcomes = iter(_run_jobs(jobs, workers))
    rows = []
    for name, cfg in configs:
        report = count_flops(cfg)
        for seed in seeds:
            value, diverged = next(outcomes)
            rows.append(
                AblationRow(
                    variant=name,
                    seed=seed,
                    flops=report.total,
                    dominant_term=report.dominant_term,
                    auc=value,
                    diverged=diverged,
                )
            )
    return rows


def flops_spread(rows: Sequence[AblationRow]) -> float:
    """Relative spread ``(max - min) / min`` of total FLOPs across variants.

    Variants match on the dominant term only; the quadratic attention term
    and the gate/temperature parameters make the totals drift apart.
    """
    totals = {row.variant: row.flops for row in rows}
    if not totals:
        return 0.0
    low = min(totals.values())
    return (max(totals.values()) - low) / low


def median_by(rows: Sequence[BaseModel], key: str) -> dict[object, float]:
    """Median AUC over seeds grouped by ``key`` (e.g. ``value`` or ``variant``)."""
    grouped: dict[object, list[float]] = {}
    for row in rows:
        grouped.setdefault(getattr(row, key), []).append(row.auc)
    return {k: _median(v) for k, v in grouped.items()}
