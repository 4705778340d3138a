"""FLOPs accounting, equal-FLOPs grids, scaling sweeps, ablations and CSV output."""

from .config import ExperimentConfig, experiment_from_mapping, load_experiment_config
from .csvio import read_rows, rows_to_csv, write_rows
from .flops import (
    COMPONENTS,
    FlopsReport,
    FlopsRow,
    KappaFit,
    cell_config,
    count_flops,
    fit_kappa,
    flops_table,
    kappa,
    measure_flops,
)
from .grid import (
    AblationRow,
    FamilySpread,
    GridRow,
    GridSpec,
    ScalingRow,
    family_spread,
    flops_spread,
    median_by,
    run_ablation,
    run_grid,
    run_scaling,
)

__all__ = [
    "ExperimentConfig",
    "load_experiment_config",
    "experiment_from_mapping",
    "FlopsReport",
    "FlopsRow",
    "KappaFit",
    "COMPONENTS",
    "kappa",
    "count_flops",
    "measure_flops",
    "fit_kappa",
    "flops_table",
    "cell_config",
    "GridSpec",
    "GridRow",
    "ScalingRow",
    "AblationRow",
    "FamilySpread",
    "run_grid",
    "run_scaling",
    "run_ablation",
    "family_spread",
    "flops_spread",
    "median_by",
    "write_rows",
    "read_rows",
    "rows_to_csv",
]
