import math
import os
import tempfile
import unittest
from pathlib import Path

from pydantic import ValidationError

from climber.errors import ConfigurationError
from climber.experiments import (
    COMPONENTS,
    AblationRow,
    ExperimentConfig,
    GridRow,
    GridSpec,
    ScalingRow,
    cell_config,
    count_flops,
    family_spread,
    fit_kappa,
    flops_spread,
    flops_table,
    kappa,
    load_experiment_config,
    measure_flops,
    median_by,
    read_rows,
    rows_to_csv,
    run_ablation,
    run_grid,
    run_scaling,
    write_rows,
)
from climber.model import ABLATION_VARIANTS, ModelConfig, ablation_variant, transformer_baseline
from climber.samples import TOY_CONFIG_TOML
from climber.sequence import synthesize_users
from climber.training import TrainHyperParams

SLOW = bool(os.environ.get("CLIMBER_SLOW_TESTS"))
TINY = ModelConfig(d_model=8, num_heads=2, layers_per_block=1, num_blocks=2, budget=4)


def _tiny_dataset():
    return synthesize_users(0, 6, 200, candidates_per_sample=3, train_samples_per_user=1, events_per_user=(10, 20))


class TestFlopCounts(unittest.TestCase):
    def test_static_count_matches_instrumented_forward(self) -> None:
        configs = (
            ModelConfig(),
            ablation_variant(ModelConfig(), "minus_bgf"),
            transformer_baseline(ModelConfig()),
            ModelConfig(num_blocks=3, budget=5, gate_reduction=4, activation="relu"),
            ModelConfig(d_model=32, num_heads=4, layers_per_block=3, num_blocks=4, budget=6),
        )
        for config in configs:
            report = count_flops(config)
            self.assertEqual(report.components, measure_flops(config), msg=config.model_dump())
            self.assertEqual(set(report.components), set(COMPONENTS))

    def test_history_attention_shrinks_with_block_count(self) -> None:
        n, d, l = 64, 16, 2
        for blocks in (1, 2, 4, 8):
            config = ModelConfig(d_model=d, num_blocks=blocks, budget=n // blocks, layers_per_block=l)
            report = count_flops(config)
            self.assertEqual(report.history_attention_scores * blocks, 2 * n * n * d * l)

    def test_family_shares_dominant_term(self) -> None:
        rows = flops_table(ModelConfig(), [(64, 1), (32, 2), (16, 4), (8, 8)])
        self.assertEqual(len({row.dominant_term for row in rows}), 1)
        for row in rows:
            self.assertEqual(row.total, row.dominant_term + row.constant_overhead)

    def test_doubling_layers_doubles_per_layer_components(self) -> None:
        one = count_flops(ModelConfig(layers_per_block=1)).components
        two = count_flops(ModelConfig(layers_per_block=2)).components
        for name in ("projections", "attention_scores", "attention_values", "ffn"):
            self.assertEqual(two[name], 2 * one[name])
        for name in ("fusion", "gate", "head"):
            self.assertEqual(two[name], one[name])

    def test_kappa_closed_form(self) -> None:
        config = ModelConfig(d_model=16, ffn_multiplier=4)
        self.assertEqual(kappa(config), 2 * (4 * 256 + 2 * 4 * 256))

    def test_fit_recovers_kappa(self) -> None:
        base = ModelConfig(d_model=256, num_heads=4)
        reports = [count_flops(cell_config(base, s, 1)) for s in (8, 16, 32, 64)]
        fit = fit_kappa(reports)
        self.assertLess(abs(fit.kappa / kappa(base) - 1.0), 0.05)
        self.assertLess(fit.max_relative_residual, 0.05)
        with self.assertRaises(ValueError):
            fit_kappa(reports[:1])

    def test_cell_must_split_evenly(self) -> None:
        with self.assertRaises(ConfigurationError):
            cell_config(ModelConfig(num_blocks=4), 18, 1)


class TestGridSpec(unittest.TestCase):
    def test_mixed_products_rejected(self) -> None:
        with self.assertRaises(ValidationError):
            GridSpec(families=(((64, 1), (16, 2)),))

    def test_empty_seeds_rejected(self) -> None:
        with self.assertRaises(ValidationError):
            GridSpec(families=(((8, 1),),), seeds=())

    def test_cells_in_declaration_order(self) -> None:
        spec = GridSpec(families=(((8, 1), (4, 2)), ((16, 1),)))
        self.assertEqual(spec.cells(), [(0, 8, 1), (0, 4, 2), (1, 16, 1)])


class TestFamilySpread(unittest.TestCase):
    def test_median_per_cell_then_spread(self) -> None:
        rows = [
            GridRow(family=0, s=8, l=1, flops=1, dominant_term=1, seed=k, auc=auc)
            for k, auc in enumerate((0.6, 0.7, 0.8))
        ] + [
            GridRow(family=0, s=4, l=2, flops=1, dominant_term=1, seed=0, auc=0.5),
            GridRow(family=0, s=4, l=2, flops=1, dominant_term=1, seed=1, auc=math.nan, diverged=True),
            GridRow(family=1, s=2, l=1, flops=1, dominant_term=1, seed=0, auc=math.nan, diverged=True),
        ]
        first, second = family_spread(rows)
        self.assertEqual((first.best_s, first.best_l, first.product, first.cells), (8, 1, 8, 2))
        self.assertAlmostEqual(first.spread, 0.2, places=12)
        self.assertIsNone(second.best_s)
        self.assertTrue(math.isnan(second.spread))

    def test_median_by(self) -> None:
        rows = [
            ScalingRow(axis="layers", value=1, flops=1, seed=0, auc=0.5),
            ScalingRow(axis="layers", value=1, flops=1, seed=1, auc=0.75),
            ScalingRow(axis="layers", value=2, flops=2, seed=0, auc=0.9),
        ]
        self.assertEqual(median_by(rows, "value"), {1: 0.625, 2: 0.9})


class TestRuns(unittest.TestCase):
    def setUp(self) -> None:
        self.dataset = _tiny_dataset()
        self.hyper = TrainHyperParams(batch_users=4, eval_every=2, steps=2)

    def test_grid_is_deterministic(self) -> None:
        spec = GridSpec(families=(((8, 1), (4, 2)),), seeds=(0, 1), steps=2)
        first = run_grid(spec, TINY, self.dataset, self.hyper)
        second = run_grid(spec, TINY, self.dataset, self.hyper)
        self.assertEqual(len(first), 4)
        self.assertEqual(rows_to_csv(first, GridRow), rows_to_csv(second, GridRow))
        self.assertEqual(len({row.dominant_term for row in first}), 1)
        self.assertEqual([(r.s, r.l, r.seed) for r in first], [(8, 1, 0), (8, 1, 1), (4, 2, 0), (4, 2, 1)])

    def test_ablation_rows_follow_nesting_order(self) -> None:
        rows = run_ablation(TINY, self.dataset, self.hyper.model_copy(update={"steps": 1}))
        self.assertEqual([row.variant for row in rows], list(ABLATION_VARIANTS))
        self.assertFalse(any(row.diverged for row in rows))
        by_variant = {row.variant: row for row in rows}
        self.assertEqual(by_variant["transformer"].dominant_term, by_variant["climber"].dominant_term)
        totals = [by_variant[name].flops for name in ABLATION_VARIANTS]
        self.assertAlmostEqual(flops_spread(rows), (max(totals) - min(totals)) / min(totals))

    def test_flops_spread_across_variants(self) -> None:
        rows = [
            AblationRow(variant="transformer", seed=0, flops=100, dominant_term=80, auc=0.7),
            AblationRow(variant="transformer", seed=1, flops=100, dominant_term=80, auc=0.7),
            AblationRow(variant="climber", seed=0, flops=112, dominant_term=80, auc=0.8),
        ]
        self.assertAlmostEqual(flops_spread(rows), 0.12)
        self.assertEqual(flops_spread(rows[:2]), 0.0)
        self.assertEqual(flops_spread([]), 0.0)

    def test_scaling_layers(self) -> None:
        rows = run_scaling(TINY, "layers", [1, 2], self.dataset, self.hyper)
        self.assertEqual([row.value for row in rows], [1, 2])
        self.assertLess(rows[0].flops, rows[1].flops)

    def test_scaling_values_must_be_sorted(self) -> None:
        with self.assertRaises(ConfigurationError):
            run_scaling(TINY, "sequence", [8, 4], self.dataset, self.hyper)
        with self.assertRaises(ConfigurationError):
            run_scaling(TINY, "width", [8], self.dataset, self.hyper)


@unittest.skipUnless(SLOW, "set CLIMBER_SLOW_TESTS=1 to run")
class TestScalingTrend(unittest.TestCase):
    # enough eval samples that the AUC noise sits well below the tolerance
    @classmethod
    def setUpClass(cls) -> None:
        cls.dataset = synthesize_users(0, 256, 200, train_samples_per_user=8, eval_samples_per_user=4)
        cls.hyper = TrainHyperParams(lr=2e-3, steps=2000, batch_users=16, eval_every=2000)

    def assert_non_decreasing(self, medians: dict[int, float]) -> None:
        values = sorted(medians)
        for low, high in zip(values, values[1:]):
            self.assertGreaterEqual(medians[high], medians[low] - 0.005, msg=f"{low} -> {high}: {medians}")

    def test_more_layers_do_not_hurt(self) -> None:
        rows = run_scaling(ModelConfig(), "layers", [1, 2, 4], self.dataset, self.hyper, seeds=(0, 1, 2))
        self.assertFalse(any(row.diverged for row in rows))
        self.assert_non_decreasing(median_by(rows, "value"))

    def test_longer_history_does_not_hurt(self) -> None:
        rows = run_scaling(ModelConfig(), "sequence", [8, 16, 32], self.dataset, self.hyper, seeds=(0, 1, 2))
        self.assertFalse(any(row.diverged for row in rows))
        self.assert_non_decreasing(median_by(rows, "value"))


class TestCsv(unittest.TestCase):
    def test_round_trip(self) -> None:
        rows = [
            AblationRow(variant="climber", seed=0, flops=10, dominant_term=8, auc=0.71),
            AblationRow(variant="transformer", seed=1, flops=12, dominant_term=8, auc=math.nan, diverged=True),
        ]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_rows(Path(tmp) / "out" / "ablation.csv", rows, AblationRow)
            text = path.read_text()
            back = read_rows(path, AblationRow)
        self.assertTrue(text.startswith("variant,seed,flops,dominant_term,auc,diverged\n"))
        self.assertIn("transformer,1,12,8,nan,true", text)
        self.assertEqual(back[0], rows[0])
        self.assertTrue(math.isnan(back[1].auc) and back[1].diverged)

    def test_wrong_columns_rejected(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = write_rows(Path(tmp) / "rows.csv", [], GridRow)
            with self.assertRaises(ConfigurationError):
                read_rows(path, AblationRow)


class TestExperimentConfig(unittest.TestCase):
    def _load(self, text: str) -> ExperimentConfig:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "experiment.toml"
            path.write_text(text)
            return load_experiment_config(path)

    def test_sample_config(self) -> None:
        cfg = self._load(TOY_CONFIG_TOML)
        strategies = cfg.model.strategy_set()
        self.assertEqual([s.name for s in strategies], ["positive", "all"])
        self.assertEqual([s.strategy_id for s in strategies], [0, 1])
        self.assertEqual({s.budget for s in strategies}, {8})
        self.assertEqual(cfg.train.steps, 4)
        self.assertEqual(cfg.grid_spec().families, (((16, 1), (8, 2)),))
        self.assertEqual(cfg.bench_model(), cfg.model)
        self.assertEqual(cfg.serving.max_batch, 64)

    def test_defaults_without_file(self) -> None:
        self.assertEqual(load_experiment_config(None), ExperimentConfig())

    def test_unknown_key_rejected(self) -> None:
        with self.assertRaises(ConfigurationError):
            self._load("[model]\nd_model = 16\nwidth = 3\n")

    def test_malformed_toml_rejected(self) -> None:
        with self.assertRaises(ConfigurationError):
            self._load("[model\n")

    def test_strategy_count_must_match_blocks(self) -> None:
        with self.assertRaises(ConfigurationError):
            self._load('[model]\nnum_blocks = 3\n\n[[strategies]]\nname = "all"\n')


if __name__ == "__main__":
    unittest.main()
