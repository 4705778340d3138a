import os
import unittest

import numpy as np
from pydantic import ValidationError

from climber.errors import ConfigurationError, NumericError, StaleCacheError
from climber.model import ClimberModel, ModelConfig, Parameters, ablation_variant, score, transformer_baseline
from climber.sequence import ACTIONS, Event, LifecycleSequence
from climber.serving import (
    REFERENCE_CONFIG,
    CacheStore,
    KVCache,
    ScoringRequest,
    ServingEngine,
    bench_throughput,
    build_cache,
    score_with_cache,
)

SLOW = bool(os.environ.get("CLIMBER_SLOW_TESTS"))

TOY = ModelConfig(init_std=0.1)

CONFIGS = (
    TOY,
    ablation_variant(TOY, "minus_bgf"),
    ablation_variant(TOY, "minus_atl_bgf"),
    transformer_baseline(TOY),
    TOY.variant(d_model=8, num_blocks=3, layers_per_block=1, budget=5, activation="relu", gate_reduction=4),
)


def random_user(rng: np.random.Generator, config: ModelConfig, length: int, user_id: str = "u") -> LifecycleSequence:
    times = np.cumsum(rng.integers(0, 200_000, size=length))
    events = tuple(
        Event(
            item_id=int(rng.integers(1, config.vocab_size)),
            action=ACTIONS[int(rng.integers(len(ACTIONS)))],
            timestamp=int(t),
            scenario_id=int(rng.integers(config.num_scenarios)),
        )
        for t in times
    )
    return LifecycleSequence(user_id=user_id, events=events)


def _dummy_cache(user_id: str, scenario_id: int = 0, digest: str = "p") -> KVCache:
    return KVCache(
        user_id=user_id,
        scenario_id=scenario_id,
        last_timestamp=0,
        param_digest=digest,
        strategy_digest="s",
        config_digest="c",
        blocks=(),
    )


class TestCacheEquivalence(unittest.TestCase):
    def test_cached_logits_match_uncached(self) -> None:
        checked = 0
        for index, config in enumerate(CONFIGS):
            rng = np.random.default_rng(100 + index)
            params = Parameters.initialize(config, index)
            for name in params:
                if name.endswith("theta"):
                    params[name].data[...] = rng.normal(size=params[name].shape)
            for trial in range(40):
                user = random_user(rng, config, int(rng.integers(0, 40)))
                scenario = int(rng.integers(config.num_scenarios))
                candidates = tuple(int(c) for c in rng.integers(1, config.vocab_size, size=int(rng.integers(1, 9))))
                request_time = None if trial % 2 else user.last_timestamp + int(rng.integers(0, 10**6))
                request = ScoringRequest(
                    user_id="u", candidates=candidates, scenario_id=scenario, request_time=request_time
                )
                cached = score_with_cache(build_cache(user, scenario, params, config), request, params, config)
                naive = score(user, candidates, scenario, params, config, request_time=request_time)
                np.testing.assert_allclose(cached, naive, atol=1e-9, err_msg=f"config {index} trial {trial}")
                checked += 1
        self.assertGreaterEqual(checked, 200)

    def test_empty_history(self) -> None:
        params = Parameters.initialize(TOY, 1)
        user = LifecycleSequence(user_id="new")
        request = ScoringRequest(user_id="new", candidates=(3, 4), scenario_id=2)
        cached = score_with_cache(build_cache(user, 2, params, TOY), request, params, TOY)
        np.testing.assert_allclose(cached, score(user, [3, 4], 2, params, TOY), atol=1e-9)

    def test_cache_does_not_depend_on_candidates(self) -> None:
        params = Parameters.initialize(TOY, 2)
        user = random_user(np.random.default_rng(3), TOY, 30)
        cache = build_cache(user, 1, params, TOY)
        again = build_cache(user, 1, params, TOY)
        snapshot = [
            (layer.inputs.tobytes(), layer.keys.tobytes(), layer.values.tobytes())
            for block in cache.blocks
            for layer in block.layers
        ]
        for candidates in ((1,), (5, 6, 7), tuple(range(1, 60))):
            score_with_cache(cache, ScoringRequest(user_id="u", candidates=candidates, scenario_id=1), params, TOY)
        rebuilt = [
            (layer.inputs.tobytes(), layer.keys.tobytes(), layer.values.tobytes())
            for block in again.blocks
            for layer in block.layers
        ]
        after = [
            (layer.inputs.tobytes(), layer.keys.tobytes(), layer.values.tobytes())
            for block in cache.blocks
            for layer in block.layers
        ]
        self.assertEqual(snapshot, after)
        self.assertEqual(snapshot, rebuilt)
        with self.assertRaises(ValueError):
            cache.blocks[0].layers[0].keys[0, 0, 0] = 1.0

    def test_request_constants_are_read_only(self) -> None:
        params = Parameters.initialize(TOY, 4)
        cache = build_cache(random_user(np.random.default_rng(4), TOY, 12), 2, params, TOY)
        for block in cache.blocks:
            self.assertEqual(block.candidate_bias.shape, (TOY.num_heads, 1, TOY.budget + 1))
            self.assertFalse(block.candidate_bias.flags.writeable)
            for layer in block.layers:
                self.assertFalse(layer.temperature.flags.writeable)

    def test_non_finite_weights_raise_with_location(self) -> None:
        params = Parameters.initialize(TOY, 5)
        params["block1.layer0.w_qkv"].data[0, 0] = np.nan
        params.mark_updated()
        with self.assertRaises(NumericError) as ctx:
            build_cache(random_user(np.random.default_rng(5), TOY, 10), 0, params, TOY)
        self.assertEqual((ctx.exception.block, ctx.exception.layer), (1, 0))


class TestStaleCache(unittest.TestCase):
    def setUp(self) -> None:
        self.params = Parameters.initialize(TOY, 4)
        self.user = random_user(np.random.default_rng(4), TOY, 12)
        self.cache = build_cache(self.user, 0, self.params, TOY)

    def test_parameter_update_invalidates(self) -> None:
        self.params["head.b"].data[0] += 0.5
        self.params.mark_updated()
        with self.assertRaises(StaleCacheError):
            score_with_cache(self.cache, ScoringRequest(user_id="u", candidates=(1,)), self.params, TOY)

    def test_other_strategies_invalidate(self) -> None:
        other = TOY.variant(num_blocks=3)
        self.assertFalse(self.cache.matches(self.params, other))

    def test_scenario_and_user_mismatch(self) -> None:
        with self.assertRaises(StaleCacheError):
            score_with_cache(self.cache, ScoringRequest(user_id="u", candidates=(1,), scenario_id=1), self.params, TOY)
        with self.assertRaises(StaleCacheError):
            score_with_cache(self.cache, ScoringRequest(user_id="v", candidates=(1,)), self.params, TOY)


class TestScoringRequest(unittest.TestCase):
    def test_candidate_bounds(self) -> None:
        with self.assertRaises(ValidationError):
            ScoringRequest(user_id="u", candidates=())
        with self.assertRaises(ValidationError):
            ScoringRequest(user_id="u", candidates=tuple(range(1025)))
        self.assertEqual(len(ScoringRequest(user_id="u", candidates=tuple(range(1024))).candidates), 1024)


class TestCacheStore(unittest.TestCase):
    def test_lru_eviction(self) -> None:
        store = CacheStore(capacity=2)
        store.put(_dummy_cache("a"))
        store.put(_dummy_cache("b"))
        self.assertIsNotNone(store.get("a", 0, param_digest="p", strategy_digest="s"))
        store.put(_dummy_cache("c"))
        self.assertIn(("a", 0), store)
        self.assertNotIn(("b", 0), store)
        self.assertEqual(len(store), 2)

    def test_stale_entry_is_dropped(self) -> None:
        store = CacheStore()
        store.put(_dummy_cache("a", digest="old"))
        self.assertIsNone(store.get("a", 0, param_digest="new", strategy_digest="s"))
        self.assertEqual(len(store), 0)
        self.assertEqual((store.hits, store.misses), (0, 1))

    def test_invalidate_all_scenarios_of_user(self) -> None:
        store = CacheStore()
        for scenario in range(3):
            store.put(_dummy_cache("a", scenario))
        store.put(_dummy_cache("b"))
        self.assertEqual(store.invalidate("a"), 3)
        self.assertEqual(len(store), 1)

    def test_capacity_must_be_positive(self) -> None:
        with self.assertRaises(ConfigurationError):
            CacheStore(capacity=0)


class TestServingEngine(unittest.TestCase):
    def setUp(self) -> None:
        rng = np.random.default_rng(5)
        self.users = {f"u{i}": random_user(rng, TOY, 20, f"u{i}") for i in range(3)}
        self.model = ClimberModel(TOY, seed=6)

    def test_matches_uncached_and_reuses_cache(self) -> None:
        engine = ServingEngine(self.model, self.users, capacity=4)
        request = ScoringRequest(user_id="u1", candidates=(9, 8, 7), scenario_id=2)
        first = engine.score(request)
        second = engine.score(request)
        np.testing.assert_array_equal(first, second)
        np.testing.assert_allclose(first, self.model.score(self.users["u1"], [9, 8, 7], 2), atol=1e-9)
        self.assertEqual((engine.store.hits, engine.store.misses), (1, 1))

    def test_rebuilds_after_parameter_update(self) -> None:
        engine = ServingEngine(self.model, self.users)
        request = ScoringRequest(user_id="u0", candidates=(3,))
        before = engine.score(request)
        self.model.params["head.b"].data[0] += 1.0
        self.model.params.mark_updated()
        after = engine.score(request)
        np.testing.assert_allclose(after, before + 1.0, atol=1e-9)

    def test_max_batch_is_enforced(self) -> None:
        engine = ServingEngine(self.model, self.users, max_batch=2)
        with self.assertRaises(ConfigurationError):
            engine.score(ScoringRequest(user_id="u0", candidates=(1, 2, 3)))
        with self.assertRaises(ConfigurationError):
            ServingEngine(self.model, self.users, max_batch=2048)

    def test_invalidate(self) -> None:
        engine = ServingEngine(self.model, self.users)
        engine.score(ScoringRequest(user_id="u2", candidates=(1,)))
        self.assertEqual(engine.invalidate("u2"), 1)
        self.assertEqual(engine.invalidate("u2"), 0)


class TestBench(unittest.TestCase):
    def test_rows_per_candidate_count(self) -> None:
        config = ModelConfig(d_model=8, budget=4, layers_per_block=1)
        rows = bench_throughput(config, [1, 4], repetitions=1, warmup=0)
        self.assertEqual([row.m for row in rows], [1, 4])
        for row in rows:
            self.assertGreater(row.cached_ips, 0.0)
            self.assertGreater(row.naive_ips, 0.0)
            self.assertAlmostEqual(row.speedup, row.cached_ips / row.naive_ips, places=6)

    def test_repetitions_must_be_positive(self) -> None:
        with self.assertRaises(ValueError):
            bench_throughput(ModelConfig(), [1], repetitions=0)

    @unittest.skipUnless(SLOW, "set CLIMBER_SLOW_TESTS=1 to run")
    def test_speedup_shape_on_reference_config(self) -> None:
        rows = bench_throughput(REFERENCE_CONFIG, [1, 16, 64, 256], repetitions=9, warmup=2)
        by_m = {row.m: row.speedup for row in rows}
        self.assertGreaterEqual(by_m[1], 0.8)
        self.assertLessEqual(by_m[1], 1.3)
        self.assertGreater(by_m[256], 2.0)
        for low, high in zip(rows, rows[1:]):
            self.assertGreaterEqual(high.speedup, low.speedup * 0.95, msg=f"m={low.m} -> m={high.m}")

    @unittest.skipUnless(SLOW, "set CLIMBER_SLOW_TESTS=1 to run")
    def test_doubling_repetitions_keeps_medians(self) -> None:
        config = REFERENCE_CONFIG.variant(layers_per_block=1)
        (short,) = bench_throughput(config, [16], repetitions=6, warmup=2)
        (long,) = bench_throughput(config, [16], repetitions=12, warmup=2)
        self.assertLess(abs(long.naive_ips / short.naive_ips - 1.0), 0.1)
        self.assertLess(abs(long.cached_ips / short.cached_ips - 1.0), 0.1)


if __name__ == "__main__":
    unittest.main()
