import random
import tempfile
import unittest
from collections import Counter
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from climber.errors import ConfigurationError, EventFormatError
from climber.samples import EXPECTED_SAMPLE_ORDER, SAMPLE_EVENTS_TSV
from climber.sequence import (
    ACTIONS,
    PAD_ITEM,
    Action,
    Event,
    ExtractionStrategy,
    LifecycleSequence,
    TrainSample,
    default_strategies,
    extract,
    extract_all,
    load_events,
    synthesize_users,
    write_events,
)
from climber.training import auc


def _random_sequence(rng: random.Random, length: int, user_id: str = "u") -> LifecycleSequence:
    t = 0
    events = []
    for _ in range(length):
        t += rng.randint(0, 500)
        events.append(
            Event(
                item_id=rng.randint(1, 99),
                action=rng.choice(ACTIONS),
                timestamp=t,
                scenario_id=rng.randint(0, 2),
                score=round(rng.random(), 3),
            )
        )
    return LifecycleSequence(user_id=user_id, events=tuple(events))


def _is_subsequence(needle: tuple, haystack: tuple) -> bool:
    pos = 0
    for item in haystack:
        if pos < len(needle) and needle[pos] is item:
            pos += 1
    return pos == len(needle)


class TestLoadEvents(unittest.TestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.dir = Path(self._tmp.name)

    def _write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_single_user_three_rows(self) -> None:
        path = self._write("one.tsv", "u\t1\tclick\t10\t0\nu\t2\tlike\t20\t0\nu\t3\tskip\t30\t1\n")
        report = load_events(path)
        self.assertEqual(len(report.sequences), 1)
        self.assertEqual(report.sequences[0].length, 3)
        self.assertEqual(report.malformed_rows, 0)

    def test_sample_file_sorted_per_user(self) -> None:
        report = load_events(self._write("sample.tsv", SAMPLE_EVENTS_TSV))
        self.assertEqual(report.total_rows, 15)
        by_user = report.by_user()
        for user_id, expected in EXPECTED_SAMPLE_ORDER.items():
            got = [(e.item_id, e.action.value) for e in by_user[user_id].events]
            self.assertEqual(got, expected)

    def test_out_of_order_rows_sorted_stably(self) -> None:
        text = "u\t1\tclick\t30\t0\nu\t2\tlike\t10\t0\nu\t3\tskip\t30\t0\nu\t4\tshare\t10\t0\n"
        report = load_events(self._write("order.tsv", text))
        self.assertEqual([e.item_id for e in report.sequences[0].events], [2, 4, 1, 3])

    def test_counts_match_line_count_oracle(self) -> None:
        rng = random.Random(20260228)
        rows = []
        for _ in range(1000):
            rows.append(
                f"user{rng.randint(0, 9)}\t{rng.randint(1, 500)}\t{rng.choice(ACTIONS).value}"
                f"\t{rng.randint(0, 10**6)}\t{rng.randint(0, 2)}"
            )
        path = self._write("many.tsv", "\n".join(rows) + "\n")
        expected = Counter(line.split("\t")[0] for line in path.read_text(encoding="utf-8").splitlines())
        report = load_events(path)
        self.assertEqual({s.user_id: s.length for s in report.sequences}, dict(expected))
        for seq in report.sequences:
            stamps = [e.timestamp for e in seq.events]
            self.assertEqual(stamps, sorted(stamps))

    def test_malformed_rows_within_limit_are_reported(self) -> None:
        good = [f"u\t{i}\tclick\t{i}\t0" for i in range(1, 19)]
        path = self._write("some_bad.tsv", "\n".join(good + ["u\tx\tclick\t1\t0", "u\t5\tjump\t1\t0"]) + "\n")
        with self.assertLogs("climber.sequence.ingest", level="WARNING"):
            report = load_events(path)
        self.assertEqual(report.total_rows, 20)
        self.assertEqual(report.malformed_rows, 2)
        self.assertEqual(report.malformed_lines, (19, 20))

    def test_too_many_malformed_rows(self) -> None:
        rows = ["u\t1\tclick\t1\t0"] * 8 + ["garbage"] * 2
        path = self._write("bad.tsv", "\n".join(rows) + "\n")
        with self.assertRaises(EventFormatError):
            load_events(path)

    def test_undecodable_file_names_path(self) -> None:
        path = self.dir / "binary.tsv"
        path.write_bytes(b"u\t1\tclick\t1\t0\n\xff\xfe\x00bad\n")
        with self.assertRaises(EventFormatError) as ctx:
            load_events(path)
        self.assertIn("binary.tsv", str(ctx.exception))
        self.assertIsInstance(ctx.exception.__cause__, UnicodeDecodeError)

    def test_out_of_vocabulary_rows_are_malformed(self) -> None:
        rows = [f"u\t{i}\tclick\t{i}\t0" for i in range(1, 10)] + ["u\t900\tclick\t50\t0"]
        report = load_events(self._write("vocab.tsv", "\n".join(rows) + "\n"), vocab_size=100)
        self.assertEqual(report.malformed_rows, 1)
        self.assertEqual(report.sequences[0].length, 9)

    def test_optional_score_column(self) -> None:
        report = load_events(self._write("scored.tsv", "u\t1\tlike\t5\t0\t0.75\nu\t2\tlike\t6\t0\n"))
        events = report.sequences[0].events
        self.assertEqual(events[0].score, 0.75)
        self.assertIsNone(events[1].score)

    def test_missing_file_is_os_error(self) -> None:
        with self.assertRaises(OSError):
            load_events(self.dir / "missing.tsv")

    def test_write_then_load_preserves_events(self) -> None:
        seq = _random_sequence(random.Random(3), 25, user_id="w")
        path = self.dir / "written.tsv"
        self.assertEqual(write_events(path, [seq]), 25)
        self.assertEqual(load_events(path).sequences[0], seq)


class TestLifecycleSequence(unittest.TestCase):
    def test_rejects_decreasing_timestamps(self) -> None:
        events = (
            Event(item_id=1, action=Action.CLICK, timestamp=10),
            Event(item_id=2, action=Action.CLICK, timestamp=5),
        )
        with self.assertRaises(ValidationError):
            LifecycleSequence(user_id="u", events=events)

    def test_train_sample_label_contract(self) -> None:
        with self.assertRaises(ValidationError):
            TrainSample(user_id="u", candidates=(1, 2), labels=(1,))
        with self.assertRaises(ValidationError):
            TrainSample(user_id="u", candidates=(1,), labels=(2,))


class TestExtraction(unittest.TestCase):
    def test_identity_extraction(self) -> None:
        seq = _random_sequence(random.Random(1), 12)
        sub = extract(seq, ExtractionStrategy(name="all", budget=20))
        self.assertEqual(sub.events, seq.events)
        self.assertEqual(sub.valid_length, 12)
        self.assertEqual(sub.item_ids.shape, (20,))
        self.assertTrue(np.all(sub.item_ids[:8] == PAD_ITEM))
        self.assertEqual(sub.pad_length, 8)

    def test_empty_match_is_all_pad(self) -> None:
        events = tuple(Event(item_id=i, action=Action.CLICK, timestamp=i) for i in range(1, 6))
        seq = LifecycleSequence(user_id="u", events=events)
        sub = extract(seq, ExtractionStrategy(name="likes", action_filter=frozenset({Action.LIKE}), budget=4))
        self.assertEqual(sub.valid_length, 0)
        self.assertTrue(np.all(sub.item_ids == PAD_ITEM))
        self.assertFalse(sub.valid_mask.any())

    def test_matches_brute_force_scan(self) -> None:
        rng = random.Random(20260228)
        strategy = ExtractionStrategy(name="cl", action_filter=frozenset({Action.CLICK, Action.LIKE}), budget=16)
        for trial in range(30):
            seq = _random_sequence(rng, 200, user_id=f"u{trial}")
            expected = [e for e in seq.events if e.action in (Action.CLICK, Action.LIKE)][-16:]
            sub = extract(seq, strategy)
            self.assertEqual(list(sub.events), expected)
            self.assertEqual(sub.item_ids[-len(expected):].tolist(), [e.item_id for e in expected])
            self.assertTrue(_is_subsequence(sub.events, seq.events))

    def test_scenario_and_score_filters(self) -> None:
        seq = _random_sequence(random.Random(5), 80)
        strategy = ExtractionStrategy(name="scored", scenario_filter=frozenset({1}), min_score=0.5, budget=50)
        sub = extract(seq, strategy)
        expected = [e for e in seq.events if e.scenario_id == 1 and e.score >= 0.5][-50:]
        self.assertEqual(list(sub.events), expected)

    def test_enlarging_filter_never_shrinks(self) -> None:
        rng = random.Random(8)
        for _ in range(20):
            seq = _random_sequence(rng, 60)
            narrow = extract(seq, ExtractionStrategy(name="n", action_filter=frozenset({Action.SKIP}), budget=10))
            wide = extract(
                seq, ExtractionStrategy(name="w", action_filter=frozenset({Action.SKIP, Action.CLICK}), budget=10)
            )
            self.assertGreaterEqual(wide.valid_length, narrow.valid_length)

    def test_idempotent(self) -> None:
        seq = _random_sequence(random.Random(9), 90)
        strategy = ExtractionStrategy(name="p", action_filter=frozenset({Action.LIKE, Action.SHARE}), budget=12)
        once = extract(seq, strategy)
        twice = extract(once.as_sequence("u"), strategy)
        self.assertEqual(twice.events, once.events)

    def test_arrays_are_read_only(self) -> None:
        sub = extract(_random_sequence(random.Random(2), 10), ExtractionStrategy(name="all", budget=4))
        with self.assertRaises(ValueError):
            sub.item_ids[0] = 7

    def test_budget_above_maximum(self) -> None:
        with self.assertRaises(ConfigurationError):
            extract(_random_sequence(random.Random(2), 10), ExtractionStrategy(name="all", budget=9), max_budget=8)

    def test_extract_all_single_block_degenerates(self) -> None:
        seq = _random_sequence(random.Random(4), 30)
        strategy = ExtractionStrategy(name="all", budget=8)
        (sub,) = extract_all(seq, [strategy])
        self.assertEqual(sub.events, extract(seq, strategy).events)

    def test_disjoint_filters_share_no_events(self) -> None:
        seq = _random_sequence(random.Random(6), 100)
        a = ExtractionStrategy(strategy_id=0, name="a", action_filter=frozenset({Action.CLICK}), budget=10)
        b = ExtractionStrategy(strategy_id=1, name="b", action_filter=frozenset({Action.SKIP}), budget=10)
        first, second = extract_all(seq, [a, b])
        self.assertFalse(set(first.source_indices) & set(second.source_indices))

    def test_four_blocks_match_capped_counts(self) -> None:
        rng = random.Random(12)
        strategies = default_strategies(4, 8)
        for _ in range(10):
            seq = _random_sequence(rng, 70)
            subs = extract_all(seq, strategies)
            for strategy, sub in zip(strategies, subs):
                count = sum(1 for e in seq.events if e.action in strategy.action_filter)
                self.assertEqual(sub.valid_length, min(count, 8))
            self.assertLessEqual(sum(s.valid_length for s in subs), 4 * 8)

    def test_unequal_budgets_rejected(self) -> None:
        seq = _random_sequence(random.Random(4), 10)
        strategies = [ExtractionStrategy(name="a", budget=4), ExtractionStrategy(strategy_id=1, name="b", budget=5)]
        with self.assertRaises(ConfigurationError):
            extract_all(seq, strategies)
        with self.assertRaises(ConfigurationError):
            extract_all(seq, [])


class TestSynthesizeUsers(unittest.TestCase):
    def test_deterministic_per_seed(self) -> None:
        first = synthesize_users(3, 6, 150)
        second = synthesize_users(3, 6, 150)
        self.assertEqual(dict(first.users), dict(second.users))
        self.assertEqual(first.train_samples, second.train_samples)
        self.assertEqual(first.eval_samples, second.eval_samples)
        self.assertNotEqual(dict(synthesize_users(4, 6, 150).users), dict(first.users))

    def test_small_vocabulary_rejected(self) -> None:
        with self.assertRaises(ConfigurationError):
            synthesize_users(0, 4, 99)

    def test_oracle_scorer_separates_labels(self) -> None:
        data = synthesize_users(0, 40, 200, 2)
        samples = data.train_samples + data.eval_samples
        scores = np.concatenate([data.oracle_scores(s) for s in samples])
        labels = np.concatenate([np.asarray(s.labels) for s in samples])
        self.assertGreater(auc(scores, labels), 0.95)

    def test_label_marginal_is_balanced(self) -> None:
        data = synthesize_users(1, 40, 200)
        labels = np.concatenate([np.asarray(s.labels) for s in data.train_samples])
        self.assertTrue(0.2 <= labels.mean() <= 0.8)

    def test_pad_item_never_used(self) -> None:
        data = synthesize_users(2, 10, 120)
        for seq in data.users.values():
            self.assertTrue(all(e.item_id != PAD_ITEM for e in seq.events))
        for sample in data.train_samples:
            self.assertNotIn(PAD_ITEM, sample.candidates)

    def test_one_eval_sample_per_user(self) -> None:
        data = synthesize_users(0, 5, 100, train_samples_per_user=3)
        self.assertEqual(len(data.train_samples), 15)
        self.assertEqual([s.user_id for s in data.eval_samples], list(data.users))

    def test_eval_samples_per_user(self) -> None:
        base = synthesize_users(0, 5, 100, train_samples_per_user=3)
        data = synthesize_users(0, 5, 100, train_samples_per_user=3, eval_samples_per_user=4)
        self.assertEqual(len(data.train_samples), 15)
        self.assertEqual(len(data.eval_samples), 20)
        self.assertEqual(data.train_samples[:3], base.train_samples[:3])
        with self.assertRaises(ConfigurationError):
            synthesize_users(0, 5, 100, eval_samples_per_user=-1)


if __name__ == "__main__":
    unittest.main()
