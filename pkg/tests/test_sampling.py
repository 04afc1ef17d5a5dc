import numpy as np
import pytest
from scipy import stats

from dialret.corpus import extract_all_pairs
from dialret.distribution import (
    ResponseDistribution,
    TransformSpec,
    count_responses,
    transform,
)
from dialret.errors import DataError
from dialret.sampling import (
    AliasSampler,
    SamplingStrategy,
    TrainingExample,
    build_training_set,
    draw_negatives,
    make_epoch_resampler,
    read_training_set,
    write_training_set,
)
from dialret.seeding import derive_rng
from dialret.synthetic import make_synthetic_corpus


def dist_from(probs, responses=None, counts=None):
    if responses is None:
        responses = [f"r{i}" for i in range(len(probs))]
    return ResponseDistribution.from_probs(responses, probs, counts)


def cumulative_search_draws(probs, rng, size):
    """Naive inverse-CDF sampler used as the alias-table oracle."""
    cumulative = np.cumsum(probs)
    return np.searchsorted(cumulative, rng.random(size), side="right")


class TestAliasSampler:
    def test_effective_probs_match_weights_exactly(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 30))
            weights = rng.random(n) + 1e-6
            sampler = AliasSampler(weights)
            assert np.allclose(
                sampler.effective_probs(), weights / weights.sum(), atol=1e-12
            )

    def test_draws_match_cumulative_search_oracle(self):
        rng = np.random.default_rng(1)
        probs = np.array([0.55, 0.3, 0.1, 0.05])
        sampler = AliasSampler(probs)
        n = 60_000
        alias_counts = np.bincount(sampler.draw(np.random.default_rng(2), n), minlength=4)
        oracle_counts = np.bincount(
            cumulative_search_draws(probs, np.random.default_rng(3), n), minlength=4
        )
        # Both empirical distributions must fit the same target.
        assert stats.chisquare(alias_counts, probs * n).pvalue > 0.01
        assert stats.chisquare(oracle_counts, probs * n).pvalue > 0.01

    def test_deterministic_under_seed(self):
        sampler = AliasSampler([0.2, 0.5, 0.3])
        a = sampler.draw(np.random.default_rng(7), 100)
        b = sampler.draw(np.random.default_rng(7), 100)
        assert np.array_equal(a, b)

    def test_rejects_bad_weights(self):
        for bad in ([], [0.0, 0.0], [-1.0, 2.0], [np.nan, 1.0]):
            with pytest.raises(DataError):
                AliasSampler(bad)


class TestDrawNegatives:
    def test_conditional_uniform_chi_square(self):
        dist = dist_from([1 / 3] * 3, responses=["a", "b", "c"])
        rng = derive_rng(5, "negatives")
        draws = draw_negatives(dist, "a", 100_000, rng)
        counts = np.array([draws.count("b"), draws.count("c")])
        assert counts.sum() == 100_000
        assert stats.chisquare(counts, [50_000, 50_000]).pvalue > 0.01
        assert "a" not in draws

    def test_exclusion_forces_remainder(self):
        dist = dist_from([0.99, 0.01], responses=["a", "b"])
        draws = draw_negatives(dist, "a", 500, derive_rng(1, "x"))
        assert set(draws) == {"b"}

    def test_deterministic_sequence(self):
        dist = dist_from([0.5, 0.3, 0.2])
        a = draw_negatives(dist, "r0", 50, derive_rng(9, "s"))
        b = draw_negatives(dist, "r0", 50, derive_rng(9, "s"))
        assert a == b

    def test_single_entry_errors(self):
        with pytest.raises(DataError):
            draw_negatives(dist_from([1.0]), "r0", 3, derive_rng(0))

    def test_unknown_true_response_draws_unconditionally(self):
        dist = dist_from([0.5, 0.5], responses=["a", "b"])
        draws = draw_negatives(dist, "not-present", 200, derive_rng(2, "u"))
        assert set(draws) <= {"a", "b"}


def make_pairs(responses):
    from dialret.corpus import ContextResponsePair

    return [
        ContextResponsePair(
            pair_id=i,
            context_tokens=("ctx", str(i)),
            response_text=r,
            response_tokens=tuple(r.split()),
            dialogue_id=f"d{i}",
            turn_index=1,
        )
        for i, r in enumerate(responses)
    ]


class TestBuildTrainingSet:
    def test_ratio_one_to_five(self):
        pairs = make_pairs([f"resp {i % 10}" for i in range(100)])
        dist = count_responses(pairs)
        examples = build_training_set(
            pairs, dist, SamplingStrategy(neg_per_pos=5), derive_rng(3, "b")
        )
        assert len(examples) == 600
        assert sum(e.label for e in examples) == 100

    def test_negatives_never_equal_true_response(self):
        pairs = make_pairs([f"resp {i % 7}" for i in range(80)])
        dist = count_responses(pairs)
        examples = build_training_set(
            pairs, dist, SamplingStrategy(neg_per_pos=5), derive_rng(4, "c")
        )
        truth = {p.pair_id: p.response_text for p in pairs}
        for ex in examples:
            if ex.label == 0:
                assert " ".join(ex.response_tokens) != truth[ex.source_pair_id]

    def test_inverse_count_filter_expectation(self):
        # One response occurring 4 times: expected surviving positives 1.
        pairs = make_pairs(["quad"] * 4 + ["x", "y", "z"])
        dist = count_responses(pairs)
        strategy = SamplingStrategy(neg_per_pos=1, filter_by_inverse_count=True)
        survivors = []
        for seed in range(2000):
            examples = build_training_set(pairs, dist, strategy, derive_rng(seed, "f"))
            survivors.append(
                sum(
                    1
                    for e in examples
                    if e.label == 1 and " ".join(e.response_tokens) == "quad"
                )
            )
        mean = np.mean(survivors)
        sem = np.std(survivors, ddof=1) / np.sqrt(len(survivors))
        assert abs(mean - 1.0) <= 3 * sem

    def test_uniform_transform_flattens_negative_frequencies(self):
        dialogues = make_synthetic_corpus(300, 20, 60, 1.2, seed=6)
        pairs = extract_all_pairs(dialogues)
        dist = count_responses(pairs)
        top = max(dist.entries, key=lambda e: e.prob)
        strategy = SamplingStrategy(transform=TransformSpec.uniform(), neg_per_pos=5)
        examples = build_training_set(pairs, dist, strategy, derive_rng(8, "u"))
        negatives = [e for e in examples if e.label == 0]
        observed = sum(
            1 for e in negatives if " ".join(e.response_tokens) == top.response
        ) / len(negatives)
        # Expectation under the uniform transform with per-pair exclusion:
        # pairs whose truth is the top response can never draw it, the
        # rest draw it with probability 1/(n-1).
        n = len(dist)
        share_other = sum(1 for p in pairs if p.response_text != top.response) / len(pairs)
        expected = share_other / (n - 1)
        sigma = np.sqrt(expected * (1 - expected) / len(negatives))
        assert abs(observed - expected) < 4 * sigma + 1e-9
        # And nowhere near the empirical probability of the top response.
        assert observed < top.prob / 3

    def test_sampler_marginal_matches_transform_targets(self):
        rng = np.random.default_rng(11)
        base = rng.dirichlet(np.ones(30) * 0.5)
        dist = dist_from(base)
        for spec in (
            TransformSpec.identity(),
            TransformSpec.uniform(),
            TransformSpec.power(-0.125),
            TransformSpec.power(-0.25),
        ):
            target = transform(dist, spec)
            draws = target.sampler().draw(derive_rng(21, spec.label()), 20_000)
            counts = np.bincount(draws, minlength=len(dist))
            pvalue = stats.chisquare(counts, target.probs * 20_000).pvalue
            assert pvalue > 0.01, spec.label()

    def test_requires_counts_when_filtering(self):
        pairs = make_pairs(["a", "b"])
        dist = dist_from([0.5, 0.5], responses=["a", "b"], counts=[0, 0])
        with pytest.raises(DataError):
            build_training_set(
                pairs,
                dist,
                SamplingStrategy(neg_per_pos=1, filter_by_inverse_count=True),
                derive_rng(0),
            )

    def test_epoch_resampler_deterministic(self):
        pairs = make_pairs([f"resp {i % 5}" for i in range(20)])
        dist = count_responses(pairs)
        resample = make_epoch_resampler(pairs, dist, SamplingStrategy(), 77)
        assert resample(0) == resample(0)
        assert resample(0) != resample(1)


class TestTrainingExampleIO:
    def test_roundtrip(self, tmp_path):
        examples = [
            TrainingExample(("hello", "!"), ("fine", "."), 1, 0),
            TrainingExample(("привет", EOU := "⟨eou⟩"), ("ок",), 0, 1),
        ]
        path = tmp_path / "train.jsonl"
        write_training_set(path, examples)
        assert read_training_set(path) == examples

    def test_label_validation(self):
        with pytest.raises(DataError):
            TrainingExample(("a",), ("b",), 2, 0)

    def test_byte_identical_serialization(self, tmp_path):
        examples = [TrainingExample(("a",), ("b",), 1, 0)]
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_training_set(p1, examples)
        write_training_set(p2, examples)
        assert p1.read_bytes() == p2.read_bytes()
