import numpy as np
import pytest

from dialret.corpus import Speaker, extract_all_pairs
from dialret.distribution import count_responses
from dialret.errors import DataError
from dialret.synthetic import (
    corpus_vocabulary,
    make_separable_corpus,
    make_synthetic_corpus,
    zipf_weights,
)


class TestZipfWeights:
    def test_normalized_and_decreasing(self):
        w = zipf_weights(50, 1.0)
        assert w.sum() == pytest.approx(1.0)
        assert np.all(np.diff(w) < 0)

    def test_exponent_zero_is_uniform(self):
        assert np.allclose(zipf_weights(10, 0.0), 0.1)


class TestMakeSyntheticCorpus:
    def test_deterministic_under_seed(self):
        a = make_synthetic_corpus(50, 10, 40, 1.0, seed=3)
        b = make_synthetic_corpus(50, 10, 40, 1.0, seed=3)
        assert a == b
        c = make_synthetic_corpus(50, 10, 40, 1.0, seed=4)
        assert a != c

    def test_dialogues_valid_and_average_four_turns(self):
        dialogues = make_synthetic_corpus(400, 20, 60, 1.0, seed=1)
        for d in dialogues:
            assert d.turns[0].speaker is Speaker.USER
            assert len(d.turns) % 2 == 0
        avg = np.mean([len(d.turns) for d in dialogues])
        assert 3.4 < avg < 4.6

    def test_zipf_skew_present(self):
        dialogues = make_synthetic_corpus(800, 50, 130, 1.0, seed=2)
        dist = count_responses(extract_all_pairs(dialogues))
        # Top response far above the uniform share, tail far below.
        assert dist.probs.max() > 3.0 / 50
        assert dist.probs.min() < 1.0 / 50

    def test_distinct_responses_bounded(self):
        dialogues = make_synthetic_corpus(500, 25, 70, 0.5, seed=5)
        dist = count_responses(extract_all_pairs(dialogues))
        assert len(dist) <= 25

    def test_vocab_budget_enforced(self):
        with pytest.raises(DataError):
            make_synthetic_corpus(10, 50, 60, 1.0, seed=0)


class TestMakeSeparableCorpus:
    def test_unique_contexts_and_responses(self):
        dialogues = make_separable_corpus(50, seed=0)
        pairs = extract_all_pairs(dialogues)
        assert len(pairs) == 50
        assert len({p.response_text for p in pairs}) == 50
        assert len({p.context_tokens for p in pairs}) == 50

    def test_shared_topic_token(self):
        dialogues = make_separable_corpus(10, seed=0)
        for d, t in zip(dialogues, range(10)):
            assert f"topic{t}" in d.turns[0].text
            assert f"topic{t}" in d.turns[1].text


class TestCorpusVocabulary:
    def test_includes_separator_and_sorted(self):
        dialogues = make_separable_corpus(5, seed=0)
        vocab = corpus_vocabulary(dialogues)
        assert "⟨eou⟩" in vocab
        assert vocab == sorted(vocab)

    def test_pad_to(self):
        dialogues = make_separable_corpus(5, seed=0)
        vocab = corpus_vocabulary(dialogues, pad_to=100)
        assert len(vocab) == 100
        assert len(set(vocab)) == 100
