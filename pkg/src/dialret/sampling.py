"""Negative sampling and training-set assembly.

Negatives are drawn i.i.d. from a (possibly transformed) response
distribution, conditioned on differing from the pair's true response.
The conditioning is implemented by rejection with renormalization, which
is exact. Draws use a Vose alias table, so each draw costs O(1) after
O(n) setup.

All randomness flows through injected ``numpy.random.Generator`` handles
(PCG64; see :mod:`dialret.seeding`), making every output reproducible
from a seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable, Sequence

import numpy as np

from .corpus import ContextResponsePair
from .distribution import ResponseDistribution, TransformSpec, transform
from .errors import DataError

if TYPE_CHECKING:
    from .encoder import EmbeddingTable


class AliasSampler:
    """Vose alias method for weighted sampling in O(1) per draw.

    Builds two length-n tables from the weight vector: an acceptance
    probability per slot and an alias index per slot. A draw picks a slot
    uniformly, then keeps it or jumps to its alias. The effective
    per-index probabilities implied by the tables equal the normalized
    input weights exactly up to floating-point rounding, which the test
    suite checks against a naive cumulative-search sampler.
    """

    def __init__(self, weights: Sequence[float]):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise DataError("weights must be a non-empty 1-D array")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise DataError("weights must be finite and non-negative")
        total = weights.sum()
        if total <= 0:
            raise DataError("weights must have positive total mass")
        n = weights.size
        scaled = weights * (n / total)
        self.accept = np.ones(n, dtype=np.float64)
        self.alias = np.arange(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            l = large.pop()
            self.accept[s] = scaled[s]
            self.alias[s] = l
            scaled[l] = (scaled[l] + scaled[s]) - 1.0
            if scaled[l] < 1.0:
                small.append(l)
            else:
                large.append(l)
        # Remaining slots get probability 1 (numerical leftovers).

    def __len__(self) -> int:
        return len(self.accept)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Return ``size`` independent index draws as an int64 array."""
        slots = rng.integers(0, len(self.accept), size=size)
        keep = rng.random(size) < self.accept[slots]
        return np.where(keep, slots, self.alias[slots])

    def effective_probs(self) -> np.ndarray:
        """Exact per-index probabilities implied by the tables."""
        n = len(self.accept)
        probs = self.accept.copy()
        np.add.at(probs, self.alias, 1.0 - self.accept)
        return probs / n


@dataclass(frozen=True)
class SamplingStrategy:
    """How to turn positive pairs into a labeled training set."""

    transform: TransformSpec = field(default_factory=TransformSpec.identity)
    neg_per_pos: int = 5
    filter_by_inverse_count: bool = False

    def __post_init__(self):
        if self.neg_per_pos < 1:
            raise DataError("neg_per_pos must be at least 1")


@dataclass(frozen=True)
class TrainingExample:
    context_tokens: tuple[str, ...]
    response_tokens: tuple[str, ...]
    label: int
    source_pair_id: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label}")


def draw_negatives(
    dist: ResponseDistribution,
    true_response: str,
    n: int,
    rng: np.random.Generator,
) -> list[str]:
    """Draw ``n`` responses i.i.d. from ``dist`` conditioned on != true.

    Rejection with redraw is distribution-equivalent to renormalizing the
    conditional. Draws may repeat among themselves.
    """
    if n < 1:
        raise DataError("n must be positive")
    if len(dist) < 2:
        raise DataError("need at least 2 distinct responses to draw negatives")
    sampler = dist.sampler()
    excluded = dist.index_of(true_response) if true_response in dist else -1
    draws = sampler.draw(rng, n)
    if excluded >= 0:
        bad = np.flatnonzero(draws == excluded)
        rounds = 0
        while bad.size:
            rounds += 1
            if rounds > 10_000:  # unreachable: excluded mass < 1 by invariant
                raise DataError("negative sampling failed to exclude true response")
            redraw = sampler.draw(rng, bad.size)
            draws[bad] = redraw
            bad = bad[redraw == excluded]
    responses = dist.responses
    return [responses[i] for i in draws]


def build_training_set(
    pairs: Sequence[ContextResponsePair],
    dist: ResponseDistribution,
    strategy: SamplingStrategy,
    rng: np.random.Generator,
    embeddings: "EmbeddingTable | None" = None,
) -> list[TrainingExample]:
    """Assemble positives and sampled negatives for every pair.

    Per pair, in input order: when ``filter_by_inverse_count`` is set the
    pair survives with probability 1/count(response), using the raw
    pre-transform counts; each surviving pair emits one positive followed
    by ``neg_per_pos`` negatives drawn from the transformed distribution.
    The generator is consumed in that fixed order, so output is a pure
    function of (pairs, dist, strategy, seed).

    ``embeddings`` is only required for the kde transform.
    """
    sample_dist = transform(dist, strategy.transform, embeddings)
    examples: list[TrainingExample] = []
    for pair in pairs:
        if strategy.filter_by_inverse_count:
            count = dist.count(pair.response_text)
            if count < 1:
                raise DataError(
                    f"no occurrence count for response {pair.response_text!r}"
                )
            if rng.random() >= 1.0 / count:
                continue
        examples.append(
            TrainingExample(
                context_tokens=pair.context_tokens,
                response_tokens=pair.response_tokens,
                label=1,
                source_pair_id=pair.pair_id,
            )
        )
        negatives = draw_negatives(
            sample_dist, pair.response_text, strategy.neg_per_pos, rng
        )
        for neg in negatives:
            examples.append(
                TrainingExample(
                    context_tokens=pair.context_tokens,
                    response_tokens=tuple(neg.split(" ")),
                    label=0,
                    source_pair_id=pair.pair_id,
                )
            )
    return examples


def make_epoch_resampler(
    pairs: Sequence[ContextResponsePair],
    dist: ResponseDistribution,
    strategy: SamplingStrategy,
    master_seed: int,
    embeddings: "EmbeddingTable | None" = None,
) -> Callable[[int], list[TrainingExample]]:
    """Per-epoch training-set re-sampler for ``dialret.encoder.train``.

    Epoch ``e`` gets its own generator substream, so a run is still fully
    determined by the master seed. Off by default everywhere; negatives
    are normally fixed once per built training set.
    """
    from .seeding import derive_rng

    def resample(epoch: int) -> list[TrainingExample]:
        rng = derive_rng(master_seed, "resample-epoch", epoch)
        return build_training_set(pairs, dist, strategy, rng, embeddings)

    return resample


def write_training_set(path, examples: Iterable[TrainingExample]) -> None:
    """Serialize examples as UTF-8 JSON lines (stable key order)."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {
                        "context_tokens": list(ex.context_tokens),
                        "response_tokens": list(ex.response_tokens),
                        "label": ex.label,
                        "source_pair_id": ex.source_pair_id,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )


def read_training_set(path) -> list[TrainingExample]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                examples.append(
                    TrainingExample(
                        context_tokens=tuple(obj["context_tokens"]),
                        response_tokens=tuple(obj["response_tokens"]),
                        label=int(obj["label"]),
                        source_pair_id=int(obj["source_pair_id"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"bad training example on line {line_no}: {exc}")
    return examples
