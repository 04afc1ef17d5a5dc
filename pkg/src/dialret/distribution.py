"""Empirical response distributions and their transformations.

The probability a response is drawn as a negative sample comes from a
discrete distribution over distinct canonical response strings. Four
transformations of the empirical distribution are supported:

    identity      q(r) = p(r)
    uniform       q(r) = 1 / |support|
    power(d)      q(r) = p(r)^d / sum_s p(s)^d
    kde(h)        q(r) ∝ sum_s p(s) * exp(-||v(r) - v(s)||^2 / (2 h^2))

where v(r) is the unit-normalized mean of the word embeddings of r's
tokens. Raw occurrence counts are carried through every transform
unchanged; the inverse-count pair filter in :mod:`dialret.sampling`
always uses them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from .corpus import ContextResponsePair, tokenize
from .errors import ConfigError, DataError

if TYPE_CHECKING:
    from .encoder import EmbeddingTable

_PROB_SUM_TOL = 1e-9
# Floor applied before renormalizing a transformed weight vector so that
# extreme degrees cannot underflow an entry to exactly zero.
_PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class DistributionEntry:
    response: str
    prob: float
    count: int


class ResponseDistribution:
    """Immutable discrete distribution over distinct response strings.

    Probabilities are strictly positive and sum to 1 within 1e-9. A
    cumulative table and an alias sampler are built lazily and cached;
    both are safe to share across threads once built.
    """

    def __init__(self, entries: Iterable[DistributionEntry]):
        self.entries: tuple[DistributionEntry, ...] = tuple(entries)
        if not self.entries:
            raise DataError("a response distribution cannot be empty")
        self._responses = [e.response for e in self.entries]
        self._index = {r: i for i, r in enumerate(self._responses)}
        if len(self._index) != len(self._responses):
            raise DataError("duplicate responses in distribution")
        self._probs = np.array([e.prob for e in self.entries], dtype=np.float64)
        self._counts = np.array([e.count for e in self.entries], dtype=np.int64)
        if np.any(self._probs <= 0.0):
            raise DataError("all probabilities must be strictly positive")
        if np.any(self._counts < 0):
            raise DataError("counts must be non-negative")
        total = float(self._probs.sum())
        if abs(total - 1.0) > _PROB_SUM_TOL:
            raise DataError(f"probabilities sum to {total!r}, not 1")
        self._cumulative: np.ndarray | None = None
        self._sampler = None

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, response: str) -> bool:
        return response in self._index

    @property
    def responses(self) -> list[str]:
        return list(self._responses)

    @property
    def probs(self) -> np.ndarray:
        return self._probs.copy()

    @property
    def counts(self) -> np.ndarray:
        return self._counts.copy()

    def index_of(self, response: str) -> int:
        return self._index[response]

    def prob(self, response: str) -> float:
        return float(self._probs[self._index[response]])

    def count(self, response: str) -> int:
        return int(self._counts[self._index[response]])

    def cumulative(self) -> np.ndarray:
        """Cumulative probability table (ascending, last entry ~1)."""
        if self._cumulative is None:
            self._cumulative = np.cumsum(self._probs)
        return self._cumulative

    def sampler(self):
        """Cached O(1)-per-draw alias sampler over this distribution."""
        if self._sampler is None:
            from .sampling import AliasSampler

            self._sampler = AliasSampler(self._probs)
        return self._sampler

    @classmethod
    def from_counts(cls, counts: Mapping[str, int]) -> "ResponseDistribution":
        total = sum(counts.values())
        if total <= 0:
            raise DataError("counts must include at least one occurrence")
        return cls(
            DistributionEntry(r, c / total, int(c))
            for r, c in counts.items()
            if c > 0
        )

    @classmethod
    def from_probs(
        cls, responses: Sequence[str], probs: Sequence[float], counts=None
    ) -> "ResponseDistribution":
        if counts is None:
            counts = [0] * len(responses)
        return cls(
            DistributionEntry(r, float(p), int(c))
            for r, p, c in zip(responses, probs, counts)
        )


def count_responses(pairs: Sequence[ContextResponsePair]) -> ResponseDistribution:
    """Empirical distribution of canonical response strings over pairs."""
    if not pairs:
        raise DataError("cannot build a distribution from zero pairs")
    counts: dict[str, int] = {}
    for pair in pairs:
        counts[pair.response_text] = counts.get(pair.response_text, 0) + 1
    return ResponseDistribution.from_counts(counts)


@dataclass(frozen=True)
class TransformSpec:
    """Which distribution transform to apply, with its parameter.

    ``kind`` is one of ``identity``, ``uniform``, ``power``, ``kde``.
    ``degree`` applies to ``power`` (any finite real); ``bandwidth``
    applies to ``kde`` (positive real, default 0.4).
    """

    kind: str = "identity"
    degree: float = 1.0
    bandwidth: float = 0.4

    _KINDS = ("identity", "uniform", "power", "kde")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ConfigError(f"unknown transform kind {self.kind!r}")
        if not np.isfinite(self.degree):
            raise ConfigError("power degree must be finite")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ConfigError("kde bandwidth must be positive and finite")

    @classmethod
    def identity(cls) -> "TransformSpec":
        return cls("identity")

    @classmethod
    def uniform(cls) -> "TransformSpec":
        return cls("uniform")

    @classmethod
    def power(cls, degree: float) -> "TransformSpec":
        return cls("power", degree=float(degree))

    @classmethod
    def kde_smoothed(cls, bandwidth: float = 0.4) -> "TransformSpec":
        return cls("kde", bandwidth=float(bandwidth))

    @classmethod
    def parse(cls, text: str) -> "TransformSpec":
        """Parse CLI syntax: identity | uniform | power:D | kde:H."""
        name, _, arg = text.partition(":")
        name = name.strip().lower()
        try:
            if name == "identity":
                return cls.identity()
            if name == "uniform":
                return cls.uniform()
            if name == "power":
                return cls.power(float(arg))
            if name == "kde":
                return cls.kde_smoothed(float(arg) if arg else 0.4)
        except ValueError:
            raise ConfigError(f"bad transform parameter in {text!r}")
        raise ConfigError(f"unknown transform {text!r}")

    def label(self) -> str:
        if self.kind == "power":
            return f"power:{self.degree:g}"
        if self.kind == "kde":
            return f"kde:{self.bandwidth:g}"
        return self.kind


def transform(
    dist: ResponseDistribution,
    spec: TransformSpec,
    embeddings: "EmbeddingTable | None" = None,
) -> ResponseDistribution:
    """Apply a transform, preserving the support and the raw counts."""
    if spec.kind == "identity":
        return dist
    if spec.kind == "uniform":
        n = len(dist)
        weights = np.full(n, 1.0 / n)
    elif spec.kind == "power":
        # Log-space with max subtraction: exact for degree 0 and 1, no
        # overflow for strongly negative degrees on tiny probabilities.
        log_q = spec.degree * np.log(dist._probs)
        weights = np.exp(log_q - log_q.max())
    elif spec.kind == "kde":
        if embeddings is None:
            raise DataError("kde transform requires an embedding table")
        weights = _kde_weights(dist, spec.bandwidth, embeddings)
    else:  # pragma: no cover - TransformSpec validates kind
        raise ConfigError(f"unknown transform kind {spec.kind!r}")
    weights = np.maximum(weights, _PROB_FLOOR)
    probs = weights / weights.sum()
    return ResponseDistribution.from_probs(dist._responses, probs, dist._counts)


def response_vectors(
    responses: Sequence[str], embeddings: "EmbeddingTable"
) -> np.ndarray:
    """Unit-normalized mean word-embedding vector for each response string.

    Responses whose mean embedding has zero norm are left as zero vectors.
    """
    vectors = np.zeros((len(responses), embeddings.dim))
    for i, response in enumerate(responses):
        tokens = tokenize(response)
        if not tokens:
            continue
        mean = np.mean([embeddings.vector(t) for t in tokens], axis=0)
        norm = np.linalg.norm(mean)
        vectors[i] = mean / norm if norm > 0 else mean
    return vectors


def _kde_weights(
    dist: ResponseDistribution, bandwidth: float, embeddings: "EmbeddingTable"
) -> np.ndarray:
    v = response_vectors(dist._responses, embeddings)
    sq_norms = np.sum(v * v, axis=1)
    sq_dist = sq_norms[:, None] - 2.0 * (v @ v.T) + sq_norms[None, :]
    np.maximum(sq_dist, 0.0, out=sq_dist)
    kernel = np.exp(-sq_dist / (2.0 * bandwidth**2))
    return kernel @ dist._probs


@dataclass(frozen=True)
class ReportRow:
    rank: int
    response: str
    count: int
    prob: float


def distribution_report(dist: ResponseDistribution) -> list[ReportRow]:
    """Rank/frequency table sorted by descending probability.

    Ties are broken by descending count, then lexicographic response, so
    the report is a pure function of the distribution.
    """
    order = sorted(dist.entries, key=lambda e: (-e.prob, -e.count, e.response))
    return [
        ReportRow(rank, e.response, e.count, e.prob)
        for rank, e in enumerate(order, start=1)
    ]


def format_report(rows: Sequence[ReportRow]) -> str:
    """Serialize report rows as ``rank<TAB>count<TAB>prob<TAB>response`` lines."""
    lines = [f"{r.rank}\t{r.count}\t{r.prob!r}\t{r.response}" for r in rows]
    return "\n".join(lines) + "\n"
