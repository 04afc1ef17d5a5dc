"""Recall@k evaluation and human-mark scoring.

For every test pair, ``num_alternatives`` distinct wrong responses are
drawn from a configurable transform of the training response
distribution. The true response plus the alternatives are ranked by the
scorer under test; the pair counts as a hit at k when the true response
lands in the top k. Ties are resolved against the true response, so a
constant scorer gets recall 0 rather than a freebie.

Scorers: a DualEncoderModel, a HistoryIndex, any object with a
``score_candidates(context_tokens, candidate_responses)`` method, or a
bare callable with that signature. Alternative draws depend only on
(seed, pair_id, transform), so two models evaluated under the same
config see identical candidate lists.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import ContextResponsePair
from .distribution import ResponseDistribution, TransformSpec, transform
from .encoder import DualEncoderModel, encode, encode_batch, sigmoid, truncate_context, truncate_response
from .errors import CandidatePoolError, DataError
from .retrieval import HistoryIndex
from .seeding import derive_rng


@dataclass(frozen=True)
class EvalConfig:
    num_alternatives: int = 9
    ks: tuple[int, ...] = (1, 3, 5)
    alternative_transform: TransformSpec = field(default_factory=TransformSpec.identity)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ks", tuple(self.ks))
        if self.num_alternatives < 1:
            raise DataError("num_alternatives must be at least 1")
        if not self.ks:
            raise DataError("ks must be non-empty")
        for k in self.ks:
            if not 1 <= k <= self.num_alternatives + 1:
                raise DataError(
                    f"k={k} outside 1..{self.num_alternatives + 1} candidates"
                )


@dataclass(frozen=True)
class EvalReport:
    recalls: dict[int, float]
    num_pairs: int
    num_alternatives: int
    alternative_transform: str
    seed: int
    ranks: tuple[int, ...] | None = None

    def recall(self, k: int) -> float:
        return self.recalls[k]


class DualEncoderScorer:
    """Ranks candidates by the pairwise sigmoid probability.

    Candidate response encodings are cached by canonical string; the
    model must not be mutated while the scorer is alive.
    """

    def __init__(self, model: DualEncoderModel):
        self.model = model
        self._cache: dict[str, np.ndarray] = {}

    def _response_vectors(self, candidates: Sequence[str]) -> np.ndarray:
        missing = [c for c in candidates if c not in self._cache]
        if missing:
            encoded = encode_batch(
                self.model.response_encoder,
                self.model.embeddings,
                [truncate_response(c.split(" ")) for c in missing],
            )
            for text, vec in zip(missing, encoded):
                self._cache[text] = vec
        return np.stack([self._cache[c] for c in candidates])

    def score_candidates(
        self, context_tokens: Sequence[str], candidates: Sequence[str]
    ) -> np.ndarray:
        c = encode(
            self.model.context_encoder,
            self.model.embeddings,
            truncate_context(context_tokens),
        )
        responses = self._response_vectors(candidates)
        return sigmoid(responses @ (self.model.bilinear.T @ c))


class HistoryIndexScorer:
    """Ranks candidates by their hypothetical history-vector placement.

    A candidate's score is the cosine between the normalized vector
    ``enc(context) + w * enc(candidate)`` and its nearest stored history
    row, i.e. how naturally the candidate would sit in the index next to
    the contexts that actually produced it.
    """

    def __init__(self, index: HistoryIndex):
        self.index = index
        self.model = index._require_model()
        self._cache: dict[str, np.ndarray] = {}

    def _candidate_vectors(self, candidates: Sequence[str]) -> np.ndarray:
        missing = [c for c in candidates if c not in self._cache]
        if missing:
            encoded = encode_batch(
                self.model.response_encoder,
                self.model.embeddings,
                [truncate_response(c.split(" ")) for c in missing],
            )
            for text, vec in zip(missing, encoded):
                self._cache[text] = vec
        return np.stack([self._cache[c] for c in candidates])

    def score_candidates(
        self, context_tokens: Sequence[str], candidates: Sequence[str]
    ) -> np.ndarray:
        ctx = encode(
            self.model.context_encoder,
            self.model.embeddings,
            truncate_context(context_tokens),
        )
        vectors = ctx[None, :] + self.index.response_weight * self._candidate_vectors(
            candidates
        )
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        np.maximum(norms, 1e-300, out=norms)
        vectors = vectors / norms
        return (self.index.vectors @ vectors.T).max(axis=0)


class _CallableScorer:
    def __init__(self, fn: Callable):
        self._fn = fn

    def score_candidates(self, context_tokens, candidates) -> np.ndarray:
        return np.asarray(self._fn(context_tokens, candidates), dtype=np.float64)


def resolve_scorer(scorer):
    """Accept a model, an index, a scorer object, or a callable."""
    if isinstance(scorer, DualEncoderModel):
        return DualEncoderScorer(scorer)
    if isinstance(scorer, HistoryIndex):
        return HistoryIndexScorer(scorer)
    if hasattr(scorer, "score_candidates"):
        return scorer
    if callable(scorer):
        return _CallableScorer(scorer)
    raise DataError(f"cannot interpret {type(scorer).__name__} as a scorer")


def _draw_distinct_alternatives(
    dist: ResponseDistribution, true_response: str, m: int, rng: np.random.Generator
) -> list[str]:
    """m distinct responses != true, drawn without replacement."""
    available = len(dist) - (1 if true_response in dist else 0)
    if available < m:
        raise CandidatePoolError(
            f"need {m} distinct alternatives but only {available} are available"
        )
    responses = dist.responses
    sampler = dist.sampler()
    chosen: list[str] = []
    seen = {true_response}
    while len(chosen) < m:
        for i in sampler.draw(rng, m - len(chosen)):
            text = responses[i]
            if text not in seen:
                seen.add(text)
                chosen.append(text)
    return chosen


def evaluate(
    scorer,
    test_pairs: Sequence[ContextResponsePair],
    train_dist: ResponseDistribution,
    cfg: EvalConfig,
    embeddings=None,
) -> EvalReport:
    """Recall@k of ``scorer`` over ``test_pairs``.

    ``embeddings`` is only needed when the alternative transform is kde.
    """
    if not test_pairs:
        raise DataError("test_pairs must be non-empty")
    resolved = resolve_scorer(scorer)
    alt_dist = transform(train_dist, cfg.alternative_transform, embeddings)
    ranks: list[int] = []
    for pair in test_pairs:
        rng = derive_rng(cfg.seed, "eval-pair", pair.pair_id)
        alternatives = _draw_distinct_alternatives(
            alt_dist, pair.response_text, cfg.num_alternatives, rng
        )
        candidates = [pair.response_text] + alternatives
        scores = np.asarray(
            resolved.score_candidates(pair.context_tokens, candidates),
            dtype=np.float64,
        )
        if scores.shape != (len(candidates),):
            raise DataError("scorer returned wrong number of scores")
        ranks.append(1 + int(np.sum(scores[1:] >= scores[0])))
    rank_array = np.array(ranks)
    recalls = {k: float(np.mean(rank_array <= k)) for k in cfg.ks}
    return EvalReport(
        recalls=recalls,
        num_pairs=len(test_pairs),
        num_alternatives=cfg.num_alternatives,
        alternative_transform=cfg.alternative_transform.label(),
        seed=cfg.seed,
        ranks=tuple(ranks),
    )


def format_eval_report(report: EvalReport) -> str:
    lines = [
        f"pairs: {report.num_pairs}",
        f"num_alternatives: {report.num_alternatives}",
        f"alternative_transform: {report.alternative_transform}",
        f"seed: {report.seed}",
    ]
    for k in sorted(report.recalls):
        lines.append(f"recall@{k}: {report.recalls[k]!r}")
    return "\n".join(lines) + "\n"


def parse_eval_report(text: str) -> dict[str, float]:
    values: dict[str, float] = {}
    for line in text.splitlines():
        if ":" not in line:
            continue
        key, _, value = line.partition(":")
        try:
            values[key.strip()] = float(value)
        except ValueError:
            continue
    return values


@dataclass(frozen=True)
class GridResult:
    """EvalReports for every (alternative distribution, scorer) cell."""

    alt_names: tuple[str, ...]
    scorer_names: tuple[str, ...]
    cells: dict[tuple[str, str], EvalReport]

    def report(self, alt_name: str, scorer_name: str) -> EvalReport:
        return self.cells[(alt_name, scorer_name)]


def cross_distribution_grid(
    scorers: Mapping[str, object],
    alt_transforms: Mapping[str, TransformSpec],
    test_pairs: Sequence[ContextResponsePair],
    train_dist: ResponseDistribution,
    cfg: EvalConfig,
    embeddings=None,
) -> GridResult:
    """Evaluate every scorer against every alternative distribution.

    Scorers are keyed by the negative-sampling variant they were trained
    with; the same eval seed is used for each cell, so cells in one
    column share their candidate lists exactly.
    """
    if not scorers or not alt_transforms:
        raise DataError("grid needs at least one scorer and one alternative")
    resolved = {name: resolve_scorer(s) for name, s in scorers.items()}
    cells: dict[tuple[str, str], EvalReport] = {}
    for alt_name, alt_spec in alt_transforms.items():
        cell_cfg = EvalConfig(
            num_alternatives=cfg.num_alternatives,
            ks=cfg.ks,
            alternative_transform=alt_spec,
            seed=cfg.seed,
        )
        for scorer_name, scorer in resolved.items():
            cells[(alt_name, scorer_name)] = evaluate(
                scorer, test_pairs, train_dist, cell_cfg, embeddings
            )
    return GridResult(tuple(alt_transforms), tuple(scorers), cells)


def format_grid_table(grid: GridResult, ks: Sequence[int] | None = None) -> str:
    """Aligned text table: one row per (alternatives, trained-with) cell."""
    if ks is None:
        first = next(iter(grid.cells.values()))
        ks = sorted(first.recalls)
    header = ["test_alternatives", "train_negatives"] + [f"recall@{k}" for k in ks]
    rows = [header]
    for alt_name in grid.alt_names:
        for scorer_name in grid.scorer_names:
            report = grid.cells[(alt_name, scorer_name)]
            rows.append(
                [alt_name, scorer_name]
                + [f"{report.recalls[k]:.4f}" for k in ks]
            )
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


# Human evaluation: assessors mark each proposed response on a 0..3
# scale. A question counts as correctly answered (CR) when its best mark
# exceeds 1, and as at least plausibly answered (UR) when it exceeds 0.
VALID_MARKS = (0, 1, 2, 3)
RESPONSES_PER_QUESTION = 3


@dataclass(frozen=True)
class AnnotationRecord:
    question_id: str
    responses: tuple[str, str, str]
    marks: tuple[int, int, int]

    def __post_init__(self):
        if len(self.responses) != RESPONSES_PER_QUESTION:
            raise DataError("exactly 3 responses per question")
        if len(self.marks) != RESPONSES_PER_QUESTION:
            raise DataError("exactly 3 marks per question")
        for mark in self.marks:
            if mark not in VALID_MARKS:
                raise DataError(f"mark {mark!r} outside 0..3")


def score_human_marks(records: Sequence[AnnotationRecord]) -> tuple[float, float]:
    """(CR, UR): fractions of questions with best mark >1 and >0."""
    if not records:
        raise DataError("no annotation records")
    cr_hits = sum(1 for r in records if max(r.marks) > 1)
    ur_hits = sum(1 for r in records if max(r.marks) > 0)
    return cr_hits / len(records), ur_hits / len(records)


@dataclass(frozen=True)
class AnnotationRow:
    question_id: str
    rank: int
    response: str
    mark: str
    model: str


def export_annotation(
    scorers,
    questions: Sequence[tuple[str, Sequence[str]]],
    response_pool: Sequence[str],
    n_responses: int = RESPONSES_PER_QUESTION,
    seed: int = 0,
) -> list[AnnotationRow]:
    """Select the top responses per question and shuffle across models.

    ``scorers`` is a single scorer or a name -> scorer mapping; the model
    name is kept on each row for the sidecar key file but must not be
    written into the assessor-facing table. The shuffle hides which model
    produced which row and is deterministic under ``seed``.
    """
    if not questions:
        raise DataError("questions must be non-empty")
    if n_responses < 1:
        raise DataError("n_responses must be positive")
    if len(set(response_pool)) < n_responses:
        raise CandidatePoolError(
            f"response pool has fewer than {n_responses} distinct entries"
        )
    if not isinstance(scorers, Mapping):
        scorers = {"model": scorers}
    resolved = {name: resolve_scorer(s) for name, s in scorers.items()}
    pool = list(dict.fromkeys(response_pool))
    rows: list[AnnotationRow] = []
    for name, scorer in resolved.items():
        for question_id, context_tokens in questions:
            scores = np.asarray(
                scorer.score_candidates(context_tokens, pool), dtype=np.float64
            )
            top = np.argsort(-scores, kind="stable")[:n_responses]
            for rank, i in enumerate(top, start=1):
                rows.append(AnnotationRow(str(question_id), rank, pool[i], "", name))
    rng = derive_rng(seed, "annotation-shuffle")
    order = rng.permutation(len(rows))
    return [rows[i] for i in order]


def write_annotation_file(path, rows: Sequence[AnnotationRow]) -> None:
    """Assessor-facing TSV: question_id, rank, response, mark (blank)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("question_id\trank\tresponse\tmark\n")
        for row in rows:
            fh.write(f"{row.question_id}\t{row.rank}\t{row.response}\t{row.mark}\n")


def write_annotation_key(path, rows: Sequence[AnnotationRow]) -> None:
    """Sidecar mapping each data line back to its source model."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("line\tmodel\n")
        for line_no, row in enumerate(rows, start=2):
            fh.write(f"{line_no}\t{row.model}\n")


def read_marked_annotation(
    path, key_path=None
) -> dict[str, list[AnnotationRecord]]:
    """Parse a marked annotation file back into per-model records.

    Without a key file all rows are attributed to one model named
    ``model``. Every question must have exactly 3 marked responses.
    """
    models: dict[int, str] = {}
    if key_path is not None:
        with open(key_path, encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                if not line.strip():
                    continue
                line_no, model = line.rstrip("\n").split("\t")
                models[int(line_no)] = model
    grouped: dict[tuple[str, str], list[tuple[int, str, int]]] = {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 4:
                raise DataError(f"line {line_no}: expected 4 tab-separated fields")
            question_id, rank, response, mark = fields
            if not mark.strip():
                raise DataError(f"line {line_no}: missing mark")
            try:
                mark_value = int(mark)
            except ValueError:
                raise DataError(f"line {line_no}: mark {mark!r} is not an integer")
            model = models.get(line_no, "model")
            grouped.setdefault((model, question_id), []).append(
                (int(rank), response, mark_value)
            )
    records: dict[str, list[AnnotationRecord]] = {}
    for (model, question_id), entries in grouped.items():
        entries.sort()
        records.setdefault(model, []).append(
            AnnotationRecord(
                question_id=question_id,
                responses=tuple(e[1] for e in entries),
                marks=tuple(e[2] for e in entries),
            )
        )
    return records
