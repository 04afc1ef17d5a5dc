"""Nearest-context retrieval over stored history vectors.

Each training pair is indexed by a history vector: the encoded context
plus ``response_weight`` times the encoded response, unit-normalized
after the addition. Queries encode the incoming context, normalize, and
rank every row by dot product, which equals cosine because the rows are
unit vectors. The scan is exact; no approximate index structures.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import ContextResponsePair
from .encoder import DualEncoderModel, encode, encode_batch, truncate_context, truncate_response
from .errors import DataError

# Cosine weight of the response encoding inside a history vector; 0.4
# performed best in the experiments this library reproduces.
DEFAULT_RESPONSE_WEIGHT = 0.4

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class QueryHit:
    pair_id: int
    response_text: str
    score: float


class HistoryIndex:
    """Immutable store of unit-norm history vectors, ordered by pair id."""

    def __init__(
        self,
        response_weight: float,
        pair_ids: Sequence[int],
        vectors: np.ndarray,
        responses: Sequence[str],
        model: DualEncoderModel | None = None,
        checkpoint_ref: str | None = None,
        checkpoint_sha256: str | None = None,
    ):
        self.response_weight = float(response_weight)
        self.pair_ids = np.asarray(pair_ids, dtype=np.int64)
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.responses = list(responses)
        self.model = model
        self.checkpoint_ref = checkpoint_ref
        self.checkpoint_sha256 = checkpoint_sha256
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.pair_ids):
            raise DataError("one vector row per pair id required")
        if len(self.responses) != len(self.pair_ids):
            raise DataError("one response per pair id required")
        if len(np.unique(self.pair_ids)) != len(self.pair_ids):
            raise DataError("pair ids must be unique")
        if np.any(np.diff(self.pair_ids) <= 0):
            raise DataError("rows must be sorted by ascending pair id")
        norms = np.linalg.norm(self.vectors, axis=1)
        if self.vectors.size and np.max(np.abs(norms - 1.0)) > 1e-9:
            raise DataError("stored vectors must have unit norm")

    def __len__(self) -> int:
        return len(self.pair_ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def _require_model(self) -> DualEncoderModel:
        if self.model is None:
            raise DataError(
                "index has no attached encoder; load it with its checkpoint"
            )
        return self.model


def build_history_index(
    model: DualEncoderModel,
    pairs: Sequence[ContextResponsePair],
    response_weight: float = DEFAULT_RESPONSE_WEIGHT,
    checkpoint_ref: str | None = None,
    checkpoint_sha256: str | None = None,
) -> HistoryIndex:
    """Encode every pair and store normalized context + w * response rows."""
    if not pairs:
        raise DataError("cannot build an index from zero pairs")
    ordered = sorted(pairs, key=lambda p: p.pair_id)
    contexts = encode_batch(
        model.context_encoder,
        model.embeddings,
        [truncate_context(p.context_tokens) for p in ordered],
    )
    responses = encode_batch(
        model.response_encoder,
        model.embeddings,
        [truncate_response(p.response_tokens) for p in ordered],
    )
    history = contexts + response_weight * responses
    norms = np.linalg.norm(history, axis=1)
    bad = np.flatnonzero(norms <= _NORM_EPS)
    if bad.size:
        raise DataError(
            f"history vector for pair {ordered[bad[0]].pair_id} has zero norm"
        )
    history /= norms[:, None]
    return HistoryIndex(
        response_weight=response_weight,
        pair_ids=[p.pair_id for p in ordered],
        vectors=history,
        responses=[p.response_text for p in ordered],
        model=model,
        checkpoint_ref=checkpoint_ref,
        checkpoint_sha256=checkpoint_sha256,
    )


def _normalize_query(vector: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vector)
    return vector / norm if norm > _NORM_EPS else vector


def query_nearest(
    index: HistoryIndex, context_tokens: Sequence[str], top_k: int
) -> list[QueryHit]:
    """Top-k rows by cosine, ties broken by ascending pair id."""
    if top_k < 1:
        raise DataError("top_k must be at least 1")
    if len(index) == 0:
        raise DataError("index is empty")
    model = index._require_model()
    query = encode(
        model.context_encoder, model.embeddings, truncate_context(context_tokens)
    )
    query = _normalize_query(query)
    # Row-wise reduction, not a BLAS matvec: blocked matvec kernels can
    # produce different roundings for bitwise-identical rows, which would
    # break the exact tie rule below.
    scores = (index.vectors * query).sum(axis=1)
    # Rows are stored in ascending pair-id order, so a stable sort on the
    # negated scores realizes the tie rule exactly.
    order = np.argsort(-scores, kind="stable")[:top_k]
    return [
        QueryHit(int(index.pair_ids[i]), index.responses[i], float(scores[i]))
        for i in order
    ]


# Index container. Byte layout mirrors the checkpoint format:
#   bytes 0..5    magic b"DRHIDX"
#   bytes 6..7    format version, uint16 little-endian
#   bytes 8..15   header length L, uint64 little-endian
#   bytes 16..16+L  UTF-8 JSON header (sorted keys): {"checkpoint_ref",
#       "checkpoint_sha256", "count", "dim", "pair_ids", "response_weight",
#       "responses"}
#   then count*dim float64 little-endian row-major vector payload.
_IDX_MAGIC = b"DRHIDX"
_IDX_VERSION = 1


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def save_index(index: HistoryIndex, path) -> None:
    header = {
        "checkpoint_ref": index.checkpoint_ref,
        "checkpoint_sha256": index.checkpoint_sha256,
        "count": len(index),
        "dim": index.dim,
        "pair_ids": [int(i) for i in index.pair_ids],
        "response_weight": index.response_weight,
        "responses": index.responses,
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_IDX_MAGIC)
        fh.write(struct.pack("<H", _IDX_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(index.vectors, dtype="<f8").tobytes())


def load_index(path, model: DualEncoderModel | None = None) -> HistoryIndex:
    with open(path, "rb") as fh:
        magic = fh.read(6)
        if magic != _IDX_MAGIC:
            raise DataError(f"not a history index file (magic {magic!r})")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != _IDX_VERSION:
            raise DataError(f"unsupported index version {version}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        count, dim = header["count"], header["dim"]
        data = fh.read(count * dim * 8)
        if len(data) != count * dim * 8:
            raise DataError("index file truncated")
        vectors = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(count, dim)
    return HistoryIndex(
        response_weight=header["response_weight"],
        pair_ids=header["pair_ids"],
        vectors=vectors,
        responses=header["responses"],
        model=model,
        checkpoint_ref=header["checkpoint_ref"],
        checkpoint_sha256=header["checkpoint_sha256"],
    )
