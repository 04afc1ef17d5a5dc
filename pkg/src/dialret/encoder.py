"""Dual encoder: embeddings, sequence encoders, bilinear scorer, training.

Everything is plain float64 numpy with hand-derived gradients; there is
no autodiff framework underneath. The pairwise probability of a context c
and response r is

    p = sigmoid(enc(c)^T  B  enc(r))

with B a square interaction matrix and enc one of two encoders:

``gru``
    update gate   z_t = sigmoid(Wz e_t + Uz h_{t-1} + bz)
    reset gate    r_t = sigmoid(Wr e_t + Ur h_{t-1} + br)
    candidate     g_t = tanh(Wh e_t + Uh (r_t * h_{t-1}) + bh)
    state         h_t = (1 - z_t) * h_{t-1} + z_t * g_t,   h_0 = 0
    output: final state h_T.

``attention``
    scores    s_t = v^T tanh(W e_t)
    weights   a   = softmax(s)
    output    sum_t a_t e_t   (a convex combination of the embeddings).

Training is mini-batch SGD with a fixed learning rate and global-norm
gradient clipping; the loss is mean binary cross-entropy on the sigmoid
output. Gradients flow through the interaction matrix, both encoders
(backpropagation through time for the GRU), and optionally the embedding
rows. The test suite checks every analytic gradient against central
finite differences.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import DataError, DivergenceError, NonFiniteParameterError

if TYPE_CHECKING:
    from .sampling import TrainingExample

logger = logging.getLogger(__name__)

# Sequences longer than this are truncated before encoding: contexts keep
# the most recent tokens, responses the leading ones. Bounds BPTT cost.
MAX_SEQUENCE_TOKENS = 160

_LOG_EPS = 1e-12


def sigmoid(x):
    """Numerically stable logistic function, exact about 0.5."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def truncate_context(tokens: Sequence[str]) -> Sequence[str]:
    if len(tokens) > MAX_SEQUENCE_TOKENS:
        return tokens[-MAX_SEQUENCE_TOKENS:]
    return tokens


def truncate_response(tokens: Sequence[str]) -> Sequence[str]:
    if len(tokens) > MAX_SEQUENCE_TOKENS:
        return tokens[:MAX_SEQUENCE_TOKENS]
    return tokens


class EmbeddingTable:
    """Token -> dense vector map with a mean-vector OOV policy.

    The matrix holds one row per vocabulary token plus a final row for
    out-of-vocabulary tokens, set to the arithmetic mean of the in-vocab
    rows at construction time.
    """

    def __init__(self, vocab: dict[str, int], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(vocab):
            raise DataError("vectors must be one row per vocabulary token")
        if not np.all(np.isfinite(vectors)):
            raise DataError("embedding vectors contain non-finite values")
        if sorted(vocab.values()) != list(range(len(vocab))):
            raise DataError("vocab indices must be exactly 0..len(vocab)-1")
        self.vocab = dict(vocab)
        self.matrix = np.vstack([vectors, vectors.mean(axis=0)])

    @classmethod
    def _restore(cls, vocab: dict[str, int], full_matrix: np.ndarray):
        table = cls.__new__(cls)
        table.vocab = dict(vocab)
        table.matrix = np.asarray(full_matrix, dtype=np.float64)
        if table.matrix.shape[0] != len(vocab) + 1:
            raise DataError("restored matrix must have len(vocab)+1 rows")
        return table

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def oov_index(self) -> int:
        return len(self.vocab)

    @property
    def oov_vector(self) -> np.ndarray:
        return self.matrix[self.oov_index]

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def index(self, token: str) -> int:
        return self.vocab.get(token, self.oov_index)

    def indices(self, tokens: Sequence[str]) -> np.ndarray:
        oov = self.oov_index
        return np.fromiter(
            (self.vocab.get(t, oov) for t in tokens), dtype=np.int64, count=len(tokens)
        )

    def vector(self, token: str) -> np.ndarray:
        return self.matrix[self.index(token)]

    def tokens_in_index_order(self) -> list[str]:
        ordered = sorted(self.vocab.items(), key=lambda kv: kv[1])
        return [t for t, _ in ordered]


def load_embeddings(source, expected_dim: int | None = None) -> EmbeddingTable:
    """Load the standard text word-vector format.

    First line is ``count dim``; each following line is a token and
    ``dim`` floats, space-separated. Duplicate tokens keep the first
    occurrence (a warning is logged). ``source`` may be a path or an
    iterable of lines.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8") as fh:
            return load_embeddings(list(fh), expected_dim)
    lines = iter(source)
    try:
        header = next(lines)
    except StopIteration:
        raise DataError("embedding file is empty")
    parts = header.split()
    if len(parts) != 2:
        raise DataError(f"bad embedding header {header.strip()!r}; expected 'count dim'")
    try:
        declared_count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise DataError(f"bad embedding header {header.strip()!r}; expected 'count dim'")
    if declared_count < 1 or dim < 1:
        raise DataError("embedding header must declare positive count and dim")
    if expected_dim is not None and dim != expected_dim:
        raise DataError(f"embedding dim {dim} does not match expected {expected_dim}")
    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = []
    for line_no, line in enumerate(lines, start=2):
        if not line.strip():
            continue
        fields = line.rstrip("\n").split(" ")
        token = fields[0]
        values = [f for f in fields[1:] if f]
        if len(values) != dim:
            raise DataError(
                f"line {line_no}: vector has {len(values)} components, expected {dim}"
            )
        try:
            row = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError:
            raise DataError(f"line {line_no}: non-numeric vector component")
        if token in vocab:
            logger.warning("duplicate token %r at line %d; keeping first", token, line_no)
            continue
        vocab[token] = len(rows)
        rows.append(row)
    if not rows:
        raise DataError("embedding file declares no vectors")
    return EmbeddingTable(vocab, np.vstack(rows))


def random_embeddings(
    vocab_tokens: Iterable[str], dim: int, scale: float, seed: int
) -> EmbeddingTable:
    """I.i.d. uniform[-scale, scale] vectors, deterministic under seed.

    A desk-scale substitute for pretrained vectors; tokens are indexed in
    the order given (duplicates rejected).
    """
    tokens = list(vocab_tokens)
    if not tokens:
        raise DataError("vocabulary is empty")
    vocab = {t: i for i, t in enumerate(tokens)}
    if len(vocab) != len(tokens):
        raise DataError("duplicate tokens in vocabulary")
    if dim < 1:
        raise DataError("dim must be positive")
    if scale < 0:
        raise DataError("scale must be non-negative")
    rng = np.random.default_rng(seed)
    vectors = rng.uniform(-scale, scale, size=(len(tokens), dim))
    return EmbeddingTable(vocab, vectors)


@dataclass
class GruParams:
    """Gate and candidate weights for a single-layer GRU."""

    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray

    variant = "gru"

    @property
    def hidden(self) -> int:
        return self.w_z.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_z.shape[1]

    @property
    def output_dim(self) -> int:
        return self.hidden

    def tensors(self) -> dict[str, np.ndarray]:
        return {
            "w_z": self.w_z, "u_z": self.u_z, "b_z": self.b_z,
            "w_r": self.w_r, "u_r": self.u_r, "b_r": self.b_r,
            "w_h": self.w_h, "u_h": self.u_h, "b_h": self.b_h,
        }

    @classmethod
    def create(cls, input_dim: int, hidden: int, rng: np.random.Generator):
        k = 1.0 / np.sqrt(hidden)
        def w(rows, cols):
            return rng.uniform(-k, k, size=(rows, cols))
        return cls(
            w_z=w(hidden, input_dim), u_z=w(hidden, hidden), b_z=np.zeros(hidden),
            w_r=w(hidden, input_dim), u_r=w(hidden, hidden), b_r=np.zeros(hidden),
            w_h=w(hidden, input_dim), u_h=w(hidden, hidden), b_h=np.zeros(hidden),
        )


@dataclass
class AttentionParams:
    """Additive attention over token embeddings, no recurrence."""

    proj: np.ndarray   # (dim, dim)
    score: np.ndarray  # (dim,)

    variant = "attention"

    @property
    def input_dim(self) -> int:
        return self.proj.shape[1]

    @property
    def output_dim(self) -> int:
        return self.proj.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"proj": self.proj, "score": self.score}

    @classmethod
    def create(cls, input_dim: int, rng: np.random.Generator):
        k = 1.0 / np.sqrt(input_dim)
        return cls(
            proj=rng.uniform(-k, k, size=(input_dim, input_dim)),
            score=rng.uniform(-k, k, size=input_dim),
        )


EncoderParams = GruParams | AttentionParams


@dataclass
class DualEncoderModel:
    """Embeddings, context/response encoders, and the interaction matrix."""

    embeddings: EmbeddingTable
    context_encoder: EncoderParams
    response_encoder: EncoderParams
    bilinear: np.ndarray
    train_embeddings: bool = False

    def __post_init__(self):
        enc_dim = self.context_encoder.output_dim
        if self.response_encoder.output_dim != enc_dim:
            raise DataError("context and response encoders disagree on output dim")
        if self.bilinear.shape != (enc_dim, enc_dim):
            raise DataError(
                f"interaction matrix must be {(enc_dim, enc_dim)}, "
                f"got {self.bilinear.shape}"
            )

    @property
    def tied(self) -> bool:
        return self.context_encoder is self.response_encoder

    @property
    def encoder_output_dim(self) -> int:
        return self.context_encoder.output_dim

    @classmethod
    def create(
        cls,
        embeddings: EmbeddingTable,
        variant: str = "gru",
        hidden: int = 128,
        seed: int = 0,
        tied: bool = True,
        train_embeddings: bool = False,
    ) -> "DualEncoderModel":
        rng = np.random.default_rng(seed)
        dim = embeddings.dim
        if variant == "gru":
            context = GruParams.create(dim, hidden, rng)
            response = context if tied else GruParams.create(dim, hidden, rng)
        elif variant == "attention":
            context = AttentionParams.create(dim, rng)
            response = context if tied else AttentionParams.create(dim, rng)
        else:
            raise DataError(f"unknown encoder variant {variant!r}")
        enc_dim = context.output_dim
        k = 1.0 / np.sqrt(enc_dim)
        bilinear = rng.uniform(-k, k, size=(enc_dim, enc_dim))
        return cls(embeddings, context, response, bilinear, train_embeddings)

    def _encoder_tensor_map(self) -> dict[str, np.ndarray]:
        if self.tied:
            return {f"encoder.{k}": v for k, v in self.context_encoder.tensors().items()}
        tensors = {
            f"context_encoder.{k}": v
            for k, v in self.context_encoder.tensors().items()
        }
        tensors.update(
            (f"response_encoder.{k}", v)
            for k, v in self.response_encoder.tensors().items()
        )
        return tensors

    def trainable_tensors(self) -> dict[str, np.ndarray]:
        """Name -> live array views; SGD updates these in place."""
        tensors = {"bilinear": self.bilinear}
        tensors.update(self._encoder_tensor_map())
        if self.train_embeddings:
            tensors["embeddings.matrix"] = self.embeddings.matrix
        return tensors

    def all_tensors(self) -> dict[str, np.ndarray]:
        tensors = {"embeddings.matrix": self.embeddings.matrix, "bilinear": self.bilinear}
        tensors.update(self._encoder_tensor_map())
        return tensors


def _check_finite(model: DualEncoderModel) -> None:
    for name, tensor in model.trainable_tensors().items():
        if not np.all(np.isfinite(tensor)):
            raise NonFiniteParameterError(name)


def _pad_batch(
    emb: EmbeddingTable, seqs: Sequence[Sequence[str]]
) -> tuple[np.ndarray, np.ndarray]:
    if not seqs:
        raise DataError("empty batch")
    longest = 0
    for s in seqs:
        if len(s) == 0:
            raise DataError("cannot encode an empty token sequence")
        longest = max(longest, len(s))
    idx = np.full((len(seqs), longest), emb.oov_index, dtype=np.int64)
    mask = np.zeros((len(seqs), longest))
    for i, s in enumerate(seqs):
        idx[i, : len(s)] = emb.indices(s)
        mask[i, : len(s)] = 1.0
    return idx, mask


def _gru_forward(p: GruParams, embedded: np.ndarray, mask: np.ndarray):
    batch, steps, _ = embedded.shape
    hidden = p.hidden
    h = np.zeros((batch, hidden))
    gate_z = np.empty((batch, steps, hidden))
    gate_r = np.empty((batch, steps, hidden))
    cand = np.empty((batch, steps, hidden))
    h_prev = np.empty((batch, steps, hidden))
    for t in range(steps):
        e = embedded[:, t]
        z = sigmoid(e @ p.w_z.T + h @ p.u_z.T + p.b_z)
        r = sigmoid(e @ p.w_r.T + h @ p.u_r.T + p.b_r)
        g = np.tanh(e @ p.w_h.T + (r * h) @ p.u_h.T + p.b_h)
        m = mask[:, t : t + 1]
        h_prev[:, t] = h
        gate_z[:, t] = z
        gate_r[:, t] = r
        cand[:, t] = g
        h = m * ((1.0 - z) * h + z * g) + (1.0 - m) * h
    return h, (gate_z, gate_r, cand, h_prev)


def _gru_backward(p: GruParams, embedded, mask, cache, g_out):
    gate_z, gate_r, cand, h_prev = cache
    grads = {name: np.zeros_like(t) for name, t in p.tensors().items()}
    d_embedded = np.zeros_like(embedded)
    g = g_out
    for t in reversed(range(embedded.shape[1])):
        m = mask[:, t : t + 1]
        z = gate_z[:, t]
        r = gate_r[:, t]
        c = cand[:, t]
        hp = h_prev[:, t]
        e = embedded[:, t]
        gm = g * m
        daz = gm * (c - hp) * z * (1.0 - z)
        dah = gm * z * (1.0 - c * c)
        dar = (dah @ p.u_h) * hp * r * (1.0 - r)
        grads["w_z"] += daz.T @ e
        grads["u_z"] += daz.T @ hp
        grads["b_z"] += daz.sum(axis=0)
        grads["w_r"] += dar.T @ e
        grads["u_r"] += dar.T @ hp
        grads["b_r"] += dar.sum(axis=0)
        grads["w_h"] += dah.T @ e
        grads["u_h"] += dah.T @ (r * hp)
        grads["b_h"] += dah.sum(axis=0)
        d_embedded[:, t] = daz @ p.w_z + dar @ p.w_r + dah @ p.w_h
        g = (
            g * (1.0 - m)
            + gm * (1.0 - z)
            + daz @ p.u_z
            + dar @ p.u_r
            + ((dah @ p.u_h) * r)
        )
    return grads, d_embedded


def _attn_forward(p: AttentionParams, embedded: np.ndarray, mask: np.ndarray):
    hidden = np.tanh(embedded @ p.proj.T)
    scores = hidden @ p.score
    scores = np.where(mask > 0.5, scores, -np.inf)
    scores -= scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    out = np.einsum("bt,btd->bd", weights, embedded)
    return out, (hidden, weights)


def _attn_backward(p: AttentionParams, embedded, mask, cache, g_out):
    hidden, weights = cache
    d_weights = np.einsum("bd,btd->bt", g_out, embedded)
    d_scores = weights * (d_weights - (weights * d_weights).sum(axis=1, keepdims=True))
    d_score_vec = np.einsum("bt,btd->d", d_scores, hidden)
    d_hidden = d_scores[..., None] * p.score
    d_pre = d_hidden * (1.0 - hidden * hidden)
    d_proj = np.einsum("btd,bte->de", d_pre, embedded)
    d_embedded = weights[..., None] * g_out[:, None, :] + d_pre @ p.proj
    return {"proj": d_proj, "score": d_score_vec}, d_embedded


def _forward(params: EncoderParams, embedded, mask):
    if isinstance(params, GruParams):
        return _gru_forward(params, embedded, mask)
    return _attn_forward(params, embedded, mask)


def _backward(params: EncoderParams, embedded, mask, cache, g_out):
    if isinstance(params, GruParams):
        return _gru_backward(params, embedded, mask, cache, g_out)
    return _attn_backward(params, embedded, mask, cache, g_out)


def encode_batch(
    params: EncoderParams, emb: EmbeddingTable, seqs: Sequence[Sequence[str]]
) -> np.ndarray:
    """Encode several token sequences at once; rows align with inputs."""
    idx, mask = _pad_batch(emb, seqs)
    out, _ = _forward(params, emb.matrix[idx], mask)
    return out

def encode(
    params: EncoderParams, emb: EmbeddingTable, tokens: Sequence[str]
) -> np.ndarray:
    """Encode one token sequence to a fixed-size vector."""
    return encode_batch(params, emb, [tokens])[0]


def attention_weights(
    params: AttentionParams, emb: EmbeddingTable, tokens: Sequence[str]
) -> np.ndarray:
    """Softmax weights the attention encoder assigns to each token."""
    idx, mask = _pad_batch(emb, [tokens])
    _, (_, weights) = _attn_forward(params, emb.matrix[idx], mask)
    return weights[0]


def score_pair(
    model: DualEncoderModel,
    context_tokens: Sequence[str],
    response_tokens: Sequence[str],
) -> float:
    """Pairwise probability sigmoid(enc(context)^T B enc(response))."""
    c = encode(model.context_encoder, model.embeddings, truncate_context(context_tokens))
    r = encode(
        model.response_encoder, model.embeddings, truncate_response(response_tokens)
    )
    return float(sigmoid(c @ model.bilinear @ r))


def score_candidates(
    model: DualEncoderModel,
    context_tokens: Sequence[str],
    candidate_token_seqs: Sequence[Sequence[str]],
) -> np.ndarray:
    """Probabilities of one context against many candidate responses."""
    c = encode(model.context_encoder, model.embeddings, truncate_context(context_tokens))
    responses = encode_batch(
        model.response_encoder,
        model.embeddings,
        [truncate_response(t) for t in candidate_token_seqs],
    )
    return sigmoid(responses @ (model.bilinear.T @ c))


def loss_and_gradients(
    model: DualEncoderModel, batch: "Sequence[TrainingExample]"
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean binary cross-entropy and gradients for every trainable tensor.

    Log terms are clamped at 1e-12 from both ends; the gradient uses the
    exact unclamped probabilities. Raises NonFiniteParameterError if any
    parameter tensor has gone non-finite.
    """
    if not batch:
        raise DataError("batch must be non-empty")
    _check_finite(model)
    emb = model.embeddings
    ctx_idx, ctx_mask = _pad_batch(
        emb, [truncate_context(ex.context_tokens) for ex in batch]
    )
    rsp_idx, rsp_mask = _pad_batch(
        emb, [truncate_response(ex.response_tokens) for ex in batch]
    )
    labels = np.array([ex.label for ex in batch], dtype=np.float64)
    ctx_embedded = emb.matrix[ctx_idx]
    rsp_embedded = emb.matrix[rsp_idx]
    c, ctx_cache = _forward(model.context_encoder, ctx_embedded, ctx_mask)
    r, rsp_cache = _forward(model.response_encoder, rsp_embedded, rsp_mask)
    logits = np.sum((c @ model.bilinear) * r, axis=1)
    p = sigmoid(logits)
    p_safe = np.clip(p, _LOG_EPS, 1.0 - _LOG_EPS)
    loss = float(
        -np.mean(labels * np.log(p_safe) + (1.0 - labels) * np.log(1.0 - p_safe))
    )

    d_logit = (p - labels) / len(batch)
    d_bilinear = c.T @ (r * d_logit[:, None])
    d_c = d_logit[:, None] * (r @ model.bilinear.T)
    d_r = d_logit[:, None] * (c @ model.bilinear)
    ctx_grads, d_ctx_embedded = _backward(
        model.context_encoder, ctx_embedded, ctx_mask, ctx_cache, d_c
    )
    rsp_grads, d_rsp_embedded = _backward(
        model.response_encoder, rsp_embedded, rsp_mask, rsp_cache, d_r
    )

    grads: dict[str, np.ndarray] = {"bilinear": d_bilinear}
    if model.tied:
        for key in ctx_grads:
            grads[f"encoder.{key}"] = ctx_grads[key] + rsp_grads[key]
    else:
        for key, value in ctx_grads.items():
            grads[f"context_encoder.{key}"] = value
        for key, value in rsp_grads.items():
            grads[f"response_encoder.{key}"] = value
    if model.train_embeddings:
        d_matrix = np.zeros_like(emb.matrix)
        np.add.at(d_matrix, ctx_idx, d_ctx_embedded)
        np.add.at(d_matrix, rsp_idx, d_rsp_embedded)
        grads["embeddings.matrix"] = d_matrix
    return loss, grads


@dataclass
class TrainConfig:
    """Hyperparameters for mini-batch SGD.

    ``max_iterations`` defaults to a desk-scale 2000 update steps
    (production-scale training in this family of models runs tens of
    thousands of iterations; nothing in the implementation caps it).
    """

    learning_rate: float = 0.5
    batch_size: int = 32
    max_iterations: int = 2000
    seed: int = 0
    gradient_clip_norm: float = 5.0
    eval_every: int = 100

    def __post_init__(self):
        if self.learning_rate < 0 or not np.isfinite(self.learning_rate):
            raise DataError("learning_rate must be finite and non-negative")
        for name in ("batch_size", "max_iterations", "eval_every"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be positive")
        if not (self.gradient_clip_norm > 0):
            raise DataError("gradient_clip_norm must be positive")
        if not 0 <= self.seed < 2**64:
            raise DataError("seed must fit in an unsigned 64-bit integer")


@dataclass
class TrainResult:
    model: DualEncoderModel
    loss_trace: list[tuple[int, float]]

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1][1]


def train(
    model: DualEncoderModel,
    examples: "Sequence[TrainingExample]",
    config: TrainConfig,
    resampler=None,
) -> TrainResult:
    """SGD with deterministic batch order; mutates ``model`` in place.

    Each epoch shuffles the examples with the config seed's generator and
    slices consecutive batches (the last one may be short). ``resampler``,
    if given, is called with the epoch number and must return that epoch's
    training examples; by default the set is fixed once.

    Raises DivergenceError when the loss goes non-finite.
    """
    if resampler is None and not examples:
        raise DataError("training set must be non-empty")
    rng = np.random.default_rng(config.seed)
    tensors = model.trainable_tensors()
    trace: list[tuple[int, float]] = []
    iteration = 0
    epoch = 0
    while iteration < config.max_iterations:
        if resampler is not None:
            examples = resampler(epoch)
            if not examples:
                raise DataError(f"resampler returned no examples for epoch {epoch}")
        order = rng.permutation(len(examples))
        for start in range(0, len(order), config.batch_size):
            if iteration >= config.max_iterations:
                break
            iteration += 1
            batch = [examples[i] for i in order[start : start + config.batch_size]]
            loss, grads = loss_and_gradients(model, batch)
            if not np.isfinite(loss):
                raise DivergenceError(iteration, loss)
            norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))
            step = config.learning_rate
            if norm > config.gradient_clip_norm:
                step *= config.gradient_clip_norm / norm
            for name, tensor in tensors.items():
                tensor -= step * grads[name]
            if iteration % config.eval_every == 0 or iteration == config.max_iterations:
                trace.append((iteration, loss))
                logger.debug("iteration %d loss %.6f", iteration, loss)
        epoch += 1
    return TrainResult(model, trace)


# Checkpoint container. Byte layout:
#   bytes 0..5    magic b"DRCKPT"
#   bytes 6..7    format version, uint16 little-endian
#   bytes 8..15   header length L, uint64 little-endian
#   bytes 16..16+L  UTF-8 JSON header (sorted keys):
#       {"bilinear_dim", "dim", "hidden", "tensors": [[name, shape], ...],
#        "tied", "train_embeddings", "variant", "vocab": [token, ...]}
#   then the tensors named in header order, float64 little-endian,
#   row-major, no padding.
_CKPT_MAGIC = b"DRCKPT"
_CKPT_VERSION = 1


def save_checkpoint(model: DualEncoderModel, path) -> None:
    tensors = model.all_tensors()
    variant = model.context_encoder.variant
    header = {
        "bilinear_dim": model.encoder_output_dim,
        "dim": model.embeddings.dim,
        "hidden": model.context_encoder.hidden if variant == "gru" else None,
        "tensors": [[name, list(t.shape)] for name, t in tensors.items()],
        "tied": model.tied,
        "train_embeddings": model.train_embeddings,
        "variant": variant,
        "vocab": model.embeddings.tokens_in_index_order(),
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<H", _CKPT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, tensor in tensors.items():
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_checkpoint(path) -> DualEncoderModel:
    with open(path, "rb") as fh:
        magic = fh.read(6)
        if magic != _CKPT_MAGIC:
            raise DataError(f"not a checkpoint file (magic {magic!r})")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != _CKPT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        tensors: dict[str, np.ndarray] = {}
        for name, shape in header["tensors"]:
            size = int(np.prod(shape)) if shape else 1
            data = fh.read(size * 8)
            if len(data) != size * 8:
                raise DataError(f"checkpoint truncated while reading {name!r}")
            tensors[name] = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
    vocab = {t: i for i, t in enumerate(header["vocab"])}
    embeddings = EmbeddingTable._restore(vocab, tensors["embeddings.matrix"])

    def build_params(prefix: str) -> EncoderParams:
        sub = {
            name[len(prefix) :]: tensor
            for name, tensor in tensors.items()
            if name.startswith(prefix)
        }
        if header["variant"] == "gru":
            return GruParams(**sub)
        return AttentionParams(**sub)

    if header["tied"]:
        context = build_params("encoder.")
        response = context
    else:
        context = build_params("context_encoder.")
        response = build_params("response_encoder.")
    return DualEncoderModel(
        embeddings=embeddings,
        context_encoder=context,
        response_encoder=response,
        bilinear=tensors["bilinear"],
        train_embeddings=bool(header["train_embeddings"]),
    )
