"""
Desk-scale reference encoder and the three pretraining losses.

The encoder is deliberately tiny: an embedding table followed by one tanh
feed-forward layer. The sequence representation is the layer applied to the
mean embedding, and a token representation is the layer applied to that
token's embedding. The losses only see these representations, so they do not
depend on the encoder.

Parameters of the encoder and of the heads live in one flat float64 vector
each; named matrices are views into it. Every loss returns its value and the
exact gradients with respect to both vectors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .dsl_core import OPERATORS, Operator
from .errors import SpanOutOfRange
from .pretrain_gen import MaskedExample, OperatorExample, RankPair
from .text import MASK, tokenize

UNK = "[UNK]"
CLS = "[CLS]"
SEP = "[SEP]"
SPECIAL_TOKENS = (UNK, CLS, SEP, MASK)

N_OPERATORS = len(OPERATORS)


class Vocab:
    """Lowercased token -> id. Unknown tokens map to the reserved UNK id 0."""

    def __init__(self, tokens: Iterable[str]):
        self.tokens: List[str] = list(SPECIAL_TOKENS)
        self.index: Dict[str, int] = {t: i for i, t in enumerate(self.tokens)}
        for t in tokens:
            key = t if t in SPECIAL_TOKENS else t.lower()
            if key not in self.index:
                self.index[key] = len(self.tokens)
                self.tokens.append(key)

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        key = token if token in SPECIAL_TOKENS else token.lower()
        return self.index.get(key, 0)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.id(t) for t in tokens], dtype=np.int64)


def build_vocab(sequences: Iterable[Sequence[str]]) -> Vocab:
    """Vocabulary over all tokens, sorted so it does not depend on corpus order."""
    seen = set()
    for seq in sequences:
        seen.update(t if t in SPECIAL_TOKENS else t.lower() for t in seq)
    return Vocab(sorted(seen - set(SPECIAL_TOKENS)))


class _FlatParams:
    """A flat parameter vector with named, reshaped views."""

    shapes: Dict[str, Tuple[int, ...]]

    def __init__(self, shapes: Dict[str, Tuple[int, ...]], params: Optional[np.ndarray] = None):
        self.shapes = dict(shapes)
        self.offsets: Dict[str, Tuple[int, int]] = {}
        pos = 0
        for name, shape in self.shapes.items():
            size = int(np.prod(shape))
            self.offsets[name] = (pos, pos + size)
            pos += size
        if params is None:
            params = np.zeros(pos, dtype=np.float64)
        if params.shape != (pos,):
            raise ValueError(f"expected {pos} parameters, got {params.shape}")
        self.params = params.astype(np.float64, copy=True)

    @property
    def size(self) -> int:
        return self.params.size

    def view(self, name: str, flat: Optional[np.ndarray] = None) -> np.ndarray:
        lo, hi = self.offsets[name]
        src = self.params if flat is None else flat
        return src[lo:hi].reshape(self.shapes[name])

    def zeros(self) -> np.ndarray:
        return np.zeros_like(self.params)


@dataclass
class _PoolCache:
    ids: np.ndarray
    mean: np.ndarray
    h: np.ndarray


@dataclass
class _TokenCache:
    ids: np.ndarray
    x: np.ndarray
    h: np.ndarray


class TinyEncoder(_FlatParams):
    def __init__(self, vocab: Vocab, dim: int = 32, params: Optional[np.ndarray] = None):
        self.vocab = vocab
        self.dim = dim
        super().__init__(
            {"embeddings": (len(vocab), dim), "mixer_w": (dim, dim), "mixer_b": (dim,)},
            params,
        )

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return self.vocab.encode(tokens)

    # h_[CLS] = tanh(W mean(E[x]) + b)
    def pool(self, ids: np.ndarray) -> Tuple[np.ndarray, _PoolCache]:
        e, w, b = self.view("embeddings"), self.view("mixer_w"), self.view("mixer_b")
        mean = e[ids].mean(axis=0)
        h = np.tanh(w @ mean + b)
        return h, _PoolCache(ids, mean, h)

    def pool_backward(self, grad_h: np.ndarray, cache: _PoolCache, grad: np.ndarray) -> None:
        g_a = grad_h * (1.0 - cache.h ** 2)
        self.view("mixer_w", grad)[...] += np.outer(g_a, cache.mean)
        self.view("mixer_b", grad)[...] += g_a
        g_mean = self.view("mixer_w").T @ g_a
        np.add.at(self.view("embeddings", grad), cache.ids, g_mean / len(cache.ids))

    # h_t = tanh(W E[x_t] + b), one row per id
    def token_reps(self, ids: np.ndarray) -> Tuple[np.ndarray, _TokenCache]:
        e, w, b = self.view("embeddings"), self.view("mixer_w"), self.view("mixer_b")
        x = e[ids]
        h = np.tanh(x @ w.T + b)
        return h, _TokenCache(ids, x, h)

    def token_backward(self, grad_h: np.ndarray, cache: _TokenCache, grad: np.ndarray) -> None:
        g_a = grad_h * (1.0 - cache.h ** 2)
        self.view("mixer_w", grad)[...] += g_a.T @ cache.x
        self.view("mixer_b", grad)[...] += g_a.sum(axis=0)
        np.add.at(self.view("embeddings", grad), cache.ids, g_a @ self.view("mixer_w"))


class LossHeads(_FlatParams):
    def __init__(self, vocab_size: int, dim: int = 32, params: Optional[np.ndarray] = None):
        self.vocab_size = vocab_size
        self.dim = dim
        super().__init__(
            {
                "rank_w": (dim,),
                "rank_b": (1,),
                "op_w": (N_OPERATORS, dim),
                "op_b": (N_OPERATORS,),
                "mlm_w": (vocab_size, dim),
                "mlm_b": (vocab_size,),
            },
            params,
        )

    def rank_score(self, h: np.ndarray) -> float:
        return float(np.tanh(self.view("rank_w") @ h + self.view("rank_b")[0]))


def init_model(vocab: Vocab, dim: int = 32, seed: int = 42) -> Tuple[TinyEncoder, LossHeads]:
    rng = np.random.default_rng(seed)
    enc = TinyEncoder(vocab, dim)
    enc.view("embeddings")[...] = rng.normal(0.0, 0.5, size=(len(vocab), dim))
    enc.view("mixer_w")[...] = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(dim, dim))
    heads = LossHeads(len(vocab), dim)
    heads.params[:] = rng.normal(0.0, 0.1, size=heads.size)
    return enc, heads


@dataclass
class LossResult:
    loss: float
    enc_grad: np.ndarray
    heads_grad: np.ndarray
    # pair order / label / masked-token accuracy of this instance
    accuracy: float


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------- VIR

def vir_tokens(question: str, sentences: Sequence[str]) -> List[str]:
    tokens = [CLS, *tokenize(question), SEP]
    for s in sentences:
        tokens.extend(tokenize(s))
    return tokens


def loss_vir(pair: RankPair, enc: TinyEncoder, heads: LossHeads) -> LossResult:
    """RankNet loss -log sigmoid(s_u - s_v), s = tanh(rank head of the pooled sequence)."""
    enc_grad, heads_grad = enc.zeros(), heads.zeros()
    w, b = heads.view("rank_w"), heads.view("rank_b")[0]

    h_u, cache_u = enc.pool(enc.encode(vir_tokens(pair.question, pair.higher.sentences())))
    h_v, cache_v = enc.pool(enc.encode(vir_tokens(pair.question, pair.lower.sentences())))
    s_u = np.tanh(w @ h_u + b)
    s_v = np.tanh(w @ h_v + b)
    d = s_u - s_v
    loss = float(np.logaddexp(0.0, -d))

    g_d = -1.0 / (1.0 + np.exp(d))
    g_zu = g_d * (1.0 - s_u ** 2)
    g_zv = -g_d * (1.0 - s_v ** 2)
    heads.view("rank_w", heads_grad)[...] += g_zu * h_u + g_zv * h_v
    heads.view("rank_b", heads_grad)[...] += g_zu + g_zv
    enc.pool_backward(g_zu * w, cache_u, enc_grad)
    enc.pool_backward(g_zv * w, cache_v, enc_grad)
    return LossResult(loss, enc_grad, heads_grad, float(d > 0))


# ---------------------------------------------------------------- VOP

def operand_positions(exm: OperatorExample) -> Tuple[List[str], List[int]]:
    if len(exm.operand_spans) < 2:
        raise SpanOutOfRange(f"{exm.example_id}: an operator example needs at least two operands")
    for s in exm.operand_spans:
        if not 0 <= s.evidence_index < len(exm.evidence):
            raise SpanOutOfRange(f"{exm.example_id}: evidence index {s.evidence_index} out of range")
    tokens, positions = exm.token_sequence()
    for s, p in zip(exm.operand_spans, positions):
        limit = len(tokenize(exm.evidence[s.evidence_index].sentence))
        if not 0 <= s.token_start < s.token_end <= limit or p >= len(tokens):
            raise SpanOutOfRange(
                f"{exm.example_id}: span [{s.token_start}, {s.token_end}) outside evidence {s.evidence_index}"
            )
    return tokens, positions


def loss_vop(exm: OperatorExample, enc: TinyEncoder, heads: LossHeads) -> LossResult:
    """NLL of the operator given the mean of the operands' first-token representations."""
    tokens, positions = operand_positions(exm)
    enc_grad, heads_grad = enc.zeros(), heads.zeros()
    ids = enc.encode(tokens)[positions]

    reps, cache = enc.token_reps(ids)
    h_op = reps.mean(axis=0)
    w, b = heads.view("op_w"), heads.view("op_b")
    log_p = _log_softmax(w @ h_op + b)
    label = exm.label.index
    loss = float(-log_p[label])

    g_logits = np.exp(log_p)
    g_logits[label] -= 1.0
    heads.view("op_w", heads_grad)[...] += np.outer(g_logits, h_op)
    heads.view("op_b", heads_grad)[...] += g_logits
    g_h = np.tile(w.T @ g_logits / len(ids), (len(ids), 1))
    enc.token_backward(g_h, cache, enc_grad)
    return LossResult(loss, enc_grad, heads_grad, float(int(np.argmax(log_p)) == label))


def predict_operator(exm: OperatorExample, enc: TinyEncoder, heads: LossHeads) -> Operator:
    tokens, positions = operand_positions(exm)
    reps, _ = enc.token_reps(enc.encode(tokens)[positions])
    logits = heads.view("op_w") @ reps.mean(axis=0) + heads.view("op_b")
    return OPERATORS[int(np.argmax(logits))]


# ---------------------------------------------------------------- VKM

def loss_vkm(exm: MaskedExample, enc: TinyEncoder, heads: LossHeads) -> LossResult:
    """Mean cross-entropy over the masked positions only."""
    positions = exm.mask_positions
    if not positions:
        raise SpanOutOfRange(f"{exm.example_id}: no masked positions")
    if max(positions) >= len(exm.masked_sequence) or min(positions) < 0:
        raise SpanOutOfRange(f"{exm.example_id}: mask position outside the sequence")
    enc_grad, heads_grad = enc.zeros(), heads.zeros()

    ids = enc.encode(exm.masked_sequence)[positions]
    targets = np.array([enc.vocab.id(t) for _, t in exm.targets], dtype=np.int64)
    reps, cache = enc.token_reps(ids)
    w, b = heads.view("mlm_w"), heads.view("mlm_b")
    log_p = _log_softmax(reps @ w.T + b)
    rows = np.arange(len(targets))
    loss = float(-log_p[rows, targets].mean())

    g_logits = np.exp(log_p)
    g_logits[rows, targets] -= 1.0
    g_logits /= len(targets)
    heads.view("mlm_w", heads_grad)[...] += g_logits.T @ reps
    heads.view("mlm_b", heads_grad)[...] += g_logits.sum(axis=0)
    enc.token_backward(g_logits @ w, cache, enc_grad)
    accuracy = float((log_p.argmax(axis=1) == targets).mean())
    return LossResult(loss, enc_grad, heads_grad, accuracy)


LOSSES: Dict[str, Callable[..., LossResult]] = {"vir": loss_vir, "vop": loss_vop, "vkm": loss_vkm}


# ---------------------------------------------------------------- gradient checking

def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of ``f`` at ``x`` (x is restored afterwards)."""
    grad = np.zeros_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + eps
        plus = f(x)
        x[i] = orig - eps
        minus = f(x)
        x[i] = orig
        grad[i] = (plus - minus) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(num / den)
