"""Fixed-vocabulary tokenizer and a small transformer encoder with an MLM head.

The vocabulary is frozen: 4 special tokens, the arithmetic symbols, the ten
digits, and thirty corpus words (two disjoint 15-word lexicons used by the
grammar generators). Digits always tokenize one character per token, which
is what makes numeral prediction well-posed at this scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import ConfigError, InvalidInputError, TokenizeError
from .tensor import Tensor

PAD, MASK, CLS, SEP = 0, 1, 2, 3
PLUS, MINUS, EQUALS, PERIOD = 4, 5, 6, 7
DIGIT_0 = 8  # ids 8..17 are '0'..'9'

GRAMMAR_A_WORDS = (
    "the", "a", "every",
    "cat", "dog", "bird", "fox", "horse", "mouse",
    "sleeps", "runs", "sees", "chases", "finds", "likes",
)
GRAMMAR_B_WORDS = (
    "this", "that", "some",
    "ship", "river", "stone", "cloud", "tree", "house",
    "moves", "holds", "turns", "floats", "shakes", "guards",
)

VOCAB: tuple[str, ...] = (
    "[PAD]", "[MASK]", "[CLS]", "[SEP]",
    "+", "-", "=", ".",
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
) + GRAMMAR_A_WORDS + GRAMMAR_B_WORDS

VOCAB_SIZE = len(VOCAB)  # 48
TOKEN_TO_ID = {s: i for i, s in enumerate(VOCAB)}
DIGIT_IDS = tuple(range(DIGIT_0, DIGIT_0 + 10))
SIGN_IDS = (PLUS, MINUS)
WORD_ID_START = 18

_SURFACES_BY_LEN = sorted(TOKEN_TO_ID, key=len, reverse=True)


def tokenize(text: str) -> list[int]:
    """Greedy longest-match tokenization. Whitespace separates, [CLS] leads."""
    ids = [CLS]
    i = 0
    while i < len(text):
        if text[i].isspace():
            i += 1
            continue
        for surface in _SURFACES_BY_LEN:
            if text.startswith(surface, i):
                ids.append(TOKEN_TO_ID[surface])
                i += len(surface)
                break
        else:
            raise TokenizeError(f"no vocabulary entry covers {text[i]!r} at position {i}")
    return ids


@dataclass
class TokenSeq:
    """A token sequence with masked positions and their target tokens."""

    ids: list[int]
    mask_positions: list[int]
    target_ids: list[int]

    def __post_init__(self):
        if any(not (0 <= t < VOCAB_SIZE) for t in self.ids + self.target_ids):
            raise InvalidInputError("token id out of vocabulary range")
        if len(self.mask_positions) != len(self.target_ids):
            raise InvalidInputError("mask_positions and target_ids must align")
        prev = -1
        for p in self.mask_positions:
            if not (0 <= p < len(self.ids)) or p <= prev:
                raise InvalidInputError("mask positions must be strictly increasing and in range")
            if self.ids[p] != MASK:
                raise InvalidInputError(f"position {p} is not [MASK]")
            prev = p


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 2
    n_heads: int = 2
    d_model: int = 64
    d_ffn: int = 128
    max_seq: int = 32
    vocab_size: int = VOCAB_SIZE
    seed: int = 0

    def __post_init__(self):
        if min(self.n_layers, self.n_heads, self.d_model, self.d_ffn, self.max_seq) < 1:
            raise ConfigError("all model dimensions must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.vocab_size != VOCAB_SIZE:
            raise ConfigError(f"vocab_size is fixed at {VOCAB_SIZE} by the vocabulary table")

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers, "n_heads": self.n_heads, "d_model": self.d_model,
            "d_ffn": self.d_ffn, "max_seq": self.max_seq, "vocab_size": self.vocab_size,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class ModelParams:
    """Named, ordered collection of parameter tensors.

    Iteration order is fixed at construction and preserved by flatten,
    checkpointing and copies; flatten followed by unflatten is the identity.
    """

    def __init__(self, tensors: dict[str, Tensor], config: ModelConfig | None = None):
        self._tensors = dict(tensors)
        self.config = config
        self._slices: dict[str, tuple[int, int]] = {}
        off = 0
        for name, t in self._tensors.items():
            self._slices[name] = (off, off + t.size)
            off += t.size
        self.flat_len = off

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self):
        return list(self._tensors.values())

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def slice_of(self, name: str) -> tuple[int, int]:
        return self._slices[name]

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.data.reshape(-1) for t in self._tensors.values()])

    def load_flat(self, vec: np.ndarray):
        if vec.shape != (self.flat_len,):
            raise InvalidInputError(f"expected flat vector of length {self.flat_len}")
        for name, t in self._tensors.items():
            lo, hi = self._slices[name]
            t.data[...] = vec[lo:hi].reshape(t.shape)

    def unflatten(self, vec: np.ndarray) -> "ModelParams":
        out = self.copy()
        out.load_flat(vec)
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            {n: Tensor(t.data.copy(), requires_grad=t.requires_grad) for n, t in self._tensors.items()},
            config=self.config,
        )

    def zero_grads(self):
        for t in self._tensors.values():
            t.zero_grad()

    def layer_slice(self, layer: int) -> tuple[int, int]:
        """Flat-index range of one encoder block (attention + FFN + layernorms)."""
        prefix = f"layer{layer}."
        spans = [s for n, s in self._slices.items() if n.startswith(prefix)]
        if not spans:
            raise InvalidInputError(f"no parameters for layer {layer}")
        lo = min(s[0] for s in spans)
        hi = max(s[1] for s in spans)
        if hi - lo != sum(b - a for a, b in spans):
            raise InvalidInputError(f"layer {layer} parameters are not contiguous")
        return lo, hi


def build_model(config: ModelConfig) -> ModelParams:
    """Initialize encoder + MLM-head parameters, deterministic per seed."""
    rng = np.random.default_rng(config.seed)
    d, f, v = config.d_model, config.d_ffn, config.vocab_size

    def w(*shape):
        return Tensor(rng.normal(0.0, 0.02, shape), requires_grad=True)

    def zeros_(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones_(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    t: dict[str, Tensor] = {}
    t["tok_emb"] = w(v, d)
    t["pos_emb"] = w(config.max_seq, d)
    for i in range(config.n_layers):
        p = f"layer{i}."
        for proj in ("wq", "wk", "wv", "wo"):
            t[p + f"attn.{proj}"] = w(d, d)
            t[p + f"attn.{proj[1]}b"] = zeros_(d)
        t[p + "ln1.gain"] = ones_(d)
        t[p + "ln1.bias"] = zeros_(d)
        t[p + "ffn.w1"] = w(d, f)
        t[p + "ffn.b1"] = zeros_(f)
        t[p + "ffn.w2"] = w(f, d)
        t[p + "ffn.b2"] = zeros_(d)
        t[p + "ln2.gain"] = ones_(d)
        t[p + "ln2.bias"] = zeros_(d)
    t["mlm.w"] = w(d, v)
    t["mlm.b"] = zeros_(v)
    return ModelParams(t, config=config)


def _encode(params: ModelParams, ids: np.ndarray) -> Tensor:
    """Encoder stack over ``ids`` of shape (T,) or (B, T); returns hidden states."""
    cfg = params.config
    if cfg is None:
        raise InvalidInputError("ModelParams has no attached ModelConfig")
    seq_len = ids.shape[-1]
    if seq_len > cfg.max_seq:
        raise InvalidInputError(f"sequence length {seq_len} exceeds max_seq {cfg.max_seq}")
    h, dh = cfg.n_heads, cfg.d_model // cfg.n_heads
    scale = 1.0 / np.sqrt(dh)
    batched = ids.ndim == 2

    tok = tn.embedding_lookup(params["tok_emb"], ids.reshape(-1))
    if batched:
        tok = tn.reshape(tok, (ids.shape[0], seq_len, cfg.d_model))
    pos = tn.embedding_lookup(params["pos_emb"], np.arange(seq_len))
    x = tn.add(tok, pos)

    for i in range(cfg.n_layers):
        p = f"layer{i}."

        def proj(name, src):
            return tn.add(tn.matmul(src, params[p + f"attn.{name}"]), params[p + f"attn.{name[1]}b"])

        q, k, v = proj("wq", x), proj("wk", x), proj("wv", x)
        if batched:
            b = ids.shape[0]
            split = lambda t: tn.transpose(tn.reshape(t, (b, seq_len, h, dh)), (0, 2, 1, 3))
            join = lambda t: tn.reshape(tn.transpose(t, (0, 2, 1, 3)), (b, seq_len, cfg.d_model))
            swap = (0, 1, 3, 2)
        else:
            split = lambda t: tn.transpose(tn.reshape(t, (seq_len, h, dh)), (1, 0, 2))
            join = lambda t: tn.reshape(tn.transpose(t, (1, 0, 2)), (seq_len, cfg.d_model))
            swap = (0, 2, 1)
        q, k, v = split(q), split(k), split(v)
        scores = tn.mul(tn.matmul(q, tn.transpose(k, swap)), scale)
        ctx = join(tn.matmul(tn.softmax(scores, axis=-1), v))
        attn_out = tn.add(tn.matmul(ctx, params[p + "attn.wo"]), params[p + "attn.ob"])
        x = tn.layernorm(tn.add(x, attn_out), params[p + "ln1.gain"], params[p + "ln1.bias"])

        ff = tn.gelu(tn.add(tn.matmul(x, params[p + "ffn.w1"]), params[p + "ffn.b1"]))
        ff = tn.add(tn.matmul(ff, params[p + "ffn.w2"]), params[p + "ffn.b2"])
        x = tn.layernorm(tn.add(x, ff), params[p + "ln2.gain"], params[p + "ln2.bias"])
    return x


def forward_mlm(params: ModelParams, seq: TokenSeq) -> Tensor:
    """Logits of shape (len(mask_positions), vocab_size)."""
    x = _encode(params, np.asarray(seq.ids, dtype=np.intp))
    picked = tn.gather_rows(x, np.asarray(seq.mask_positions, dtype=np.intp))
    return tn.add(tn.matmul(picked, params["mlm.w"]), params["mlm.b"])


def mlm_loss(params: ModelParams, seq: TokenSeq) -> Tensor:
    if not seq.mask_positions:
        raise InvalidInputError("sequence has no mask positions")
    return tn.cross_entropy(forward_mlm(params, seq), seq.target_ids)


def batch_mlm_loss(params: ModelParams, seqs: list[TokenSeq]) -> Tensor:
    """Mean of per-instance MLM losses.

    Instances sharing (length, mask layout) are run as one stacked forward
    pass; the result matches the per-instance mean to float precision.
    """
    if not seqs:
        raise InvalidInputError("empty batch")
    groups: dict[tuple, list[TokenSeq]] = {}
    for s in seqs:
        if not s.mask_positions:
            raise InvalidInputError("sequence has no mask positions")
        groups.setdefault((len(s.ids), tuple(s.mask_positions)), []).append(s)

    total = None
    n = len(seqs)
    for (_, mask_pos), members in groups.items():
        if len(members) == 1:
            part = mlm_loss(params, members[0])
        else:
            part = _group_mlm_loss(params, members, mask_pos)
        term = tn.mul(part, len(members) / n)
        total = term if total is None else tn.add(total, term)
    return total


def _group_mlm_loss(params: ModelParams, seqs: list[TokenSeq], mask_pos: tuple) -> Tensor:
    cfg = params.config
    ids = np.asarray([s.ids for s in seqs], dtype=np.intp)
    x = _encode(params, ids)  # (B, T, d)
    b, seq_len = ids.shape
    m = len(mask_pos)
    # same mask layout for every row: gather along time via a transpose
    xt = tn.transpose(x, (1, 0, 2))
    picked = tn.transpose(tn.gather_rows(xt, np.asarray(mask_pos, dtype=np.intp)), (1, 0, 2))
    flat = tn.reshape(picked, (b * m, cfg.d_model))
    logits = tn.add(tn.matmul(flat, params["mlm.w"]), params["mlm.b"])
    targets = np.asarray([s.target_ids for s in seqs], dtype=np.intp).reshape(-1)
    return tn.cross_entropy(logits, targets)


def predict_masked(params: ModelParams, seq: TokenSeq, allowed_ids=None) -> list[int]:
    """Argmax token per mask position, optionally restricted to a subset.

    Ties break toward the lowest token id.
    """
    if allowed_ids is not None:
        cols = sorted(set(int(i) for i in allowed_ids))
        if not cols:
            raise InvalidInputError("allowed_ids must be nonempty when given")
        if cols[0] < 0 or cols[-1] >= params.config.vocab_size:
            raise InvalidInputError("allowed id out of vocabulary range")
    with tn.no_grad():
        logits = forward_mlm(params, seq).data
    if allowed_ids is None:
        return [int(i) for i in logits.argmax(axis=1)]
    sub = logits[:, cols]
    return [cols[int(i)] for i in sub.argmax(axis=1)]
