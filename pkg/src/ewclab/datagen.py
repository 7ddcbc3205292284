"""Synthetic corpora: arithmetic instances and two disjoint-lexicon grammars.

Operand magnitudes follow a configurable distribution over powers-of-ten
buckets. Results render into a fixed-width masked slot (sign plus zero-padded
digits) so every instance has the same mask arity and decoding is trivial.

The text side generates sentences from a tiny PCFG (S -> NP VP; NP -> Det
Noun; VP -> Verb NP | Verb) over one of two disjoint 15-word lexicons and
packs them, period-terminated, into lines of at most LINE_MAX_TOKENS tokens.
Packing keeps lines long enough that Bernoulli masking with a forced minimum
of one mask per line stays within a percent of the nominal rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, RenderError
from .model import (
    CLS, DIGIT_0, MASK, MINUS, PERIOD, PLUS, WORD_ID_START, TokenSeq, tokenize,
)

DEFAULT_EXPONENT_PROBS = (0.30, 0.30, 0.20, 0.15, 0.05)
LINE_MAX_TOKENS = 32  # matches the default model max_seq

OP_ADD = "+"
OP_SUB = "-"

# role offsets within each grammar's 15-word lexicon
_DET = range(0, 3)
_NOUN = range(3, 9)
_VERB = range(9, 15)

GRAMMARS = {
    "GRAMMAR_A": WORD_ID_START,
    "GRAMMAR_B": WORD_ID_START + 15,
}


@dataclass(frozen=True)
class ExponentDist:
    """Distribution over operand magnitude buckets.

    Bucket e=0 draws uniformly from [0, 10); bucket e>0 from [10^e, 10^(e+1)).
    """

    probs: tuple[float, ...] = DEFAULT_EXPONENT_PROBS

    def __post_init__(self):
        p = tuple(float(x) for x in self.probs)
        object.__setattr__(self, "probs", p)
        if not p or any(x < 0 for x in p):
            raise InvalidInputError("bucket probabilities must be nonnegative and nonempty")
        if abs(sum(p) - 1.0) > 1e-9:
            raise InvalidInputError(f"bucket probabilities sum to {sum(p)}, expected 1")

    @property
    def e_max(self) -> int:
        return len(self.probs) - 1


@dataclass
class ArithInstance:
    a: int
    op: str
    b: int
    result: int
    seq: TokenSeq


@dataclass(frozen=True)
class CorpusSpec:
    grammar: str
    n_sentences: int
    mask_rate: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.grammar not in GRAMMARS:
            raise InvalidInputError(f"unknown grammar {self.grammar!r}")
        if self.n_sentences < 1:
            raise InvalidInputError("n_sentences must be >= 1")
        if not (0.0 < self.mask_rate < 1.0):
            raise InvalidInputError("mask_rate must lie strictly between 0 and 1")


def sample_operand(dist: ExponentDist, rng: np.random.Generator) -> int:
    e = int(rng.choice(len(dist.probs), p=dist.probs))
    if e == 0:
        return int(rng.integers(0, 10))
    return int(rng.integers(10**e, 10 ** (e + 1)))


def result_width(e_max: int) -> int:
    """Digit slots in the rendered result (sign slot excluded)."""
    return e_max + 2


def render_instance(a: int, op: str, b: int, e_max: int = 4) -> ArithInstance:
    """Render ``a op b =`` with a masked sign+digits answer slot.

    The answer is zero-padded to ``result_width(e_max)`` digits with an
    explicit sign token, so mask arity is constant across instances.
    """
    if op not in (OP_ADD, OP_SUB):
        raise InvalidInputError(f"op must be '+' or '-', got {op!r}")
    if a < 0 or b < 0:
        raise RenderError("operands must be nonnegative")
    bound = 10 ** (e_max + 1)
    if a >= bound or b >= bound:
        raise RenderError(f"operand exceeds bucket bound {bound - 1}")
    result = a + b if op == OP_ADD else a - b
    w = result_width(e_max)
    if abs(result) >= 10**w:
        raise RenderError(f"result {result} does not fit {w} digit slots")

    ids = tokenize(f"{a}{op}{b}=")
    start = len(ids)
    ids = ids + [MASK] * (w + 1)
    targets = [PLUS if result >= 0 else MINUS]
    targets += [DIGIT_0 + int(c) for c in str(abs(result)).zfill(w)]
    seq = TokenSeq(ids, list(range(start, start + w + 1)), targets)
    return ArithInstance(a=a, op=op, b=b, result=result, seq=seq)


def gen_arith_dataset(n: int, dist: ExponentDist, seed: int) -> list[ArithInstance]:
    """i.i.d. instances, op uniform over {+, -}; duplicates permitted."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        a = sample_operand(dist, rng)
        b = sample_operand(dist, rng)
        op = OP_ADD if rng.integers(2) == 0 else OP_SUB
        out.append(render_instance(a, op, b, e_max=dist.e_max))
    return out


def _sentence(rng: np.random.Generator, base: int) -> list[int]:
    det = base + int(rng.choice(list(_DET)))
    noun = base + int(rng.choice(list(_NOUN)))
    verb = base + int(rng.choice(list(_VERB)))
    if rng.random() < 0.5:
        return [det, noun, verb]
    det2 = base + int(rng.choice(list(_DET)))
    noun2 = base + int(rng.choice(list(_NOUN)))
    return [det, noun, verb, det2, noun2]


def gen_text_corpus(spec: CorpusSpec) -> list[TokenSeq]:
    """Masked-LM lines sampled from the grammar named in ``spec``."""
    rng = np.random.default_rng(spec.seed)
    base = GRAMMARS[spec.grammar]

    lines: list[list[int]] = []
    current = [CLS]
    for _ in range(spec.n_sentences):
        s = _sentence(rng, base) + [PERIOD]
        if len(current) + len(s) > LINE_MAX_TOKENS:
            lines.append(current)
            current = [CLS]
        current.extend(s)
    if len(current) > 1:
        lines.append(current)

    out = []
    for line in lines:
        n = len(line)
        draws = rng.random(n) < spec.mask_rate
        positions = [i for i in range(1, n) if draws[i]]
        if not positions:
            positions = [int(rng.integers(1, n))]
        targets = [line[p] for p in positions]
        ids = list(line)
        for p in positions:
            ids[p] = MASK
        out.append(TokenSeq(ids, positions, targets))
    return out


# ---------------------------------------------------------------------------
# JSON-lines persistence

def save_dataset_jsonl(instances: list[ArithInstance], path):
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(json.dumps({
                "a": inst.a, "op": inst.op, "b": inst.b, "result": inst.result,
                "ids": inst.seq.ids, "mask_positions": inst.seq.mask_positions,
                "targets": inst.seq.target_ids,
            }) + "\n")


def load_dataset_jsonl(path) -> list[ArithInstance]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            d = json.loads(line)
            seq = TokenSeq(d["ids"], d["mask_positions"], d["targets"])
            out.append(ArithInstance(a=d["a"], op=d["op"], b=d["b"], result=d["result"], seq=seq))
    return out


def save_corpus_jsonl(seqs: list[TokenSeq], path):
    with open(path, "w", encoding="utf-8") as f:
        for s in seqs:
            f.write(json.dumps({
                "ids": s.ids, "mask_positions": s.mask_positions, "targets": s.target_ids,
            }) + "\n")


def load_corpus_jsonl(path) -> list[TokenSeq]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            d = json.loads(line)
            out.append(TokenSeq(d["ids"], d["mask_positions"], d["targets"]))
    return out
