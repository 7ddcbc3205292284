"""Arithmetic evaluation, held-out MLM loss, and parameter-space point sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .errors import DecodeError, InvalidInputError
from .model import (
    DIGIT_0, DIGIT_IDS, MINUS, SIGN_IDS, ModelParams, TokenSeq,
    mlm_loss, predict_masked,
)
from .training import AggregateMetric
from .tsne import ParamPointSet

LN_RMSE_FLOOR = 1e-8


def decode_numeral(ids: list[int]) -> int:
    """Signed integer from a sign token followed by zero-padded digit tokens."""
    if not ids:
        raise DecodeError("empty prediction")
    if ids[0] not in SIGN_IDS:
        raise DecodeError(f"leading token id {ids[0]} is not a sign")
    digits = []
    for t in ids[1:]:
        if t not in DIGIT_IDS:
            raise DecodeError(f"token id {t} is not a digit")
        digits.append(str(t - DIGIT_0))
    if not digits:
        raise DecodeError("no digit tokens after the sign")
    value = int("".join(digits))
    return -value if ids[0] == MINUS else value


def ln_rmse(preds: list[int], truths: list[int], mode: str = "ln_of_rmse") -> float:
    """Arithmetic error metric.

    Default is ln(RMSE) with a small floor so perfect prediction stays
    finite. ``mode="rmse_of_ln"`` instead takes the RMSE of symlog-mapped
    values, sign(x) * ln(1 + |x|), which tolerates zeros and negatives.
    """
    if not preds or len(preds) != len(truths):
        raise InvalidInputError("preds and truths must be equal-length and nonempty")
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if mode == "ln_of_rmse":
        rmse = float(np.sqrt(np.mean((p - t) ** 2)))
        return float(np.log(max(rmse, LN_RMSE_FLOOR)))
    if mode == "rmse_of_ln":
        sl = lambda x: np.sign(x) * np.log1p(np.abs(x))
        return float(np.sqrt(np.mean((sl(p) - sl(t)) ** 2)))
    raise InvalidInputError(f"unknown ln_rmse mode {mode!r}")


def heldout_mlm_loss(params: ModelParams, corpus: list[TokenSeq]) -> float:
    """Mean per-sequence MLM loss without touching params or gradients."""
    if not corpus:
        raise InvalidInputError("corpus must be nonempty")
    with tn.no_grad():
        return float(np.mean([mlm_loss(params, s).item() for s in corpus]))


def predict_numeral(params: ModelParams, seq: TokenSeq) -> int:
    """Decode the model's answer with slot-appropriate restrictions.

    The sign slot picks between the sign tokens, the digit slots between
    digit tokens, so decoding can never fail.
    """
    signs = predict_masked(params, seq, allowed_ids=SIGN_IDS)
    digits = predict_masked(params, seq, allowed_ids=DIGIT_IDS)
    return decode_numeral([signs[0]] + digits[1:])


def eval_arithmetic(params: ModelParams, instances) -> tuple[float, list[dict]]:
    """ln(RMSE) over instances plus one decoded-sample row per instance."""
    if not instances:
        raise InvalidInputError("no instances to evaluate")
    samples = []
    preds, truths = [], []
    for inst in instances:
        pred = predict_numeral(params, inst.seq)
        preds.append(pred)
        truths.append(inst.result)
        samples.append({"a": inst.a, "op": inst.op, "b": inst.b,
                        "truth": inst.result, "prediction": pred})
    return ln_rmse(preds, truths), samples


@dataclass
class EvalReport:
    """Aggregated evaluation for one model variant across seeds."""

    ln_rmse: AggregateMetric
    heldout: dict[str, AggregateMetric]
    samples: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        pack = lambda m: {"mean": m.mean, "std": m.std, "n_runs": m.n_runs}
        return {
            "ln_rmse": pack(self.ln_rmse),
            "heldout": {k: pack(v) for k, v in self.heldout.items()},
            "samples": self.samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        unpack = lambda m: AggregateMetric(mean=m["mean"], std=m["std"], n_runs=m["n_runs"])
        return cls(
            ln_rmse=unpack(d["ln_rmse"]),
            heldout={k: unpack(v) for k, v in d["heldout"].items()},
            samples=list(d["samples"]),
        )


_ATTN_MATRICES = ("attn.wq", "attn.wk", "attn.wv", "attn.wo")


def collect_layer_points(checkpoints: dict[str, ModelParams], layer: int) -> ParamPointSet:
    """One point per attention neuron of the chosen encoder layer, per task.

    A neuron's point is its incoming-weight vector (one column of a
    projection matrix); the four d x d attention projections give uniform
    dimensionality across matrices, unlike the FFN blocks.
    """
    if not checkpoints:
        raise InvalidInputError("no checkpoints given")
    configs = {str(p.config.to_dict()) for p in checkpoints.values() if p.config is not None}
    if len(configs) != 1 or any(p.config is None for p in checkpoints.values()):
        raise InvalidInputError("all checkpoints must share one ModelConfig")

    rows, labels = [], []
    for task in sorted(checkpoints):
        params = checkpoints[task]
        for mat in sorted(_ATTN_MATRICES):
            name = f"layer{layer}.{mat}"
            if name not in params:
                raise InvalidInputError(f"layer {layer} not present in checkpoint {task!r}")
            w = params[name].data
            for j in range(w.shape[1]):
                rows.append(w[:, j])
                labels.append(task)
    return ParamPointSet(points=np.asarray(rows), labels=labels, layer=layer)
