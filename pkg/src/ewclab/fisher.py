"""Diagonal empirical Fisher information over model parameters.

Per-parameter importance is estimated as the mean squared gradient of the
per-instance log-likelihood of the observed targets, accumulated one sample
at a time (batching before squaring would change the estimator). Includes
top-n vital-parameter selection per encoder layer and cross-task sensitivity
comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import InvalidInputError
from .model import ModelParams, TokenSeq, mlm_loss
from .tensor import Tensor


@dataclass
class FisherVector:
    """Nonnegative per-parameter scores aligned with a flattened ModelParams."""

    values: np.ndarray
    n_samples: int
    task_label: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise InvalidInputError("fisher values must be a flat vector")
        if self.values.size and self.values.min() < 0:
            raise InvalidInputError("fisher values must be nonnegative")


@dataclass
class VitalSet:
    layer: int
    indices: list[int]
    source_task: str


@dataclass
class SensitivityTable:
    """Per-task Fisher scores for a fixed set of vital parameter indices."""

    layer: int
    indices: list[int]
    tasks: list[str]
    scores: np.ndarray  # (len(indices), len(tasks))

    def fraction_greater(self, task_a: str, task_b: str) -> float:
        """Fraction of rows where task_a's score strictly exceeds task_b's."""
        ia, ib = self.tasks.index(task_a), self.tasks.index(task_b)
        return float(np.mean(self.scores[:, ia] > self.scores[:, ib]))


def mean_sq_grads(tensors: list[Tensor], loglik_fn, items) -> np.ndarray:
    """Mean squared gradient of ``loglik_fn(item)`` across items.

    The shared accumulation core: one backward pass per item, gradients
    squared before averaging.
    """
    if not items:
        raise InvalidInputError("no items to accumulate over")
    total = sum(t.size for t in tensors)
    acc = np.zeros(total)
    for item in items:
        for t in tensors:
            t.zero_grad()
        ll = loglik_fn(item)
        ll.backward()
        off = 0
        for t in tensors:
            g = t.grad.reshape(-1)
            acc[off:off + t.size] += g * g
            off += t.size
    acc /= len(items)
    for t in tensors:
        t.zero_grad()
    return acc


def estimate_diag_fisher(
    params: ModelParams, data: list[TokenSeq], n_samples: int, seed: int,
    task_label: str = "",
) -> FisherVector:
    """Empirical diagonal Fisher of the MLM log-likelihood over ``data``.

    Instances are drawn with replacement, deterministically per seed. The
    per-instance log-likelihood is the sum over that instance's masked
    targets. ``params`` values are left untouched.
    """
    if not data:
        raise InvalidInputError("data must be nonempty")
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(data), size=n_samples)

    def loglik(seq: TokenSeq) -> Tensor:
        # negated sum-NLL; the sign is irrelevant after squaring
        return tn.mul(mlm_loss(params, seq), float(len(seq.target_ids)))

    values = mean_sq_grads(params.tensors(), loglik, [data[i] for i in picks])
    return FisherVector(values=values, n_samples=n_samples, task_label=task_label)


def top_n_vital(fisher: FisherVector, params: ModelParams, layer: int, n: int) -> VitalSet:
    """Indices of the n largest Fisher scores within one encoder layer.

    Ties break toward the lower flat index; indices come back sorted by
    descending score.
    """
    if fisher.values.size != params.flat_len:
        raise InvalidInputError("fisher vector does not match parameter layout")
    lo, hi = params.layer_slice(layer)
    if n > hi - lo:
        raise InvalidInputError(f"n={n} exceeds layer parameter count {hi - lo}")
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    scores = fisher.values[lo:hi]
    order = np.argsort(-scores, kind="stable")[:n]
    return VitalSet(layer=layer, indices=[int(lo + i) for i in order],
                    source_task=fisher.task_label)


def sensitivity_compare(vital: VitalSet, fisher_by_task: dict[str, FisherVector]) -> SensitivityTable:
    """Score the vital indices under each task's Fisher vector."""
    if not fisher_by_task:
        raise InvalidInputError("fisher_by_task must be nonempty")
    lengths = {f.values.size for f in fisher_by_task.values()}
    if len(lengths) != 1:
        raise InvalidInputError(f"fisher vectors disagree on length: {sorted(lengths)}")
    (flat_len,) = lengths
    if vital.indices and max(vital.indices) >= flat_len:
        raise InvalidInputError("vital index out of range for fisher vectors")
    tasks = list(fisher_by_task)
    idx = np.asarray(vital.indices, dtype=np.intp)
    scores = np.column_stack([fisher_by_task[t].values[idx] for t in tasks])
    return SensitivityTable(layer=vital.layer, indices=list(vital.indices),
                            tasks=tasks, scores=scores)


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1] for plotting; constant input maps to zeros."""
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)
