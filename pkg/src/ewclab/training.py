"""Optimizers, MLM training, consolidation-regularized training and sweeps.

The consolidated objective adds a quadratic penalty around a reference
parameter vector, weighted per coordinate by Fisher scores and a global
strength lambda. With lambda = 0 the penalty node contributes exact zeros,
so the regularized loop reproduces plain training bit for bit under a
shared seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import tensor as tn
from ._kernels import adam_update, ewc_terms
from .errors import ConfigError, InvalidInputError
from .fisher import FisherVector
from .model import ModelParams, batch_mlm_loss
from .tensor import Tensor, _node


@dataclass(frozen=True)
class OptConfig:
    algorithm: str = "adam"
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.algorithm!r}")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")  # lr=0 is a valid no-op run
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm, "lr": self.lr,
            "adam_beta1": self.adam_beta1, "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps, "batch_size": self.batch_size,
            "epochs": self.epochs, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptConfig":
        return cls(**d)


@dataclass
class EWCConfig:
    """Consolidation settings: strength, anchor parameters, Fisher weights."""

    lam: float
    ref_params: ModelParams
    fisher: FisherVector

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidInputError("lambda must be >= 0")
        if self.fisher.values.size != self.ref_params.flat_len:
            raise InvalidInputError("fisher length does not match reference parameters")
        self._ref_flat = self.ref_params.flatten()


@dataclass
class TraceRecord:
    iteration: int
    ce_loss: float
    ewc_penalty: float
    total_loss: float


@dataclass
class LossTrace:
    records: list[TraceRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def ce(self) -> list[float]:
        return [r.ce_loss for r in self.records]

    def penalties(self) -> list[float]:
        return [r.ewc_penalty for r in self.records]


@dataclass
class AggregateMetric:
    mean: float
    std: float
    n_runs: int


def aggregate(values: list[float]) -> AggregateMetric:
    """Mean and population standard deviation across runs."""
    if not values:
        raise InvalidInputError("aggregate over an empty list")
    arr = np.asarray(values, dtype=np.float64)
    return AggregateMetric(mean=float(arr.mean()), std=float(arr.std()), n_runs=len(values))


def fmt_mu_sigma(m: AggregateMetric) -> str:
    return f"{m.mean:.4f}_{m.std:.4f}"


def ewc_penalty(params: ModelParams, cfg: EWCConfig) -> Tensor:
    """Quadratic consolidation penalty as a differentiable scalar node.

    Value is sum_i (lam/2) * F_i * (theta_i - ref_i)^2; the gradient
    contribution to each parameter is lam * F_i * (theta_i - ref_i).
    """
    if params.names() != cfg.ref_params.names():
        raise InvalidInputError("parameter names do not match the reference")
    total = 0.0
    grads = []
    tensors = []
    for name, t in params.items():
        lo, hi = params.slice_of(name)
        rlo, rhi = cfg.ref_params.slice_of(name)
        if (hi - lo) != (rhi - rlo):
            raise InvalidInputError(f"shape mismatch for {name}")
        val, grad = ewc_terms(
            np.ascontiguousarray(t.data.reshape(-1)),
            cfg._ref_flat[rlo:rhi], cfg.fisher.values[rlo:rhi], cfg.lam,
        )
        total += val
        grads.append(grad.reshape(t.shape))
        tensors.append(t)

    def bw(g):
        gs = float(g)
        for t, grad in zip(tensors, grads):
            if t.requires_grad:
                t.grad += gs * grad

    return _node(np.asarray(total), tuple(tensors), bw, "ewc_penalty")


class _Adam:
    def __init__(self, params: ModelParams):
        self.m = {n: np.zeros(t.size) for n, t in params.items()}
        self.v = {n: np.zeros(t.size) for n, t in params.items()}
        self.t = 0

    def step(self, params: ModelParams, cfg: OptConfig):
        self.t += 1
        for name, t in params.items():
            adam_update(t.data.reshape(-1), t.grad.reshape(-1),
                        self.m[name], self.v[name], self.t,
                        cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)


class _Sgd:
    def __init__(self, params: ModelParams):
        pass

    def step(self, params: ModelParams, cfg: OptConfig):
        for _, t in params.items():
            t.data -= cfg.lr * t.grad


def _as_seqs(dataset):
    return [getattr(x, "seq", x) for x in dataset]


def _train_loop(params, dataset, opt: OptConfig, ewc: EWCConfig | None,
                dataset_id: str = "") -> tuple[ModelParams, LossTrace]:
    seqs = _as_seqs(dataset)
    if not seqs:
        raise InvalidInputError("dataset must be nonempty")
    params = params.copy()
    optimizer = _Adam(params) if opt.algorithm == "adam" else _Sgd(params)
    trace = LossTrace(meta={
        "lambda": ewc.lam if ewc is not None else 0.0,
        "seed": opt.seed, "dataset_id": dataset_id,
    })
    t_start = time.perf_counter()
    iteration = 0
    for epoch in range(opt.epochs):
        order = np.random.default_rng([opt.seed, epoch]).permutation(len(seqs))
        for lo in range(0, len(seqs), opt.batch_size):
            batch = [seqs[i] for i in order[lo:lo + opt.batch_size]]
            params.zero_grads()
            ce = batch_mlm_loss(params, batch)
            if ewc is not None:
                pen = ewc_penalty(params, ewc)
                total = tn.add(ce, pen)
                pen_val = pen.item()
            else:
                total = ce
                pen_val = 0.0
            total.backward()
            optimizer.step(params, opt)
            trace.records.append(TraceRecord(iteration, ce.item(), pen_val, total.item()))
            iteration += 1
    trace.meta["wall_clock"] = time.perf_counter() - t_start
    return params, trace


def train(params: ModelParams, dataset, opt: OptConfig,
          dataset_id: str = "") -> tuple[ModelParams, LossTrace]:
    """Plain minibatch MLM training; input params are not mutated."""
    return _train_loop(params, dataset, opt, None, dataset_id)


def train_ewc(params: ModelParams, dataset, opt: OptConfig, ewc: EWCConfig,
              dataset_id: str = "") -> tuple[ModelParams, LossTrace]:
    """MLM training with the consolidation penalty added every iteration."""
    return _train_loop(params, dataset, opt, ewc, dataset_id)


def lambda_sweep(params: ModelParams, dataset, opt: OptConfig,
                 ref_params: ModelParams, fisher: FisherVector,
                 grid: list[float], max_workers: int = 1,
                 dataset_id: str = "") -> dict[float, LossTrace]:
    """Independent consolidated runs from identical initial state, one per lambda."""
    if not grid:
        raise InvalidInputError("lambda grid must be nonempty")
    if any(lam < 0 for lam in grid):
        raise InvalidInputError("lambda values must be >= 0")

    def one(lam: float) -> LossTrace:
        cfg = EWCConfig(lam=lam, ref_params=ref_params, fisher=fisher)
        _, trace = train_ewc(params, dataset, opt, cfg, dataset_id=dataset_id)
        return trace

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as ex:
            traces = list(ex.map(one, grid))
    else:
        traces = [one(lam) for lam in grid]
    return {lam: tr for lam, tr in zip(grid, traces)}


def select_lambda(traces: dict[float, LossTrace], ce_drop: float = 0.5) -> float:
    """Pick the strongest consolidation that still converges.

    Scanning from the largest lambda down, returns the first one whose final
    task loss fell to ``ce_drop`` of its initial value; falls back to the
    smallest lambda if none qualifies.
    """
    for lam in sorted(traces, reverse=True):
        ce = traces[lam].ce()
        if ce and ce[-1] <= ce_drop * ce[0]:
            return lam
    return min(traces)
