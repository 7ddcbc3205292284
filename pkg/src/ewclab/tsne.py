"""Exact t-SNE for small point sets.

Gaussian affinities are calibrated per point by bisecting the bandwidth
until the conditional distribution hits the target perplexity; the 2-D
embedding then minimizes KL(P || Q) against a Student-t Q by gradient
descent with momentum and early exaggeration. O(N^2) throughout, which is
the right trade at a few thousand points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import pairwise_sq_dists, perplexity_calibrate, student_terms
from .errors import DegenerateInputError, InvalidInputError

AFFINITY_FLOOR = 1e-12


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iters: int = 1000
    learning_rate: float = 200.0
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch: int = 250
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.perplexity < 2:
            raise InvalidInputError("perplexity must be >= 2")
        if self.iters < 1:
            raise InvalidInputError("iters must be >= 1")


@dataclass
class ParamPointSet:
    """Labeled high-dimensional points (one row per neuron) from one layer."""

    points: np.ndarray
    labels: list[str]
    layer: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[0] < 4:
            raise InvalidInputError("point set must be an (N >= 4) x D matrix")
        if len(self.labels) != self.points.shape[0]:
            raise InvalidInputError("one label per point required")


@dataclass
class TsneResult:
    """Embedding plus the KL bracket of the plain-descent phase.

    ``kl_initial`` is KL(P || Q) against the unexaggerated affinities at the
    moment early exaggeration ends (the collapsed random init scores an
    artificially low KL, so it is not a meaningful baseline); ``kl_final``
    is the same quantity at the last iteration.
    """

    coords: np.ndarray  # (N, 2)
    kl_initial: float
    kl_final: float
    betas: np.ndarray


def joint_affinities(sqd: np.ndarray, perplexity: float,
                     tol: float = 1e-5, max_steps: int = 50):
    """Symmetrized, floored affinity matrix P and the calibrated precisions."""
    cond, betas = perplexity_calibrate(sqd, perplexity, tol, max_steps)
    row_sums = cond.sum(axis=1)
    dead = np.nonzero(row_sums == 0.0)[0]
    if dead.size:
        raise DegenerateInputError(f"point {int(dead[0])} has an all-zero affinity row")
    n = sqd.shape[0]
    p = (cond + cond.T) / (2.0 * n)
    p = np.maximum(p, AFFINITY_FLOOR)
    np.fill_diagonal(p, 0.0)
    return p, betas


def _kl_at(p: np.ndarray, coords: np.ndarray) -> float:
    num, total = student_terms(coords)
    q = np.maximum(num / total, AFFINITY_FLOOR)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def tsne(pointset, cfg: TsneConfig) -> TsneResult:
    """Embed a ParamPointSet (or raw (N, D) array) into 2-D."""
    pts = pointset.points if isinstance(pointset, ParamPointSet) else np.asarray(pointset, dtype=np.float64)
    n = pts.shape[0]
    if pts.ndim != 2 or n < 4:
        raise InvalidInputError("tsne needs an (N >= 4) x D matrix")
    if not np.isfinite(pts).all():
        raise InvalidInputError("tsne input must be finite")

    perp = min(cfg.perplexity, (n - 1) / 3.0)
    if perp < 2:
        raise InvalidInputError(f"too few points for perplexity >= 2 (N={n})")

    p, betas = joint_affinities(pairwise_sq_dists(pts), perp)

    rng = np.random.default_rng(cfg.seed)
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(y)
    kl_initial = None

    p_exagg = p * cfg.exaggeration
    for it in range(cfg.iters):
        if it == cfg.exaggeration_iters:
            kl_initial = _kl_at(p, y)
        pe = p_exagg if it < cfg.exaggeration_iters else p
        num, total = student_terms(y)
        w = (pe - num / total) * num
        grad = 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)
        momentum = cfg.momentum_early if it < cfg.momentum_switch else cfg.momentum_late
        velocity = momentum * velocity - cfg.learning_rate * grad
        y = y + velocity

    if kl_initial is None:  # run ended inside the exaggeration phase
        kl_initial = float("inf")
    return TsneResult(coords=y, kl_initial=kl_initial, kl_final=_kl_at(p, y), betas=betas)
