"""Numpy implementations of the hot kernels.

Reference semantics for the compiled backend; every function here mirrors
the per-coordinate arithmetic of ``_ckernels`` so the two stay numerically
interchangeable.
"""

import numpy as np


def adam_update(p, g, m, v, t, lr, b1, b2, eps):
    """One fused Adam step, in place on flat float64 arrays."""
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def ewc_terms(theta, ref, fisher, lam):
    """Quadratic consolidation penalty and its gradient in one pass.

    Returns ``(0.5 * sum(lam * fisher * (theta - ref)^2), lam * fisher * (theta - ref))``.
    """
    d = theta - ref
    grad = (lam * fisher) * d
    value = 0.5 * float(np.dot(grad, d))
    return value, grad


def pairwise_sq_dists(x):
    """Squared euclidean distance matrix, computed row by row.

    Direct differences (not the Gram-matrix trick) to avoid cancellation;
    the compiled backend does the same arithmetic.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        diff = x - x[i]
        out[i] = np.einsum("ij,ij->i", diff, diff)
    np.fill_diagonal(out, 0.0)
    return out


def student_terms(y):
    """Student-t numerators 1/(1+d^2) with zero diagonal, plus their sum."""
    num = 1.0 / (1.0 + pairwise_sq_dists(y))
    np.fill_diagonal(num, 0.0)
    return num, float(num.sum())


def perplexity_calibrate(sqd, perplexity, tol=1e-5, max_steps=50):
    """Per-point bisection of Gaussian precision to hit a target perplexity.

    Returns conditional affinities P (zero diagonal, rows summing to 1
    except for degenerate rows, which come back all-zero for the caller to
    reject) and the calibrated precisions beta.
    """
    d = np.ascontiguousarray(sqd, dtype=np.float64).copy()
    np.fill_diagonal(d, 0.0)
    n = d.shape[0]
    target = np.log(perplexity)
    # at infinite distance the weight is exactly 0; keep 0*inf out of sums
    d_safe = np.where(np.isfinite(d), d, 0.0)

    beta = np.ones(n)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)
    diag = np.arange(n)

    for _ in range(max_steps):
        w = np.exp(-d * beta[:, None])
        w[diag, diag] = 0.0
        sw = w.sum(axis=1)
        ok = sw > 0.0
        h = np.full(n, -np.inf)
        # natural-log entropy of the conditional distribution
        wd = w * d_safe
        h[ok] = np.log(sw[ok]) + beta[ok] * wd[ok].sum(axis=1) / sw[ok]
        diff = h - target
        done |= np.abs(diff) <= tol
        if done.all():
            break
        up = diff > 0.0  # entropy too high -> tighten (raise beta)
        lo = np.where(~done & up, beta, lo)
        hi = np.where(~done & ~up, beta, hi)
        nxt = np.where(
            up,
            np.where(np.isinf(hi), beta * 2.0, (beta + hi) / 2.0),
            np.where(np.isinf(lo), beta / 2.0, (beta + lo) / 2.0),
        )
        beta = np.where(done, beta, nxt)

    p = np.exp(-d * beta[:, None])
    p[diag, diag] = 0.0
    sw = p.sum(axis=1)
    rows = sw > 0.0
    p[rows] /= sw[rows, None]
    p[~rows] = 0.0
    return p, beta
