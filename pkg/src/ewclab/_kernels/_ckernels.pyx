# Fused hot loops. Mirrors the arithmetic of _pykernels exactly; keep the
# two in sync (test_kernels checks parity).

import numpy as np

from libc.math cimport INFINITY, exp, fabs, log, pow, sqrt


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                long t, double lr, double b1, double b2, double eps):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double bc1 = 1.0 - pow(b1, <double> t)
    cdef double bc2 = 1.0 - pow(b2, <double> t)
    for i in range(n):
        m[i] = b1 * m[i] + (1.0 - b1) * g[i]
        v[i] = b2 * v[i] + (1.0 - b2) * (g[i] * g[i])
        p[i] -= lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)


def ewc_terms(double[::1] theta, double[::1] ref, double[::1] fisher, double lam):
    cdef Py_ssize_t i, n = theta.shape[0]
    grad_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] grad = grad_arr
    cdef double value = 0.0
    cdef double d
    for i in range(n):
        d = theta[i] - ref[i]
        grad[i] = (lam * fisher[i]) * d
        value += grad[i] * d
    return 0.5 * value, grad_arr


def pairwise_sq_dists(x):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t i, j, k, n = xv.shape[0], dim = xv.shape[1]
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double s, diff
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for k in range(dim):
                diff = xv[i, k] - xv[j, k]
                s += diff * diff
            out[i, j] = s
            out[j, i] = s
    return out_arr


def student_terms(y):
    cdef double[:, ::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t i, j, k, n = yv.shape[0], dim = yv.shape[1]
    num_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] num = num_arr
    cdef double s, diff, v, total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for k in range(dim):
                diff = yv[i, k] - yv[j, k]
                s += diff * diff
            v = 1.0 / (1.0 + s)
            num[i, j] = v
            num[j, i] = v
            total += 2.0 * v
    return num_arr, total


def perplexity_calibrate(sqd, double perplexity, double tol=1e-5, int max_steps=50):
    d_arr = np.array(sqd, dtype=np.float64, copy=True)
    cdef double[:, ::1] d = d_arr
    cdef Py_ssize_t i, j, n = d.shape[0]
    cdef int step
    for i in range(n):
        d[i, i] = 0.0

    p_arr = np.zeros((n, n), dtype=np.float64)
    beta_arr = np.ones(n, dtype=np.float64)
    cdef double[:, ::1] p = p_arr
    cdef double[::1] beta = beta_arr
    cdef double target = log(perplexity)
    cdef double b, lo, hi, sw, swd, h, diff, w

    for i in range(n):
        b = 1.0
        lo = -INFINITY
        hi = INFINITY
        for step in range(max_steps):
            sw = 0.0
            swd = 0.0
            for j in range(n):
                if j == i:
                    continue
                w = exp(-d[i, j] * b)
                if w > 0.0:  # skip, not 0*inf, for unreachable points
                    sw += w
                    swd += w * d[i, j]
            if sw > 0.0:
                h = log(sw) + b * swd / sw
            else:
                h = -INFINITY
            diff = h - target
            if fabs(diff) <= tol:
                break
            if diff > 0.0:
                lo = b
                b = b * 2.0 if hi == INFINITY else (b + hi) / 2.0
            else:
                hi = b
                b = b / 2.0 if lo == -INFINITY else (b + lo) / 2.0
        beta[i] = b
        sw = 0.0
        for j in range(n):
            if j == i:
                continue
            w = exp(-d[i, j] * b)
            p[i, j] = w
            sw += w
        if sw > 0.0:
            for j in range(n):
                p[i, j] /= sw
        else:
            for j in range(n):
                p[i, j] = 0.0
    return p_arr, beta_arr
