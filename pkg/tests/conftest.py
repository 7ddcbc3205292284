import numpy as np
import pytest

from ewclab.model import DIGIT_0, MASK, PLUS, ModelConfig, TokenSeq, build_model, tokenize


def fd_grad(forward, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued forward() w.r.t. x.

    ``forward`` must re-read x (shared buffer) on every call; this is the
    independent oracle the autodiff results are checked against.
    """
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = forward()
        flat[i] = orig - h
        fm = forward()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(ad: np.ndarray, fd: np.ndarray) -> float:
    return float(np.max(np.abs(ad - fd) / np.maximum(1.0, np.abs(fd))))


@pytest.fixture(scope="session")
def tiny_config() -> ModelConfig:
    return ModelConfig(n_layers=2, n_heads=2, d_model=16, d_ffn=32, max_seq=32, seed=7)


@pytest.fixture(scope="session")
def tiny_model(tiny_config):
    return build_model(tiny_config)


def arith_seq(a: int, op: str, b: int, width: int = 6) -> TokenSeq:
    """Hand-rolled masked arithmetic sequence for model-level tests."""
    ids = tokenize(f"{a}{op}{b}=")
    start = len(ids)
    ids = ids + [MASK] * (width + 1)
    result = a + b if op == "+" else a - b
    targets = [PLUS if result >= 0 else PLUS + 1]
    targets += [DIGIT_0 + int(c) for c in str(abs(result)).zfill(width)]
    return TokenSeq(ids, list(range(start, start + width + 1)), targets)
