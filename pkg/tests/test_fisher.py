import numpy as np
import pytest

from conftest import arith_seq
from ewclab import fisher as fi
from ewclab import tensor as tn
from ewclab.errors import InvalidInputError
from ewclab.fisher import FisherVector, estimate_diag_fisher, mean_sq_grads, sensitivity_compare, top_n_vital
from ewclab.model import ModelConfig, build_model
from ewclab.tensor import Tensor


def bernoulli_setup(p0: float, n: int, seed: int):
    """Single-probability model plus observations sampled at p0."""
    p = Tensor([p0], requires_grad=True)
    rng = np.random.default_rng(seed)
    ys = (rng.random(n) < p0).astype(float)

    def loglik(y):
        if y >= 0.5:
            return tn.tsum(tn.log(p))
        return tn.tsum(tn.log(tn.sub(1.0, p)))

    return p, loglik, list(ys)


def test_bernoulli_closed_form_fisher():
    """I(p) = 1/(p(1-p)) for Bernoulli; estimate within 2% at N=100000."""
    p, loglik, ys = bernoulli_setup(0.3, 100000, seed=0)
    est = mean_sq_grads([p], loglik, ys)[0]
    exact = 1.0 / (0.3 * 0.7)
    assert abs(est - exact) / exact <= 0.02


def test_gaussian_mean_closed_form_fisher():
    """I(mu) = 1/sigma^2 for a Gaussian with known sigma."""
    sigma = 2.0
    mu = Tensor([0.7], requires_grad=True)
    rng = np.random.default_rng(1)
    ys = rng.normal(0.7, sigma, 100000)

    def loglik(y):
        d = tn.sub(float(y), mu)
        return tn.mul(tn.tsum(tn.mul(d, d)), -1.0 / (2 * sigma * sigma))

    est = mean_sq_grads([mu], loglik, list(ys))[0]
    exact = 1.0 / sigma**2
    assert abs(est - exact) / exact <= 0.02


def test_fisher_convergence_between_sample_sizes():
    """Estimates at N and 2N within 5% of each other for N >= 50000."""
    p, loglik, ys = bernoulli_setup(0.3, 100000, seed=2)
    f_n = mean_sq_grads([p], loglik, ys[:50000])[0]
    f_2n = mean_sq_grads([p], loglik, ys)[0]
    assert abs(f_n - f_2n) / f_2n <= 0.05


def test_quadratic_scaling_of_loglik():
    """Scaling the log-likelihood by c scales Fisher by exactly c^2."""
    p, loglik, ys = bernoulli_setup(0.4, 500, seed=3)
    base = mean_sq_grads([p], loglik, ys)
    scaled = mean_sq_grads([p], lambda y: tn.mul(loglik(y), 3.0), ys)
    assert np.allclose(scaled, 9.0 * base, rtol=1e-12)


# ---------------------------------------------------------------------------
# model-level estimation

@pytest.fixture(scope="module")
def small_fisher(tiny_model):
    seqs = [arith_seq(a, "+", b) for a, b in [(1, 2), (3, 4), (10, 20), (7, 7)]]
    return estimate_diag_fisher(tiny_model, seqs, n_samples=32, seed=0, task_label="arith"), seqs


def test_fisher_nonnegative_and_aligned(tiny_model, small_fisher):
    fv, _ = small_fisher
    assert fv.values.shape == (tiny_model.flat_len,)
    assert fv.values.min() >= 0
    assert fv.n_samples == 32 and fv.task_label == "arith"


def test_fisher_zero_for_unused_parameters(tiny_model, small_fisher):
    """Positions past every sequence length never receive gradient."""
    fv, seqs = small_fisher
    max_len = max(len(s.ids) for s in seqs)
    lo, hi = tiny_model.slice_of("pos_emb")
    d = tiny_model.config.d_model
    tail = fv.values[lo + max_len * d: hi]
    assert tail.size > 0 and not tail.any()


def test_fisher_does_not_mutate_params(tiny_model):
    seqs = [arith_seq(5, "-", 2)]
    before = tiny_model.flatten()
    estimate_diag_fisher(tiny_model, seqs, n_samples=8, seed=1)
    assert np.array_equal(tiny_model.flatten(), before)


def test_fisher_determinism(tiny_model):
    seqs = [arith_seq(a, "-", b) for a, b in [(9, 1), (2, 8)]]
    f1 = estimate_diag_fisher(tiny_model, seqs, n_samples=16, seed=5)
    f2 = estimate_diag_fisher(tiny_model, seqs, n_samples=16, seed=5)
    assert np.array_equal(f1.values, f2.values)


def test_fisher_empty_data_rejected(tiny_model):
    with pytest.raises(InvalidInputError):
        estimate_diag_fisher(tiny_model, [], n_samples=4, seed=0)


# ---------------------------------------------------------------------------
# vital parameters and sensitivity

def test_top_n_all_equal_scores_tie_rule(tiny_model):
    fv = FisherVector(np.ones(tiny_model.flat_len), 1, "t")
    lo, _ = tiny_model.layer_slice(0)
    vital = top_n_vital(fv, tiny_model, layer=0, n=5)
    assert vital.indices == [lo, lo + 1, lo + 2, lo + 3, lo + 4]


def test_top_n_full_layer_sorted(tiny_model):
    rng = np.random.default_rng(0)
    fv = FisherVector(rng.random(tiny_model.flat_len), 1, "t")
    lo, hi = tiny_model.layer_slice(1)
    vital = top_n_vital(fv, tiny_model, layer=1, n=hi - lo)
    assert sorted(vital.indices) == list(range(lo, hi))
    scores = fv.values[vital.indices]
    assert (np.diff(scores) <= 0).all()


def test_top_n_800_on_default_desk_model():
    params = build_model(ModelConfig(seed=0))
    rng = np.random.default_rng(1)
    fv = FisherVector(rng.random(params.flat_len), 1, "arith")
    vital = top_n_vital(fv, params, layer=0, n=800)
    assert len(vital.indices) == 800
    scores = fv.values[vital.indices]
    assert (np.diff(scores) <= 0).all()


def test_top_n_too_large_rejected(tiny_model):
    fv = FisherVector(np.ones(tiny_model.flat_len), 1, "t")
    lo, hi = tiny_model.layer_slice(0)
    with pytest.raises(InvalidInputError):
        top_n_vital(fv, tiny_model, layer=0, n=hi - lo + 1)


def test_sensitivity_self_comparison(tiny_model):
    rng = np.random.default_rng(2)
    fv = FisherVector(rng.random(tiny_model.flat_len), 1, "t")
    vital = top_n_vital(fv, tiny_model, layer=0, n=10)
    table = sensitivity_compare(vital, {"one": fv, "two": fv})
    assert np.array_equal(table.scores[:, 0], table.scores[:, 1])
    assert table.fraction_greater("one", "two") == 0.0


def test_sensitivity_three_tasks_shape(tiny_model):
    rng = np.random.default_rng(3)
    mk = lambda: FisherVector(rng.random(tiny_model.flat_len), 1, "x")
    vital = top_n_vital(mk(), tiny_model, layer=0, n=12)
    table = sensitivity_compare(vital, {"arith": mk(), "a": mk(), "b": mk()})
    assert table.scores.shape == (12, 3)
    assert (table.scores >= 0).all()
    frac = table.fraction_greater("a", "b")
    assert 0.0 <= frac <= 1.0


def test_sensitivity_mismatched_lengths_rejected(tiny_model):
    fv = FisherVector(np.ones(tiny_model.flat_len), 1, "t")
    bad = FisherVector(np.ones(tiny_model.flat_len + 1), 1, "u")
    vital = top_n_vital(fv, tiny_model, layer=0, n=3)
    with pytest.raises(InvalidInputError):
        sensitivity_compare(vital, {"t": fv, "u": bad})


def test_minmax_normalize():
    out = fi.minmax_normalize(np.array([2.0, 4.0, 6.0]))
    assert np.allclose(out, [0.0, 0.5, 1.0])
    assert not fi.minmax_normalize(np.ones(4)).any()
