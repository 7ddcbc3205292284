import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ewclab import model as M
from ewclab.errors import DecodeError, InvalidInputError
from ewclab.evalanalysis import (
    EvalReport, collect_layer_points, decode_numeral, eval_arithmetic,
    heldout_mlm_loss, ln_rmse, predict_numeral,
)
from ewclab.datagen import CorpusSpec, gen_text_corpus, render_instance
from ewclab.model import ModelConfig, build_model
from ewclab.training import OptConfig, aggregate, train


def ids_for(s: str) -> list[int]:
    return [M.TOKEN_TO_ID[c] for c in s]


# ---------------------------------------------------------------------------
# numeral decoding

def test_decode_examples():
    assert decode_numeral(ids_for("+000019")) == 19
    assert decode_numeral(ids_for("-000004")) == -4
    assert decode_numeral(ids_for("+000000")) == 0


def test_decode_rejects_non_numeric():
    with pytest.raises(DecodeError):
        decode_numeral([M.DIGIT_0, M.DIGIT_0])  # no sign slot
    with pytest.raises(DecodeError):
        decode_numeral(ids_for("+00") + [M.CLS])
    with pytest.raises(DecodeError):
        decode_numeral([])


# ---------------------------------------------------------------------------
# ln RMSE

def test_ln_rmse_off_by_one_is_zero():
    assert ln_rmse([2, 3, 4], [1, 2, 3]) == pytest.approx(0.0, abs=1e-12)


def test_ln_rmse_perfect_hits_floor():
    assert ln_rmse([5, 6], [5, 6]) == pytest.approx(np.log(1e-8))


def test_ln_rmse_validation():
    with pytest.raises(InvalidInputError):
        ln_rmse([], [])
    with pytest.raises(InvalidInputError):
        ln_rmse([1], [1, 2])
    with pytest.raises(InvalidInputError):
        ln_rmse([1], [1], mode="nonsense")


def test_ln_rmse_alternative_mode():
    # symlog variant handles zeros and negatives without special cases
    v = ln_rmse([0, -10], [0, -10], mode="rmse_of_ln")
    assert v == pytest.approx(0.0)
    assert ln_rmse([10], [-10], mode="rmse_of_ln") > 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-9999, 9999), st.integers(-9999, 9999)),
                min_size=1, max_size=30), st.integers(-500, 500))
def test_ln_rmse_invariances(pairs, shift):
    preds = [p for p, _ in pairs]
    truths = [t for _, t in pairs]
    base = ln_rmse(preds, truths)
    rng = np.random.default_rng(0)
    perm = rng.permutation(len(pairs))
    assert ln_rmse([preds[i] for i in perm], [truths[i] for i in perm]) == pytest.approx(base)
    assert ln_rmse([p + shift for p in preds], [t + shift for t in truths]) == pytest.approx(base)


# ---------------------------------------------------------------------------
# held-out loss and arithmetic evaluation

def test_heldout_loss_nonnegative_and_pure(tiny_model):
    corpus = gen_text_corpus(CorpusSpec("GRAMMAR_A", 40, seed=6))
    before = tiny_model.flatten()
    val = heldout_mlm_loss(tiny_model, corpus)
    assert val >= 0
    assert np.array_equal(tiny_model.flatten(), before)


def test_heldout_loss_near_uniform_for_fresh_model():
    params = build_model(ModelConfig(seed=123))
    corpus = gen_text_corpus(CorpusSpec("GRAMMAR_A", 150, seed=7))
    assert abs(heldout_mlm_loss(params, corpus) - np.log(48)) <= 0.3


def test_pretraining_beats_uniform_baseline():
    params = build_model(ModelConfig(d_model=32, d_ffn=64, seed=1))
    corpus = gen_text_corpus(CorpusSpec("GRAMMAR_A", 250, seed=8))
    heldout = gen_text_corpus(CorpusSpec("GRAMMAR_A", 60, seed=9))
    baseline = heldout_mlm_loss(params, heldout)
    trained, _ = train(params, corpus, OptConfig(epochs=8, seed=0))
    assert heldout_mlm_loss(trained, heldout) < baseline


def test_predict_numeral_always_decodes(tiny_model):
    for a, op, b in [(3, "+", 4), (5, "-", 9), (99999, "+", 99999)]:
        inst = render_instance(a, op, b)
        assert isinstance(predict_numeral(tiny_model, inst.seq), int)


def test_eval_arithmetic_report_rows(tiny_model):
    instances = [render_instance(a, "+", b) for a, b in [(1, 2), (30, 4), (567, 8)]]
    ln, samples = eval_arithmetic(tiny_model, instances)
    assert np.isfinite(ln)
    assert len(samples) == len(instances)
    assert set(samples[0]) == {"a", "op", "b", "truth", "prediction"}


# ---------------------------------------------------------------------------
# EvalReport

def test_eval_report_roundtrip():
    rep = EvalReport(
        ln_rmse=aggregate([1.0, 2.0]),
        heldout={"heldout_A": aggregate([0.5]), "heldout_B": aggregate([0.25, 0.75])},
        samples=[{"a": 1, "op": "+", "b": 2, "truth": 3, "prediction": 3}],
    )
    assert EvalReport.from_dict(rep.to_dict()) == rep


# ---------------------------------------------------------------------------
# parameter-space point sets

def test_collect_points_counts(tiny_config):
    p1 = build_model(tiny_config)
    points = collect_layer_points({"t1": p1, "t2": p1}, layer=0)
    d = tiny_config.d_model
    assert points.points.shape == (2 * 4 * d, d)
    assert points.labels == ["t1"] * (4 * d) + ["t2"] * (4 * d)


def test_collect_points_duplicate_checkpoints(tiny_config):
    p = build_model(tiny_config)
    pts = collect_layer_points({"x": p, "y": p}, layer=1)
    n = pts.points.shape[0] // 2
    assert np.array_equal(pts.points[:n], pts.points[n:])


def test_collect_points_ordering_deterministic(tiny_config):
    p = build_model(tiny_config)
    a = collect_layer_points({"b_task": p, "a_task": p}, layer=0)
    b = collect_layer_points({"a_task": p, "b_task": p}, layer=0)
    assert a.labels == b.labels  # sorted by task name regardless of dict order
    assert np.array_equal(a.points, b.points)


def test_collect_points_config_mismatch_rejected(tiny_config):
    p1 = build_model(tiny_config)
    p2 = build_model(ModelConfig(n_layers=2, n_heads=2, d_model=32, d_ffn=32, seed=0))
    with pytest.raises(InvalidInputError):
        collect_layer_points({"a": p1, "b": p2}, layer=0)


def test_collect_points_missing_layer_rejected(tiny_config):
    p = build_model(tiny_config)
    with pytest.raises(InvalidInputError):
        collect_layer_points({"a": p}, layer=9)
