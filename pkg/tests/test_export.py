from pathlib import Path

import numpy as np
import pytest

from ewclab.errors import ExportError, InvalidInputError
from ewclab.evalanalysis import EvalReport
from ewclab.export import Embedding2D, export_report
from ewclab.fisher import SensitivityTable
from ewclab.training import LossTrace, TraceRecord, aggregate

GOLDEN = Path(__file__).parent / "golden"


def demo_trace() -> LossTrace:
    return LossTrace(
        records=[TraceRecord(0, 3.5, 0.25, 3.75), TraceRecord(1, 1.125, 0.0625, 1.1875)],
        meta={"lambda": 0.5, "seed": 0, "dataset_id": "demo"},
    )


def demo_table() -> SensitivityTable:
    return SensitivityTable(layer=1, indices=[5, 3, 9], tasks=["arith", "grammar_a"],
                            scores=np.array([[1.5, 0.25], [0.75, 0.5], [0.125, 0.0625]]))


def demo_embedding() -> Embedding2D:
    return Embedding2D(coords=np.array([[0.5, -1.25], [2.0, 0.0], [-0.75, 3.5]]),
                       labels=["general", "arith", "general"], layer=0)


def demo_report() -> EvalReport:
    return EvalReport(
        ln_rmse=aggregate([1.0, 3.0]),
        heldout={"heldout_A": aggregate([2.0, 2.5])},
        samples=[{"a": 12, "op": "+", "b": 7, "truth": 19, "prediction": 19},
                 {"a": 5, "op": "-", "b": 9, "truth": -4, "prediction": -3}],
    )


@pytest.mark.parametrize("obj,fmt,golden", [
    (demo_trace(), "csv", "trace.csv"),
    (demo_table(), "csv", "sensitivity.csv"),
    (demo_embedding(), "csv", "embedding.csv"),
    (demo_report(), "csv", "eval_samples.csv"),
])
def test_csv_schemas_match_golden_files(obj, fmt, golden, tmp_path):
    out = tmp_path / golden
    export_report(obj, out, fmt)
    assert out.read_bytes() == (GOLDEN / golden).read_bytes()


def test_trace_meta_json(tmp_path):
    out = tmp_path / "trace.meta.json"
    export_report(demo_trace(), out, "json")
    import json
    meta = json.loads(out.read_text())
    assert meta == {"lambda": 0.5, "seed": 0, "dataset_id": "demo"}


def test_eval_report_json_roundtrip(tmp_path):
    out = tmp_path / "r.json"
    rep = demo_report()
    export_report(rep, out, "json")
    import json
    assert EvalReport.from_dict(json.loads(out.read_text())) == rep


def test_svg_outputs_are_self_contained(tmp_path):
    for obj, name in [(demo_trace(), "t.svg"), (demo_table(), "s.svg"),
                      (demo_embedding(), "e.svg")]:
        out = tmp_path / name
        export_report(obj, out, "svg")
        text = out.read_text()
        assert text.startswith("<svg")
        assert text.rstrip().endswith("</svg>")
        assert "href" not in text and "url(" not in text


def test_embedding_svg_has_one_circle_per_point(tmp_path):
    out = tmp_path / "e.svg"
    export_report(demo_embedding(), out, "svg")
    assert out.read_text().count("<circle") == 3


def test_trace_svg_has_two_series(tmp_path):
    out = tmp_path / "t.svg"
    export_report(demo_trace(), out, "svg")
    text = out.read_text()
    assert text.count("<polyline") == 2
    assert ">ce<" in text and ">ewc<" in text


def test_unsupported_combinations_rejected(tmp_path):
    with pytest.raises(InvalidInputError):
        export_report(demo_embedding(), tmp_path / "x.json", "json")
    with pytest.raises(InvalidInputError):
        export_report(object(), tmp_path / "x.csv", "csv")


def test_io_failure_names_path(tmp_path):
    target = tmp_path / "missing_dir" / "t.csv"
    with pytest.raises(ExportError, match="t.csv"):
        export_report(demo_trace(), target, "csv")
