import json
import re
from dataclasses import replace
from pathlib import Path

import pytest

from ewclab.cli import main, run_pipeline
from ewclab.config import (
    ArithDataConfig, DataConfig, EwcRunConfig, RunConfig, SweepConfig,
    default_config, load_config, save_config,
)
from ewclab.datagen import CorpusSpec
from ewclab.errors import ConfigError
from ewclab.model import ModelConfig
from ewclab.training import OptConfig
from ewclab.tsne import TsneConfig


def small_config(tmp_path, **kw) -> RunConfig:
    """A seconds-scale config exercising the same paths as the desk default."""
    base = replace(
        default_config(),
        run_name="small",
        model=ModelConfig(n_layers=2, n_heads=2, d_model=16, d_ffn=32, seed=0),
        opt=OptConfig(epochs=1, seed=0),
        data=DataConfig(
            arith=ArithDataConfig(n=48, eval_n=8),
            corpora=(CorpusSpec("GRAMMAR_A", 60, seed=21), CorpusSpec("GRAMMAR_B", 60, seed=22)),
            heldout_sentences=30,
        ),
        ewc=EwcRunConfig(fisher_n_samples=16),
        sweep=SweepConfig(grid=(1e6, 1e-2), epochs=1),
        tsne=TsneConfig(iters=30, seed=0),
        vital_n=20,
        seeds=(0,),
        output_dir=str(tmp_path / "runs"),
        pretrain_epochs=1,
    )
    return replace(base, **kw) if kw else base


# ---------------------------------------------------------------------------
# config round trip

def test_default_config_roundtrip(tmp_path):
    cfg = default_config()
    path = tmp_path / "c.json"
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_config_json_uses_lambda_key(tmp_path):
    d = default_config().to_dict()
    assert "lambda" in d["ewc"]


def test_config_schema_violation(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"run_name": "x"}')
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_overrides():
    cfg = default_config()
    out = cfg.with_overrides(seed=5, lam=0.25, output_dir="/tmp/elsewhere")
    assert out.seeds == (5,)
    assert out.ewc.lam == 0.25
    assert out.output_dir == "/tmp/elsewhere"
    assert cfg.seeds == (0, 1)  # original untouched


# ---------------------------------------------------------------------------
# CLI surface

def test_gen_data_writes_all_files(tmp_path, capsys):
    cfg = small_config(tmp_path)
    cfg_path = tmp_path / "cfg.json"
    save_config(cfg, cfg_path)
    assert main(["gen-data", "--config", str(cfg_path)]) == 0
    data_dir = Path(cfg.output_dir) / "small" / "data"
    names = {p.name for p in data_dir.iterdir()}
    assert names == {"arith_train.jsonl", "arith_eval.jsonl", "corpus_a.jsonl",
                     "corpus_b.jsonl", "heldout_a.jsonl", "heldout_b.jsonl"}
    first = json.loads((data_dir / "arith_train.jsonl").read_text().splitlines()[0])
    assert set(first) == {"a", "op", "b", "result", "ids", "mask_positions", "targets"}


def test_missing_checkpoint_gives_parsable_error(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    save_config(small_config(tmp_path), cfg_path)
    rc = main(["eval", "--config", str(cfg_path), "--checkpoint", str(tmp_path / "none.ckpt")])
    assert rc == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("ewclab: error: InvalidInputError:")
    assert "\n" not in err


def test_unknown_config_file_fails(tmp_path, capsys):
    rc = main(["gen-data", "--config", str(tmp_path / "missing.json")])
    assert rc == 1


def test_cli_checkpoint_flow(tmp_path, capsys):
    """pretrain -> fisher -> train-arith --plain -> eval, all through main()."""
    cfg = small_config(tmp_path)
    cfg_path = tmp_path / "cfg.json"
    save_config(cfg, cfg_path)
    root = Path(cfg.output_dir) / "small"

    assert main(["pretrain", "--config", str(cfg_path)]) == 0
    general = root / "checkpoints" / "general_s0.ckpt"
    assert general.exists()
    assert (root / "traces" / "pretrain_s0.csv").exists()

    assert main(["fisher", "--config", str(cfg_path), "--checkpoint", str(general),
                 "--task", "general"]) == 0
    fisher_file = root / "checkpoints" / "fisher_general_general_s0.ckpt"
    assert fisher_file.exists()

    assert main(["train-arith", "--config", str(cfg_path), "--checkpoint", str(general),
                 "--plain"]) == 0
    plain = root / "checkpoints" / "plain_s0.ckpt"
    assert plain.exists()

    assert main(["train-arith", "--config", str(cfg_path), "--checkpoint", str(general),
                 "--ewc", "--fisher", str(fisher_file), "--lambda", "100.0"]) == 0
    assert (root / "checkpoints" / "ewc_s0.ckpt").exists()

    assert main(["eval", "--config", str(cfg_path), "--checkpoint", str(plain)]) == 0
    report = json.loads((root / "reports" / "eval_plain_s0.json").read_text())
    assert set(report) == {"ln_rmse", "heldout", "samples"}

    assert main(["sweep", "--config", str(cfg_path), "--checkpoint", str(general),
                 "--fisher", str(fisher_file)]) == 0
    summary = json.loads((root / "reports" / "sweep_summary.json").read_text())
    assert "selected_lambda" in summary and len(summary["per_lambda"]) == 2

    assert main(["tsne", "--config", str(cfg_path), "--layer", "0",
                 str(general), str(plain)]) == 0
    assert (root / "reports" / "embedding_layer0.csv").exists()
    assert (root / "reports" / "embedding_layer0.svg").exists()


def test_train_arith_ewc_requires_fisher(tmp_path, capsys):
    cfg = small_config(tmp_path)
    cfg_path = tmp_path / "cfg.json"
    save_config(cfg, cfg_path)
    main(["pretrain", "--config", str(cfg_path)])
    general = Path(cfg.output_dir) / "small" / "checkpoints" / "general_s0.ckpt"
    rc = main(["train-arith", "--config", str(cfg_path), "--checkpoint", str(general), "--ewc"])
    assert rc == 1
    assert "fisher" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# pipeline

MU_SIGMA = re.compile(r"^-?\d+\.\d{4}_\d+\.\d{4}$")


def test_pipeline_artifacts_and_determinism(tmp_path, capsys):
    cfg = small_config(tmp_path)
    summary = run_pipeline(cfg)
    root = Path(summary["run_dir"])

    table = (root / "reports" / "table_main.csv").read_text().splitlines()
    assert table[0] == "variant,ln_rmse,heldout_A,heldout_B"
    rows = [line.split(",") for line in table[1:]]
    assert [r[0] for r in rows] == ["base", "plain-arith", "ewc-arith"]
    for r in rows:
        for cell in r[1:]:
            assert MU_SIGMA.match(cell), cell

    for name in ("config.json", "reports/sweep_summary.json",
                 "reports/eval_base.json", "reports/eval_plain_arith.json",
                 "reports/eval_ewc_arith.json", "reports/sensitivity_layer0.csv",
                 "reports/embedding_layer0.csv", "reports/embedding_layer1.svg",
                 "checkpoints/general_s0.ckpt", "checkpoints/ewc_s0.ckpt",
                 "traces/plain_s0.csv", "traces/ewc_s0.csv"):
        assert (root / name).exists(), name

    saved = load_config(root / "config.json")
    assert saved == cfg

    # determinism: a second run reproduces the table byte for byte
    first = (root / "reports" / "table_main.csv").read_bytes()
    run_pipeline(cfg)
    assert (root / "reports" / "table_main.csv").read_bytes() == first


def test_pipeline_respects_lambda_override(tmp_path, capsys):
    cfg = small_config(tmp_path, run_name="lam")
    cfg = cfg.with_overrides(lam=123.0)
    summary = run_pipeline(cfg)
    assert summary["selected_lambda"] == 123.0
    assert not (Path(summary["run_dir"]) / "reports" / "sweep_summary.json").exists()
