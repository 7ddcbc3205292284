"""Command-line entry point and the experiment pipeline.

All data is regenerated deterministically from the config, so every command
is idempotent: re-running with identical inputs overwrites identical
outputs. ``gen-data`` materializes the datasets as JSON-lines for outside
consumption; the other commands work from the config directly plus any
checkpoint files passed on the command line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .checkpoint import (
    checkpoint_to_fisher, checkpoint_to_params, fisher_to_checkpoint,
    load_checkpoint, params_to_checkpoint, save_checkpoint,
)
from .config import RunConfig, default_config, load_config, save_config
from .datagen import gen_arith_dataset, gen_text_corpus, save_corpus_jsonl, save_dataset_jsonl
from .errors import EwcLabError, InvalidInputError
from .evalanalysis import EvalReport, collect_layer_points, eval_arithmetic, heldout_mlm_loss
from .export import Embedding2D, export_report
from .fisher import estimate_diag_fisher, sensitivity_compare, top_n_vital
from .model import ModelParams, build_model
from .training import (
    EWCConfig, aggregate, fmt_mu_sigma, lambda_sweep, select_lambda, train, train_ewc,
)
from .tsne import tsne

VARIANTS = ("base", "plain-arith", "ewc-arith")


def n_threads() -> int:
    env = os.environ.get("EWCLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidInputError(f"EWCLAB_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


class RunDir:
    """Layout of one run directory: config, checkpoints, traces, reports, data."""

    def __init__(self, cfg: RunConfig):
        self.root = Path(cfg.output_dir) / cfg.run_name
        for sub in ("data", "checkpoints", "traces", "reports"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def data(self, name) -> Path:
        return self.root / "data" / name

    def ckpt(self, name) -> Path:
        return self.root / "checkpoints" / name

    def trace(self, name) -> Path:
        return self.root / "traces" / name

    def report(self, name) -> Path:
        return self.root / "reports" / name


class Datasets:
    """All corpora for a config, regenerated on demand (pure in the config)."""

    def __init__(self, cfg: RunConfig):
        from .datagen import ExponentDist

        dist = ExponentDist(cfg.data.arith.probs)
        self.arith_train = gen_arith_dataset(cfg.data.arith.n, dist, cfg.data.arith.seed)
        self.arith_eval = gen_arith_dataset(cfg.data.arith.eval_n, dist, cfg.data.arith.eval_seed)
        self.corpus_a = gen_text_corpus(cfg.data.corpora[0])
        self.corpus_b = gen_text_corpus(cfg.data.corpora[1])
        self.heldout_a = gen_text_corpus(cfg.data.heldout_spec(0))
        self.heldout_b = gen_text_corpus(cfg.data.heldout_spec(1))
        self.general = self.corpus_a + self.corpus_b

    def for_task(self, task: str):
        return {
            "general": self.general,
            "arith": [inst.seq for inst in self.arith_train],
            "grammar_a": self.corpus_a,
            "grammar_b": self.corpus_b,
        }[task]


def _lam_tag(lam: float) -> str:
    return f"{lam:.0e}"


def _export_trace(trace, path: Path):
    export_report(trace, path, "csv")
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    export_report(trace, meta_path, "json")


def _save_params(params: ModelParams, path: Path, **meta):
    save_checkpoint(params_to_checkpoint(params, meta=meta), path)


def _echo(path):
    print(f"wrote {path}")


# ---------------------------------------------------------------------------
# commands

def cmd_gen_data(cfg: RunConfig) -> int:
    rd = RunDir(cfg)
    ds = Datasets(cfg)
    save_dataset_jsonl(ds.arith_train, rd.data("arith_train.jsonl"))
    save_dataset_jsonl(ds.arith_eval, rd.data("arith_eval.jsonl"))
    save_corpus_jsonl(ds.corpus_a, rd.data("corpus_a.jsonl"))
    save_corpus_jsonl(ds.corpus_b, rd.data("corpus_b.jsonl"))
    save_corpus_jsonl(ds.heldout_a, rd.data("heldout_a.jsonl"))
    save_corpus_jsonl(ds.heldout_b, rd.data("heldout_b.jsonl"))
    for name in ("arith_train", "arith_eval", "corpus_a", "corpus_b", "heldout_a", "heldout_b"):
        _echo(rd.data(f"{name}.jsonl"))
    return 0


def cmd_pretrain(cfg: RunConfig) -> int:
    rd = RunDir(cfg)
    ds = Datasets(cfg)
    for seed in cfg.seeds:
        params = build_model(replace(cfg.model, seed=seed))
        opt = replace(cfg.opt, seed=seed, epochs=cfg.pretrain_epochs)
        trained, trace = train(params, ds.general, opt, dataset_id="general")
        _save_params(trained, rd.ckpt(f"general_s{seed}.ckpt"), role="general", seed=seed)
        _export_trace(trace, rd.trace(f"pretrain_s{seed}.csv"))
        _echo(rd.ckpt(f"general_s{seed}.ckpt"))
    return 0


def _load_params_file(path) -> ModelParams:
    if not Path(path).exists():
        raise InvalidInputError(f"checkpoint file not found: {path}")
    return checkpoint_to_params(load_checkpoint(path))


def cmd_fisher(cfg: RunConfig, checkpoint: str, task: str) -> int:
    rd = RunDir(cfg)
    params = _load_params_file(checkpoint)
    data = Datasets(cfg).for_task(task)
    seed = cfg.seeds[0]
    fv = estimate_diag_fisher(params, data, cfg.ewc.fisher_n_samples, seed=seed, task_label=task)
    out = rd.ckpt(f"fisher_{task}_{Path(checkpoint).stem}.ckpt")
    save_checkpoint(fisher_to_checkpoint(fv), out)
    _echo(out)
    return 0


def _load_fisher_file(path):
    if not Path(path).exists():
        raise InvalidInputError(f"fisher file not found: {path}")
    return checkpoint_to_fisher(load_checkpoint(path))


def cmd_train_arith(cfg: RunConfig, checkpoint: str, use_ewc: bool,
                    fisher_path: str | None) -> int:
    rd = RunDir(cfg)
    ds = Datasets(cfg)
    ref = _load_params_file(checkpoint)
    seed = cfg.seeds[0]
    opt = replace(cfg.opt, seed=seed)
    if use_ewc:
        if fisher_path is None:
            raise InvalidInputError("--ewc requires --fisher")
        if cfg.ewc.lam is None:
            raise InvalidInputError("no lambda configured; run sweep or pass --lambda")
        fv = _load_fisher_file(fisher_path)
        ewc = EWCConfig(lam=cfg.ewc.lam, ref_params=ref, fisher=fv)
        trained, trace = train_ewc(ref, ds.arith_train, opt, ewc, dataset_id="arith")
        tag = f"ewc_s{seed}"
    else:
        trained, trace = train(ref, ds.arith_train, opt, dataset_id="arith")
        tag = f"plain_s{seed}"
    _save_params(trained, rd.ckpt(f"{tag}.ckpt"), role=tag, seed=seed)
    _export_trace(trace, rd.trace(f"{tag}.csv"))
    _echo(rd.ckpt(f"{tag}.ckpt"))
    return 0


def _sweep_and_select(cfg: RunConfig, rd: RunDir, ref: ModelParams, fv, seed: int) -> float:
    opt = replace(cfg.opt, seed=seed, epochs=cfg.sweep.epochs)
    traces = lambda_sweep(ref, Datasets(cfg).arith_train, opt, ref, fv,
                          list(cfg.sweep.grid), max_workers=n_threads(), dataset_id="arith")
    summary = {}
    for lam, trace in traces.items():
        path = rd.trace(f"sweep_s{seed}_lam{_lam_tag(lam)}.csv")
        _export_trace(trace, path)
        ce, pen = trace.ce(), trace.penalties()
        summary[_lam_tag(lam)] = {
            "lambda": lam,
            "initial_ce": ce[0], "final_ce": ce[-1],
            "peak_ce": max(ce), "peak_penalty": max(pen), "final_penalty": pen[-1],
        }
    selected = select_lambda(traces)
    out = rd.report("sweep_summary.json")
    with open(out, "w", encoding="utf-8") as f:
        json.dump({"selected_lambda": selected, "per_lambda": summary}, f,
                  indent=2, sort_keys=True)
        f.write("\n")
    _echo(out)
    return selected


def cmd_sweep(cfg: RunConfig, checkpoint: str, fisher_path: str) -> int:
    rd = RunDir(cfg)
    ref = _load_params_file(checkpoint)
    fv = _load_fisher_file(fisher_path)
    _sweep_and_select(cfg, rd, ref, fv, cfg.seeds[0])
    return 0


def _evaluate(params: ModelParams, ds: Datasets):
    ln, samples = eval_arithmetic(params, ds.arith_eval)
    return {
        "ln_rmse": ln,
        "heldout_A": heldout_mlm_loss(params, ds.heldout_a),
        "heldout_B": heldout_mlm_loss(params, ds.heldout_b),
        "samples": samples,
    }


def cmd_eval(cfg: RunConfig, checkpoint: str) -> int:
    rd = RunDir(cfg)
    params = _load_params_file(checkpoint)
    ds = Datasets(cfg)
    r = _evaluate(params, ds)
    report = EvalReport(
        ln_rmse=aggregate([r["ln_rmse"]]),
        heldout={"heldout_A": aggregate([r["heldout_A"]]),
                 "heldout_B": aggregate([r["heldout_B"]])},
        samples=r["samples"],
    )
    stem = Path(checkpoint).stem
    export_report(report, rd.report(f"eval_{stem}.json"), "json")
    export_report(report, rd.report(f"eval_{stem}_samples.csv"), "csv")
    _echo(rd.report(f"eval_{stem}.json"))
    return 0


def cmd_tsne(cfg: RunConfig, layer: int, checkpoint_paths: list[str]) -> int:
    rd = RunDir(cfg)
    if len(checkpoint_paths) < 1:
        raise InvalidInputError("tsne needs at least one checkpoint")
    checkpoints = {Path(p).stem: _load_params_file(p) for p in checkpoint_paths}
    _export_embedding(cfg, rd, checkpoints, layer)
    return 0


def _export_embedding(cfg: RunConfig, rd: RunDir, checkpoints: dict[str, ModelParams], layer: int):
    points = collect_layer_points(checkpoints, layer)
    result = tsne(points, cfg.tsne)
    emb = Embedding2D(coords=result.coords, labels=points.labels, layer=layer)
    export_report(emb, rd.report(f"embedding_layer{layer}.csv"), "csv")
    export_report(emb, rd.report(f"embedding_layer{layer}.svg"), "svg")
    _echo(rd.report(f"embedding_layer{layer}.csv"))
    return result


def _export_sensitivity(cfg: RunConfig, rd: RunDir, params: ModelParams, ds: Datasets, seed: int):
    fishers = {
        task: estimate_diag_fisher(params, ds.for_task(task), cfg.ewc.fisher_n_samples,
                                   seed=seed, task_label=task)
        for task in ("arith", "grammar_a", "grammar_b")
    }
    for layer in range(cfg.model.n_layers):
        vital = top_n_vital(fishers["arith"], params, layer, cfg.vital_n)
        table = sensitivity_compare(vital, fishers)
        export_report(table, rd.report(f"sensitivity_layer{layer}.csv"), "csv")
        export_report(table, rd.report(f"sensitivity_layer{layer}.svg"), "svg")
        _echo(rd.report(f"sensitivity_layer{layer}.csv"))


def run_pipeline(cfg: RunConfig) -> dict:
    """Pretrain, consolidate, retrain and evaluate; returns summary values."""
    rd = RunDir(cfg)
    save_config(cfg, rd.root / "config.json")
    ds = Datasets(cfg)
    cmd_gen_data(cfg)

    metrics = {v: {"ln_rmse": [], "heldout_A": [], "heldout_B": []} for v in VARIANTS}
    samples = {}
    tsne_checkpoints: dict[str, ModelParams] = {}
    selected_lam = cfg.ewc.lam

    for idx, seed in enumerate(cfg.seeds):
        print(f"[seed {seed}] pretraining on the general corpus")
        params0 = build_model(replace(cfg.model, seed=seed))
        opt = replace(cfg.opt, seed=seed)
        pre_opt = replace(opt, epochs=cfg.pretrain_epochs)
        gen_params, tr = train(params0, ds.general, pre_opt, dataset_id="general")
        _save_params(gen_params, rd.ckpt(f"general_s{seed}.ckpt"), role="general", seed=seed)
        _export_trace(tr, rd.trace(f"pretrain_s{seed}.csv"))

        print(f"[seed {seed}] estimating fisher information on the general task")
        fv = estimate_diag_fisher(gen_params, ds.general, cfg.ewc.fisher_n_samples,
                                  seed=seed, task_label="general")
        save_checkpoint(fisher_to_checkpoint(fv), rd.ckpt(f"fisher_general_s{seed}.ckpt"))

        print(f"[seed {seed}] plain arithmetic training")
        plain_params, tr = train(gen_params, ds.arith_train, opt, dataset_id="arith")
        _save_params(plain_params, rd.ckpt(f"plain_s{seed}.ckpt"), role="plain", seed=seed)
        _export_trace(tr, rd.trace(f"plain_s{seed}.csv"))

        if selected_lam is None:
            print(f"[seed {seed}] lambda sweep")
            selected_lam = _sweep_and_select(cfg, rd, gen_params, fv, seed)
            print(f"[seed {seed}] selected lambda = {selected_lam:g}")

        print(f"[seed {seed}] consolidated arithmetic training (lambda={selected_lam:g})")
        ewc_cfg = EWCConfig(lam=selected_lam, ref_params=gen_params, fisher=fv)
        ewc_params, tr = train_ewc(gen_params, ds.arith_train, opt, ewc_cfg, dataset_id="arith")
        _save_params(ewc_params, rd.ckpt(f"ewc_s{seed}.ckpt"), role="ewc", seed=seed,
                     lam=selected_lam)
        _export_trace(tr, rd.trace(f"ewc_s{seed}.csv"))

        print(f"[seed {seed}] evaluating base / plain-arith / ewc-arith")
        for variant, p in (("base", gen_params), ("plain-arith", plain_params),
                           ("ewc-arith", ewc_params)):
            r = _evaluate(p, ds)
            for key in ("ln_rmse", "heldout_A", "heldout_B"):
                metrics[variant][key].append(r[key])
            if idx == 0:
                samples[variant] = r["samples"]

        if idx == 0:
            tsne_checkpoints = {"general": gen_params, "arith_plain": plain_params,
                                "arith_ewc": ewc_params}
            _export_sensitivity(cfg, rd, plain_params, ds, seed)

    reports = {}
    for variant in VARIANTS:
        report = EvalReport(
            ln_rmse=aggregate(metrics[variant]["ln_rmse"]),
            heldout={"heldout_A": aggregate(metrics[variant]["heldout_A"]),
                     "heldout_B": aggregate(metrics[variant]["heldout_B"])},
            samples=samples[variant],
        )
        tag = variant.replace("-", "_")
        export_report(report, rd.report(f"eval_{tag}.json"), "json")
        export_report(report, rd.report(f"eval_{tag}_samples.csv"), "csv")
        reports[variant] = report

    table_path = rd.report("table_main.csv")
    with open(table_path, "w", encoding="utf-8") as f:
        f.write("variant,ln_rmse,heldout_A,heldout_B\n")
        for variant in VARIANTS:
            rep = reports[variant]
            f.write(f"{variant},{fmt_mu_sigma(rep.ln_rmse)},"
                    f"{fmt_mu_sigma(rep.heldout['heldout_A'])},"
                    f"{fmt_mu_sigma(rep.heldout['heldout_B'])}\n")
    _echo(table_path)

    print("embedding parameter spaces")
    for layer in range(cfg.model.n_layers):
        _export_embedding(cfg, rd, tsne_checkpoints, layer)

    return {
        "run_dir": str(rd.root),
        "selected_lambda": selected_lam,
        "table": str(table_path),
        "reports": {v: reports[v].to_dict() for v in VARIANTS},
    }


def cmd_pipeline(cfg: RunConfig) -> int:
    summary = run_pipeline(cfg)
    print(f"pipeline complete: {summary['table']}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ewclab",
        description="Desk-scale continual-learning lab for arithmetic skill injection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config (defaults to built-in desk config)")
        p.add_argument("--out", help="override output_dir")
        p.add_argument("--seed", type=int, help="restrict the run to a single seed")

    p = sub.add_parser("gen-data", help="write datasets as JSON-lines")
    common(p)

    p = sub.add_parser("pretrain", help="train the general model per seed")
    common(p)

    p = sub.add_parser("fisher", help="estimate diagonal fisher information")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", required=True,
                   choices=("general", "arith", "grammar_a", "grammar_b"))

    p = sub.add_parser("train-arith", help="train on arithmetic, plain or consolidated")
    common(p)
    p.add_argument("--checkpoint", required=True, help="general-model checkpoint")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--ewc", action="store_true")
    mode.add_argument("--plain", action="store_true")
    p.add_argument("--fisher", help="fisher checkpoint (with --ewc)")
    p.add_argument("--lambda", dest="lam", type=float, help="consolidation strength")

    p = sub.add_parser("sweep", help="lambda sweep from a general checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--fisher", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("tsne", help="embed per-layer parameter points of checkpoints")
    common(p)
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("checkpoints", nargs="+")

    p = sub.add_parser("pipeline", help="run the whole experiment")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, help="skip the sweep, use this lambda")

    return parser


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else default_config()
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        lam=getattr(args, "lam", None),
        output_dir=getattr(args, "out", None),
    )


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "gen-data":
            return cmd_gen_data(cfg)
        if args.command == "pretrain":
            return cmd_pretrain(cfg)
        if args.command == "fisher":
            return cmd_fisher(cfg, args.checkpoint, args.task)
        if args.command == "train-arith":
            return cmd_train_arith(cfg, args.checkpoint, args.ewc, args.fisher)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.checkpoint, args.fisher)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint)
        if args.command == "tsne":
            return cmd_tsne(cfg, args.layer, args.checkpoints)
        if args.command == "pipeline":
            return cmd_pipeline(cfg)
        raise InvalidInputError(f"unknown command {args.command!r}")
    except (EwcLabError, OSError) as e:
        msg = str(e).replace("\n", " ")
        print(f"ewclab: error: {type(e).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
