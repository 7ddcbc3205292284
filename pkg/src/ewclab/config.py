"""Run configuration: one JSON file drives every command.

parse/serialize round-trips exactly; CLI flags override file values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .datagen import DEFAULT_EXPONENT_PROBS, CorpusSpec
from .errors import ConfigError
from .model import ModelConfig
from .training import OptConfig
from .tsne import TsneConfig


@dataclass(frozen=True)
class ArithDataConfig:
    n: int = 4000
    eval_n: int = 200
    probs: tuple[float, ...] = DEFAULT_EXPONENT_PROBS
    seed: int = 11
    eval_seed: int = 12

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if self.n < 1 or self.eval_n < 1:
            raise ConfigError("dataset sizes must be >= 1")


@dataclass(frozen=True)
class DataConfig:
    arith: ArithDataConfig
    corpora: tuple[CorpusSpec, CorpusSpec]
    heldout_sentences: int = 300
    heldout_seed_offset: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "corpora", tuple(self.corpora))
        if len(self.corpora) != 2:
            raise ConfigError("exactly two corpus specs are required")
        if self.heldout_sentences < 1:
            raise ConfigError("heldout_sentences must be >= 1")

    def heldout_spec(self, i: int) -> CorpusSpec:
        c = self.corpora[i]
        return CorpusSpec(grammar=c.grammar, n_sentences=self.heldout_sentences,
                          mask_rate=c.mask_rate, seed=c.seed + self.heldout_seed_offset)


@dataclass(frozen=True)
class EwcRunConfig:
    lam: float | None = None  # None: select by sweep
    fisher_n_samples: int = 1500

    def __post_init__(self):
        if self.lam is not None and self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.fisher_n_samples < 1:
            raise ConfigError("fisher_n_samples must be >= 1")


@dataclass(frozen=True)
class SweepConfig:
    # Desk grid: the model's Fisher scale sits far above the full-scale
    # regime, so blocking strengths start around 1e8; one epoch is enough
    # to separate converging from blocked runs.
    grid: tuple[float, ...] = (1e9, 1e8, 1e7, 1e6, 1e5, 1e4, 1e3, 1e2)
    epochs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        if not self.grid or any(g < 0 for g in self.grid):
            raise ConfigError("sweep grid must be nonempty with lambda >= 0")
        if self.epochs < 1:
            raise ConfigError("sweep epochs must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    run_name: str
    model: ModelConfig
    opt: OptConfig  # governs the arithmetic phase; epochs for pretraining below
    data: DataConfig
    ewc: EwcRunConfig
    sweep: SweepConfig
    tsne: TsneConfig
    vital_n: int
    seeds: tuple[int, ...]
    output_dir: str
    pretrain_epochs: int = 50

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.vital_n < 1:
            raise ConfigError("vital_n must be >= 1")
        if self.pretrain_epochs < 1:
            raise ConfigError("pretrain_epochs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "run_name": self.run_name,
            "model": self.model.to_dict(),
            "opt": self.opt.to_dict(),
            "data": {
                "arith": {
                    "n": self.data.arith.n, "eval_n": self.data.arith.eval_n,
                    "probs": list(self.data.arith.probs),
                    "seed": self.data.arith.seed, "eval_seed": self.data.arith.eval_seed,
                },
                "corpora": [
                    {"grammar": c.grammar, "n_sentences": c.n_sentences,
                     "mask_rate": c.mask_rate, "seed": c.seed}
                    for c in self.data.corpora
                ],
                "heldout_sentences": self.data.heldout_sentences,
                "heldout_seed_offset": self.data.heldout_seed_offset,
            },
            "ewc": {"lambda": self.ewc.lam, "fisher_n_samples": self.ewc.fisher_n_samples},
            "sweep": {"grid": list(self.sweep.grid), "epochs": self.sweep.epochs},
            "tsne": {
                "perplexity": self.tsne.perplexity, "iters": self.tsne.iters,
                "learning_rate": self.tsne.learning_rate,
                "momentum_early": self.tsne.momentum_early,
                "momentum_late": self.tsne.momentum_late,
                "momentum_switch": self.tsne.momentum_switch,
                "exaggeration": self.tsne.exaggeration,
                "exaggeration_iters": self.tsne.exaggeration_iters,
                "seed": self.tsne.seed,
            },
            "vital_n": self.vital_n,
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "pretrain_epochs": self.pretrain_epochs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            data = d["data"]
            return cls(
                run_name=d["run_name"],
                model=ModelConfig.from_dict(d["model"]),
                opt=OptConfig.from_dict(d["opt"]),
                data=DataConfig(
                    arith=ArithDataConfig(**data["arith"]),
                    corpora=tuple(CorpusSpec(**c) for c in data["corpora"]),
                    heldout_sentences=data["heldout_sentences"],
                    heldout_seed_offset=data["heldout_seed_offset"],
                ),
                ewc=EwcRunConfig(lam=d["ewc"]["lambda"],
                                 fisher_n_samples=d["ewc"]["fisher_n_samples"]),
                sweep=SweepConfig(**d["sweep"]),
                tsne=TsneConfig(**d["tsne"]),
                vital_n=d["vital_n"],
                seeds=tuple(d["seeds"]),
                output_dir=d["output_dir"],
                pretrain_epochs=d["pretrain_epochs"],
            )
        except (KeyError, TypeError) as e:
            raise ConfigError(f"config schema violation: {e}") from e

    def with_overrides(self, seed=None, lam=None, output_dir=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seeds=(int(seed),))
        if lam is not None:
            cfg = replace(cfg, ewc=EwcRunConfig(lam=float(lam),
                                                fisher_n_samples=cfg.ewc.fisher_n_samples))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        return cfg


def default_config() -> RunConfig:
    """Desk-scale defaults: the full pipeline finishes in minutes on a CPU."""
    return RunConfig(
        run_name="desk",
        model=ModelConfig(),
        opt=OptConfig(epochs=30),  # 50-epoch runs exceed the 15-minute desk budget
        data=DataConfig(
            arith=ArithDataConfig(),
            corpora=(
                CorpusSpec(grammar="GRAMMAR_A", n_sentences=1200, mask_rate=0.15, seed=21),
                CorpusSpec(grammar="GRAMMAR_B", n_sentences=1200, mask_rate=0.15, seed=22),
            ),
        ),
        ewc=EwcRunConfig(),
        sweep=SweepConfig(),
        tsne=TsneConfig(),
        vital_n=800,
        seeds=(0, 1),
        output_dir="runs",
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as f:
            return RunConfig.from_dict(json.load(f))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from e


def save_config(cfg: RunConfig, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
