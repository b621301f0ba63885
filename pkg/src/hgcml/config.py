"""Run configuration: one JSON document drives the whole pipeline.

Unknown keys are rejected at every level so typos fail loudly. Relative
dataset paths resolve against the config file's directory. A single
top-level seed feeds every random substream.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .hin import HinError, MetapathSpec, RelationDecl, SchemaConfig
from .synth import SynthConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    """The config document is malformed or carries invalid values."""


def _section(raw: dict, name: str, allowed) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in section {name!r}")
    return raw


@dataclass(frozen=True)
class DataPaths:
    nodes: str
    edges: str
    features: str
    labels: str | None = None


@dataclass(frozen=True)
class AugmentSettings:
    p_e: float = 0.3
    p_f: float = 0.3
    mask_mode: str = "columns"
    resample_every_epoch: bool = True


@dataclass(frozen=True)
class PositiveSettings:
    alpha: float = 0.85
    tol: float = 1e-6
    max_iter: int = 100
    k_t: int = 8
    k_s: int = 8
    cache_ppr: bool = False


@dataclass(frozen=True)
class TrainSettings:
    lr: float = 1e-3
    tau: float = 0.5
    dim: int = 64
    patience: int = 20
    max_epochs: int = 500
    fusion: str = "sum"
    share_encoder: bool = False
    literal_eq2: bool = False
    loss_weight_local: float = 1.0
    loss_weight_global: float = 1.0


@dataclass(frozen=True)
class EvalSettings:
    train_frac: float = 0.2
    probe_runs: int = 10
    cluster_runs: int = 10


@dataclass
class RunConfig:
    data: DataPaths
    schema: SchemaConfig
    metapaths: list[MetapathSpec]
    augment: AugmentSettings = field(default_factory=AugmentSettings)
    positives: PositiveSettings = field(default_factory=PositiveSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    seed: int = 0
    out: str | None = None
    base_dir: str = "."

    def path(self, name: str) -> str:
        """Dataset path resolved against the config file's directory."""
        raw = getattr(self.data, name)
        if raw is None:
            return None
        return raw if os.path.isabs(raw) else os.path.join(self.base_dir, raw)

    def train_config(self) -> TrainConfig:
        """Assemble the trainer's view of the settings."""
        return TrainConfig(
            lr=self.train.lr, tau=self.train.tau,
            p_e=self.augment.p_e, p_f=self.augment.p_f,
            k_t=self.positives.k_t, k_s=self.positives.k_s,
            dim=self.train.dim, patience=self.train.patience,
            max_epochs=self.train.max_epochs, fusion=self.train.fusion,
            seed=self.seed, share_encoder=self.train.share_encoder,
            literal_eq2=self.train.literal_eq2, mask_mode=self.augment.mask_mode,
            resample_every_epoch=self.augment.resample_every_epoch,
            w_local=self.train.loss_weight_local,
            w_global=self.train.loss_weight_global)


def parse_config(raw: dict, base_dir: str = ".") -> RunConfig:
    """Validate a config dict; raises ConfigError on any problem."""
    top = _section(raw, "<top>", (
        "data", "schema", "metapaths", "augment", "positives", "train",
        "eval", "seed", "out"))
    for required in ("data", "schema", "metapaths"):
        if required not in top:
            raise ConfigError(f"missing required section {required!r}")
    try:
        data = DataPaths(**_section(top["data"], "data",
                                    ("nodes", "edges", "features", "labels")))
        schema_raw = _section(top["schema"], "schema",
                              ("types", "target_type", "relations"))
        relations = tuple(
            RelationDecl(**_section(r, "relations[]", ("name", "src", "dst")))
            for r in schema_raw.get("relations", ()))
        schema = SchemaConfig(types=tuple(schema_raw["types"]),
                              relations=relations,
                              target_type=schema_raw["target_type"])
        metapaths = [
            MetapathSpec(name=m["name"], relations=tuple(m["relations"]))
            for m in (_section(m, "metapaths[]", ("name", "relations"))
                      for m in top["metapaths"])]
        train_raw = dict(_section(top.get("train", {}), "train", (
            "lr", "tau", "dim", "patience", "max_epochs", "fusion",
            "share_encoder", "literal_eq2", "loss_weights")))
        weights = _section(train_raw.pop("loss_weights", {}), "loss_weights",
                           ("local", "global"))
        train = TrainSettings(
            loss_weight_local=float(weights.get("local", 1.0)),
            loss_weight_global=float(weights.get("global", 1.0)),
            **train_raw)
        cfg = RunConfig(
            data=data,
            schema=schema,
            metapaths=metapaths,
            augment=AugmentSettings(**_section(top.get("augment", {}), "augment", (
                "p_e", "p_f", "mask_mode", "resample_every_epoch"))),
            positives=PositiveSettings(**_section(top.get("positives", {}), "positives", (
                "alpha", "tol", "max_iter", "k_t", "k_s", "cache_ppr"))),
            train=train,
            eval=EvalSettings(**_section(top.get("eval", {}), "eval", (
                "train_frac", "probe_runs", "cluster_runs"))),
            seed=int(top.get("seed", 0)),
            out=top.get("out"),
            base_dir=base_dir)
    except ConfigError:
        raise
    except (HinError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    try:
        cfg.train_config()  # reuses the trainer's range checks
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg.metapaths:
        raise ConfigError("at least one metapath is required")
    names = [m.name for m in cfg.metapaths]
    if len(set(names)) != len(names):
        raise ConfigError("metapath names must be unique")
    pos = cfg.positives
    if not 0.0 < pos.alpha <= 1.0:
        raise ConfigError(f"alpha must be in (0,1], got {pos.alpha}")
    if pos.tol <= 0 or pos.max_iter < 1:
        raise ConfigError("tol must be > 0 and max_iter >= 1")
    if min(pos.k_t, pos.k_s) < 0:
        raise ConfigError("k_t and k_s must be >= 0")
    ev = cfg.eval
    if not 0.0 < ev.train_frac < 1.0:
        raise ConfigError(f"train_frac must be in (0,1), got {ev.train_frac}")
    if ev.probe_runs < 1 or ev.cluster_runs < 1:
        raise ConfigError("probe_runs and cluster_runs must be >= 1")


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def to_dict(cfg: RunConfig) -> dict:
    """Full canonical dict (every key explicit); inverse of parse_config."""
    out = {
        "data": {k: v for k, v in (
            ("nodes", cfg.data.nodes), ("edges", cfg.data.edges),
            ("features", cfg.data.features), ("labels", cfg.data.labels))
            if v is not None},
        "schema": {
            "types": list(cfg.schema.types),
            "target_type": cfg.schema.target_type,
            "relations": [{"name": r.name, "src": r.src, "dst": r.dst}
                          for r in cfg.schema.relations],
        },
        "metapaths": [{"name": m.name, "relations": list(m.relations)}
                      for m in cfg.metapaths],
        "augment": {
            "p_e": cfg.augment.p_e, "p_f": cfg.augment.p_f,
            "mask_mode": cfg.augment.mask_mode,
            "resample_every_epoch": cfg.augment.resample_every_epoch,
        },
        "positives": {
            "alpha": cfg.positives.alpha, "tol": cfg.positives.tol,
            "max_iter": cfg.positives.max_iter, "k_t": cfg.positives.k_t,
            "k_s": cfg.positives.k_s, "cache_ppr": cfg.positives.cache_ppr,
        },
        "train": {
            "lr": cfg.train.lr, "tau": cfg.train.tau, "dim": cfg.train.dim,
            "patience": cfg.train.patience, "max_epochs": cfg.train.max_epochs,
            "fusion": cfg.train.fusion, "share_encoder": cfg.train.share_encoder,
            "literal_eq2": cfg.train.literal_eq2,
            "loss_weights": {"local": cfg.train.loss_weight_local,
                             "global": cfg.train.loss_weight_global},
        },
        "eval": {
            "train_frac": cfg.eval.train_frac,
            "probe_runs": cfg.eval.probe_runs,
            "cluster_runs": cfg.eval.cluster_runs,
        },
        "seed": cfg.seed,
    }
    if cfg.out is not None:
        out["out"] = cfg.out
    return out


def parse_synth_config(raw: dict) -> SynthConfig:
    """Standalone document for the fixture generator."""
    allowed = ("blocks", "block_size", "metapaths", "p_intra", "p_inter",
               "feature_dim", "feature_shift", "feature_noise", "seed")
    try:
        return SynthConfig(**_section(raw, "synth", allowed))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_synth_config(path) -> SynthConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_synth_config(raw)
