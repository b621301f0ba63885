"""Full-batch training loop with early stopping and embedding export.

Each epoch draws two corruptions per view (fresh substreams per epoch
unless resample_every_epoch is off), evaluates the total objective,
backpropagates, and takes one Adam step. The loop stops when the training
loss has not improved by at least 1e-6 for `patience` epochs or at
max_epochs. The checkpoint with the lowest recorded loss is kept; final
embeddings come from the uncorrupted views under that checkpoint, fused
per the configured mode.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import io
from .augment import MASK_MODES, CorruptionConfig, corrupt
from .hin import HIN, MetapathSpec, extract_metapath_view
from .model import (FUSION_MODES, ModeInvalid, ModelParams, fuse, gcn_forward,
                    init_params, params_from_checkpoint)
from .numerics import AdamState, NonFiniteResult
from .objective import total_objective
from .positives import PositiveSets
from .rng import derive_key, substream

MIN_IMPROVEMENT = 1e-6


@dataclass
class TrainConfig:
    lr: float = 1e-3              # paper grid 5e-4..5e-3
    tau: float = 0.5              # paper grid 0.2..0.8
    p_e: float = 0.3              # paper grid 0.1..0.7
    p_f: float = 0.3
    k_t: int = 8                  # paper grid 0..128; consumed by the sampler
    k_s: int = 8
    dim: int = 64
    patience: int = 20
    max_epochs: int = 500
    fusion: str = "sum"
    seed: int = 0
    share_encoder: bool = False
    literal_eq2: bool = False
    mask_mode: str = "columns"
    resample_every_epoch: bool = True
    w_local: float = 1.0
    w_global: float = 1.0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        for name, p in (("p_e", self.p_e), ("p_f", self.p_f)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1]")
        if min(self.k_t, self.k_s) < 0:
            raise ValueError("k_t and k_s must be >= 0")
        if self.fusion not in FUSION_MODES:
            raise ModeInvalid(f"fusion must be one of {FUSION_MODES}")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}")


class DivergedLoss(ArithmeticError):
    """Training hit a NaN/Inf loss; carries the last good state."""

    def __init__(self, epoch: int, checkpoint, trace):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch
        self.checkpoint = checkpoint
        self.trace = trace


@dataclass
class TrainResult:
    checkpoint: "OrderedDict[str, np.ndarray]"
    embeddings: np.ndarray
    trace: list[float] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_loss(self) -> float:
        return min(self.trace)


def _epoch_corruptions(views, cfg: TrainConfig, epoch: int):
    tick = epoch if cfg.resample_every_epoch else 0
    pairs = []
    for view in views:
        name = view.metapath.name
        first = corrupt(view, CorruptionConfig(
            cfg.p_e, cfg.p_f, derive_key(cfg.seed, "augment", name, 1, tick),
            cfg.mask_mode))
        second = corrupt(view, CorruptionConfig(
            cfg.p_e, cfg.p_f, derive_key(cfg.seed, "augment", name, 2, tick),
            cfg.mask_mode))
        pairs.append((first, second))
    return pairs, tick


def _shuffle_perms(views, cfg: TrainConfig, tick: int):
    return [substream(cfg.seed, "shuffle", view.metapath.name, tick)
            .permutation(view.n_nodes) for view in views]


def compute_embeddings(params: ModelParams, views, mode: str) -> np.ndarray:
    """Per-view encoder outputs on uncorrupted views, fused."""
    names = list(params.encoders)
    per_view = [gcn_forward(view, params.encoders[names[i]]).data
                for i, view in enumerate(views)]
    return fuse(per_view, mode)


def train(hin: HIN, metapaths, positives: PositiveSets,
          cfg: TrainConfig) -> TrainResult:
    """Train on all metapath views; returns checkpoint, embeddings, trace."""
    metapaths = list(metapaths)
    if not metapaths:
        raise ValueError("at least one metapath is required")
    views = [extract_metapath_view(hin, spec) for spec in metapaths]
    d_in = hin.features.shape[1]
    params = init_params([spec.name for spec in metapaths], d_in, cfg.dim,
                         cfg.seed, cfg.share_encoder)
    optimizer = AdamState(params.trainable(), lr=cfg.lr)

    trace: list[float] = []
    best = math.inf
    best_epoch = 0
    best_checkpoint = params.snapshot()
    stale = 0
    for epoch in range(cfg.max_epochs):
        corrupted, tick = _epoch_corruptions(views, cfg, epoch)
        perms = None if cfg.literal_eq2 else _shuffle_perms(views, cfg, tick)
        try:
            loss_tensor = total_objective(
                corrupted, params, positives, cfg.tau,
                literal_eq2=cfg.literal_eq2, neg_perms=perms,
                w_local=cfg.w_local, w_global=cfg.w_global)
            loss = loss_tensor.item()
        except NonFiniteResult as exc:
            raise DivergedLoss(epoch, best_checkpoint, trace) from exc
        if not math.isfinite(loss):
            raise DivergedLoss(epoch, best_checkpoint, trace)
        trace.append(loss)
        if best - loss >= MIN_IMPROVEMENT:
            stale = 0
        else:
            stale += 1
        if loss < best:
            best = loss
            best_epoch = epoch
            best_checkpoint = params.snapshot()
        if stale >= cfg.patience:
            break
        optimizer.zero_grad()
        loss_tensor.backward()
        optimizer.step()

    final = params_from_checkpoint(best_checkpoint,
                                   [spec.name for spec in metapaths],
                                   cfg.share_encoder)
    embeddings = compute_embeddings(final, views, cfg.fusion)
    return TrainResult(checkpoint=best_checkpoint, embeddings=embeddings,
                       trace=trace, best_epoch=best_epoch)


def export_embeddings(checkpoint, hin: HIN, metapaths, mode: str,
                      out_path) -> np.ndarray:
    """Recompute fused embeddings from a checkpoint and write them (f32)."""
    metapaths = list(metapaths)
    params = params_from_checkpoint(checkpoint, [m.name for m in metapaths])
    views = [extract_metapath_view(hin, spec) for spec in metapaths]
    embeddings = compute_embeddings(params, views, mode)
    io.write_matrix(out_path, embeddings)
    return embeddings


def write_trace(path, trace) -> None:
    """trace.tsv: epoch<TAB>loss, full float precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for epoch, loss in enumerate(trace):
            fh.write(f"{epoch}\t{loss!r}\n")
