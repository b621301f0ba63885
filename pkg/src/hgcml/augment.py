"""Stochastic corruption of metapath views: edge dropping, feature masking.

Both corruptions are pure functions of (view, probabilities, stream).
Each undirected edge is one Bernoulli trial, so symmetry survives
dropping; feature masking zeroes whole columns by default (`mask_mode =
"columns"`) or independent entries (`"entries"`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .hin import MetapathView
from .rng import substream

MASK_MODES = ("columns", "entries")


@dataclass(frozen=True)
class CorruptionConfig:
    p_e: float
    p_f: float
    seed: int
    mask_mode: str = "columns"

    def __post_init__(self):
        for name, p in (("p_e", self.p_e), ("p_f", self.p_f)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}")


def drop_edges(view: MetapathView, p_e: float, rng: np.random.Generator) -> MetapathView:
    """Remove each undirected edge with probability p_e."""
    n = view.n_nodes
    upper = sp.triu(view.adjacency, k=1).tocoo()
    keep = rng.random(upper.nnz) >= p_e
    rows = upper.row[keep]
    cols = upper.col[keep]
    adjacency = sp.csr_matrix(
        (np.ones(2 * rows.size),
         (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n), dtype=np.float64)
    return MetapathView(adjacency=adjacency, features=view.features,
                        metapath=view.metapath)


def mask_features(view: MetapathView, p_f: float, rng: np.random.Generator,
                  mask_mode: str = "columns") -> MetapathView:
    """Zero masked feature dimensions (or entries) across all nodes."""
    if mask_mode not in MASK_MODES:
        raise ValueError(f"mask_mode must be one of {MASK_MODES}")
    features = view.features.copy()
    if mask_mode == "columns":
        masked = rng.random(features.shape[1]) < p_f
        features[:, masked] = 0.0
    else:
        features[rng.random(features.shape) < p_f] = 0.0
    return MetapathView(adjacency=view.adjacency, features=features,
                        metapath=view.metapath)


def corrupt(view: MetapathView, cfg: CorruptionConfig) -> MetapathView:
    """Feature masking then edge dropping, on independent substreams."""
    out = mask_features(view, cfg.p_f, substream(cfg.seed, "features"),
                        cfg.mask_mode)
    out = drop_edges(out, cfg.p_e, substream(cfg.seed, "edges"))
    return out
