"""Contrastive losses and their aggregation over metapath pairs.

Node-node: per anchor u the positive mass is the cross-view similarity
to its positive set P_u; negatives are the same-view and cross-view
similarities to everything outside P_u (u itself sits in P_u, so the
anchor's self-similarity never appears as a negative). Node-graph: a
bilinear discriminator scores rows against the view's mean summary,
positive branch vs a negative branch.

The total objective sums both losses over all ordered view pairs (m,n):
the intra pair (m,m) contrasts two corruptions of view m, the inter pair
(m,n) contrasts the first corruptions of views m and n. Per-anchor losses
are averaged so the scale is independent of the node count; the result is
minimized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .model import ModelParams, discriminator_logits, gcn_forward, project, readout
from .numerics import ShapeMismatch, Tensor
from .positives import PositiveSets


class TauNonPositive(ValueError):
    """Temperature must be strictly positive."""


def node_node_loss(z_m: Tensor, z_n: Tensor, positives: PositiveSets,
                   tau: float) -> Tensor:
    """Mean InfoNCE-style loss over anchors, on projected rows."""
    if tau <= 0:
        raise TauNonPositive(f"tau must be > 0, got {tau}")
    n = z_m.shape[0]
    if z_n.shape != z_m.shape:
        raise ShapeMismatch(f"projected views differ: {z_m.shape} vs {z_n.shape}")
    if positives.n != n:
        raise ShapeMismatch(f"positives cover {positives.n} nodes, views have {n}")
    pos_mask = positives.mask().astype(np.float64)
    neg_mask = 1.0 - pos_mask

    norm_m = nm.row_l2_normalize(z_m)
    norm_n = nm.row_l2_normalize(z_n)
    logits_mn = nm.scale(nm.matmul(norm_m, nm.transpose(norm_n)), 1.0 / tau)
    logits_mm = nm.scale(nm.matmul(norm_m, nm.transpose(norm_m)), 1.0 / tau)

    # log-sum-exp shift, detached: the true gradient is unchanged by it
    shift = np.maximum(logits_mn.data.max(axis=1), logits_mm.data.max(axis=1))
    shift = shift.reshape(n, 1)
    exp_mn = nm.exp(nm.add_const(logits_mn, -shift))
    exp_mm = nm.exp(nm.add_const(logits_mm, -shift))

    positive_mass = nm.row_sum(nm.mul_const(exp_mn, pos_mask))
    negative_mass = nm.add(nm.row_sum(nm.mul_const(exp_mm, neg_mask)),
                           nm.row_sum(nm.mul_const(exp_mn, neg_mask)))
    denominator = nm.add(positive_mass, negative_mass)
    per_anchor = nm.sub(nm.log(denominator), nm.log(positive_mass))
    return nm.mean_all(per_anchor)


def node_graph_loss(h_m: Tensor, h_neg: Tensor, s_m: Tensor,
                    params: ModelParams) -> Tensor:
    """Mean two-term BCE against the summary s_m.

    -log D(h_u, s) - log(1 - D(h'_u, s)) written as softplus of the
    bilinear logits, which is exact and stable.
    """
    if h_neg.shape != h_m.shape:
        raise ShapeMismatch(f"branch shapes differ: {h_m.shape} vs {h_neg.shape}")
    pos_logits = discriminator_logits(h_m, s_m, params)
    neg_logits = discriminator_logits(h_neg, s_m, params)
    per_node = nm.add(nm.softplus(nm.scale(pos_logits, -1.0)),
                      nm.softplus(neg_logits))
    return nm.mean_all(per_node)


@dataclass
class ContrastTerm:
    """One ordered view pair's losses; kind is intra iff m == n."""

    m: int
    n: int
    kind: str
    local_loss: Tensor
    global_loss: Tensor


def pair_terms(corrupted, params: ModelParams, positives: PositiveSets,
               tau: float, literal_eq2: bool = False,
               neg_perms=None) -> list[ContrastTerm]:
    """Losses for every ordered view pair under the corruption pairing.

    `corrupted` is one (first, second) corruption pair per metapath view,
    aligned with params.encoders order. The intra negative branch
    row-shuffles the second corruption with neg_perms[m] unless
    literal_eq2 is set.
    """
    corrupted = list(corrupted)
    if not corrupted:
        raise ValueError("at least one metapath view is required")
    names = list(params.encoders)
    if len(names) != len(corrupted):
        raise ShapeMismatch(
            f"{len(corrupted)} corrupted views for {len(names)} encoders")
    if not literal_eq2 and neg_perms is None:
        raise ValueError("neg_perms required unless literal_eq2 is set")

    h: dict[tuple[int, int], Tensor] = {}
    z: dict[tuple[int, int], Tensor] = {}
    for i, (first, second) in enumerate(corrupted):
        weight = params.encoders[names[i]]
        for copy, view in ((1, first), (2, second)):
            h[i, copy] = gcn_forward(view, weight)
            z[i, copy] = project(h[i, copy], params)
    summaries = {i: readout(h[i, 1]) for i in range(len(corrupted))}

    terms: list[ContrastTerm] = []
    for m in range(len(corrupted)):
        for n in range(len(corrupted)):
            if m == n:
                kind = "intra"
                local = node_node_loss(z[m, 1], z[m, 2], positives, tau)
                neg = h[m, 2] if literal_eq2 else nm.permute_rows(
                    h[m, 2], neg_perms[m])
            else:
                kind = "inter"
                local = node_node_loss(z[m, 1], z[n, 1], positives, tau)
                neg = h[n, 1]
            glob = node_graph_loss(h[m, 1], neg, summaries[m], params)
            terms.append(ContrastTerm(m=m, n=n, kind=kind,
                                      local_loss=local, global_loss=glob))
    return terms


def total_objective(corrupted, params: ModelParams, positives: PositiveSets,
                    tau: float, literal_eq2: bool = False, neg_perms=None,
                    w_local: float = 1.0, w_global: float = 1.0) -> Tensor:
    """Weighted sum of both losses over all ordered view pairs; minimized."""
    total: Tensor | None = None
    for term in pair_terms(corrupted, params, positives, tau,
                           literal_eq2=literal_eq2, neg_perms=neg_perms):
        weighted = nm.add(nm.scale(term.local_loss, w_local),
                          nm.scale(term.global_loss, w_global))
        total = weighted if total is None else nm.add(total, weighted)
    return total
