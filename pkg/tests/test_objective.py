"""Contrastive losses: InfoNCE over positive sets and the global
discriminator objective, summed over ordered view pairs."""

import math
from collections import OrderedDict

import numpy as np
import pytest
import scipy.sparse as sp

import hgcml.numerics as nm
from hgcml.augment import CorruptionConfig, corrupt
from hgcml.hin import MetapathSpec, MetapathView
from hgcml.model import ModelParams, init_params, readout
from hgcml.numerics import Tensor
from hgcml.objective import (ContrastTerm, TauNonPositive, node_graph_loss,
                             node_node_loss, pair_terms, total_objective)
from hgcml.positives import PositiveSets, select_positives
from hgcml.rng import substream


def identity_params(d, names=("m",)):
    eye = np.eye(d)
    enc = OrderedDict((n, Tensor(eye.copy(), requires_grad=True)) for n in names)
    return ModelParams(
        encoders=enc,
        proj_w1=Tensor(eye.copy(), requires_grad=True),
        proj_b1=Tensor(np.zeros((1, d)), requires_grad=True),
        proj_w2=Tensor(eye.copy(), requires_grad=True),
        proj_b2=Tensor(np.zeros((1, d)), requires_grad=True),
        disc_b=Tensor(np.zeros((d, d)), requires_grad=True))


def rand_z(n, d, label, positive=False):
    rng = substream(17, "obj", label)
    data = rng.uniform(0.2, 1.0, (n, d)) if positive else rng.standard_normal((n, d))
    return Tensor(data, requires_grad=True)


def make_views(n_nodes, n_views, d_in, seed):
    rng = substream(seed, "objviews")
    views = []
    for v in range(n_views):
        upper = np.triu(rng.random((n_nodes, n_nodes)) < 0.5, k=1)
        dense = (upper | upper.T).astype(np.float64)
        views.append(MetapathView(
            adjacency=sp.csr_matrix(dense),
            features=rng.standard_normal((n_nodes, d_in)),
            metapath=MetapathSpec(f"v{v}", ("R", "R"))))
    return views


def corruption_pairs(views, seed):
    pairs = []
    for i, view in enumerate(views):
        one = corrupt(view, CorruptionConfig(p_e=0.3, p_f=0.3, seed=seed + 2 * i))
        two = corrupt(view, CorruptionConfig(p_e=0.3, p_f=0.3, seed=seed + 2 * i + 1))
        pairs.append((one, two))
    return pairs


def test_identical_embeddings_two_nodes_give_log3():
    z = Tensor(np.array([[1.0, 2.0], [1.0, 2.0]]))
    ps = PositiveSets.anchor_only(2)
    loss = node_node_loss(z, z, ps, tau=0.5)
    assert loss.item() == pytest.approx(math.log(3.0), abs=1e-10)
    # temperature cancels when every similarity ties
    loss2 = node_node_loss(z, z, ps, tau=0.07)
    assert loss2.item() == pytest.approx(math.log(3.0), abs=1e-10)


def test_identical_embeddings_n_nodes_give_log_2n_minus_1():
    n = 5
    z = Tensor(np.tile([[0.3, -0.7, 0.2]], (n, 1)))
    loss = node_node_loss(z, z, PositiveSets.anchor_only(n), tau=0.4)
    assert loss.item() == pytest.approx(math.log(2 * n - 1), abs=1e-10)


def test_single_node_loss_is_zero():
    z = rand_z(1, 4, "single")
    loss = node_node_loss(z, z, PositiveSets.anchor_only(1), tau=0.5)
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_all_positive_universe_loss_is_zero():
    n = 4
    z = rand_z(n, 3, "allpos")
    everything = [np.arange(n, dtype=np.int64) for _ in range(n)]
    ps = PositiveSets(sets=everything, topo=None, sem=None, k_t=n - 1, k_s=0)
    loss = node_node_loss(z, rand_z(n, 3, "allpos2"), ps, tau=0.5)
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_loss_positive_when_negatives_exist():
    z = rand_z(6, 4, "pos")
    loss = node_node_loss(z, rand_z(6, 4, "pos2"),
                          PositiveSets.anchor_only(6), tau=0.5)
    assert loss.item() > 0.0


def test_node_node_loss_brute_force_oracle():
    n, d, tau = 5, 3, 0.7
    z_m, z_n = rand_z(n, d, "bf1"), rand_z(n, d, "bf2")
    sim_t = substream(18, "bf").random((n, n))
    sim_s = substream(19, "bf").random((n, n))
    ps = select_positives(sim_t, sim_s, 1, 1)
    loss = node_node_loss(z_m, z_n, ps, tau).item()

    def unit(x):
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    um, un = unit(z_m.data), unit(z_n.data)
    theta_mn = np.exp(um @ un.T / tau)
    theta_mm = np.exp(um @ um.T / tau)
    per_anchor = []
    for u in range(n):
        pos = set(ps.sets[u].tolist())
        num = sum(theta_mn[u, v] for v in pos)
        neg = sum(theta_mm[u, v] + theta_mn[u, v]
                  for v in range(n) if v not in pos)
        per_anchor.append(-math.log(num / (num + neg)))
    assert loss == pytest.approx(np.mean(per_anchor), abs=1e-10)


def test_node_node_loss_permutation_equivariance():
    n, d = 6, 4
    z_m, z_n = rand_z(n, d, "perm1"), rand_z(n, d, "perm2")
    ps = select_positives(substream(20, "perm").random((n, n)),
                          substream(21, "perm").random((n, n)), 2, 1)
    base = node_node_loss(z_m, z_n, ps, tau=0.5).item()
    perm = substream(22, "perm").permutation(n)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(n)
    permuted_sets = [np.sort(inv[ps.sets[orig]]) for orig in perm]
    ps_p = PositiveSets(sets=permuted_sets, topo=None, sem=None, k_t=2, k_s=1)
    shuffled = node_node_loss(Tensor(z_m.data[perm]), Tensor(z_n.data[perm]),
                              ps_p, tau=0.5).item()
    assert shuffled == pytest.approx(base, abs=1e-12)


def test_node_node_loss_cosine_scale_invariance():
    n, d = 5, 4
    z_m, z_n = rand_z(n, d, "scale1"), rand_z(n, d, "scale2")
    ps = PositiveSets.anchor_only(n)
    base = node_node_loss(z_m, z_n, ps, tau=0.5).item()
    row_scales = substream(23, "scale").uniform(0.1, 10.0, (n, 1))
    scaled = node_node_loss(Tensor(z_m.data * row_scales),
                            Tensor(z_n.data * 3.7), ps, tau=0.5).item()
    assert abs(scaled - base) <= 1e-10


def test_tau_must_be_positive():
    z = rand_z(3, 2, "tau")
    with pytest.raises(TauNonPositive):
        node_node_loss(z, z, PositiveSets.anchor_only(3), tau=0.0)
    with pytest.raises(TauNonPositive):
        node_node_loss(z, z, PositiveSets.anchor_only(3), tau=-1.0)


def test_zero_discriminator_gives_two_log_two():
    params = identity_params(3)
    h = rand_z(4, 3, "disc1", positive=True)
    h_neg = rand_z(4, 3, "disc2", positive=True)
    s = readout(h)
    loss = node_graph_loss(h, h_neg, s, params)
    assert loss.item() == pytest.approx(2.0 * math.log(2.0), abs=1e-12)


def test_node_graph_loss_numpy_oracle():
    d = 3
    params = identity_params(d)
    b = substream(24, "ng").standard_normal((d, d))
    params.disc_b = Tensor(b.copy(), requires_grad=True)
    h = rand_z(5, d, "ng1", positive=True)
    h_neg = rand_z(5, d, "ng2", positive=True)
    s = readout(h)
    loss = node_graph_loss(h, h_neg, s, params).item()
    # identity projector keeps positive activations unchanged
    summary = h.data.mean(axis=0, keepdims=True)
    pos = h.data @ b @ summary.T
    neg = h_neg.data @ b @ summary.T
    softplus = lambda x: np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))
    expected = float(np.mean(softplus(-pos) + softplus(neg)))
    assert loss == pytest.approx(expected, abs=1e-12)


def test_pair_term_count_and_kinds():
    for n_views, expected in ((1, 1), (2, 4), (3, 9)):
        views = make_views(5, n_views, 3, seed=30 + n_views)
        params = init_params([v.metapath.name for v in views],
                             d_in=3, d=4, seed=1)
        perms = [substream(31, "p", i).permutation(5)
                 for i in range(n_views)]
        terms = pair_terms(corruption_pairs(views, seed=40), params,
                           PositiveSets.anchor_only(5), tau=0.5,
                           neg_perms=perms)
        assert len(terms) == expected
        kinds = {(t.m, t.n): t.kind for t in terms}
        assert all(kinds[(m, n)] == ("intra" if m == n else "inter")
                   for m, n in kinds)
        intra = sum(t.kind == "intra" for t in terms)
        assert intra == n_views


def test_total_objective_equals_sum_of_terms():
    views = make_views(6, 2, 3, seed=50)
    names = [v.metapath.name for v in views]
    params = init_params(names, d_in=3, d=4, seed=2)
    ps = PositiveSets.anchor_only(6)
    perms = [substream(51, "p", i).permutation(6) for i in range(len(names))]
    corrupted = corruption_pairs(views, seed=60)
    terms = pair_terms(corrupted, params, ps, tau=0.5, neg_perms=perms)
    total = total_objective(corrupted, params, ps, tau=0.5, neg_perms=perms)
    by_hand = sum(t.local_loss.item() + t.global_loss.item() for t in terms)
    assert total.item() == pytest.approx(by_hand, abs=1e-10)
    weighted = total_objective(corrupted, params, ps, tau=0.5, neg_perms=perms,
                               w_local=0.3, w_global=1.7)
    by_hand_w = sum(0.3 * t.local_loss.item() + 1.7 * t.global_loss.item()
                    for t in terms)
    assert weighted.item() == pytest.approx(by_hand_w, abs=1e-10)


def test_pair_terms_requires_negatives_or_literal_mode():
    views = make_views(4, 1, 3, seed=70)
    params = init_params(["v0"], d_in=3, d=4, seed=3)
    corrupted = corruption_pairs(views, seed=80)
    ps = PositiveSets.anchor_only(4)
    with pytest.raises(ValueError):
        pair_terms(corrupted, params, ps, tau=0.5, neg_perms=None)
    terms = pair_terms(corrupted, params, ps, tau=0.5, literal_eq2=True)
    assert len(terms) == 1


def test_objective_gradients_flow_to_all_parameters():
    views = make_views(5, 2, 3, seed=90)
    names = [v.metapath.name for v in views]
    params = init_params(names, d_in=3, d=4, seed=4)
    perms = [substream(91, "p", i).permutation(5) for i in range(len(names))]
    corrupted = corruption_pairs(views, seed=92)
    loss = total_objective(corrupted, params, PositiveSets.anchor_only(5),
                           tau=0.5, neg_perms=perms)
    loss.backward()
    for name, tensor in params.named_tensors():
        assert tensor.grad is not None, name
        assert np.isfinite(tensor.grad).all(), name
