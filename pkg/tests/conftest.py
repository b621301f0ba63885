"""Shared fixtures: toy bibliographic HIN, random typed graphs, oracles."""

import os

import numpy as np
import pytest
import scipy.sparse as sp

import hgcml.numerics as nm
from hgcml.hin import (HIN, MetapathSpec, RelationDecl, SchemaConfig, load_hin)
from hgcml.io import write_matrix
from hgcml.rng import substream

# Small bibliographic network: 4 authors, 5 papers, 3 subjects,
# 2 conferences. a1 co-authors p1 with a2; a3 and a4 share p5.
TOY_SCHEMA = SchemaConfig(
    types=("author", "paper", "subject", "conference"),
    relations=(RelationDecl("AP", "author", "paper"),
               RelationDecl("PS", "paper", "subject"),
               RelationDecl("PC", "paper", "conference")),
    target_type="author")

TOY_NODES = [("a1", "author"), ("a2", "author"), ("a3", "author"),
             ("a4", "author"),
             ("p1", "paper"), ("p2", "paper"), ("p3", "paper"),
             ("p4", "paper"), ("p5", "paper"),
             ("s1", "subject"), ("s2", "subject"), ("s3", "subject"),
             ("c1", "conference"), ("c2", "conference")]

TOY_EDGES = [("a1", "p1", "AP"), ("a2", "p1", "AP"), ("a2", "p2", "AP"),
             ("a3", "p3", "AP"), ("a3", "p5", "AP"), ("a4", "p5", "AP"),
             ("p1", "s1", "PS"), ("p2", "s1", "PS"), ("p3", "s3", "PS"),
             ("p4", "s3", "PS"), ("p5", "s2", "PS"),
             ("p1", "c1", "PC"), ("p2", "c1", "PC"), ("p3", "c1", "PC"),
             ("p4", "c2", "PC"), ("p5", "c2", "PC")]

APA = MetapathSpec("APA", ("AP", "AP"))
APSPA = MetapathSpec("APSPA", ("AP", "PS", "PS", "AP"))
APCPA = MetapathSpec("APCPA", ("AP", "PC", "PC", "AP"))


def write_toy_files(dirpath, features=None, labels=None):
    """Materialize the toy network in the on-disk input formats."""
    paths = {name: os.path.join(dirpath, f"{name}.tsv")
             for name in ("nodes", "edges", "labels")}
    paths["features"] = os.path.join(dirpath, "features.bin")
    with open(paths["nodes"], "w", encoding="utf-8") as fh:
        for node_id, type_name in TOY_NODES:
            fh.write(f"{node_id}\t{type_name}\n")
    with open(paths["edges"], "w", encoding="utf-8") as fh:
        for src, dst, rel in TOY_EDGES:
            fh.write(f"{src}\t{dst}\t{rel}\n")
    if features is None:
        features = np.arange(8, dtype=np.float64).reshape(4, 2) + 1.0
    write_matrix(paths["features"], features)
    if labels is not None:
        with open(paths["labels"], "w", encoding="utf-8") as fh:
            for i, label in enumerate(labels):
                fh.write(f"a{i + 1}\t{label}\n")
    else:
        paths["labels"] = None
    return paths


@pytest.fixture
def toy_paths(tmp_path):
    return write_toy_files(str(tmp_path))


@pytest.fixture
def toy_hin(toy_paths):
    return load_hin(toy_paths["nodes"], toy_paths["edges"],
                    toy_paths["features"], toy_paths["labels"], TOY_SCHEMA)


def build_hin(schema, counts, edges, features, labels=None):
    """Assemble a HIN in memory: edges are (relation, src_idx, dst_idx)."""
    node_ids = {t: [f"{t}{i}" for i in range(counts.get(t, 0))]
                for t in schema.types}
    biadjacency = {}
    for rel in schema.relations:
        rows = [e[1] for e in edges if e[0] == rel.name]
        cols = [e[2] for e in edges if e[0] == rel.name]
        mat = sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)),
            shape=(counts[rel.src], counts[rel.dst]), dtype=np.float64)
        mat.data[:] = 1.0
        biadjacency[rel.name] = mat
    return HIN(schema=schema, node_ids=node_ids, biadjacency=biadjacency,
               features=np.asarray(features, dtype=np.float64), labels=labels)


def brute_force_view(hin, spec):
    """Path-enumeration oracle: walk every typed path, connect endpoints."""
    schema = hin.schema
    steps = []
    current = schema.target_type
    for rel_name in spec.relations:
        rel = schema.relation(rel_name)
        coo = hin.biadjacency[rel_name].tocoo()
        neighbors = {}
        if current == rel.src:
            for i, j in zip(coo.row, coo.col):
                neighbors.setdefault(int(i), set()).add(int(j))
            current = rel.dst
        elif current == rel.dst:
            for i, j in zip(coo.row, coo.col):
                neighbors.setdefault(int(j), set()).add(int(i))
            current = rel.src
        else:
            raise AssertionError(f"oracle chain broken at {rel_name}")
        steps.append(neighbors)
    assert current == schema.target_type
    n = hin.n_target
    adj = np.zeros((n, n))
    for start in range(n):
        frontier = {start}
        for neighbors in steps:
            frontier = set().union(
                *(neighbors.get(u, set()) for u in frontier)) if frontier else set()
        for end in frontier:
            if end != start:
                adj[start, end] = 1.0
    return np.maximum(adj, adj.T)


def random_typed_case(rng):
    """A random small typed graph plus a type-correct metapath."""
    variant = rng.integers(4)
    n_t = int(rng.integers(2, 21))
    n_u = int(rng.integers(1, 16))
    density = float(rng.uniform(0.05, 0.4))

    def bernoulli_edges(rel, n_src, n_dst):
        mask = rng.random((n_src, n_dst)) < density
        return [(rel, int(i), int(j)) for i, j in zip(*np.nonzero(mask))]

    if variant == 0:
        schema = SchemaConfig(types=("t", "u"),
                              relations=(RelationDecl("R0", "t", "u"),),
                              target_type="t")
        counts = {"t": n_t, "u": n_u}
        edges = bernoulli_edges("R0", n_t, n_u)
        spec = MetapathSpec("m", ("R0", "R0"))
    elif variant == 1:
        n_v = int(rng.integers(1, 11))
        schema = SchemaConfig(types=("t", "u", "v"),
                              relations=(RelationDecl("R0", "t", "u"),
                                         RelationDecl("R1", "u", "v")),
                              target_type="t")
        counts = {"t": n_t, "u": n_u, "v": n_v}
        edges = bernoulli_edges("R0", n_t, n_u) + bernoulli_edges("R1", n_u, n_v)
        spec = MetapathSpec("m", ("R0", "R1", "R1", "R0"))
    elif variant == 2:
        # non-palindromic chain; may produce an asymmetric product
        schema = SchemaConfig(types=("t", "u"),
                              relations=(RelationDecl("R0", "t", "u"),
                                         RelationDecl("R1", "u", "t")),
                              target_type="t")
        counts = {"t": n_t, "u": n_u}
        edges = bernoulli_edges("R0", n_t, n_u) + bernoulli_edges("R1", n_u, n_t)
        spec = MetapathSpec("m", ("R0", "R1"))
    else:
        schema = SchemaConfig(types=("t", "u"),
                              relations=(RelationDecl("R0", "t", "u"),),
                              target_type="t")
        counts = {"t": n_t, "u": n_u}
        edges = bernoulli_edges("R0", n_t, n_u)
        spec = MetapathSpec("m", ("R0", "R0", "R0", "R0"))
    features = rng.standard_normal((n_t, 3))
    return build_hin(schema, counts, edges, features), spec


def numerics_grad_cases():
    """One scalar-valued closure per differentiable op, inputs in [-2, 2]."""

    def param(shape, label, lo=-2.0, hi=2.0, away_from=None):
        rng = substream(7, "gradcase", label)
        data = rng.uniform(lo, hi, size=shape)
        if away_from is not None:
            # keep inputs clear of the kink for finite differences
            data = np.where(np.abs(data - away_from) < 1e-2,
                            data + 2e-2, data)
        return nm.Tensor(data, requires_grad=True)

    cases = []

    def case(name, build):
        cases.append((name, build))

    def c_matmul():
        a, b = param((3, 4), "mm_a"), param((4, 2), "mm_b")
        return lambda: nm.mean_all(nm.matmul(a, b)), [a, b]
    case("matmul", c_matmul)

    def c_spmm():
        dense = (substream(7, "gradcase", "sp").random((4, 4)) < 0.5) * 1.0
        s = nm.SparseMatrix(sp.csr_matrix(dense))
        x = param((4, 3), "sp_x")
        return lambda: nm.mean_all(nm.spmm(s, x)), [x]
    case("spmm", c_spmm)

    def c_add():
        a, b = param((3, 3), "add_a"), param((3, 3), "add_b")
        return lambda: nm.mean_all(nm.add(a, b)), [a, b]
    case("add", c_add)

    def c_sub():
        a, b = param((3, 3), "sub_a"), param((3, 3), "sub_b")
        return lambda: nm.mean_all(nm.sub(a, b)), [a, b]
    case("sub", c_sub)

    def c_mul():
        a, b = param((3, 3), "mul_a"), param((3, 3), "mul_b")
        return lambda: nm.mean_all(nm.mul(a, b)), [a, b]
    case("mul", c_mul)

    def c_scale():
        a = param((3, 3), "scale_a")
        return lambda: nm.mean_all(nm.scale(a, -1.7)), [a]
    case("scale", c_scale)

    def c_add_bias():
        a, b = param((4, 3), "ab_a"), param((1, 3), "ab_b")
        return lambda: nm.mean_all(nm.add_bias(a, b)), [a, b]
    case("add_bias", c_add_bias)

    def c_add_const():
        a = param((3, 3), "ac_a")
        return lambda: nm.mean_all(nm.add_const(a, 0.9)), [a]
    case("add_const", c_add_const)

    def c_mul_const():
        a = param((3, 3), "mc_a")
        k = substream(7, "gradcase", "mc_k").uniform(-2, 2, size=(3, 3))
        return lambda: nm.mean_all(nm.mul_const(a, k)), [a]
    case("mul_const", c_mul_const)

    def c_relu():
        a = param((4, 4), "relu_a", away_from=0.0)
        return lambda: nm.mean_all(nm.relu(a)), [a]
    case("relu", c_relu)

    def c_sigmoid():
        a = param((4, 4), "sig_a")
        return lambda: nm.mean_all(nm.sigmoid(a)), [a]
    case("sigmoid", c_sigmoid)

    def c_exp():
        a = param((4, 4), "exp_a")
        return lambda: nm.mean_all(nm.exp(a)), [a]
    case("exp", c_exp)

    def c_log():
        a = param((4, 4), "log_a", lo=0.1, hi=2.0)
        return lambda: nm.mean_all(nm.log(a)), [a]
    case("log", c_log)

    def c_softplus():
        a = param((4, 4), "sp_a")
        return lambda: nm.mean_all(nm.softplus(a)), [a]
    case("softplus", c_softplus)

    def c_transpose():
        a = param((3, 5), "tr_a")
        w = substream(7, "gradcase", "tr_w").uniform(-1, 1, size=(5, 3))
        return lambda: nm.mean_all(nm.mul_const(nm.transpose(a), w)), [a]
    case("transpose", c_transpose)

    def c_row_sum():
        a = param((4, 3), "rs_a")
        return lambda: nm.mean_all(nm.exp(nm.row_sum(a))), [a]
    case("row_sum", c_row_sum)

    def c_mean_rows():
        a = param((4, 3), "mr_a")
        return lambda: nm.mean_all(nm.exp(nm.mean_rows(a))), [a]
    case("mean_rows", c_mean_rows)

    def c_mean_all():
        a = param((4, 3), "ma_a")
        return lambda: nm.exp(nm.mean_all(a)), [a]
    case("mean_all", c_mean_all)

    def c_row_l2_normalize():
        a = param((4, 3), "l2_a", lo=0.2, hi=1.5)
        w = substream(7, "gradcase", "l2_w").uniform(-1, 1, size=(4, 3))
        return lambda: nm.mean_all(nm.mul_const(nm.row_l2_normalize(a), w)), [a]
    case("row_l2_normalize", c_row_l2_normalize)

    def c_cosine_rowwise():
        a = param((4, 3), "cos_a", lo=0.2, hi=1.5)
        b = param((4, 3), "cos_b", lo=0.2, hi=1.5)
        return lambda: nm.mean_all(nm.cosine_rowwise(a, b)), [a, b]
    case("cosine_rowwise", c_cosine_rowwise)

    def c_concat_cols():
        a, b = param((3, 2), "cc_a"), param((3, 4), "cc_b")
        w = substream(7, "gradcase", "cc_w").uniform(-1, 1, size=(3, 6))
        return lambda: nm.mean_all(
            nm.mul_const(nm.concat_cols([a, b]), w)), [a, b]
    case("concat_cols", c_concat_cols)

    def c_permute_rows():
        a = param((5, 3), "pr_a")
        perm = substream(7, "gradcase", "pr_p").permutation(5)
        w = substream(7, "gradcase", "pr_w").uniform(-1, 1, size=(5, 3))
        return lambda: nm.mean_all(
            nm.mul_const(nm.permute_rows(a, perm), w)), [a]
    case("permute_rows", c_permute_rows)

    def c_bilinear():
        h = param((3, 4), "bl_h")
        b = param((4, 4), "bl_b")
        s = param((1, 4), "bl_s")
        return lambda: nm.mean_all(nm.sigmoid(nm.bilinear(h, b, s))), [h, b, s]
    case("bilinear", c_bilinear)

    return cases
