"""Shared test utilities: synthetic corpora, pluggable scorers, brute-force oracles."""

import math

import numpy as np

from coarsefine import Document
from coarsefine.cluster_tree import TERMINAL, ClusterNode, ClusterTree
from coarsefine.kmeans import derive_seed


class UniformScorer:
    """Spreads probability evenly over whatever digits are valid."""

    def score_next(self, query, prefix, valid):
        p = 1.0 / len(valid)
        return {d: p for d in valid}


class SeededScorer:
    """Deterministic random softmax per prefix; stands in for a trained decoder."""

    def __init__(self, seed: int, sigma: float = 2.0):
        self.seed = seed
        self.sigma = sigma

    def score_next(self, query, prefix, valid):
        digits = sorted(valid)
        rng = np.random.default_rng(derive_seed(self.seed, "scorer", *prefix))
        logits = self.sigma * rng.standard_normal(len(digits))
        z = np.exp(logits - logits.max())
        z /= z.sum()
        return {d: float(p) for d, p in zip(digits, z)}


class AxisEmbedder:
    """Maps a text to the standard basis vector named by its first token.

    Lets tests pin exact (usually orthogonal) embeddings for queries while
    still looking like an embedder to the pipeline.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.seed = 0

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float32)
        vec[int(text.split()[0]) % self.dim] = 1.0
        return vec


def axis_vec(dim: int, axis: int) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.float32)
    vec[axis % dim] = 1.0
    return vec


def blob_embeddings(counts, dim, seed, spread=0.05):
    """Gaussian blobs around orthogonal axes; returns {doc_id: unit f32 row}.

    counts[b] points are drawn around basis axis b as 'b{b}_{i}'.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for b, n in enumerate(counts):
        for i in range(n):
            row = spread * rng.standard_normal(dim)
            row[b % dim] += 1.0
            row /= np.linalg.norm(row)
            out[f"b{b}_{i:03d}"] = row.astype(np.float32)
    return out


def topic_corpus(n_topics, docs_per_topic, seed, vocab_per_topic=30, doc_len=20,
                 common_vocab=0, common_frac=0.0):
    """Documents whose tokens come from per-topic vocabularies.

    Optionally mixes in a shared vocabulary so topics are lexically noisy.
    """
    rng = np.random.default_rng(seed)
    docs = []
    for t in range(n_topics):
        for i in range(docs_per_topic):
            words = []
            for _ in range(doc_len):
                if common_vocab and rng.random() < common_frac:
                    words.append(f"c{int(rng.integers(0, common_vocab))}")
                else:
                    words.append(f"t{t}w{int(rng.integers(0, vocab_per_topic))}")
            docs.append(Document(f"d{t:02d}_{i:04d}", " ".join(words)))
    return docs


def subtopic_corpus(seed, n_topics=10, subs_per_topic=4, docs_per_sub=25, sub_vocab=25,
                    common_vocab=40, doc_len=30, common_frac=0.4, n_queries=50,
                    n_rel=5, q_words=4, mix_frac=0.3):
    """1000-doc corpus with 10 topics split into 4 subtopics of 25 docs each.

    Tokens mix a shared vocabulary (cross-topic noise) with a subtopic
    vocabulary. Each query samples words from two of its relevant docs; a
    mix_frac fraction of queries spreads its relevant set over two subtopics
    of the same topic so no single leaf cluster can satisfy it.
    Returns (docs, [(query_id, query_text, frozenset(relevant))]).
    """
    rng = np.random.default_rng(seed)
    docs, by_sub = [], {}
    for t in range(n_topics):
        for s in range(subs_per_topic):
            by_sub[(t, s)] = []
            for i in range(docs_per_sub):
                words = []
                for _ in range(doc_len):
                    if rng.random() < common_frac:
                        words.append(f"c{int(rng.integers(0, common_vocab))}")
                    else:
                        words.append(f"t{t}s{s}w{int(rng.integers(0, sub_vocab))}")
                did = f"d{t:02d}_{s}_{i:03d}"
                docs.append(Document(did, " ".join(words)))
                by_sub[(t, s)].append(did)
    doc_map = {d.doc_id: d for d in docs}
    queries = []
    for qi in range(n_queries):
        t = int(rng.integers(0, n_topics))
        if rng.random() < mix_frac:
            s1, s2 = rng.choice(subs_per_topic, size=2, replace=False)
            rel = [by_sub[(t, int(s1))][int(i)]
                   for i in rng.choice(docs_per_sub, size=3, replace=False)]
            rel += [by_sub[(t, int(s2))][int(i)]
                    for i in rng.choice(docs_per_sub, size=2, replace=False)]
            sources = [rel[0], rel[3]]
        else:
            s = int(rng.integers(0, subs_per_topic))
            rel = [by_sub[(t, s)][int(i)]
                   for i in rng.choice(docs_per_sub, size=n_rel, replace=False)]
            sources = rel[:2]
        terms = []
        for r in sources:
            toks = doc_map[r].text.split()
            terms += [toks[int(j)] for j in rng.choice(len(toks), size=q_words, replace=False)]
        queries.append((f"q{qi}", " ".join(terms), frozenset(rel)))
    return docs, queries


def random_cids(seed, max_leaves=64, branching=4, max_depth=3):
    """A random consistent CID set (proper tree shape, ≤ max_leaves leaves)."""
    rng = np.random.default_rng(seed)
    cids = []

    def grow(prefix, depth):
        n_children = int(rng.integers(1, branching + 1))
        for j in range(1, n_children + 1):
            if len(cids) >= max_leaves:
                return
            path = prefix + (j,)
            if depth >= max_depth or rng.random() < 0.45:
                cids.append(path + (TERMINAL,))
            else:
                grow(path, depth + 1)

    grow((), 0)
    return cids


def brute_force_hypotheses(scorer, trie, query=None):
    """(cid, log_prob) for every CID by multiplying step probabilities."""
    out = []
    for cid in trie.cids():
        lp = 0.0
        for i in range(len(cid)):
            prefix = cid[:i]
            probs = scorer.score_next(query, prefix, trie.valid_next(prefix))
            lp += math.log(probs[cid[i]])
        out.append((cid, lp))
    return out


def rank_by_penalized(pairs, length_penalty, k):
    """Reference beam ranking: log_prob / len^alpha desc, lexicographic ties."""
    ranked = sorted(pairs, key=lambda t: (-(t[1] / len(t[0]) ** length_penalty), t[0]))
    return ranked[:k]


def leaf_node(label, centroid, members):
    return ClusterNode(label=label, centroid=centroid, children=[], members=list(members))


def binary_depth2_tree(dim=8):
    """Hand-built tree with CIDs (1,1,0), (1,2,0), (2,1,0), (2,2,0).

    Leaf (1,1) holds two docs so cluster-local negatives exist; the other
    leaves hold one each. Centroids sit on distinct axes.
    """
    n11 = leaf_node(1, axis_vec(dim, 0), ["d11a", "d11b"])
    n12 = leaf_node(2, axis_vec(dim, 1), ["d12a"])
    n21 = leaf_node(1, axis_vec(dim, 2), ["d21a"])
    n22 = leaf_node(2, axis_vec(dim, 3), ["d22a"])
    top1 = ClusterNode(label=1, centroid=axis_vec(dim, 4), children=[n11, n12], members=[])
    top1.members = n11.members + n12.members
    top2 = ClusterNode(label=2, centroid=axis_vec(dim, 5), children=[n21, n22], members=[])
    top2.members = n21.members + n22.members
    root = ClusterNode(label=None, centroid=axis_vec(dim, 6),
                       children=[top1, top2], members=top1.members + top2.members)
    cid_by_doc = {
        "d11a": (1, 1, 0), "d11b": (1, 1, 0), "d12a": (1, 2, 0),
        "d21a": (2, 1, 0), "d22a": (2, 2, 0),
    }
    leaves = {(1, 1, 0): n11, (1, 2, 0): n12, (2, 1, 0): n21, (2, 2, 0): n22}
    return ClusterTree(
        root=root, k=2, c=2, seed=0, dim=dim, cid_by_doc=cid_by_doc,
        leaves=leaves,
        build_members={cid: tuple(node.members) for cid, node in leaves.items()},
    )
