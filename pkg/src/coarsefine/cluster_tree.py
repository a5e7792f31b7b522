"""Hierarchical cluster-identifier trees.

Documents are partitioned by recursive seeded k-means. Every leaf is labelled
by the 1-based child digits along its root path plus a terminal 0, and all
documents in a leaf share that digit sequence as their cluster identifier
(CID). A child is subdivided further only while it holds at least c members,
where c adapts to the corpus size: c = ceil(corpus_size / expected_clusters),
floored at 2. A child that k-means failed to shrink (all points in one
cluster, e.g. k == 1 or duplicate points) becomes a leaf regardless, so the
recursion always terminates.

Once built, a tree is immutable as far as this module is concerned and safe
for concurrent readers; the retrieval pipeline is the single writer that may
append newly ingested documents to leaf member lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import EmptyCorpus, MissingCid, ParseError, UnknownDoc
from .kmeans import derive_seed, kmeans

Cid = tuple[int, ...]

TERMINAL = 0


@dataclass
class ClusterNode:
    """One node of the identifier tree. The root carries label None."""

    label: int | None
    centroid: np.ndarray
    children: list["ClusterNode"] = field(default_factory=list)
    members: list[str] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class ClusterTree:
    root: ClusterNode
    k: int
    c: int
    seed: int
    dim: int
    cid_by_doc: dict[str, Cid]
    leaves: dict[Cid, ClusterNode]
    build_members: dict[Cid, tuple[str, ...]]

    @property
    def leaf_count(self) -> int:
        return len(self.leaves)


def compute_c(corpus_size: int, expected_clusters: int) -> int:
    """Recursion threshold adapted to corpus size, never below 2."""
    if corpus_size < 1:
        raise ValueError("corpus_size must be >= 1")
    if expected_clusters < 1:
        raise ValueError("expected_clusters must be >= 1")
    return max(2, -(-corpus_size // expected_clusters))


def _split(
    node: ClusterNode,
    X: np.ndarray,
    indices: np.ndarray,
    ids: list[str],
    path: Cid,
    k: int,
    c: int,
    seed: int,
    cid_by_doc: dict[str, Cid],
    leaves: dict[Cid, ClusterNode],
) -> None:
    labels, centroids = kmeans(X[indices], k, derive_seed(seed, *path))
    for j in range(len(centroids)):
        label = j + 1
        member_idx = indices[labels == j]
        child = ClusterNode(label=label, centroid=centroids[j])
        node.children.append(child)
        child_path = path + (label,)
        if len(member_idx) >= c and len(member_idx) < len(indices):
            _split(child, X, member_idx, ids, child_path, k, c, seed, cid_by_doc, leaves)
        else:
            child.members = [ids[i] for i in member_idx]
            cid = child_path + (TERMINAL,)
            leaves[cid] = child
            for doc_id in child.members:
                cid_by_doc[doc_id] = cid


def build_cluster_tree(
    embeddings: Mapping[str, np.ndarray], k: int, expected_clusters: int, seed: int
) -> ClusterTree:
    """Recursively cluster document embeddings into an identifier tree.

    The mapping's iteration order fixes the document order, and all k-means
    sub-seeds are derived from (seed, digit path), so the same inputs always
    produce the same tree. Raises EmptyCorpus when the mapping is empty.
    """
    ids = list(embeddings)
    if not ids:
        raise EmptyCorpus("cannot build a cluster tree from zero documents")
    if k < 1:
        raise ValueError("k must be >= 1")
    X = np.stack([np.asarray(embeddings[i], dtype=np.float32) for i in ids])
    if X.ndim != 2:
        raise ValueError("embeddings must be 1-D vectors of a common dimension")
    c = compute_c(len(ids), expected_clusters)
    root = ClusterNode(label=None, centroid=X.astype(np.float64).mean(axis=0).astype(np.float32))
    cid_by_doc: dict[str, Cid] = {}
    leaves: dict[Cid, ClusterNode] = {}
    _split(root, X, np.arange(len(ids)), ids, (), k, c, seed, cid_by_doc, leaves)
    build_members = {cid: tuple(leaf.members) for cid, leaf in leaves.items()}
    return ClusterTree(
        root=root,
        k=k,
        c=c,
        seed=seed,
        dim=int(X.shape[1]),
        cid_by_doc=cid_by_doc,
        leaves=leaves,
        build_members=build_members,
    )


def assign_cid(tree: ClusterTree, doc_id: str) -> Cid:
    try:
        return tree.cid_by_doc[doc_id]
    except KeyError:
        raise UnknownDoc(f"document {doc_id!r} is not in the tree")


def assign_new_document(tree: ClusterTree, embedding: np.ndarray) -> Cid:
    """CID for a new document: descend by highest inner product per level.

    Ties prefer the smaller child label. Read-only: the tree is not modified.
    """
    emb = np.asarray(embedding, dtype=np.float64)
    node = tree.root
    path: list[int] = []
    while node.children:
        best, best_score = None, -np.inf
        for child in node.children:
            score = float(emb @ child.centroid.astype(np.float64))
            if score > best_score:
                best, best_score = child, score
        node = best
        path.append(node.label)
    return tuple(path) + (TERMINAL,)


def prefix_overlap_pair(s1: Cid, s2: Cid) -> float:
    """Length of the longest common prefix divided by len(s1)."""
    if not s1:
        raise ValueError("s1 must be non-empty")
    n = 0
    for a, b in zip(s1, s2):
        if a != b:
            break
        n += 1
    return n / len(s1)


def mean_prefix_overlap(
    qrels: Mapping[str, Iterable[str]], cids: Mapping[str, Cid]
) -> float:
    """Mean over queries of the mean pairwise prefix overlap of relevant CIDs.

    For each query, every ordered pair of its relevant documents (self-pairs
    included) contributes prefix_overlap_pair; the per-query mean divides by
    the squared count. Raises MissingCid when a relevant document has no CID.
    """
    if not qrels:
        raise ValueError("qrels must contain at least one query")
    total = 0.0
    for qid, doc_ids in qrels.items():
        seqs: list[Cid] = []
        for doc_id in doc_ids:
            if doc_id not in cids:
                raise MissingCid(f"document {doc_id!r} (query {qid!r}) has no CID")
            seqs.append(cids[doc_id])
        if not seqs:
            raise ValueError(f"query {qid!r} has no relevant documents")
        pair_sum = 0.0
        for s1 in seqs:
            for s2 in seqs:
                pair_sum += prefix_overlap_pair(s1, s2)
        total += pair_sum / (len(seqs) ** 2)
    return total / len(qrels)


def _node_manifest(node: ClusterNode, blob: bytearray) -> dict:
    blob.extend(np.ascontiguousarray(node.centroid, dtype="<f4").tobytes())
    return {
        "label": node.label,
        "members": list(node.members),
        "children": [_node_manifest(child, blob) for child in node.children],
    }


def save_tree(tree: ClusterTree, json_path: str, bin_path: str) -> None:
    """Write the tree manifest (JSON) and centroid blob (f32, preorder).

    Leaf member lists are recorded as they were at construction time, so
    documents ingested after the build do not alter these files.
    """
    blob = bytearray()
    root = _strip_to_build_members(tree)
    manifest = {
        "k": tree.k,
        "c": tree.c,
        "seed": tree.seed,
        "dim": tree.dim,
        "root": _node_manifest(root, blob),
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    with open(bin_path, "wb") as fh:
        fh.write(bytes(blob))


def _strip_to_build_members(tree: ClusterTree) -> ClusterNode:
    def copy(node: ClusterNode, path: Cid) -> ClusterNode:
        if node.is_leaf and node.label is not None:
            members = list(tree.build_members.get(path + (TERMINAL,), tuple(node.members)))
            return ClusterNode(node.label, node.centroid, [], members)
        return ClusterNode(
            node.label,
            node.centroid,
            [copy(ch, path + (ch.label,)) for ch in node.children],
            [],
        )

    return copy(tree.root, ())


def load_tree(json_path: str, bin_path: str) -> ClusterTree:
    with open(json_path, encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError:
            raise ParseError(f"{json_path}: invalid JSON")
    for key in ("k", "c", "seed", "dim", "root"):
        if key not in manifest:
            raise ParseError(f"{json_path}: manifest is missing {key!r}")
    dim = manifest["dim"]
    raw = np.fromfile(bin_path, dtype="<f4")
    if raw.size % dim != 0:
        raise ParseError(f"{bin_path}: blob size is not a multiple of dim")
    centroids = raw.reshape(-1, dim)

    cid_by_doc: dict[str, Cid] = {}
    leaves: dict[Cid, ClusterNode] = {}
    cursor = 0

    def rebuild(obj: dict, path: Cid) -> ClusterNode:
        nonlocal cursor
        if cursor >= len(centroids):
            raise ParseError(f"{bin_path}: blob has fewer centroids than the manifest")
        node = ClusterNode(label=obj["label"], centroid=centroids[cursor].copy())
        cursor += 1
        for child_obj in obj["children"]:
            child = rebuild(child_obj, path + (child_obj["label"],))
            node.children.append(child)
        if not node.children and node.label is not None:
            node.members = [str(m) for m in obj["members"]]
            cid = path + (TERMINAL,)
            leaves[cid] = node
            for doc_id in node.members:
                cid_by_doc[doc_id] = cid
        return node

    root = rebuild(manifest["root"], ())
    if cursor != len(centroids):
        raise ParseError(f"{bin_path}: blob has more centroids than the manifest")
    build_members = {cid: tuple(leaf.members) for cid, leaf in leaves.items()}
    return ClusterTree(
        root=root,
        k=int(manifest["k"]),
        c=int(manifest["c"]),
        seed=int(manifest["seed"]),
        dim=int(dim),
        cid_by_doc=cid_by_doc,
        leaves=leaves,
        build_members=build_members,
    )
