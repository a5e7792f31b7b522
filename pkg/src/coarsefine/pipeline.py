"""End-to-end retrieval: build, query, extend, and persist an index.

Querying runs in two stages. Beam decoding over the identifier trie recalls
k_clusters leaf clusters, each with a cluster score s_inter; the members of
each recalled cluster are then ranked densely, keeping the top
min(cluster size, k) with per-document scores s_intra. The two are fused as

    s_overall = s_inter + beta * s_intra

and the global top-k documents are returned, ordering ties by s_intra and
then ascending doc id. Documents can be appended to an existing index
without rebuilding: each new document descends the frozen tree to its
nearest leaf, so existing identifiers, centroids, and scores never change.

On disk an index is a directory: corpus.jsonl, embeddings.bin +
manifest.json (sidecar format), tree.json + centroids.bin, config.json, and
optionally adapter.bin + adapter.json. tree.json records construction-time
leaf membership only; documents added later are re-assigned on load by the
same deterministic descent. Readers may share a loaded index; mutation
(add_documents, attaching an adapter) requires exclusive access.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cluster_tree import (
    ClusterTree,
    assign_new_document,
    build_cluster_tree,
    load_tree,
    save_tree,
)
from .corpus import Document, TrainingPair, load_corpus, save_corpus
from .embed import (
    HashingEmbedder,
    QueryRepresentation,
    load_embedding_sidecar,
    save_embedding_sidecar,
)
from .errors import (
    DimMismatch,
    DuplicateId,
    EmptyCorpus,
    EmptyIndex,
    ParseError,
    UnknownDoc,
)
from .inter import CentroidScorer, StepScorer, decode_clusters, inter_loss
from .intra import LinearAdapter, intra_loss, rank_within_cluster, sample_negatives
from .kmeans import derive_seed
from .trie import PrefixTrie, build_trie


@dataclass(frozen=True)
class RetrievalConfig:
    """Engine parameters; defaults match the reference configuration."""

    beta: float = 1.0
    gamma: float = 2.0
    beam_size: int = 100
    length_penalty: float = 0.8
    k_clusters: int = 100
    expected_clusters: int = 5000
    branching: int = 30
    temperature: float = 0.1
    dim: int = 256
    seed: int = 0
    n_spans: int = 5
    span_len: int = 40
    n_a: int = 4

    def __post_init__(self):
        if not (self.beam_size >= self.k_clusters >= 1):
            raise ValueError(
                f"need beam_size >= k_clusters >= 1, got {self.beam_size} and {self.k_clusters}"
            )
        if self.branching < 1 or self.expected_clusters < 1:
            raise ValueError("branching and expected_clusters must be >= 1")


@dataclass(frozen=True)
class ResultEntry:
    doc_id: str
    s_inter: float
    s_intra: float
    s_overall: float


@dataclass(frozen=True)
class RetrievalResult:
    entries: list[ResultEntry]


@dataclass
class RetrievalIndex:
    corpus: dict[str, Document]
    embeddings: dict[str, np.ndarray]
    tree: ClusterTree
    trie: PrefixTrie
    scorer: StepScorer
    adapter: LinearAdapter | None
    config: RetrievalConfig
    embedder: HashingEmbedder


def build_index(
    docs: Sequence[Document],
    config: RetrievalConfig,
    doc_embeddings: Mapping[str, np.ndarray] | None = None,
) -> RetrievalIndex:
    """Embed documents, build the identifier tree, and assemble an index.

    When doc_embeddings is given (an external embedder's output), those
    vectors are used instead of hashing; they must be unit-length float
    vectors of the configured dimension. Queries are always embedded by the
    built-in hashing embedder.
    """
    if not docs:
        raise EmptyCorpus("cannot build an index from zero documents")
    embedder = HashingEmbedder(dim=config.dim, seed=derive_seed(config.seed, "embed"))
    corpus: dict[str, Document] = {}
    embeddings: dict[str, np.ndarray] = {}
    for doc in docs:
        if doc.doc_id in corpus:
            raise DuplicateId(f"duplicate document id {doc.doc_id!r}")
        corpus[doc.doc_id] = doc
        if doc_embeddings is None:
            embeddings[doc.doc_id] = embedder.embed(doc.text)
        else:
            if doc.doc_id not in doc_embeddings:
                raise UnknownDoc(f"no externally supplied embedding for {doc.doc_id!r}")
            vec = np.asarray(doc_embeddings[doc.doc_id], dtype=np.float32)
            if vec.shape != (config.dim,):
                raise DimMismatch(
                    f"embedding for {doc.doc_id!r} has dim {vec.shape}, expected {config.dim}"
                )
            if not np.isfinite(vec).all() or abs(float(np.linalg.norm(vec)) - 1.0) > 1e-3:
                raise ValueError(f"embedding for {doc.doc_id!r} must be finite and unit length")
            embeddings[doc.doc_id] = vec
    tree = build_cluster_tree(
        embeddings, config.branching, config.expected_clusters, derive_seed(config.seed, "tree")
    )
    trie = build_trie(tree.leaves.keys())
    scorer = CentroidScorer(tree, temperature=config.temperature)
    return RetrievalIndex(
        corpus=corpus,
        embeddings=embeddings,
        tree=tree,
        trie=trie,
        scorer=scorer,
        adapter=None,
        config=config,
        embedder=embedder,
    )


def query_vector(index: RetrievalIndex, query_text: str) -> np.ndarray:
    """Embed a query and apply the adapter when one is attached."""
    vec = index.embedder.embed(query_text)
    if index.adapter is not None:
        vec = index.adapter.apply(vec)
    return vec


def retrieve(index: RetrievalIndex, query_text: str, k: int) -> RetrievalResult:
    """Top-k documents for a query text.

    May return fewer than k entries when the decoded clusters hold fewer
    documents. Raises EmptyIndex on an index with no documents.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.corpus:
        raise EmptyIndex("index contains no documents")
    cfg = index.config
    q = query_vector(index, query_text)
    rep = QueryRepresentation(pooled=q)
    hypotheses = decode_clusters(
        rep, index.scorer, index.trie, cfg.beam_size, cfg.length_penalty, cfg.k_clusters
    )
    entries: list[ResultEntry] = []
    for hyp in hypotheses:
        for scored in rank_within_cluster(q, index.tree, hyp.cid, k, index.embeddings):
            entries.append(
                ResultEntry(
                    doc_id=scored.doc_id,
                    s_inter=hyp.s_inter,
                    s_intra=scored.s_intra,
                    s_overall=hyp.s_inter + cfg.beta * scored.s_intra,
                )
            )
    entries.sort(key=lambda e: (-e.s_overall, -e.s_intra, e.doc_id))
    return RetrievalResult(entries=entries[:k])


def add_documents(index: RetrievalIndex, docs: Sequence[Document]) -> RetrievalIndex:
    """Append documents to the index without re-clustering.

    Each document is embedded and assigned to the leaf reached by greedy
    centroid descent. The tree structure, centroids, trie, and all existing
    assignments are left untouched. Raises DuplicateId for ids already
    present (or repeated within this call).
    """
    fresh: set[str] = set()
    for doc in docs:
        if doc.doc_id in index.corpus or doc.doc_id in fresh:
            raise DuplicateId(f"duplicate document id {doc.doc_id!r}")
        fresh.add(doc.doc_id)
    for doc in docs:
        vec = index.embedder.embed(doc.text)
        cid = assign_new_document(index.tree, vec)
        index.corpus[doc.doc_id] = doc
        index.embeddings[doc.doc_id] = vec
        index.tree.leaves[cid].members.append(doc.doc_id)
        index.tree.cid_by_doc[doc.doc_id] = cid
    return index


def total_loss(
    index: RetrievalIndex, pair: TrainingPair, batch: Sequence[TrainingPair] = ()
) -> float:
    """Diagnostic sum of the decoding loss and the dense contrastive loss."""
    gold = index.tree.cid_by_doc.get(pair.positive_doc_id)
    if gold is None:
        raise UnknownDoc(f"positive document {pair.positive_doc_id!r} is not indexed")
    q = query_vector(index, pair.query_text)
    coarse = inter_loss(QueryRepresentation(pooled=q), gold, index.scorer, index.trie)
    negatives = sample_negatives(
        pair,
        index.tree,
        list(batch) if batch else [pair],
        index.config.n_a,
        seed=derive_seed(index.config.seed, "negatives", pair.query_id),
    )
    fine = intra_loss(
        q,
        index.embeddings[pair.positive_doc_id],
        [index.embeddings[d] for d in negatives.intra],
        [index.embeddings[d] for d in negatives.inter],
        index.config.gamma,
    )
    return coarse + fine.loss


CORPUS_FILE = "corpus.jsonl"
EMBEDDINGS_FILE = "embeddings.bin"
MANIFEST_FILE = "manifest.json"
TREE_FILE = "tree.json"
CENTROIDS_FILE = "centroids.bin"
CONFIG_FILE = "config.json"
ADAPTER_FILE = "adapter.bin"
ADAPTER_META_FILE = "adapter.json"


def save_index(index: RetrievalIndex, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    docs = list(index.corpus.values())
    save_corpus(docs, os.path.join(directory, CORPUS_FILE))
    ids = [doc.doc_id for doc in docs]
    matrix = np.stack([index.embeddings[i] for i in ids])
    save_embedding_sidecar(
        ids,
        matrix,
        os.path.join(directory, EMBEDDINGS_FILE),
        os.path.join(directory, MANIFEST_FILE),
    )
    save_tree(
        index.tree,
        os.path.join(directory, TREE_FILE),
        os.path.join(directory, CENTROIDS_FILE),
    )
    with open(os.path.join(directory, CONFIG_FILE), "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(index.config), fh, sort_keys=True, indent=2)
        fh.write("\n")
    if index.adapter is not None:
        with open(os.path.join(directory, ADAPTER_FILE), "wb") as fh:
            fh.write(np.ascontiguousarray(index.adapter.weight, dtype="<f4").tobytes())
        with open(os.path.join(directory, ADAPTER_META_FILE), "w", encoding="utf-8") as fh:
            json.dump({"dim": int(index.adapter.weight.shape[0])}, fh, sort_keys=True)
            fh.write("\n")


def load_config(path: str) -> RetrievalConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError:
            raise ParseError(f"{path}: invalid JSON")
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: config must be a flat JSON object")
    known = {f.name for f in dataclasses.fields(RetrievalConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ParseError(f"{path}: unknown config keys {sorted(unknown)}")
    return RetrievalConfig(**raw)


def load_index(directory: str) -> RetrievalIndex:
    """Load an index directory saved by save_index.

    Documents present in the corpus but absent from the construction-time
    tree membership are documents that were added later; they are re-assigned
    to their leaves by the same deterministic descent used at add time.
    """
    config = load_config(os.path.join(directory, CONFIG_FILE))
    docs = load_corpus(os.path.join(directory, CORPUS_FILE))
    ids, matrix = load_embedding_sidecar(
        os.path.join(directory, EMBEDDINGS_FILE),
        os.path.join(directory, MANIFEST_FILE),
    )
    if set(ids) != {d.doc_id for d in docs}:
        raise ParseError(f"{directory}: embedding manifest ids do not match corpus")
    tree = load_tree(
        os.path.join(directory, TREE_FILE), os.path.join(directory, CENTROIDS_FILE)
    )
    corpus = {doc.doc_id: doc for doc in docs}
    embeddings = {doc_id: matrix[i].copy() for i, doc_id in enumerate(ids)}
    for doc in docs:
        if doc.doc_id not in tree.cid_by_doc:
            cid = assign_new_document(tree, embeddings[doc.doc_id])
            tree.leaves[cid].members.append(doc.doc_id)
            tree.cid_by_doc[doc.doc_id] = cid
    adapter = None
    adapter_path = os.path.join(directory, ADAPTER_FILE)
    if os.path.exists(adapter_path):
        raw = np.fromfile(adapter_path, dtype="<f4")
        if raw.size != config.dim * config.dim:
            raise ParseError(f"{adapter_path}: expected a {config.dim}x{config.dim} matrix")
        adapter = LinearAdapter(weight=raw.reshape(config.dim, config.dim))
    return RetrievalIndex(
        corpus=corpus,
        embeddings=embeddings,
        tree=tree,
        trie=build_trie(tree.build_members.keys()),
        scorer=CentroidScorer(tree, temperature=config.temperature),
        adapter=adapter,
        config=config,
        embedder=HashingEmbedder(dim=config.dim, seed=derive_seed(config.seed, "embed")),
    )
