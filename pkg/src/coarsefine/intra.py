"""Fine matching: dense scoring inside a cluster, plus adapter training.

The within-cluster relevance of a document is sigmoid(<q, d>). Training uses
a contrastive loss whose denominator weights same-cluster ("hard") negatives
by a factor gamma:

    loss = -log( e^{s+} / (e^{s+} + gamma * sum_a e^{s_a} + sum_r e^{s_r}) )

where s+ is the positive similarity, s_a are similarities to same-cluster
negatives, and s_r to in-batch negatives from other clusters. Including the
positive term in the denominator keeps the loss non-negative, and it is zero
exactly when both negative sets are empty. Gradients are returned for the
query and for every document vector involved.

A LinearAdapter is a square matrix applied to the query side only; document
embeddings stay frozen. Training is plain mini-batch gradient descent and is
deterministic under its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cluster_tree import ClusterTree
from .corpus import TrainingPair
from .errors import DimMismatch, DivergedLoss, UnknownCid, UnknownDoc
from .kmeans import derive_seed


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass(frozen=True)
class IntraScore:
    doc_id: str
    sim: float
    s_intra: float


def intra_score(q: np.ndarray, d: np.ndarray, doc_id: str = "") -> IntraScore:
    """Inner product and its sigmoid for one query/document pair."""
    q = np.asarray(q)
    d = np.asarray(d)
    if q.shape != d.shape:
        raise DimMismatch(f"query dim {q.shape} != document dim {d.shape}")
    sim = float(q.astype(np.float64) @ d.astype(np.float64))
    return IntraScore(doc_id=doc_id, sim=sim, s_intra=_sigmoid(sim))


def rank_within_cluster(
    q: np.ndarray,
    tree: ClusterTree,
    cid: Sequence[int],
    m: int,
    embeddings: Mapping[str, np.ndarray],
) -> list[IntraScore]:
    """Top-min(m, cluster size) members of a leaf by s_intra, ties by doc id."""
    if m < 1:
        raise ValueError("m must be >= 1")
    leaf = tree.leaves.get(tuple(cid))
    if leaf is None:
        raise UnknownCid(f"{tuple(cid)} is not a leaf CID of the tree")
    scored = [intra_score(q, embeddings[doc_id], doc_id) for doc_id in leaf.members]
    scored.sort(key=lambda s: (-s.s_intra, s.doc_id))
    return scored[:m]


@dataclass(frozen=True)
class NegativeSet:
    intra: list[str]
    inter: list[str]


def sample_negatives(
    pair: TrainingPair,
    tree: ClusterTree,
    batch: Sequence[TrainingPair],
    n_a: int,
    seed: int,
    relevant: Sequence[str] | None = None,
) -> NegativeSet:
    """Draw negatives for one training pair.

    Same-cluster negatives: up to n_a members of the positive document's
    leaf, sampled uniformly without replacement (seeded), never including a
    document relevant to the query. Cross-cluster negatives: the positives of
    the other pairs in the batch, deduplicated, under the same exclusion.
    """
    if n_a < 0:
        raise ValueError("n_a must be >= 0")
    cid = tree.cid_by_doc.get(pair.positive_doc_id)
    if cid is None:
        raise UnknownDoc(f"positive document {pair.positive_doc_id!r} has no CID")
    exclusion = {pair.positive_doc_id}
    if relevant is not None:
        exclusion.update(relevant)
    eligible = [d for d in tree.leaves[cid].members if d not in exclusion]
    if len(eligible) > n_a:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(eligible), size=n_a, replace=False)
        intra = [eligible[int(i)] for i in picks]
    else:
        intra = list(eligible)
    inter: list[str] = []
    for other in batch:
        if other == pair:
            continue
        doc_id = other.positive_doc_id
        if doc_id in exclusion or doc_id in inter:
            continue
        inter.append(doc_id)
    return NegativeSet(intra=intra, inter=inter)


@dataclass(frozen=True)
class IntraLossResult:
    loss: float
    grad_query: np.ndarray
    grad_positive: np.ndarray
    grad_intra: np.ndarray
    grad_inter: np.ndarray


def _as_matrix(vectors, dim: int) -> np.ndarray:
    mat = np.asarray(vectors, dtype=np.float64)
    if mat.size == 0:
        return np.zeros((0, dim), dtype=np.float64)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.shape[1] != dim:
        raise DimMismatch(f"negative dim {mat.shape[1]} != query dim {dim}")
    return mat


def intra_loss(
    query: np.ndarray,
    positive: np.ndarray,
    intra_negatives,
    inter_negatives,
    gamma: float,
) -> IntraLossResult:
    """Cluster-adaptive contrastive loss and its analytic gradients.

    Computed with a max-shifted log-sum-exp, so similarities far from zero do
    not overflow. grad_intra and grad_inter have one row per negative.
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be > 0")
    q = np.asarray(query, dtype=np.float64)
    pos = np.asarray(positive, dtype=np.float64)
    if q.shape != pos.shape or q.ndim != 1:
        raise DimMismatch(f"query shape {q.shape} != positive shape {pos.shape}")
    dim = q.shape[0]
    na = _as_matrix(intra_negatives, dim)
    nr = _as_matrix(inter_negatives, dim)

    s_pos = float(q @ pos)
    s_a = na @ q
    s_r = nr @ q
    shift = max(s_pos, float(s_a.max()) if len(s_a) else -np.inf,
                float(s_r.max()) if len(s_r) else -np.inf)
    e_pos = math.exp(s_pos - shift)
    e_a = np.exp(s_a - shift)
    e_r = np.exp(s_r - shift)
    z = e_pos + gamma * float(e_a.sum()) + float(e_r.sum())
    loss = (shift + math.log(z)) - s_pos

    w_pos = e_pos / z
    w_a = gamma * e_a / z
    w_r = e_r / z
    grad_query = (w_pos - 1.0) * pos
    if len(na):
        grad_query = grad_query + w_a @ na
    if len(nr):
        grad_query = grad_query + w_r @ nr
    return IntraLossResult(
        loss=float(loss),
        grad_query=grad_query,
        grad_positive=(w_pos - 1.0) * q,
        grad_intra=w_a[:, None] * q[None, :],
        grad_inter=w_r[:, None] * q[None, :],
    )


@dataclass
class LinearAdapter:
    """Square query-side transform; documents are never touched."""

    weight: np.ndarray

    def apply(self, embedding: np.ndarray) -> np.ndarray:
        emb = np.asarray(embedding, dtype=np.float64)
        if emb.shape != (self.weight.shape[0],):
            raise DimMismatch(f"adapter dim {self.weight.shape[0]} != vector {emb.shape}")
        return (self.weight.astype(np.float64) @ emb).astype(np.float32)

    @classmethod
    def identity(cls, dim: int) -> "LinearAdapter":
        return cls(weight=np.eye(dim, dtype=np.float32))


def train_adapter(
    pairs: Sequence[TrainingPair],
    tree: ClusterTree,
    doc_embeddings: Mapping[str, np.ndarray],
    query_embeddings: Mapping[str, np.ndarray],
    gamma: float = 2.0,
    n_a: int = 4,
    epochs: int = 5,
    learning_rate: float = 0.05,
    seed: int = 0,
    batch_size: int = 16,
) -> tuple[LinearAdapter, list[float]]:
    """Fit a query-side linear adapter by mini-batch gradient descent.

    Each query vector q is replaced by W q inside intra_loss; W starts as the
    identity and follows the mean batch gradient. Returns the adapter and the
    mean loss per epoch. Raises DivergedLoss if any loss is non-finite.
    learning_rate == 0 or epochs == 0 leaves W at the identity.
    """
    if not pairs:
        raise ValueError("pairs must be non-empty")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    dim = int(np.asarray(doc_embeddings[pairs[0].positive_doc_id]).shape[0])
    weight = np.eye(dim, dtype=np.float64)
    rng = np.random.default_rng(derive_seed(seed, "adapter"))
    epoch_losses: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(len(pairs))
        epoch_loss = 0.0
        for start in range(0, len(pairs), batch_size):
            batch_idx = order[start : start + batch_size]
            batch = [pairs[int(i)] for i in batch_idx]
            grad_w = np.zeros_like(weight)
            for i, pair in zip(batch_idx, batch):
                q0 = np.asarray(query_embeddings[pair.query_id], dtype=np.float64)
                negatives = sample_negatives(
                    pair, tree, batch, n_a, seed=derive_seed(seed, "neg", epoch, int(i))
                )
                result = intra_loss(
                    weight @ q0,
                    doc_embeddings[pair.positive_doc_id],
                    [doc_embeddings[d] for d in negatives.intra],
                    [doc_embeddings[d] for d in negatives.inter],
                    gamma,
                )
                if not math.isfinite(result.loss):
                    raise DivergedLoss(f"loss became {result.loss} in epoch {epoch}")
                epoch_loss += result.loss
                grad_w += np.outer(result.grad_query, q0)
            weight -= learning_rate * (grad_w / len(batch))
            if not np.isfinite(weight).all():
                raise DivergedLoss(f"adapter weights became non-finite in epoch {epoch}")
        epoch_losses.append(epoch_loss / len(pairs))
    with np.errstate(over="ignore"):
        final = weight.astype(np.float32)
    if not np.isfinite(final).all():
        raise DivergedLoss("adapter weights overflow float32")
    return LinearAdapter(weight=final), epoch_losses
