"""Coarse matching: trie-constrained beam decoding of cluster identifiers.

A step scorer turns (query, prefix) into a probability distribution over the
digits the trie allows next. Beam decoding multiplies those step
probabilities along root-to-leaf paths; a completed hypothesis keeps the raw
product as its cluster score while ranking applies a length penalty,
log_prob / len**length_penalty, with len counting the terminal digit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Protocol

import numpy as np

from .cluster_tree import Cid, ClusterTree, TERMINAL
from .embed import QueryRepresentation
from .errors import BeamTooSmall, InvalidPrefix, UnknownCid
from .trie import PrefixTrie


class StepScorer(Protocol):
    """Contract: a positive probability for every digit in `valid`, summing to 1."""

    def score_next(
        self, query: QueryRepresentation, prefix: Cid, valid: frozenset[int]
    ) -> Mapping[int, float]: ...


@dataclass
class CentroidScorer:
    """Softmax over inner products between the query and child centroids.

    Logits are <pooled, centroid>/temperature for each child the trie allows.
    At a leaf-complete prefix the terminal digit gets probability 1. Stateless
    over an immutable tree, so instances are safe to share across threads.
    """

    tree: ClusterTree
    temperature: float = 0.1

    def _node_at(self, prefix: Cid):
        node = self.tree.root
        for digit in prefix:
            for child in node.children:
                if child.label == digit:
                    node = child
                    break
            else:
                raise InvalidPrefix(f"{tuple(prefix)} does not name a tree node")
        return node

    def score_next(
        self, query: QueryRepresentation, prefix: Cid, valid: frozenset[int]
    ) -> dict[int, float]:
        valid = frozenset(valid)
        if not valid:
            return {}
        if valid == {TERMINAL}:
            return {TERMINAL: 1.0}
        if TERMINAL in valid:
            raise InvalidPrefix(
                f"{tuple(prefix)}: terminal digit mixed with branch digits"
            )
        node = self._node_at(prefix)
        by_label = {child.label: child for child in node.children}
        digits = sorted(valid)
        pooled = np.asarray(query.pooled, dtype=np.float64)
        logits = np.empty(len(digits), dtype=np.float64)
        for i, digit in enumerate(digits):
            if digit not in by_label:
                raise InvalidPrefix(f"digit {digit} is not a child of {tuple(prefix)}")
            centroid = by_label[digit].centroid.astype(np.float64)
            logits[i] = float(pooled @ centroid) / self.temperature
        exps = np.exp(logits - logits.max())
        probs = exps / exps.sum()
        return {digit: float(p) for digit, p in zip(digits, probs)}


@dataclass(frozen=True)
class ClusterHypothesis:
    cid: Cid
    log_prob: float
    s_inter: float


def _penalized(log_prob: float, length: int, length_penalty: float) -> float:
    return log_prob / length**length_penalty


def decode_clusters(
    query: QueryRepresentation,
    scorer: StepScorer,
    trie: PrefixTrie,
    beam_size: int,
    length_penalty: float,
    k: int,
) -> list[ClusterHypothesis]:
    """Beam-search the trie for the k highest-scoring complete identifiers.

    Only digits from valid_next() are expanded, so every returned CID exists
    in the trie. Pruning and final ranking both order hypotheses by
    log_prob / len**length_penalty, breaking ties toward the lexicographically
    smaller digit sequence. Returned hypotheses carry the unpenalized
    probability product as s_inter.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if beam_size < k:
        raise BeamTooSmall(f"beam_size {beam_size} < k {k}")

    frontier: list[tuple[Cid, float]] = [((), 0.0)]
    completed: list[tuple[Cid, float]] = []
    while frontier:
        candidates: list[tuple[Cid, float]] = []
        for prefix, log_prob in frontier:
            valid = trie.valid_next(prefix)
            probs = scorer.score_next(query, prefix, valid)
            for digit in sorted(valid):
                p = probs[digit]
                if p <= 0.0:
                    continue
                extended = prefix + (digit,)
                new_lp = log_prob + math.log(p)
                if trie.is_terminal(extended):
                    completed.append((extended, new_lp))
                else:
                    candidates.append((extended, new_lp))
        candidates.sort(
            key=lambda item: (-_penalized(item[1], len(item[0]), length_penalty), item[0])
        )
        frontier = candidates[:beam_size]

    completed.sort(
        key=lambda item: (-_penalized(item[1], len(item[0]), length_penalty), item[0])
    )
    return [
        ClusterHypothesis(cid=cid, log_prob=lp, s_inter=math.exp(lp))
        for cid, lp in completed[:k]
    ]


def inter_loss(
    query: QueryRepresentation, gold: Cid, scorer: StepScorer, trie: PrefixTrie
) -> float:
    """Negative log-likelihood of the gold CID under the step scorer.

    Sums -log p(digit | prefix) over every digit including the terminal 0.
    Raises UnknownCid when the gold identifier is not in the trie.
    """
    gold = tuple(gold)
    if not trie.contains(gold):
        raise UnknownCid(f"gold CID {gold} is not in the trie")
    total = 0.0
    for i, digit in enumerate(gold):
        prefix = gold[:i]
        probs = scorer.score_next(query, prefix, trie.valid_next(prefix))
        total -= math.log(probs[digit])
    return total
