import math

import numpy as np
import pytest

from coarsefine.embed import QueryRepresentation
from coarsefine.errors import BeamTooSmall, InvalidPrefix, UnknownCid
from coarsefine.inter import CentroidScorer, decode_clusters, inter_loss
from coarsefine.trie import build_trie
from helpers import (
    SeededScorer,
    UniformScorer,
    binary_depth2_tree,
    blob_embeddings,
    brute_force_hypotheses,
    random_cids,
    rank_by_penalized,
)
from coarsefine.cluster_tree import build_cluster_tree

QUERY = QueryRepresentation(pooled=np.zeros(8, dtype=np.float32))


def balanced_cids(branches, depth):
    cids = [()]
    for _ in range(depth):
        cids = [c + (j,) for c in cids for j in range(1, branches + 1)]
    return [c + (0,) for c in cids]


def test_single_cid_is_forced_with_probability_one():
    trie = build_trie([(3, 1, 0)])
    hyps = decode_clusters(QUERY, SeededScorer(0), trie, beam_size=4, length_penalty=0.8, k=1)
    assert len(hyps) == 1
    assert hyps[0].cid == (3, 1, 0)
    assert hyps[0].s_inter == pytest.approx(1.0, abs=1e-12)


def test_uniform_scorer_on_balanced_trie_gives_equal_products():
    trie = build_trie(balanced_cids(3, 2))
    hyps = decode_clusters(QUERY, UniformScorer(), trie, beam_size=16, length_penalty=0.8, k=9)
    assert sorted(h.cid for h in hyps) == sorted(balanced_cids(3, 2))
    for h in hyps:
        assert h.s_inter == pytest.approx(1 / 9, abs=1e-12)


def test_beam_one_returns_the_greedy_path():
    for seed in range(10):
        trie = build_trie(random_cids(seed))
        scorer = SeededScorer(seed + 100)
        hyps = decode_clusters(QUERY, scorer, trie, beam_size=1, length_penalty=0.8, k=1)
        prefix = ()
        while not trie.is_terminal(prefix):
            probs = scorer.score_next(QUERY, prefix, trie.valid_next(prefix))
            best = max(sorted(probs), key=lambda d: probs[d])
            prefix = prefix + (best,)
        assert hyps[0].cid == prefix


@pytest.mark.parametrize("seed", range(6))
def test_full_beam_matches_brute_force_products(seed):
    trie = build_trie(random_cids(seed, max_leaves=40))
    scorer = SeededScorer(seed)
    hyps = decode_clusters(QUERY, scorer, trie, beam_size=64, length_penalty=0.8, k=len(trie))
    truth = dict(brute_force_hypotheses(scorer, trie, QUERY))
    assert len(hyps) == len(truth)
    for h in hyps:
        assert h.s_inter == pytest.approx(math.exp(truth[h.cid]), abs=1e-9)
        assert h.log_prob == pytest.approx(truth[h.cid], abs=1e-9)
        assert math.log(h.s_inter) == pytest.approx(h.log_prob, abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_ranking_uses_length_penalty_with_lexicographic_ties(seed):
    trie = build_trie(random_cids(seed, max_leaves=40))
    scorer = SeededScorer(seed)
    k = min(10, len(trie))
    hyps = decode_clusters(QUERY, scorer, trie, beam_size=64, length_penalty=0.8, k=k)
    truth = brute_force_hypotheses(scorer, trie, QUERY)
    expected = [cid for cid, _ in rank_by_penalized(truth, 0.8, k)]
    assert [h.cid for h in hyps] == expected


@pytest.mark.parametrize("seed", [0, 7, 21])
def test_monotone_beams_never_worsen_the_top_hypothesis(seed):
    trie = build_trie(random_cids(seed, max_leaves=32))
    scorer = SeededScorer(seed + 1)
    alpha = 0.8
    best = -math.inf
    for beam in range(1, len(trie) + 1):
        hyps = decode_clusters(QUERY, scorer, trie, beam_size=beam, length_penalty=alpha, k=1)
        penalized = hyps[0].log_prob / len(hyps[0].cid) ** alpha
        assert penalized >= best - 1e-12
        best = max(best, penalized)


def test_all_decoded_cids_are_stored_cids():
    for seed in range(5):
        trie = build_trie(random_cids(seed))
        hyps = decode_clusters(QUERY, SeededScorer(seed), trie, beam_size=8,
                               length_penalty=0.8, k=8)
        for h in hyps:
            assert trie.contains(h.cid)
            assert 0.0 < h.s_inter <= 1.0


def test_beam_smaller_than_k_is_rejected():
    trie = build_trie([(1, 0), (2, 0)])
    with pytest.raises(BeamTooSmall):
        decode_clusters(QUERY, UniformScorer(), trie, beam_size=1, length_penalty=0.8, k=2)
    with pytest.raises(ValueError):
        decode_clusters(QUERY, UniformScorer(), trie, beam_size=1, length_penalty=0.8, k=0)


def test_inter_loss_fixtures():
    trie = build_trie(balanced_cids(2, 2))
    # forced path scorer: all mass on the gold digit
    class Forced:
        def score_next(self, query, prefix, valid):
            gold = (1, 2, 0)
            want = gold[len(prefix)]
            return {d: (1.0 if d == want else 0.0) for d in valid}

    assert inter_loss(QUERY, (1, 2, 0), Forced(), trie) == pytest.approx(0.0, abs=1e-12)
    assert inter_loss(QUERY, (1, 2, 0), UniformScorer(), trie) == pytest.approx(
        2 * math.log(2), abs=1e-12
    )
    with pytest.raises(UnknownCid):
        inter_loss(QUERY, (9, 9, 0), UniformScorer(), trie)


def centroid_setup():
    emb = blob_embeddings((30, 30, 30), dim=16, seed=2)
    tree = build_cluster_tree(emb, k=4, expected_clusters=9, seed=2)
    trie = build_trie(tree.leaves.keys())
    return emb, tree, trie


def test_centroid_scorer_normalizes_over_exactly_the_valid_set():
    emb, tree, trie = centroid_setup()
    scorer = CentroidScorer(tree, temperature=0.1)
    q = QueryRepresentation(pooled=next(iter(emb.values())))
    for cid in trie.cids():
        for i in range(len(cid)):
            prefix = cid[:i]
            valid = trie.valid_next(prefix)
            probs = scorer.score_next(q, prefix, valid)
            assert set(probs) == set(valid)
            assert sum(probs.values()) == pytest.approx(1.0, abs=1e-9)
            assert all(p > 0 for p in probs.values())


def test_centroid_scorer_terminal_only_prefix_gets_probability_one():
    tree = binary_depth2_tree()
    scorer = CentroidScorer(tree, temperature=0.1)
    q = QueryRepresentation(pooled=np.zeros(8, dtype=np.float32))
    probs = scorer.score_next(q, (1, 1), frozenset({0}))
    assert probs == {0: 1.0}


def test_centroid_scorer_rejects_unknown_prefix():
    tree = binary_depth2_tree()
    scorer = CentroidScorer(tree, temperature=0.1)
    q = QueryRepresentation(pooled=np.zeros(8, dtype=np.float32))
    with pytest.raises(InvalidPrefix):
        scorer.score_next(q, (7,), frozenset({1}))


def test_lower_temperature_sharpens_the_step_distribution():
    emb, tree, trie = centroid_setup()
    q = QueryRepresentation(pooled=next(iter(emb.values())))
    valid = trie.valid_next(())
    cold = CentroidScorer(tree, temperature=0.05).score_next(q, (), valid)
    warm = CentroidScorer(tree, temperature=5.0).score_next(q, (), valid)
    assert max(cold.values()) > max(warm.values())
