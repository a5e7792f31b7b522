"""Prefix trie over cluster identifiers, used to constrain decoding."""

from __future__ import annotations

from typing import Iterable, Iterator

from .cluster_tree import Cid, TERMINAL
from .errors import EmptySet, InvalidPrefix


class PrefixTrie:
    """Stores a set of CIDs and answers which digits may extend a prefix.

    Identifiers must end with exactly one terminal 0; all earlier digits are
    positive. The terminal digit is an ordinary edge, so valid_next() of a
    leaf-complete prefix includes 0 and valid_next() of a full CID is empty.
    Instances are immutable after construction and safe to share.
    """

    def __init__(self, cids: Iterable[Cid]):
        cid_set = {tuple(int(d) for d in cid) for cid in cids}
        if not cid_set:
            raise EmptySet("cannot build a trie from zero identifiers")
        for cid in cid_set:
            if len(cid) < 2 or cid[-1] != TERMINAL or any(d < 1 for d in cid[:-1]):
                raise ValueError(
                    f"malformed CID {cid}: digits must be positive with one trailing 0"
                )
        children: dict[Cid, set[int]] = {(): set()}
        for cid in sorted(cid_set):
            for i in range(len(cid)):
                children.setdefault(cid[:i], set()).add(cid[i])
                children.setdefault(cid[: i + 1], set())
        self._children = {prefix: frozenset(digits) for prefix, digits in children.items()}
        self._cids = frozenset(cid_set)

    def valid_next(self, prefix: Cid) -> frozenset[int]:
        try:
            return self._children[tuple(prefix)]
        except KeyError:
            raise InvalidPrefix(f"{tuple(prefix)} is not a prefix of any stored CID")

    def is_prefix(self, prefix: Cid) -> bool:
        return tuple(prefix) in self._children

    def is_terminal(self, prefix: Cid) -> bool:
        return tuple(prefix) in self._cids

    def contains(self, cid: Cid) -> bool:
        return tuple(cid) in self._cids

    def cids(self) -> Iterator[Cid]:
        return iter(sorted(self._cids))

    def __len__(self) -> int:
        return len(self._cids)


def build_trie(cids: Iterable[Cid]) -> PrefixTrie:
    return PrefixTrie(cids)
