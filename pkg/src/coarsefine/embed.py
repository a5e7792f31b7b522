"""Deterministic hashed embeddings and the embedding sidecar format.

The default embedder maps unigram and bigram features to signed buckets of a
fixed-width vector and L2-normalizes the result. It is a pure function of
(text, dim, seed), so rebuilding an index under the same seed reproduces
every vector bit for bit. External embedders can replace it by supplying
vectors through the sidecar format: a little-endian float32 binary matrix
plus a JSON manifest {"dim": ..., "ids": [...]} giving the row order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .corpus import tokenize
from .errors import BadDim, DimMismatch, EmptyText, ParseError

MIN_DIM = 8


def _feature_hash(feature: str, seed: int) -> int:
    key = str(seed).encode("utf-8")[:64]
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def hash_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Signed feature-hash embedding of unigrams and bigrams, unit L2 norm.

    Raises EmptyText when the text has no tokens and BadDim when dim < 8.
    """
    if dim < MIN_DIM:
        raise BadDim(f"dim must be >= {MIN_DIM}, got {dim}")
    tokens = tokenize(text)
    if not tokens:
        raise EmptyText("text has no tokens")
    features = [f"1:{t}" for t in tokens]
    features += [f"2:{a} {b}" for a, b in zip(tokens, tokens[1:])]
    vec = np.zeros(dim, dtype=np.float64)
    for feature in features:
        h = _feature_hash(feature, seed)
        vec[(h >> 1) % dim] += 1.0 if h & 1 else -1.0
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # Signed buckets cancelled out entirely; fall back to a single
        # deterministic bucket so the output is still unit length.
        vec[_feature_hash("0:" + " ".join(tokens), seed) % dim] = 1.0
        norm = 1.0
    return (vec / norm).astype(np.float32)


@dataclass(frozen=True)
class HashingEmbedder:
    dim: int = 256
    seed: int = 0

    def embed(self, text: str) -> np.ndarray:
        return hash_embed(text, self.dim, self.seed)


@dataclass(frozen=True)
class QueryRepresentation:
    """Pooled query vector, with optional per-token features for custom scorers."""

    pooled: np.ndarray
    token_features: np.ndarray | None = None


def save_embedding_sidecar(
    ids: list[str], matrix: np.ndarray, bin_path: str, manifest_path: str
) -> None:
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise DimMismatch("embedding matrix must have one row per id")
    with open(bin_path, "wb") as fh:
        fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump({"dim": int(matrix.shape[1]), "ids": list(ids)}, fh, sort_keys=True)
        fh.write("\n")


def load_embedding_sidecar(bin_path: str, manifest_path: str) -> tuple[list[str], np.ndarray]:
    with open(manifest_path, encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError:
            raise ParseError(f"{manifest_path}: invalid JSON")
    if not isinstance(manifest, dict) or "dim" not in manifest or "ids" not in manifest:
        raise ParseError(f"{manifest_path}: manifest needs 'dim' and 'ids'")
    dim = manifest["dim"]
    ids = manifest["ids"]
    if not isinstance(dim, int) or dim < 1 or not isinstance(ids, list):
        raise ParseError(f"{manifest_path}: malformed manifest")
    raw = np.fromfile(bin_path, dtype="<f4")
    if raw.size != dim * len(ids):
        raise ParseError(
            f"{bin_path}: expected {dim * len(ids)} float32 values, found {raw.size}"
        )
    return [str(i) for i in ids], raw.reshape(len(ids), dim)
