"""Cosine k-nearest-neighbour index over bit vectors, exact or product-quantized."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .core import InputError
from .network import fp_to_bits


@dataclass
class VectorIndex:
    ids: list
    mode: str
    dim: int
    # exact mode
    matrix: Optional[np.ndarray] = None
    # squared Euclidean norms of the stored (or reconstructed) vectors
    sq_norms: Optional[np.ndarray] = None
    # quantized mode
    subvectors: int = 0
    codebook_size: int = 0
    codebooks: list = field(default_factory=list)
    codes: Optional[np.ndarray] = None
    recon_error: float = 0.0

    def __len__(self):
        return len(self.ids)

    def reconstruct(self) -> np.ndarray:
        if self.mode == "exact":
            return self.matrix.astype(np.uint8)
        parts = [self.codebooks[s][self.codes[:, s]] for s in range(self.subvectors)]
        return np.concatenate(parts, axis=1)


def _as_bits(v, dim: Optional[int] = None) -> np.ndarray:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        if dim is None:
            raise InputError("integer fingerprints need an explicit dimension")
        return fp_to_bits(int(v), dim)
    return (np.asarray(v) != 0).astype(np.uint8)


def _kmodes(sub: np.ndarray, c: int, rng: np.random.Generator, iters: int):
    """Binary k-means under Hamming distortion; centroids are per-bit majorities."""
    uniq = np.unique(sub, axis=0)
    if len(uniq) <= c:
        centroids = uniq
        assign, _ = _kernels.hamming_assign(sub, centroids)
        return centroids, assign
    centroids = uniq[np.sort(rng.choice(len(uniq), size=c, replace=False))].copy()
    assign, _ = _kernels.hamming_assign(sub, centroids)
    for _ in range(iters):
        for j in range(c):
            members = sub[assign == j]
            if len(members):
                centroids[j] = (members.mean(axis=0) > 0.5).astype(np.uint8)
        new_assign, _ = _kernels.hamming_assign(sub, centroids)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return centroids, assign


def build(items: Sequence, mode: str = "exact", params: Optional[dict] = None,
          seed: int = 0, dim: Optional[int] = None) -> VectorIndex:
    """Index ``(id, vector)`` pairs. Vectors are 0/1 arrays or packed ints."""
    if not items:
        raise InputError("cannot index an empty item list")
    items = sorted(items, key=lambda kv: kv[0])
    ids = [k for k, _ in items]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate ids in index items")
    data = np.stack([_as_bits(v, dim) for _, v in items])
    n, d = data.shape
    if mode == "exact":
        mat = data.astype(np.float64)
        return VectorIndex(ids, mode, d, matrix=mat, sq_norms=mat.sum(axis=1))
    if mode != "quantized":
        raise InputError(f"unknown index mode {mode!r}")
    params = dict(params or {})
    s = int(params.get("subvectors", 8))
    c = int(params.get("codebook_size", 16))
    iters = int(params.get("iters", 25))
    if s < 1 or c < 1:
        raise InputError("subvectors and codebook_size must be positive")
    if d % s:
        raise InputError(f"vector length {d} not divisible by {s} subvectors")
    w = d // s
    rng = np.random.default_rng(seed)
    codebooks = []
    codes = np.empty((n, s), dtype=np.int64)
    for j in range(s):
        cb, assign = _kmodes(np.ascontiguousarray(data[:, j * w:(j + 1) * w]), c, rng, iters)
        codebooks.append(cb)
        codes[:, j] = assign
    idx = VectorIndex(ids, mode, d, subvectors=s, codebook_size=c,
                      codebooks=codebooks, codes=codes)
    recon = idx.reconstruct()
    idx.sq_norms = recon.sum(axis=1).astype(np.float64)
    idx.recon_error = float(np.mean(np.count_nonzero(recon != data, axis=1)))
    return idx


def scores(index: VectorIndex, q) -> np.ndarray:
    """Cosine similarity of ``q`` to each indexed (or reconstructed) vector."""
    qb = _as_bits(q, index.dim)
    if qb.shape != (index.dim,):
        raise InputError(f"query length {qb.shape[0]} != index dimension {index.dim}")
    qf = qb.astype(np.float64)
    if index.mode == "exact":
        return _kernels.cosine_scores(index.matrix, index.sq_norms, qf)
    w = index.dim // index.subvectors
    cmax = max(len(cb) for cb in index.codebooks)
    luts = np.zeros((index.subvectors, cmax))
    for j, cb in enumerate(index.codebooks):
        luts[j, :len(cb)] = cb.astype(np.float64) @ qf[j * w:(j + 1) * w]
    dots = _kernels.adc_dots(index.codes, luts)
    qsq = qf.sum()
    out = np.zeros(len(index.ids))
    ok = (index.sq_norms > 0) & (qsq > 0)
    out[ok] = dots[ok] / np.sqrt(index.sq_norms[ok] * qsq)
    return out


def query(index: VectorIndex, q, k: int) -> list:
    """Top-k ``(id, similarity)`` sorted by similarity desc, then id asc."""
    if k < 1:
        raise InputError("k must be >= 1")
    s = scores(index, q)
    # ids are stored sorted, so a stable sort on -s breaks ties by id
    order = np.argsort(-s, kind="stable")[:k]
    return [(index.ids[i], float(s[i])) for i in order]


def recall_at_k(index_quantized: VectorIndex, index_exact: VectorIndex,
                queries, k: int) -> float:
    if index_quantized.ids != index_exact.ids:
        raise InputError("indices cover different item sets")
    total = 0.0
    queries = list(queries)
    if not queries:
        raise InputError("no queries")
    for q in queries:
        truth = {i for i, _ in query(index_exact, q, k)}
        got = {i for i, _ in query(index_quantized, q, k)}
        total += len(truth & got) / len(truth)
    return total / len(queries)
