"""Hot numeric kernels.

Each kernel has a numba ``@njit`` implementation and a pure-numpy one with
identical results. The numba path is used when numba imports cleanly and the
environment variable ``BIDESP_NUMBA`` is not set to ``0``.
"""

import os

import numpy as np

try:
    from numba import njit
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("BIDESP_NUMBA", "1") != "0"


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# -- through-branch distance DP -------------------------------------------

def through_costs_numpy(n, best, rxn_product, rxn_cost, rxn_ptr, rxn_reactants):
    """thru[m, a] = cheapest route to m that contains molecule a.

    Reactions must be ordered so every reactant's value is final before the
    reaction is relaxed (topological order of products).
    """
    thru = np.full((n, n), np.inf)
    idx = np.arange(n)
    thru[idx, idx] = best
    for e in range(rxn_product.shape[0]):
        rs = rxn_reactants[rxn_ptr[e]:rxn_ptr[e + 1]]
        b = best[rs]
        sb = b.sum()
        if not np.isfinite(sb):
            continue
        if rs.shape[0] == 1:
            extra = thru[rs[0]] - b[0]
        else:
            extra = (thru[rs] - b[:, None]).min(axis=0)
        cand = rxn_cost[e] + sb + extra
        p = rxn_product[e]
        np.minimum(thru[p], cand, out=thru[p])
    return thru


def _through_costs_py(n, best, rxn_product, rxn_cost, rxn_ptr, rxn_reactants):
    thru = np.empty((n, n))
    for m in range(n):
        for a in range(n):
            thru[m, a] = np.inf
        thru[m, m] = best[m]
    for e in range(rxn_product.shape[0]):
        lo = rxn_ptr[e]
        hi = rxn_ptr[e + 1]
        sb = 0.0
        for j in range(lo, hi):
            sb += best[rxn_reactants[j]]
        if not np.isfinite(sb):
            continue
        p = rxn_product[e]
        base = rxn_cost[e] + sb
        for a in range(n):
            extra = np.inf
            for j in range(lo, hi):
                r = rxn_reactants[j]
                v = thru[r, a] - best[r]
                if v < extra:
                    extra = v
            c = base + extra
            if c < thru[p, a]:
                thru[p, a] = c
    return thru


# -- Hamming assignment for binary k-modes ----------------------------------

def hamming_assign_numpy(data, centroids):
    x = data.astype(np.int32)
    c = centroids.astype(np.int32)
    d = x.sum(axis=1)[:, None] + c.sum(axis=1)[None, :] - 2 * (x @ c.T)
    # argmin returns the first minimum: ties go to the lower centroid index
    return d.argmin(axis=1).astype(np.int64), d.min(axis=1).astype(np.int64)


def _hamming_assign_py(data, centroids):
    n, dim = data.shape
    c = centroids.shape[0]
    assign = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = dim + 1
        arg = 0
        for k in range(c):
            h = 0
            for j in range(dim):
                if data[i, j] != centroids[k, j]:
                    h += 1
            if h < best:
                best = h
                arg = k
        assign[i] = arg
        dist[i] = best
    return assign, dist


# -- cosine scoring ---------------------------------------------------------

def cosine_scores_numpy(matrix, sq_norms, q):
    """dot / sqrt(|a|^2 |q|^2); zero vectors score 0 against everything."""
    qf = q.astype(np.float64)
    qsq = qf @ qf
    out = np.zeros(matrix.shape[0])
    if qsq == 0.0:
        return out
    dots = matrix @ qf
    ok = sq_norms > 0
    out[ok] = dots[ok] / np.sqrt(sq_norms[ok] * qsq)
    return out


def _cosine_scores_py(matrix, sq_norms, q):
    n, dim = matrix.shape
    qsq = 0.0
    for j in range(dim):
        qsq += q[j] * q[j]
    out = np.zeros(n)
    if qsq == 0.0:
        return out
    for i in range(n):
        if sq_norms[i] == 0.0:
            continue
        s = 0.0
        for j in range(dim):
            s += matrix[i, j] * q[j]
        out[i] = s / np.sqrt(sq_norms[i] * qsq)
    return out


def adc_dots_numpy(codes, luts):
    """Sum of per-subvector lookup-table entries: ``sum_s luts[s, codes[i, s]]``."""
    s_idx = np.arange(codes.shape[1])[None, :]
    return luts[s_idx, codes].sum(axis=1)


def _adc_dots_py(codes, luts):
    n, s = codes.shape
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(s):
            acc += luts[j, codes[i, j]]
        out[i] = acc
    return out


if _HAVE_NUMBA:
    through_costs_numba = njit(cache=True)(_through_costs_py)
    hamming_assign_numba = njit(cache=True)(_hamming_assign_py)
    cosine_scores_numba = njit(cache=True)(_cosine_scores_py)
    adc_dots_numba = njit(cache=True)(_adc_dots_py)
else:  # pragma: no cover
    through_costs_numba = through_costs_numpy
    hamming_assign_numba = hamming_assign_numpy
    cosine_scores_numba = cosine_scores_numpy
    adc_dots_numba = adc_dots_numpy


def through_costs(n, best, rxn_product, rxn_cost, rxn_ptr, rxn_reactants):
    if USE_NUMBA:
        return through_costs_numba(n, best, rxn_product, rxn_cost, rxn_ptr,
                                   rxn_reactants)
    return through_costs_numpy(n, best, rxn_product, rxn_cost, rxn_ptr,
                               rxn_reactants)


def hamming_assign(data, centroids):
    data = np.ascontiguousarray(data, dtype=np.uint8)
    centroids = np.ascontiguousarray(centroids, dtype=np.uint8)
    if USE_NUMBA:
        return hamming_assign_numba(data, centroids)
    return hamming_assign_numpy(data, centroids)


def cosine_scores(matrix, sq_norms, q):
    if USE_NUMBA:
        return cosine_scores_numba(np.ascontiguousarray(matrix, dtype=np.float64),
                                   np.ascontiguousarray(sq_norms, dtype=np.float64),
                                   np.ascontiguousarray(q, dtype=np.float64))
    return cosine_scores_numpy(matrix, sq_norms, q)


def adc_dots(codes, luts):
    if USE_NUMBA:
        return adc_dots_numba(np.ascontiguousarray(codes, dtype=np.int64),
                              np.ascontiguousarray(luts, dtype=np.float64))
    return adc_dots_numpy(codes, luts)
