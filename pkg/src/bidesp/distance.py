"""Exact minimum synthesis costs and synthetic distances on a reaction network.

The synthetic distance ``D(m1, m2)`` is the cheapest cost of a route to ``m2``
that contains ``m1`` (anywhere, as leaf or intermediate), minus the cheapest
cost of making ``m1`` on its own.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import _kernels
from .core import ContractViolation, InputError, reaction_cost
from .network import ReactionNetwork

INF = math.inf


@dataclass(frozen=True)
class CostTable:
    vm: dict
    mode: str

    def __getitem__(self, m):
        return self.vm[m]


@dataclass(frozen=True)
class DistanceRecord:
    m: str
    p_star: str
    d: float

    def __post_init__(self):
        if not self.d >= 0:
            raise InputError(f"negative distance for ({self.m}, {self.p_star})")


def _acyclic(network: ReactionNetwork):
    # ReactionNetwork refuses cyclic input, but guard against foreign objects
    if len(network.topo) != len(network.molecules):
        raise ContractViolation("network is not acyclic")


def compute_vm(network: ReactionNetwork, mode: str = "neg_log_plausibility") -> CostTable:
    _acyclic(network)
    vm = {}
    for m in network.topo:
        if m in network.buyables:
            vm[m] = 0.0
            continue
        best = INF
        for r in network._producers[m]:
            c = reaction_cost(r.plausibility, mode) + math.fsum(vm[x] for x in r.reactants)
            if c < best:
                best = c
        vm[m] = best
    return CostTable(vm, mode)


def through_costs_from(network: ReactionNetwork, m1: str, vm: CostTable) -> dict:
    """best_thru(m) for every m: cheapest route to m containing ``m1``."""
    if m1 not in network.molecules:
        raise InputError(f"unknown molecule id {m1!r}")
    best = vm.vm
    thru = {m: INF for m in network.molecules}
    thru[m1] = best[m1]
    for m in network.topo:
        if m == m1:
            continue
        cur = INF
        for r in network._producers[m]:
            rs = r.reactants
            if any(best[x] == INF for x in rs):
                continue
            total = math.fsum(best[x] for x in rs)
            extra = min(thru[x] - best[x] for x in rs)
            c = reaction_cost(r.plausibility, vm.mode) + total + extra
            if c < cur:
                cur = c
        thru[m] = cur
    return thru


def compute_distance(network: ReactionNetwork, m1: str, m2: str,
                     mode: str = "unit", vm: Optional[CostTable] = None) -> float:
    for m in (m1, m2):
        if m not in network.molecules:
            raise InputError(f"unknown molecule id {m!r}")
    _acyclic(network)
    if m1 == m2:
        return 0.0
    vm = vm if vm is not None else compute_vm(network, mode)
    if vm.vm[m1] == INF:
        return INF
    t = through_costs_from(network, m1, vm)[m2]
    return INF if t == INF else max(0.0, t - vm.vm[m1])


class DistanceTable:
    """All-pairs synthetic distances; ``table[a, b]`` is D(a, b)."""

    def __init__(self, network: ReactionNetwork, mode: str = "unit"):
        _acyclic(network)
        self.network = network
        self.mode = mode
        self.vm = compute_vm(network, mode)
        self.index = network.index
        n = len(network)
        best = np.array([self.vm.vm[m] for m in network.ids])
        prod, cost, ptr, flat = _csr(network, mode)
        thru = _kernels.through_costs(n, best, prod, cost, ptr, flat)
        with np.errstate(invalid="ignore"):
            d = thru.T - best[:, None]
        d[~np.isfinite(thru.T)] = INF
        d[~np.isfinite(best), :] = INF
        np.maximum(d, 0.0, out=d)
        np.fill_diagonal(d, 0.0)
        self.matrix = d
        self.matrix.setflags(write=False)

    def __getitem__(self, pair):
        a, b = pair
        return float(self.matrix[self.index[a], self.index[b]])


def _csr(network: ReactionNetwork, mode: str):
    idx = network.index
    prod, cost, ptr, flat = [], [], [0], []
    for m in network.topo:
        for r in network._producers[m]:
            prod.append(idx[m])
            cost.append(reaction_cost(r.plausibility, mode))
            flat.extend(sorted(idx[x] for x in r.reactants))
            ptr.append(len(flat))
    return (np.array(prod, dtype=np.int64), np.array(cost, dtype=np.float64),
            np.array(ptr, dtype=np.int64), np.array(flat, dtype=np.int64))


def tanimoto(fp1, fp2) -> float:
    a = np.asarray(fp1).astype(bool)
    b = np.asarray(fp2).astype(bool)
    if a.shape != b.shape:
        raise InputError(f"fingerprint length mismatch: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def tanimoto_row(matrix: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Tanimoto of ``q`` against every row of a 0/1 matrix."""
    m = matrix.astype(np.int32)
    qq = q.astype(np.int32)
    inter = m @ qq
    union = m.sum(axis=1) + qq.sum() - inter
    out = np.ones(len(m))
    nz = union > 0
    out[nz] = inter[nz] / union[nz]
    return out


def extract_pairs(network: ReactionNetwork, d_cap: Optional[float] = None,
                  negatives_per_target: int = 1, sim_threshold: float = 0.7,
                  seed: int = 0, table: Optional[DistanceTable] = None) -> list:
    """Offline (m, p*, D) records for every non-buyable target.

    Positives cover every molecule with finite unit-cost D to the target (up
    to ``d_cap`` when given). Negatives are molecules with no route into the
    target whose fingerprint Tanimoto similarity to it is below
    ``sim_threshold``; they carry an infinite label.
    """
    if not 0.0 <= sim_threshold <= 1.0:
        raise InputError("sim_threshold must lie in [0, 1]")
    if negatives_per_target < 0:
        raise InputError("negatives_per_target must be >= 0")
    table = table if table is not None else DistanceTable(network, "unit")
    if table.mode != "unit":
        raise InputError("pair labels use unit reaction costs")
    rng = np.random.default_rng(seed)
    fps = network.fp_matrix()
    ids = network.ids
    d = table.matrix
    out = []
    for p in ids:
        if p in network.buyables:
            continue
        j = network.index[p]
        col = d[:, j]
        for i in np.flatnonzero(np.isfinite(col)):
            if i == j:
                continue
            if d_cap is not None and col[i] > d_cap:
                continue
            out.append(DistanceRecord(ids[i], p, float(col[i])))
        if negatives_per_target:
            sims = tanimoto_row(fps, fps[j])
            cand = np.flatnonzero(~np.isfinite(col) & (sims < sim_threshold))
            if len(cand):
                k = min(negatives_per_target, len(cand))
                for i in sorted(rng.choice(cand, size=k, replace=False).tolist()):
                    out.append(DistanceRecord(ids[i], p, INF))
    return out


def write_pairs_csv(records, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "p_star", "d"])
        for r in records:
            w.writerow([r.m, r.p_star, "inf" if r.d == INF else repr(r.d)])


def read_pairs_csv(path: Union[str, Path]) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [DistanceRecord(r["m"], r["p_star"], float(r["d"])) for r in rows]
