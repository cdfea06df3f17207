"""Simulated one-step models built as imperfect views of the true network.

* the retro model sees a seeded subset of each molecule's producers;
* the forward template model ranks templates consuming a molecule by
  plausibility discounted by predicted distance to a goal;
* the building-block model retrieves partners by fingerprint k-NN;
* the distance predictor is the exact unit-cost distance table plus seeded
  noise, clipped the same way the trained regressor is.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import knn as knn_mod
from .core import ContractViolation, InputError, Reaction, Template, reaction_cost
from .distance import CostTable, DistanceTable, compute_vm
from .network import ReactionNetwork, fp_to_bits

# one unit of predicted distance halves a template's score
ALPHA = math.log(2.0)
HEURISTICS = ("exact", "noisy", "zero")


@dataclass
class ModelConfig:
    hide_prob: float = 0.0
    noise_sigma: float = 0.0
    d_max: float = 9.0
    seed: int = 0
    # sd of the noise added to V_m when the heuristic is "noisy";
    # None reuses noise_sigma
    value_noise_sigma: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.hide_prob < 1.0:
            raise InputError("hide_prob must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise InputError("noise_sigma must be >= 0")
        if self.d_max < 1:
            raise InputError("d_max must be >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def unit_hash(*keys) -> float:
    """Stable pseudorandom number in [0, 1) keyed on arbitrary values."""
    h = hashlib.blake2b(":".join(map(str, keys)).encode(), digest_size=8).digest()
    return int.from_bytes(h, "big") / 2.0 ** 64


class DistancePredictor:
    """Exact synthetic distance with seeded noise and clipping at ``d_max``.

    Pairs whose true distance exceeds ``d_max`` (including unreachable ones)
    predict exactly ``d_max + 1``; everything else is
    ``clamp(D + noise, 0, d_max)``.
    """

    def __init__(self, table: DistanceTable, config: ModelConfig):
        self.table = table
        self.config = config
        self.index = table.index
        d = table.matrix
        dmax = float(config.d_max)
        if config.noise_sigma > 0:
            rng = np.random.default_rng([config.seed, 0x5D15])
            noisy = d + config.noise_sigma * rng.standard_normal(d.shape)
        else:
            noisy = d.copy()
        with np.errstate(invalid="ignore"):
            pred = np.clip(noisy, 0.0, dmax)
        pred[d > dmax] = dmax + 1.0
        self.matrix = pred
        self.matrix.setflags(write=False)

    def __call__(self, m1: str, m2: str) -> float:
        try:
            return float(self.matrix[self.index[m1], self.index[m2]])
        except KeyError as exc:
            raise InputError(f"unknown molecule id {exc.args[0]!r}") from None


class Models:
    """Bundle of simulated models over one network.

    ``cost_mode`` fixes the search cost of a reaction; ``heuristic`` picks the
    V_m estimate given to new frontier nodes (exact table, noisy table, or 0).
    """

    def __init__(self, network: ReactionNetwork, config: Optional[ModelConfig] = None,
                 cost_mode: str = "neg_log_plausibility", heuristic: str = "exact",
                 distance_table: Optional[DistanceTable] = None,
                 vm_table: Optional[CostTable] = None,
                 knn_index: Optional[knn_mod.VectorIndex] = None):
        if heuristic not in HEURISTICS:
            raise InputError(f"unknown heuristic {heuristic!r}")
        self.network = network
        self.config = config or ModelConfig()
        self.cost_mode = cost_mode
        self.heuristic = heuristic
        self.table = distance_table if distance_table is not None else DistanceTable(network, "unit")
        self.vm = vm_table if vm_table is not None else compute_vm(network, cost_mode)
        self.predictor = DistancePredictor(self.table, self.config)
        cfg = self.config
        self.visible = {rid: unit_hash(cfg.seed, "visible", rid) >= cfg.hide_prob
                        for rid in network.reactions}
        sigma = cfg.noise_sigma if cfg.value_noise_sigma is None else cfg.value_noise_sigma
        self._value = {}
        for m, v in self.vm.vm.items():
            if heuristic == "zero" or m in network.buyables:
                est = 0.0
            elif heuristic == "exact" or sigma == 0 or not math.isfinite(v):
                est = v
            else:
                # Box-Muller on two keyed uniforms keeps each molecule's noise fixed
                u1 = max(unit_hash(cfg.seed, "value1", m), 1e-300)
                u2 = unit_hash(cfg.seed, "value2", m)
                z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2 * math.pi * u2)
                est = max(0.0, v + sigma * z)
            self._value[m] = est
        self._knn = knn_index

    # -- estimates ------------------------------------------------------

    def value(self, m: str) -> float:
        return self._value[m]

    def predict_distance(self, m1: str, m2: str) -> float:
        return self.predictor(m1, m2)

    def cost(self, reaction: Reaction) -> float:
        return reaction_cost(reaction.plausibility, self.cost_mode)

    @property
    def knn_index(self) -> knn_mod.VectorIndex:
        if self._knn is None:
            net = self.network
            items = [(b, net.molecules[b].fingerprint) for b in sorted(net.buyables)]
            self._knn = knn_mod.build(items, "exact", dim=net.fingerprint_bits)
        return self._knn

    # -- one-step models ------------------------------------------------

    def retro_model(self, m: str, n: int) -> list:
        if n < 1:
            raise InputError("n must be >= 1")
        prods = self.network.producers_of(m)
        out = [(r, r.plausibility) for r in prods if self.visible[r.id]]
        return out[:n]

    def forward_template_model(self, m1: str, m2: str, n: int,
                               use_distance: bool = True) -> list:
        net = self.network
        net._check(m2)
        best = {}
        for r in net.consumers_of(m1):
            if not self.visible[r.id]:
                continue
            s = r.plausibility
            if use_distance:
                s *= math.exp(-ALPHA * self.predict_distance(r.product, m2))
            if s > best.get(r.template, -1.0):
                best[r.template] = s
        ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
        return [net.templates[t] for t, _ in ranked[:n]]

    def compatible_partners(self, m1: str, template: str) -> dict:
        """Buyable partner -> realized product, for reactions (m1, b) -> p using ``template``."""
        net = self.network
        out = {}
        for r in net.consumers_of(m1):
            if r.template != template or len(r.reactants) != 2:
                continue
            (b,) = tuple(r.reactants - {m1})
            if b not in net.buyables or b in out:
                continue
            out[b] = self.forward_reaction(template, m1, b).product
        return out

    def building_block_model(self, m1: str, m2: str, template: str, k: int,
                             knn_index: Optional[knn_mod.VectorIndex] = None,
                             use_distance: bool = True) -> list:
        net = self.network
        t = net.templates.get(template)
        if t is None:
            raise InputError(f"unknown template {template!r}")
        if t.arity != 2:
            raise ContractViolation(f"template {template} is not bimolecular")
        index = knn_index if knn_index is not None else self.knn_index
        qfp = net.molecules[m1].fingerprint ^ net.molecules[m2].fingerprint ^ t.fingerprint
        q = fp_to_bits(qfp, net.fingerprint_bits)
        compat = self.compatible_partners(m1, template)
        if not compat:
            return []
        hits = dict(knn_mod.query(index, q, 4 * k))
        survivors = [b for b in compat if b in hits]
        if not survivors:
            # nothing retrieved is applicable: nearest compatible partners by full scan
            sims = knn_mod.scores(index, q)
            pos = {b: i for i, b in enumerate(index.ids)}
            near = {b: float(sims[pos[b]]) if b in pos else -1.0 for b in compat}
            return sorted(compat, key=lambda b: (-near[b], b))[:k]

        def key(b):
            d = self.predict_distance(compat[b], m2) if use_distance else 0.0
            return (d, -hits[b], b)

        return sorted(survivors, key=key)[:k]

    def forward_reaction(self, template: str, m1: str, b: Optional[str] = None):
        t = self.network.templates.get(template)
        if t is None:
            raise InputError(f"unknown template {template!r}")
        args = {m1} if b is None else {m1, b}
        if t.arity != len(args):
            raise ContractViolation(
                f"template {template} has arity {t.arity}, got {len(args)} reactants")
        for m in args:
            self.network._check(m)
        hits = self.network.reactions_for(template, args)
        return hits[0] if hits else None

    def apply_forward_template(self, template: str, m1: str, b: Optional[str] = None):
        r = self.forward_reaction(template, m1, b)
        return r.product if r is not None else None
