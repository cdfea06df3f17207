"""Ground-truth reaction network: seeded generator, persistence and lookups."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .core import InputError, Molecule, Reaction, Template


class GenerationError(ValueError):
    pass


class ParseError(InputError):
    pass


@dataclass
class NetworkGenConfig:
    layers: int = 5
    molecules_per_layer: int = 20
    bb_extra_fraction: float = 0.05
    max_producers_per_molecule: int = 3
    bimolecular_fraction: float = 0.5
    plausibility_range: tuple = (0.2, 1.0)
    fingerprint_bits: int = 256
    seed: int = 0
    n_templates: int = 24
    # chance that a bimolecular partner is drawn from the buyables
    buyable_partner_prob: float = 0.6
    # fraction of set bits in a layer-0 fingerprint
    fingerprint_density: float = 0.12

    def validate(self):
        if self.layers < 2:
            raise GenerationError("layers must be >= 2")
        for name in ("molecules_per_layer", "max_producers_per_molecule",
                     "fingerprint_bits", "n_templates"):
            if getattr(self, name) < 1:
                raise GenerationError(f"{name} must be positive")
        for name in ("bb_extra_fraction", "bimolecular_fraction",
                     "buyable_partner_prob", "fingerprint_density"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise GenerationError(f"{name} must lie in [0, 1]")
        if self.buyable_partner_prob < 0.5 and self.bimolecular_fraction > 0:
            raise GenerationError("buyable_partner_prob must be >= 0.5")
        lo, hi = self.plausibility_range
        if not (0.0 < lo <= hi <= 1.0):
            raise GenerationError("plausibility_range must lie within (0, 1]")
        if self.bimolecular_fraction > 0 and self.molecules_per_layer < 2:
            raise GenerationError(
                "bimolecular reactions need at least 2 molecules in layer 0")
        if self.bimolecular_fraction > 0 and self.n_templates < 2:
            raise GenerationError("need templates for both arities")

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkGenConfig":
        d = dict(d)
        if "plausibility_range" in d:
            d["plausibility_range"] = tuple(d["plausibility_range"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["plausibility_range"] = list(self.plausibility_range)
        return d


def fp_to_hex(fp: int, nbits: int) -> str:
    return format(fp, f"0{(nbits + 3) // 4}x")


def fp_to_bits(fp: int, nbits: int) -> np.ndarray:
    """Big-endian unpack: element 0 is the most significant bit."""
    raw = fp.to_bytes((nbits + 7) // 8, "big")
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
    return bits[len(bits) - nbits:]


def bits_to_fp(bits) -> int:
    out = 0
    for b in np.asarray(bits, dtype=np.uint8).tolist():
        out = (out << 1) | (1 if b else 0)
    return out


class ReactionNetwork:
    """Immutable hypergraph of molecules and single-product reactions."""

    def __init__(self, molecules: Iterable[Molecule], templates: Iterable[Template],
                 reactions: Iterable[Reaction], fingerprint_bits: int = 256,
                 meta: Optional[dict] = None):
        self.molecules = {m.id: m for m in sorted(molecules, key=lambda m: m.id)}
        self.templates = {t.id: t for t in sorted(templates, key=lambda t: t.id)}
        self.reactions = {r.id: r for r in sorted(reactions, key=lambda r: r.id)}
        self.fingerprint_bits = int(fingerprint_bits)
        self.meta = dict(meta or {})
        self.buyables = frozenset(m.id for m in self.molecules.values() if m.buyable)

        self._producers = {m: [] for m in self.molecules}
        self._consumers = {m: [] for m in self.molecules}
        self._by_template = {}
        for r in self.reactions.values():
            if r.product not in self.molecules:
                raise InputError(f"reaction {r.id}: unknown product {r.product}")
            for x in r.reactants:
                if x not in self.molecules:
                    raise InputError(f"reaction {r.id}: unknown reactant {x}")
                self._consumers[x].append(r)
            if r.template not in self.templates:
                raise InputError(f"reaction {r.id}: unknown template {r.template}")
            self._producers[r.product].append(r)
            self._by_template.setdefault((r.template, r.reactants), []).append(r)
        for lst in self._producers.values():
            lst.sort(key=lambda r: (-r.plausibility, r.id))
        for lst in self._consumers.values():
            lst.sort(key=lambda r: r.id)
        for lst in self._by_template.values():
            lst.sort(key=lambda r: (-r.plausibility, r.id))

        self.ids = list(self.molecules)
        self.index = {m: i for i, m in enumerate(self.ids)}
        self.topo = self._topological_order()
        self._fp_matrix = None

    def __len__(self):
        return len(self.molecules)

    def __eq__(self, other):
        if not isinstance(other, ReactionNetwork):
            return NotImplemented
        return (self.molecules == other.molecules
                and self.templates == other.templates
                and self.reactions == other.reactions
                and self.fingerprint_bits == other.fingerprint_bits)

    def _topological_order(self) -> list:
        indeg = {m: 0 for m in self.molecules}
        for r in self.reactions.values():
            indeg[r.product] += len(r.reactants)
        ready = sorted(m for m, d in indeg.items() if d == 0)
        order = []
        i = 0
        while i < len(ready):
            m = ready[i]
            i += 1
            order.append(m)
            for r in self._consumers[m]:
                indeg[r.product] -= 1
                if indeg[r.product] == 0:
                    ready.append(r.product)
        if len(order) != len(self.molecules):
            raise InputError("reaction network contains a cycle")
        return order

    def _check(self, m: str):
        if m not in self.molecules:
            raise InputError(f"unknown molecule id {m!r}")

    def producers_of(self, m: str) -> list:
        self._check(m)
        return list(self._producers[m])

    def consumers_of(self, m: str) -> list:
        self._check(m)
        return list(self._consumers[m])

    def reactions_for(self, template: str, reactants) -> list:
        return list(self._by_template.get((template, frozenset(reactants)), ()))

    def is_buyable(self, m: str) -> bool:
        return m in self.buyables

    def fp_matrix(self) -> np.ndarray:
        """(n_molecules, fingerprint_bits) uint8 matrix in ``self.ids`` order."""
        if self._fp_matrix is None:
            n = self.fingerprint_bits
            self._fp_matrix = np.stack(
                [fp_to_bits(self.molecules[m].fingerprint, n) for m in self.ids])
            self._fp_matrix.setflags(write=False)
        return self._fp_matrix

    # -- persistence -------------------------------------------------------

    def to_json(self) -> str:
        n = self.fingerprint_bits
        meta = dict(self.meta)
        meta["fingerprint_bits"] = n
        lines = ["{", f'"meta": {json.dumps(meta, sort_keys=True)},', '"molecules": [']
        mols = [json.dumps({"id": m.id, "size": m.size, "buyable": m.buyable,
                            "fp_hex": fp_to_hex(m.fingerprint, n)})
                for m in self.molecules.values()]
        lines.append(",\n".join(mols))
        lines.append("],")
        lines.append('"templates": [')
        lines.append(",\n".join(
            json.dumps({"id": t.id, "arity": t.arity, "fp_hex": fp_to_hex(t.fingerprint, n)})
            for t in self.templates.values()))
        lines.append("],")
        lines.append('"reactions": [')
        lines.append(",\n".join(
            json.dumps({"id": r.id, "reactants": sorted(r.reactants), "product": r.product,
                        "template": r.template, "plausibility": r.plausibility})
            for r in self.reactions.values()))
        lines.append("]")
        lines.append("}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ReactionNetwork":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {exc.lineno}: {exc.msg}") from exc
        return _from_dict(data, text)


def _line_of(text: str, needle: str) -> Optional[int]:
    pos = text.find(needle)
    if pos < 0:
        return None
    return text.count("\n", 0, pos) + 1


def _from_dict(data: dict, text: str = "") -> ReactionNetwork:
    def fail(section, i, rec, msg):
        rid = rec.get("id") if isinstance(rec, dict) else None
        line = _line_of(text, f'"id": {json.dumps(rid)}') if rid is not None else None
        where = f"line {line}: " if line else ""
        raise ParseError(f"{where}{section}[{i}]: {msg}")

    if not isinstance(data, dict):
        raise ParseError("top-level value must be an object")
    for key in ("meta", "molecules", "templates", "reactions"):
        if key not in data:
            raise ParseError(f"missing field {key!r}")
    meta = data["meta"]
    nbits = int(meta.get("fingerprint_bits", 256))

    mols = []
    for i, rec in enumerate(data["molecules"]):
        try:
            fp = int(rec["fp_hex"], 16)
            if fp.bit_length() > nbits:
                fail("molecules", i, rec, "fp_hex longer than fingerprint_bits")
            mols.append(Molecule(str(rec["id"]), int(rec["size"]), bool(rec["buyable"]), fp))
        except KeyError as exc:
            fail("molecules", i, rec, f"missing field {exc.args[0]!r}")
        except (ValueError, TypeError) as exc:
            fail("molecules", i, rec, str(exc))
    tpls = []
    for i, rec in enumerate(data["templates"]):
        try:
            tpls.append(Template(str(rec["id"]), int(rec["arity"]), int(rec["fp_hex"], 16)))
        except KeyError as exc:
            fail("templates", i, rec, f"missing field {exc.args[0]!r}")
        except (ValueError, TypeError) as exc:
            fail("templates", i, rec, str(exc))
    rxns = []
    known = {m.id for m in mols}
    for i, rec in enumerate(data["reactions"]):
        try:
            r = Reaction(str(rec["id"]), frozenset(rec["reactants"]), str(rec["product"]),
                         str(rec["template"]), float(rec["plausibility"]))
        except KeyError as exc:
            fail("reactions", i, rec, f"missing field {exc.args[0]!r}")
        except (ValueError, TypeError) as exc:
            fail("reactions", i, rec, str(exc))
        if r.product not in known:
            fail("reactions", i, rec, f"product: unknown molecule {r.product!r}")
        bad = sorted(r.reactants - known)
        if bad:
            fail("reactions", i, rec, f"reactants: unknown molecule {bad[0]!r}")
        rxns.append(r)
    try:
        return ReactionNetwork(mols, tpls, rxns, nbits, meta)
    except InputError as exc:
        raise ParseError(str(exc)) from exc


def save(network: ReactionNetwork, path: Union[str, Path]) -> None:
    Path(path).write_text(network.to_json())


def load(path: Union[str, Path]) -> ReactionNetwork:
    return ReactionNetwork.from_json(Path(path).read_text())


# -- generator ---------------------------------------------------------------

def generate(config: NetworkGenConfig) -> ReactionNetwork:
    """Build a layered random network.

    Layer 0 holds the buyables; every molecule of a higher layer gets between
    1 and ``max_producers_per_molecule`` producing reactions whose reactants
    come from strictly lower layers. The two reactants of a bimolecular
    reaction never share an ancestor that has producers (buyable or not), so
    every route drawn from the network is a tree over its made molecules, even
    when a buyable is made rather than bought, and additive cost DPs are exact
    on it.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    nbits = config.fingerprint_bits
    lo, hi = config.plausibility_range

    n_uni = max(1, math.ceil(config.n_templates / 2)) if config.bimolecular_fraction < 1 else 0
    n_bi = config.n_templates - n_uni if config.bimolecular_fraction > 0 else 0
    if config.bimolecular_fraction == 0:
        n_uni = config.n_templates
    templates = []
    for i in range(n_uni + n_bi):
        arity = 1 if i < n_uni else 2
        bits = rng.random(nbits) < config.fingerprint_density
        templates.append(Template(f"T{i:04d}", arity, bits_to_fp(bits)))
    uni_pool = [t.id for t in templates if t.arity == 1]
    bi_pool = [t.id for t in templates if t.arity == 2]

    sizes = []
    buyable = []
    fps = []
    layer_of = []
    closure = []  # int bitset of ancestors that have producers (self included)
    reactions = []
    n = config.molecules_per_layer

    for j in range(n):
        sizes.append(int(rng.integers(1, 7)))
        buyable.append(True)
        fps.append(bits_to_fp(rng.random(nbits) < config.fingerprint_density))
        layer_of.append(0)
        closure.append(0)

    for layer in range(1, config.layers):
        lower = len(sizes)
        prev_layer = [i for i in range(lower) if layer_of[i] == layer - 1]
        lower_buy = [i for i in range(lower) if buyable[i]]
        lower_nonbuy = [i for i in range(lower) if not buyable[i]]
        for _ in range(n):
            me = len(sizes)
            is_bb = bool(rng.random() < config.bb_extra_fraction)
            n_prod = int(rng.integers(1, config.max_producers_per_molecule + 1))
            made = []
            seen_sets = set()
            for k in range(n_prod):
                for _attempt in range(20):
                    bimol = bool(rng.random() < config.bimolecular_fraction)
                    pool = prev_layer if k == 0 else list(range(lower))
                    first = int(pool[rng.integers(len(pool))])
                    rset = [first]
                    if bimol:
                        partner = None
                        if rng.random() >= config.buyable_partner_prob:
                            cands = [c for c in lower_nonbuy
                                     if c != first and not (closure[c] & closure[first])]
                            if cands:
                                partner = int(cands[rng.integers(len(cands))])
                        if partner is None:
                            cands = [c for c in lower_buy
                                     if c != first and not (closure[c] & closure[first])]
                            if not cands:
                                raise GenerationError("no buyable partner available")
                            partner = int(cands[rng.integers(len(cands))])
                        rset.append(partner)
                    key = frozenset(rset)
                    if key in seen_sets:
                        continue
                    seen_sets.add(key)
                    pool_t = bi_pool if bimol else uni_pool
                    tpl = pool_t[rng.integers(len(pool_t))]
                    p = float(np.round(rng.uniform(lo, hi), 4))
                    p = min(1.0, max(p, 1e-4))
                    made.append((rset, tpl, p))
                    break
            if not made:
                raise GenerationError(f"could not draw producers for molecule {me}")
            max_in = max(sizes[r] for rset, _, _ in made for r in rset)
            size = max_in + int(rng.integers(0, 4))
            parent = made[0][0][0]
            flips = 2 + 2 * max(0, size - sizes[parent])
            fp = fps[parent]
            for pos in rng.choice(nbits, size=min(flips, nbits), replace=False):
                fp ^= 1 << int(pos)
            cl = 1 << me
            for rset, _, _ in made:
                for r in rset:
                    cl |= closure[r]
            sizes.append(size)
            buyable.append(is_bb)
            fps.append(fp)
            layer_of.append(layer)
            closure.append(cl)
            for rset, tpl, p in made:
                reactions.append((rset, me, tpl, p))

    mid = lambda i: f"M{i:05d}"
    molecules = [Molecule(mid(i), sizes[i], buyable[i], fps[i]) for i in range(len(sizes))]
    rxns = [Reaction(f"R{i:05d}", frozenset(mid(x) for x in rset), mid(prod), tpl, p)
            for i, (rset, prod, tpl, p) in enumerate(reactions)]
    meta = {"seed": config.seed, "config": config.to_dict(), "fingerprint_bits": nbits}
    return ReactionNetwork(molecules, templates, rxns, nbits, meta)


def layer_counts(network: ReactionNetwork) -> dict:
    """Longest-path depth from the buyables, grouped; handy for fixture summaries."""
    depth = {}
    for m in network.topo:
        prods = network._producers[m]
        if not prods:
            depth[m] = 0
        else:
            depth[m] = 1 + max(depth[x] for r in prods for x in r.reactants)
    out = {}
    for d in depth.values():
        out[d] = out.get(d, 0) + 1
    return dict(sorted(out.items()))
