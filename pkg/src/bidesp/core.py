"""Domain types shared across the planner, plus route validation and metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

TOP = "top"
BOTTOM = "bottom"

COST_MODES = ("neg_log_plausibility", "unit")


class InputError(ValueError):
    """Malformed or unresolvable input."""


class ContractViolation(RuntimeError):
    """A caller broke an operation's precondition."""


class InternalError(RuntimeError):
    """Search bookkeeping produced an inconsistent state."""


@dataclass(frozen=True)
class Molecule:
    id: str
    size: int
    buyable: bool
    # bit i of the vector is bit (nbits - 1 - i) of the int, i.e. big-endian
    fingerprint: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise InputError(f"molecule {self.id}: size must be >= 1")


@dataclass(frozen=True)
class Template:
    id: str
    arity: int
    fingerprint: int = 0

    def __post_init__(self):
        if self.arity not in (1, 2):
            raise InputError(f"template {self.id}: arity must be 1 or 2")


@dataclass(frozen=True)
class Reaction:
    id: str
    reactants: frozenset
    product: str
    template: str
    plausibility: float

    def __post_init__(self):
        if not self.reactants:
            raise InputError(f"reaction {self.id}: no reactants")
        if self.product in self.reactants:
            raise InputError(f"reaction {self.id}: product among reactants")
        if not (0.0 < self.plausibility <= 1.0):
            raise InputError(f"reaction {self.id}: plausibility outside (0, 1]")

    def cost(self, mode: str = "neg_log_plausibility") -> float:
        return reaction_cost(self.plausibility, mode)


def reaction_cost(plausibility: float, mode: str) -> float:
    if mode == "unit":
        return 1.0
    if mode == "neg_log_plausibility":
        # -log(1.0) is -0.0; normalise so sums print cleanly
        return -math.log(plausibility) + 0.0
    raise InputError(f"unknown cost mode {mode!r}")


@dataclass(frozen=True)
class Route:
    """A set of reactions, each tagged with the search direction that found it.

    Reactions are kept sorted by id so two routes over the same reaction set
    compare equal regardless of construction order.
    """

    reactions: tuple = ()
    provenance: tuple = ()

    @classmethod
    def build(cls, reactions: Iterable[Reaction],
              provenance: Union[None, str, Mapping[str, str]] = None) -> "Route":
        by_id = {}
        for r in reactions:
            by_id.setdefault(r.id, r)
        ordered = tuple(by_id[k] for k in sorted(by_id))
        if provenance is None or isinstance(provenance, str):
            tag = provenance or TOP
            tags = tuple(tag for _ in ordered)
        else:
            tags = tuple(provenance.get(r.id, TOP) for r in ordered)
        for t in tags:
            if t not in (TOP, BOTTOM):
                raise InputError(f"bad provenance tag {t!r}")
        return cls(ordered, tags)

    def __len__(self):
        return len(self.reactions)

    @property
    def ids(self) -> frozenset:
        return frozenset(r.id for r in self.reactions)

    def provenance_of(self, reaction_id: str) -> str:
        for r, tag in zip(self.reactions, self.provenance):
            if r.id == reaction_id:
                return tag
        raise KeyError(reaction_id)

    def roots(self) -> list:
        """Products that no reaction in the route consumes."""
        consumed = set()
        for r in self.reactions:
            consumed |= r.reactants
        return sorted({r.product for r in self.reactions} - consumed)

    def leaves(self) -> set:
        produced = {r.product for r in self.reactions}
        out = set()
        for r in self.reactions:
            out |= r.reactants - produced
        return out


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    violated: tuple = field(default_factory=tuple)


def _as_sm_set(sm) -> Optional[frozenset]:
    if sm is None:
        return None
    if isinstance(sm, str):
        return frozenset([sm])
    out = frozenset(sm)
    if not out:
        raise InputError("empty starting-material set")
    return out


def _has_cycle(route: Route) -> bool:
    # molecule -> molecule edges (product -> each reactant)
    edges = {}
    for r in route.reactions:
        edges.setdefault(r.product, set()).update(r.reactants)
    state = {}
    for start in edges:
        if start in state:
            continue
        stack = [(start, iter(edges.get(start, ())))]
        state[start] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
                continue
            s = state.get(nxt, 0)
            if s == 1:
                return True
            if s == 0:
                state[nxt] = 1
                stack.append((nxt, iter(edges.get(nxt, ()))))
    return False


def validate_route(route: Route, target: str, bbs, sm=None,
                   known: Optional[Iterable[str]] = None) -> ValidityReport:
    """Check a route against the planning constraints.

    ``sm`` may be a single molecule id or a collection of candidate starting
    materials, in which case using any one of them satisfies C3. Every
    violated constraint is reported, not just the first.
    """
    if not route.reactions:
        raise InputError("empty route")
    if known is not None:
        known = set(known)
        ids = {target}
        for r in route.reactions:
            ids |= r.reactants
            ids.add(r.product)
        sms = _as_sm_set(sm)
        if sms:
            ids |= sms
        missing = sorted(ids - known)
        if missing:
            raise InputError(f"unresolvable molecule ids: {missing[:5]}")
    bbs = bbs if isinstance(bbs, (set, frozenset)) else set(bbs)
    sms = _as_sm_set(sm)

    violated = []
    producers = {}
    consumed = set()
    for r in route.reactions:
        producers[r.product] = producers.get(r.product, 0) + 1
        consumed |= r.reactants

    if _has_cycle(route) or any(n > 1 for n in producers.values()):
        violated.append("DAG")

    used_sms = set()
    if sms is not None:
        used_sms = {s for s in sms if s in consumed and s not in producers}

    exempt = used_sms if used_sms else (sms or set())
    unsynthesized = [m for m in consumed
                     if m not in bbs and m not in exempt and m not in producers]
    if unsynthesized:
        violated.append("C4" if sms is not None else "C1")

    if target not in producers or target in consumed:
        violated.append("C2")

    if sms is not None and not used_sms:
        violated.append("C3")

    return ValidityReport(not violated, tuple(violated))


def route_cost(route: Route, mode: str = "neg_log_plausibility") -> float:
    # fsum is exactly rounded, so the result does not depend on reaction order
    return math.fsum(r.cost(mode) for r in route.reactions)


def route_depth(route: Route) -> int:
    """Reaction count along the longest product-to-leaf path of the route."""
    by_product = {}
    for r in route.reactions:
        by_product.setdefault(r.product, []).append(r)
    memo = {}

    def depth(m, seen):
        if m in memo:
            return memo[m]
        if m not in by_product:
            return 0
        if m in seen:
            raise InputError("route contains a cycle")
        seen = seen | {m}
        best = 0
        for r in by_product[m]:
            best = max(best, 1 + max(depth(x, seen) for x in r.reactants))
        memo[m] = best
        return best

    roots = route.roots() or sorted(by_product)
    return max((depth(m, frozenset()) for m in roots), default=0)


def count_provenance(route: Route) -> tuple:
    top = sum(1 for t in route.provenance if t == TOP)
    return top, len(route.provenance) - top


def route_to_dict(route: Route, target: str, sm: Optional[str] = None) -> dict:
    return {
        "target": target,
        "sm": sm,
        "reactions": [
            {
                "id": r.id,
                "reactants": sorted(r.reactants),
                "product": r.product,
                "template": r.template,
                "plausibility": r.plausibility,
                "provenance": tag,
            }
            for r, tag in zip(route.reactions, route.provenance)
        ],
    }


def route_from_dict(data: Mapping) -> tuple:
    """Inverse of :func:`route_to_dict`; returns ``(route, target, sm)``."""
    try:
        rxns = []
        prov = {}
        for i, d in enumerate(data["reactions"]):
            rid = d.get("id", f"route_rxn_{i}")
            rxns.append(Reaction(rid, frozenset(d["reactants"]), d["product"],
                                 d["template"], float(d["plausibility"])))
            prov[rid] = d.get("provenance", TOP)
        return Route.build(rxns, prov), data["target"], data.get("sm")
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed route record: {exc}") from exc


def route_from_reactions(reactions: Sequence[Reaction], tag: str = TOP) -> Route:
    return Route.build(reactions, tag)


@dataclass
class PlanResult:
    """Outcome of one planning run.

    ``iterations_to_solve`` is the expansion count at which the first
    constraint-satisfying route was found, ``math.inf`` when unsolved.
    """

    algo: str
    instance: str = ""
    solved: bool = False
    iterations_to_solve: float = math.inf
    expansions_used: int = 0
    route: Optional[Route] = None
    route_cost: float = math.nan
    route_reactions: int = 0
    route_depth: int = 0
    forward_reaction_count: int = 0
    wall_ms: float = 0.0
    seed: int = 0
    trace: list = field(default_factory=list)
    error: str = ""

    def set_route(self, route: Route, mode: str) -> None:
        self.route = route
        self.route_cost = route_cost(route, mode)
        self.route_reactions = len(route)
        self.route_depth = route_depth(route)
        self.forward_reaction_count = count_provenance(route)[1]
