"""Best-first AND-OR graph search (Retro*) and the search graph DESP builds on.

Molecule nodes are OR nodes, reaction nodes AND nodes. Each node carries a
reaction number ``rn`` (estimated cheapest cost of making it within the
current graph) and ``vt`` (estimated cheapest cost of the target through it).
When the graph is given a distance function it also tracks the distance
multisets ``dn``/``dt`` used by double-ended selection.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import asdict, dataclass
from typing import Callable, Optional

from .core import (ContractViolation, InputError, InternalError, PlanResult, Route,
                   validate_route)

INF = math.inf


# -- multisets as sorted tuples ---------------------------------------------

def ms_union(a: tuple, b: tuple) -> tuple:
    return tuple(sorted(a + b))


def ms_diff(a: tuple, b: tuple) -> tuple:
    """Remove one occurrence of each element of ``b`` from ``a``."""
    out = list(a)
    for v in b:
        try:
            out.remove(v)
        except ValueError:
            raise InternalError(f"multiset difference on non-superset: {a} - {b}") from None
    return tuple(out)


@dataclass
class SearchBudget:
    max_expansions: int = 500
    max_depth: int = 11
    templates_per_expansion: int = 50
    # keep expanding after the first solution until the best proved route is
    # certified optimal (needs an admissible heuristic; unconstrained only)
    certify_optimal: bool = False

    def __post_init__(self):
        if min(self.max_expansions, self.max_depth, self.templates_per_expansion) < 1:
            raise InputError("budget fields must be positive")

    def to_dict(self):
        return asdict(self)


class MolNode:
    __slots__ = ("id", "depth", "buyable", "frontier", "met", "value", "rn", "vt",
                 "proved", "children", "parents", "plausibility", "goal", "d_m",
                 "dn", "dt", "handle")

    def __init__(self, mid, depth, buyable, value, plausibility):
        self.id = mid
        self.depth = depth
        self.buyable = buyable
        self.frontier = False
        self.met = False
        self.value = value
        self.rn = INF
        self.vt = INF
        self.proved = buyable
        self.children = []
        self.parents = []
        # plausibility of the reaction that first created this node (1 for the root)
        self.plausibility = plausibility
        self.goal = None
        self.d_m = INF
        self.dn = ()
        self.dt = ()
        # bottom-graph node id for met nodes
        self.handle = None

    @property
    def dead(self):
        return not (self.frontier or self.buyable or self.met or self.children)

    def __repr__(self):
        return f"MolNode({self.id}, rn={self.rn}, vt={self.vt})"


class RxnNode:
    __slots__ = ("id", "reaction", "cost", "parent", "children", "rn", "vt", "dn", "dt")

    def __init__(self, reaction, cost, parent, children):
        self.id = reaction.id
        self.reaction = reaction
        self.cost = cost
        self.parent = parent
        self.children = children
        self.rn = INF
        self.vt = INF
        self.dn = ()
        self.dt = ()


class SearchGraph:
    """AND-OR search graph rooted at the target.

    ``value_fn(m)`` gives V_m for new frontier nodes, ``cost_fn(reaction)`` the
    reaction cost. ``dist_fn(m)``, when given, returns ``(goal, d_m)`` and turns
    on distance-multiset tracking.
    """

    def __init__(self, root: str, buyables, value_fn: Callable, cost_fn: Callable,
                 max_depth: int = 11, dist_fn: Optional[Callable] = None):
        self.buyables = buyables
        self.value_fn = value_fn
        self.cost_fn = cost_fn
        self.max_depth = max_depth
        self.dist_fn = dist_fn
        self.track = dist_fn is not None
        self.mols = {}
        self.rxns = {}
        self.frontier = set()
        self.met_nodes = set()
        self.order = []
        self.root = self._new_mol(root, 0, 1.0)
        self.update([self.root])

    # -- construction ---------------------------------------------------

    def _new_mol(self, mid, depth, plausibility):
        buyable = mid in self.buyables
        node = MolNode(mid, depth, buyable, 0.0, plausibility)
        self.mols[mid] = node
        if buyable:
            node.rn = 0.0
        elif depth < self.max_depth:
            node.value = self.value_fn(mid)
            node.rn = node.value
            node.frontier = True
            self.frontier.add(mid)
        # molecules created at the depth cap can never be expanded: dead ends
        if self.track:
            node.goal, node.d_m = self.dist_fn(mid)
            node.dn = self._mol_dn(node)
        return node

    def ancestors(self, node: MolNode) -> set:
        seen = {node.id}
        todo = [node]
        while todo:
            x = todo.pop()
            for r in x.parents:
                p = r.parent
                if p.id not in seen:
                    seen.add(p.id)
                    todo.append(p)
        return seen

    def expand(self, mid: str, proposals) -> tuple:
        """Attach ``(reaction, score)`` proposals under frontier node ``mid``."""
        node = self.mols.get(mid)
        if node is None or not node.frontier:
            raise ContractViolation(f"{mid} is not a frontier node")
        node.frontier = False
        self.frontier.discard(mid)
        anc = self.ancestors(node)
        new_mols, new_rxns = [], []
        for reaction, _ in proposals:
            if reaction.product != mid:
                raise ContractViolation(f"reaction {reaction.id} does not produce {mid}")
            if reaction.id in self.rxns or any(x in anc for x in reaction.reactants):
                continue
            kids = []
            for x in sorted(reaction.reactants):
                child = self.mols.get(x)
                if child is None:
                    child = self._new_mol(x, node.depth + 1, reaction.plausibility)
                    new_mols.append(child)
                kids.append(child)
            rnode = RxnNode(reaction, self.cost_fn(reaction), node, kids)
            self.rxns[reaction.id] = rnode
            node.children.append(rnode)
            for c in kids:
                c.parents.append(rnode)
                c.parents.sort(key=lambda r: r.id)
            new_rxns.append(rnode)
        node.children.sort(key=lambda r: r.id)
        return new_mols, new_rxns

    def mark_met(self, mid: str, handle, rn: float = 0.0) -> bool:
        """Meeting: the node becomes a zero-cost leaf reachable from r*."""
        node = self.mols[mid]
        if node.met:
            return False
        node.met = True
        node.handle = handle
        node.value = rn
        self.met_nodes.add(mid)
        if node.frontier:
            node.frontier = False
            self.frontier.discard(mid)
        return True

    # -- node equations -------------------------------------------------

    @staticmethod
    def _argmin_child(node):
        return min(node.children, key=lambda r: (r.rn, r.id))

    def _mol_rn(self, x):
        if x.met:
            return x.value
        if x.buyable:
            return 0.0
        if x.frontier:
            return x.value
        if not x.children:
            return INF
        return min(r.rn for r in x.children)

    def _mol_dn(self, x):
        if x.met:
            return (0.0,)
        if x.frontier:
            return (x.d_m - x.rn,)
        if x.children:
            return self._argmin_child(x).dn
        return ()

    @staticmethod
    def _rxn_rn(r):
        return r.cost + sum(c.rn for c in r.children)

    @staticmethod
    def _rxn_dn(r):
        out = ()
        for c in r.children:
            out = out + c.dn
        return tuple(sorted(out))

    @staticmethod
    def _mol_proved(x):
        return x.buyable or any(all(c.proved for c in r.children) for r in x.children)

    # -- propagation ----------------------------------------------------

    def update(self, changed=None) -> None:
        """Up-propagate rn (and dn, proved) from ``changed``, then recompute vt/dt."""
        todo = deque(changed if changed is not None else self.mols.values())
        queued = {x.id for x in todo}
        force = set(queued)
        while todo:
            x = todo.popleft()
            queued.discard(x.id)
            # x's reaction nodes depend on its children, which may have moved
            for r in x.children:
                r.rn = self._rxn_rn(r)
                if self.track:
                    r.dn = self._rxn_dn(r)
            rn = self._mol_rn(x)
            proved = self._mol_proved(x)
            dn = self._mol_dn(x) if self.track else ()
            if rn == x.rn and proved == x.proved and dn == x.dn and x.id not in force:
                continue
            force.discard(x.id)
            x.rn, x.proved, x.dn = rn, proved, dn
            for r in x.parents:
                p = r.parent
                if p.id not in queued:
                    queued.add(p.id)
                    todo.append(p)
        self._downward()

    def _topo(self):
        indeg = {m: len(x.parents) for m, x in self.mols.items()}
        order = []
        todo = deque([self.root])
        while todo:
            x = todo.popleft()
            order.append(x)
            for r in x.children:
                for c in r.children:
                    indeg[c.id] -= 1
                    if indeg[c.id] == 0:
                        todo.append(c)
        if len(order) != len(self.mols):
            raise InternalError("search graph is not a connected DAG")
        return order

    def _downward(self):
        self.order = self._topo()
        root = self.root
        for x in self.order:
            if x is root:
                x.vt = x.rn
                x.dt = x.dn
            elif x.parents:
                best = min(x.parents, key=lambda r: (r.vt, r.id))
                x.vt = best.vt
                x.dt = best.dt
            for r in x.children:
                r.vt = rxn_vt(r.rn, x.rn, x.vt)
                if self.track:
                    r.dt = ms_union(ms_diff(x.dt, x.dn), r.dn)

    # -- selection ------------------------------------------------------

    def select(self, key: Optional[Callable] = None):
        """Frontier node minimising ``key`` (default vt, depth, id), or None.

        Nodes whose primary key is infinite cannot lie on any finite route in
        the current graph and are skipped.
        """
        key = key or retro_key
        best = None
        best_k = None
        for mid in self.frontier:
            k = key(self.mols[mid])
            if k[0] == INF:
                continue
            if best_k is None or k < best_k:
                best, best_k = mid, k
        return best

    def __len__(self):
        return len(self.mols)


def rxn_vt(rn_r, rn_parent, vt_parent):
    if rn_r == INF or rn_parent == INF or vt_parent == INF:
        return INF
    return rn_r - rn_parent + vt_parent


def retro_key(x: MolNode):
    return (x.vt, x.depth, x.id)


def desp_key(x: MolNode):
    if x.vt == INF or not x.dt:
        return (INF, x.depth, x.id)
    return (x.vt + x.dt[0], x.depth, x.id)


# -- solved test and route extraction ---------------------------------------

class NoRoute(LookupError):
    """The graph holds no route meeting the request."""


def _plus(*vals):
    s = 0.0
    for v in vals:
        s += v
    return s


def constrained_costs(graph: SearchGraph, sm: Optional[str] = None):
    """Cheapest proved costs per molecule: (without sm, with sm as a leaf).

    With ``sm`` absent only the first component is meaningful. Met nodes are
    zero-cost leaves of the second kind, standing in for a path from r*.
    """
    c0, c1, ch0, ch1 = {}, {}, {}, {}
    for x in reversed(graph.order):
        m = x.id
        if sm is not None and (m == sm or x.met):
            c1[m] = 0.0
            ch1[m] = None
        if m == sm:
            c0[m] = INF
            ch0[m] = None
            continue
        if x.buyable:
            c0[m] = 0.0
            ch0[m] = None
            c1.setdefault(m, INF)
            ch1.setdefault(m, None)
            continue
        b0 = b1 = INF
        a0 = a1 = None
        for r in x.children:
            kids = r.children
            k0 = _plus(r.cost, *(c0[k.id] for k in kids))
            if k0 < b0:
                b0, a0 = k0, r
            if sm is None or m in c1:
                continue
            low = [min(c0[k.id], c1[k.id]) for k in kids]
            base = _plus(r.cost, *low)
            if base == INF:
                continue
            for j, k in enumerate(kids):
                if c1[k.id] == INF:
                    continue
                k1 = base - low[j] + c1[k.id]
                if k1 < b1:
                    b1, a1 = k1, (r, j)
        c0[m], ch0[m] = b0, a0
        if m not in c1:
            c1[m], ch1[m] = b1, a1
    return c0, c1, ch0, ch1


def constrained_solved(graph: SearchGraph, sm: Optional[str] = None) -> bool:
    if sm is None:
        return graph.root.proved
    if not graph.met_nodes and sm not in graph.mols:
        return False
    _, c1, _, _ = constrained_costs(graph, sm)
    return c1[graph.root.id] < INF


def _trace_route(graph, sm, costs, forced):
    c0, c1, ch0, ch1 = costs
    states = {}
    reactions = {}
    leaves = set()
    stack = [(graph.root, 0 if sm is None else 1)]
    while stack:
        x, s = stack.pop()
        if x.id in forced:
            s = 1
        seen = states.setdefault(x.id, set())
        if s in seen:
            continue
        seen.add(s)
        if s == 1:
            choice = ch1[x.id]
            if choice is None:
                leaves.add(x.id)
                continue
            r, j = choice
            for i, k in enumerate(r.children):
                ks = 1 if i == j else (0 if c0[k.id] <= c1[k.id] else 1)
                stack.append((k, ks))
        else:
            r = ch0[x.id]
            if r is None:
                continue
            for k in r.children:
                stack.append((k, 0))
        reactions[r.id] = r.reaction
    conflicts = {m for m, st in states.items() if len(st) > 1}
    return reactions, leaves, conflicts


def extract_route(graph: SearchGraph, sm: Optional[str] = None,
                  splice: Optional[Callable] = None) -> tuple:
    """Minimum-cost proved route, containing ``sm`` as a leaf when given.

    ``splice(mid)`` returns the bottom-path reactions for a met leaf. Returns
    ``(route, met_leaves)``; raises :class:`NoRoute` when none exists.
    """
    costs = constrained_costs(graph, sm)
    root = graph.root.id
    if (costs[0] if sm is None else costs[1])[root] == INF:
        raise NoRoute(f"no proved route for {root}")
    forced = set()
    for _ in range(len(graph.mols) + 1):
        top, leaves, conflicts = _trace_route(graph, sm, costs, forced)
        bottom = {}
        if splice is not None:
            for m in sorted(leaves):
                if m == sm:
                    continue
                for r in splice(m):
                    bottom.setdefault(r.id, r)
        # a molecule made twice (two DP states, or both by top and bottom
        # reactions) is forced onto its sm-containing alternative
        top_products = {r.product: rid for rid, r in top.items()}
        for r in bottom.values():
            if r.product in top_products and r.id not in top:
                node = graph.mols.get(r.product)
                if node is None or not node.met:
                    raise InternalError(f"bottom path product {r.product} in top route but unmet")
                conflicts.add(r.product)
        conflicts -= forced
        if not conflicts:
            break
        forced |= conflicts
    else:  # pragma: no cover
        raise InternalError("route extraction did not converge")
    prov = {rid: "top" for rid in top}
    allr = dict(top)
    for rid, r in bottom.items():
        if rid not in allr:
            allr[rid] = r
            prov[rid] = "bottom"
    return Route.build(allr.values(), prov), leaves


# -- driver -----------------------------------------------------------------

def run(network, p_star: str, models, budget: Optional[SearchBudget] = None,
        sm: Optional[str] = None, select_key: Optional[Callable] = None,
        selector: Optional[Callable] = None, on_iteration: Optional[Callable] = None,
        algo: str = "retro*") -> PlanResult:
    """Single-ended best-first search from ``p_star``.

    ``selector(graph)`` overrides node choice entirely; ``select_key`` only
    changes the ordering key. ``on_iteration(graph, i)`` is called after every
    expansion and update.
    """
    network._check(p_star)
    if sm is not None:
        network._check(sm)
    budget = budget or SearchBudget()
    t0 = time.perf_counter()
    graph = SearchGraph(p_star, network.buyables, models.value, models.cost,
                        budget.max_depth)
    res = PlanResult(algo=algo)
    if on_iteration is not None:
        on_iteration(graph, 0)
    i = 0
    found = constrained_solved(graph, sm)
    if found:
        res.iterations_to_solve = 0
    while i < budget.max_expansions:
        if found and not (budget.certify_optimal and sm is None and not _certified(graph)):
            break
        mid = selector(graph) if selector is not None else graph.select(select_key)
        if mid is None:
            break
        new_mols, _ = graph.expand(mid, models.retro_model(mid, budget.templates_per_expansion))
        graph.update([graph.mols[mid]])
        i += 1
        res.trace.append(("top", mid))
        if on_iteration is not None:
            on_iteration(graph, i)
        if not found and constrained_solved(graph, sm):
            found = True
            res.iterations_to_solve = i
    res.expansions_used = i
    if found:
        route = _finish_route(graph, network, p_star, sm)
        res.solved = True
        if route is not None:
            res.set_route(route, models.cost_mode)
        else:
            res.route = Route()
            res.route_cost = 0.0
    res.wall_ms = (time.perf_counter() - t0) * 1000.0
    return res


def _certified(graph: SearchGraph) -> bool:
    c0 = constrained_costs(graph)[0][graph.root.id]
    return c0 <= graph.root.rn


def _finish_route(graph, network, p_star, sm, splice=None):
    if sm is None and graph.root.buyable:
        return None
    route, _ = extract_route(graph, sm, splice)
    rep = validate_route(route, p_star, network.buyables, sm, network.molecules)
    if not rep.valid:
        raise InternalError(f"extracted route fails validation: {rep.violated}")
    return route
