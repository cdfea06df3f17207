"""Double-ended synthesis planning.

A top-down AND-OR graph grows from the target p* with distance-guided
selection while a bottom-up tree grows forward from the starting material r*.
When either side creates a molecule the other side already holds, the two
meet; a route is stitched from the top graph plus the bottom paths of the met
nodes it uses.
"""

from __future__ import annotations

import bisect
import math
import time
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .core import InputError, InternalError, PlanResult
from .retrostar import (INF, SearchGraph, constrained_solved, desp_key, extract_route,
                        ms_diff, ms_union)
from .retrostar import _finish_route

__all__ = ["DespConfig", "BottomGraph", "Desp", "run", "ms_union", "ms_diff", "STRATEGIES"]

STRATEGIES = ("F2E", "F2F", "RetroStarPlusD")


@dataclass
class DespConfig:
    strategy: str = "F2E"
    lam: int = 2
    n1: int = 50
    n2: int = 25
    k: int = 2
    top_max_depth: int = 11
    bottom_max_depth: int = 6
    max_expansions: int = 500
    # credit met nodes with their bottom path cost instead of 0
    met_true_cost: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InputError(f"unknown strategy {self.strategy!r}")
        if self.lam < 1:
            raise InputError("lambda must be >= 1")
        if min(self.n1, self.n2, self.k, self.top_max_depth, self.bottom_max_depth,
               self.max_expansions) < 1:
            raise InputError("DESP limits must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class BottomNode:
    __slots__ = ("id", "depth", "parent", "reaction", "edge_cost", "path_cost", "rn", "vt",
                 "frontier", "goal", "met", "children", "plausibility")

    def __init__(self, mid, depth, parent, reaction, edge_cost, path_cost):
        self.id = mid
        self.depth = depth
        self.parent = parent
        self.reaction = reaction
        self.edge_cost = edge_cost
        self.path_cost = path_cost
        self.rn = INF
        self.vt = INF
        self.frontier = False
        self.goal = None
        self.met = False
        self.children = []
        self.plausibility = reaction.plausibility if reaction is not None else 1.0


def bottom_default_key(x: BottomNode):
    return (x.vt, x.depth, x.id)


def bfs_bottom_key(x: BottomNode):
    return (x.depth, -x.plausibility, x.id)


class BottomGraph:
    """Forward search tree rooted at r*; each node records how it was first made."""

    def __init__(self, root: str, max_depth: int, goal_fn: Callable):
        self.max_depth = max_depth
        self.goal_fn = goal_fn
        self.nodes = {}
        self.frontier = set()
        self.root = self._add(root, None, None, 0.0)

    def _add(self, mid, parent, reaction, edge_cost):
        depth = 0 if parent is None else parent.depth + 1
        path = 0.0 if parent is None else parent.path_cost + edge_cost
        node = BottomNode(mid, depth, parent, reaction, edge_cost, path)
        node.goal, node.rn = self.goal_fn(mid)
        node.vt = path + node.rn
        self.nodes[mid] = node
        if parent is not None:
            parent.children.append(node)
        if depth < self.max_depth:
            node.frontier = True
            self.frontier.add(mid)
        return node

    def add_child(self, parent: BottomNode, reaction, edge_cost: float):
        if reaction.product in self.nodes:
            return None
        return self._add(reaction.product, parent, reaction, edge_cost)

    def close(self, mid: str) -> None:
        self.frontier.discard(mid)
        self.nodes[mid].frontier = False

    def mark_met(self, mid: str) -> bool:
        node = self.nodes[mid]
        if node.met:
            return False
        node.met = True
        self.close(mid)
        return True

    def update(self) -> None:
        """Retro*-style values on the tree: rn up, then vt = path cost + rn."""
        order = []
        todo = [self.root]
        while todo:
            x = todo.pop()
            order.append(x)
            todo.extend(x.children)
        for x in reversed(order):
            if x.met:
                x.rn = 0.0
            elif x.children:
                x.rn = min(c.edge_cost + c.rn for c in x.children)
            elif not x.frontier and x.depth < self.max_depth:
                x.rn = INF
            x.vt = x.path_cost + x.rn if x.rn < INF else INF

    def select(self, key: Optional[Callable] = None):
        key = key or bottom_default_key
        best, best_k = None, None
        for mid in self.frontier:
            k = key(self.nodes[mid])
            if k[0] == INF:
                continue
            if best_k is None or k < best_k:
                best, best_k = mid, k
        return best

    def path_to(self, mid: str) -> list:
        """Forward reactions from r* to ``mid``, in application order."""
        out = []
        x = self.nodes[mid]
        while x.parent is not None:
            out.append(x.reaction)
            x = x.parent
        return out[::-1]


class _SortedIndex:
    """Network indices of a growing node set, kept sorted (= id order)."""

    def __init__(self):
        self.items = []
        self._arr = None

    def add(self, i):
        bisect.insort(self.items, i)
        self._arr = None

    @property
    def arr(self):
        if self._arr is None:
            self._arr = np.array(self.items, dtype=np.int64)
        return self._arr


class Desp:
    """One DESP search instance; ``run`` drives it."""

    def __init__(self, network, p_star, r_star, config: DespConfig, models,
                 knn_index=None, top_key=None, bottom_key=None,
                 forward_use_distance=True):
        network._check(p_star)
        network._check(r_star)
        if p_star == r_star:
            raise InputError("p* and r* must differ")
        self.network = network
        self.p_star = p_star
        self.r_star = r_star
        self.config = config
        self.models = models
        self.knn_index = knn_index
        self.top_key = top_key or desp_key
        self.bottom_key = bottom_key or bottom_default_key
        self.forward_use_distance = forward_use_distance
        self.pred = models.predictor.matrix
        self.index = network.index
        self.ids = network.ids
        self.top_idx = _SortedIndex()
        self.bottom_idx = _SortedIndex()
        self.bottom_idx.add(self.index[r_star])
        self.bottom = BottomGraph(r_star, config.bottom_max_depth, self._bottom_goal)
        self.top = SearchGraph(p_star, network.buyables, models.value, models.cost,
                               config.top_max_depth, dist_fn=self._top_goal)
        self.top_idx.add(self.index[p_star])
        self.bottom.update()

    # -- goal function --------------------------------------------------

    def _top_goal(self, m):
        """gamma for a top node and the predicted distance D(gamma(m), m)."""
        j = self.index[m]
        if self.config.strategy != "F2F":
            return self.r_star, float(self.pred[self.index[self.r_star], j])
        cand = self.bottom_idx.arr
        col = self.pred[cand, j]
        a = int(np.argmin(col))
        return self.ids[cand[a]], float(col[a])

    def _bottom_goal(self, m):
        """gamma for a bottom node and the predicted distance D(m, gamma(m))."""
        i = self.index[m]
        if self.config.strategy != "F2F" or not self.top_idx.items:
            return self.p_star, float(self.pred[i, self.index[self.p_star]])
        cand = self.top_idx.arr
        row = self.pred[i, cand]
        a = int(np.argmin(row))
        return self.ids[cand[a]], float(row[a])

    def goal_of(self, m: str, side: str) -> str:
        return (self._top_goal(m) if side == "top" else self._bottom_goal(m))[0]

    # -- meeting --------------------------------------------------------

    def _meet(self, mid) -> Optional[object]:
        """Mark ``mid`` met on both sides; returns the top node if newly met."""
        self.bottom.mark_met(mid)
        bnode = self.bottom.nodes[mid]
        rn = bnode.path_cost if self.config.met_true_cost else 0.0
        if self.top.mark_met(mid, handle=mid, rn=rn):
            return self.top.mols[mid]
        return None

    # -- cycles ---------------------------------------------------------

    def top_cycle(self) -> Optional[str]:
        mid = self.top.select(self.top_key)
        if mid is None:
            return None
        proposals = self.models.retro_model(mid, self.config.n1)
        new_mols, _ = self.top.expand(mid, proposals)
        changed = [self.top.mols[mid]]
        for x in new_mols:
            self.top_idx.add(self.index[x.id])
        for x in new_mols:
            if x.id in self.bottom.nodes:
                node = self._meet(x.id)
                if node is not None:
                    changed.append(node)
        self.top.update(changed)
        if len(changed) > 1:
            self.bottom.update()
        return mid

    def bottom_cycle(self) -> Optional[str]:
        mid = self.bottom.select(self.bottom_key)
        if mid is None:
            return None
        node = self.bottom.nodes[mid]
        self.bottom.close(mid)
        added = []
        for reaction in self.forward_proposals(mid, node.goal):
            child = self.bottom.add_child(node, reaction, self.models.cost(reaction))
            if child is not None:
                self.bottom_idx.add(self.index[child.id])
                added.append(child)
        met = []
        for child in added:
            if child.id in self.top.mols:
                tnode = self._meet(child.id)
                if tnode is not None:
                    met.append(tnode)
        self.bottom.update()
        if met:
            self.top.update(met)
        return mid

    def forward_proposals(self, m: str, goal: str) -> list:
        """Realized forward reactions from ``m`` toward ``goal``, in ranked order."""
        models, cfg = self.models, self.config
        out = []
        for t in models.forward_template_model(m, goal, cfg.n2, self.forward_use_distance):
            if t.arity == 1:
                r = models.forward_reaction(t.id, m)
                if r is not None:
                    out.append(r)
                continue
            partners = models.building_block_model(m, goal, t.id, cfg.k, self.knn_index,
                                                   self.forward_use_distance)
            for b in partners:
                r = models.forward_reaction(t.id, m, b)
                if r is not None:
                    out.append(r)
        return out

    def solved(self) -> bool:
        return constrained_solved(self.top, self.r_star)

    def stitch(self):
        route = _finish_route(self.top, self.network, self.p_star, self.r_star,
                              splice=self.bottom.path_to)
        if route is None:  # pragma: no cover
            raise InternalError("empty stitched route")
        return route


def run(network, p_star: str, r_star: str, config: Optional[DespConfig] = None,
        models=None, knn_index=None, top_key=None, bottom_key=None,
        forward_use_distance: bool = True, on_iteration: Optional[Callable] = None,
        algo: Optional[str] = None) -> PlanResult:
    """Alternate ``lam`` top cycles with one bottom cycle until a stitched
    route containing r* validates, the budget is spent, or both sides run dry.

    ``on_iteration(search, l, side)`` is called after every cycle.
    """
    config = config or DespConfig()
    if models is None:
        raise InputError("models are required")
    t0 = time.perf_counter()
    s = Desp(network, p_star, r_star, config, models, knn_index, top_key, bottom_key,
             forward_use_distance)
    res = PlanResult(algo=algo or f"desp-{config.strategy.lower()}")
    budget = config.max_expansions
    two_sided = config.strategy != "RetroStarPlusD"
    l = 0
    solved = s.solved()
    if solved:
        res.iterations_to_solve = 0
    while not solved and l < budget:
        progressed = False
        for _ in range(config.lam):
            if l >= budget:
                break
            mid = s.top_cycle()
            if mid is None:
                break
            l += 1
            progressed = True
            res.trace.append(("top", mid))
            if on_iteration is not None:
                on_iteration(s, l, "top")
            if s.solved():
                solved = True
                break
        if solved:
            break
        if two_sided and l < budget:
            mid = s.bottom_cycle()
            if mid is not None:
                l += 1
                progressed = True
                res.trace.append(("bottom", mid))
                if on_iteration is not None:
                    on_iteration(s, l, "bottom")
                solved = s.solved()
        if not progressed:
            break
    res.expansions_used = l
    if solved:
        res.solved = True
        res.iterations_to_solve = l
        res.set_route(s.stitch(), models.cost_mode)
    res.wall_ms = (time.perf_counter() - t0) * 1000.0
    return res
