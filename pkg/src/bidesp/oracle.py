"""Brute-force ground truth: route enumeration, optimal routes and reachability."""

from __future__ import annotations

import math
from typing import Iterator, Optional

from .core import InputError, Route, reaction_cost, route_depth, validate_route
from .distance import compute_vm
from .network import ReactionNetwork

INF = math.inf


def enumerate_valid_routes(network: ReactionNetwork, target: str, max_depth: int = 8,
                           max_reactions: int = 12,
                           expand_buyables: bool = False) -> Iterator[Route]:
    """Every valid route to ``target`` within the caps, once per reaction set.

    A route picks exactly one producer for each molecule it makes; leaves must
    be buyable. With ``expand_buyables`` a buyable molecule may also be made
    by a reaction instead of bought.
    """
    network._check(target)
    if max_depth < 1 or max_reactions < 1:
        raise InputError("caps must be positive")
    seen = set()

    def rec(open_, chosen, producer, depth_of):
        # open_: sorted tuple of molecules that still need a decision
        if not open_:
            ids = frozenset(chosen)
            if ids and ids not in seen:
                seen.add(ids)
                route = Route.build(chosen.values())
                # recorded depths are lower bounds; check the exact one here
                if route_depth(route) <= max_depth and \
                        validate_route(route, target, network.buyables).valid:
                    yield route
            return
        m, rest = open_[0], open_[1:]
        d = depth_of[m]
        if m in network.buyables:
            yield from rec(rest, chosen, {**producer, m: None}, depth_of)
            if not expand_buyables:
                return
        if len(chosen) >= max_reactions or d >= max_depth:
            return
        for r in network.producers_of(m):
            new_depth = dict(depth_of)
            nxt = set(rest)
            for x in r.reactants:
                # a shared molecule keeps its single, already decided producer;
                # the network is acyclic so sharing never closes a loop
                new_depth[x] = max(new_depth.get(x, 0), d + 1)
                if x not in producer:
                    nxt.add(x)
            yield from rec(tuple(sorted(nxt)), {**chosen, r.id: r},
                           {**producer, m: r.id}, new_depth)

    yield from rec((target,), {}, {}, {target: 0})


def optimal_route(network: ReactionNetwork, target: str, mode: str = "neg_log_plausibility",
                  sm: Optional[str] = None, vm=None):
    """``(route, cost)`` of a cheapest valid route, or None when none exists.

    With ``sm`` the route must use ``sm`` as a leaf; the reported cost then
    includes ``vm[sm]`` so it equals ``D(sm, target) + vm[sm]``.
    """
    network._check(target)
    vm = vm if vm is not None else compute_vm(network, mode)
    if sm is None:
        if vm[target] == INF:
            return None
        if target in network.buyables:
            return Route(), 0.0
        chosen = {}
        stack = [target]
        while stack:
            m = stack.pop()
            if m in network.buyables or m in chosen:
                continue
            r = _best_producer(network, m, vm, mode)
            chosen[m] = r
            stack.extend(sorted(r.reactants))
        return Route.build(chosen.values()), vm[target]
    network._check(sm)
    if sm == target:
        return None
    c0, c1, ch0, ch1 = _two_state(network, sm, mode)
    if c1[target] == INF:
        return None
    chosen = {}
    stack = [(target, 1)]
    while stack:
        m, s = stack.pop()
        if s == 1:
            if m == sm:
                continue
            r, j = ch1[m]
            for i, x in enumerate(sorted(r.reactants)):
                stack.append((x, 1 if i == j else (0 if c0[x] <= c1[x] else 1)))
        else:
            r = ch0[m]
            if r is None:
                continue
            stack.extend((x, 0) for x in sorted(r.reactants))
        if m in chosen and chosen[m].id != r.id:
            return _fallback(network, target, sm, mode, vm)
        chosen[m] = r
    route = Route.build(chosen.values())
    if not validate_route(route, target, network.buyables, sm).valid:
        return _fallback(network, target, sm, mode, vm)
    return route, c1[target] + vm[sm]


def _best_producer(network, m, vm, mode):
    best, arg = INF, None
    for r in sorted(network.producers_of(m), key=lambda r: r.id):
        c = reaction_cost(r.plausibility, mode) + math.fsum(vm[x] for x in r.reactants)
        if c < best:
            best, arg = c, r
    return arg


def _two_state(network, sm, mode):
    """Per molecule: cheapest cost without sm, and with sm used as a leaf."""
    c0, c1, ch0, ch1 = {}, {}, {}, {}
    for m in network.topo:
        if m == sm:
            c0[m], c1[m], ch0[m], ch1[m] = INF, 0.0, None, None
            continue
        b0 = 0.0 if m in network.buyables else INF
        a0 = None
        b1, a1 = INF, None
        for r in sorted(network.producers_of(m), key=lambda r: r.id):
            xs = sorted(r.reactants)
            c = reaction_cost(r.plausibility, mode)
            k0 = c + math.fsum(c0[x] for x in xs)
            if k0 < b0:
                b0, a0 = k0, r
            low = [min(c0[x], c1[x]) for x in xs]
            base = c + math.fsum(low)
            if base == INF:
                continue
            for j, x in enumerate(xs):
                if c1[x] < INF:
                    k1 = base - low[j] + c1[x]
                    if k1 < b1:
                        b1, a1 = k1, (r, j)
        c0[m], ch0[m], c1[m], ch1[m] = b0, a0, b1, a1
    return c0, c1, ch0, ch1


def _fallback(network, target, sm, mode, vm):
    # shared molecules forced two producers; settle by enumeration
    best = None
    for route in enumerate_valid_routes(network, target, max_depth=len(network),
                                        max_reactions=len(network.reactions),
                                        expand_buyables=True):
        if sm not in route.leaves():
            continue
        c = math.fsum(r.cost(mode) for r in route.reactions)
        if best is None or c < best[1]:
            best = (route, c)
    if best is None:
        return None
    return best[0], best[1] + vm[sm]


def makeable(network: ReactionNetwork) -> set:
    """Molecules with at least one complete route (buyable ones included)."""
    ok = set(network.buyables)
    changed = True
    while changed:
        changed = False
        for r in network.reactions.values():
            if r.product not in ok and r.reactants <= ok:
                ok.add(r.product)
                changed = True
    return ok


def backward_closure(network: ReactionNetwork, m: str) -> set:
    seen = {m}
    todo = [m]
    while todo:
        x = todo.pop()
        for r in network.producers_of(x):
            for y in r.reactants:
                if y not in seen:
                    seen.add(y)
                    todo.append(y)
    return seen


def reachable_into(network: ReactionNetwork, m1: str, m2: str, _makeable=None) -> bool:
    """True iff some complete route to ``m2`` contains ``m1``."""
    network._check(m1)
    network._check(m2)
    if m1 == m2:
        return True
    mk = _makeable if _makeable is not None else makeable(network)
    if m1 not in mk:
        return False
    region = backward_closure(network, m2)
    if m1 not in region:
        return False
    # forward closure from m1 inside the region, only through completable reactions
    fwd = {m1}
    changed = True
    while changed:
        changed = False
        for r in network.reactions.values():
            p = r.product
            if p in fwd or p not in region:
                continue
            if r.reactants <= mk and r.reactants & fwd:
                fwd.add(p)
                changed = True
    return m2 in fwd
