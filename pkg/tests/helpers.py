"""Shared test utilities: hand-built networks and from-scratch oracles."""

import math

import numpy as np

from bidesp.core import Molecule, Reaction, Template
from bidesp.network import ReactionNetwork

INF = math.inf


def build_network(reactions, buyables, sizes=None, fps=None, nbits=16, extra=()):
    """``reactions``: iterable of (id, reactants, product, plausibility[, template])."""
    sizes = sizes or {}
    fps = fps or {}
    mols = set(buyables) | set(extra)
    rxns = []
    arity = {}
    for row in reactions:
        rid, rs, p, pl = row[:4]
        tpl = row[4] if len(row) > 4 else f"T{len(rs)}"
        arity[tpl] = len(rs)
        mols |= set(rs) | {p}
        rxns.append(Reaction(rid, frozenset(rs), p, tpl, pl))
    molecules = [Molecule(m, sizes.get(m, 1), m in buyables, fps.get(m, 0)) for m in mols]
    templates = [Template(t, a, 0) for t, a in arity.items()]
    return ReactionNetwork(molecules, templates, rxns, nbits)


def chain_network(n, plaus=0.5):
    """b -> m1 -> m2 -> ... -> mn, unimolecular, b buyable."""
    rows = []
    prev = "b"
    for i in range(1, n + 1):
        rows.append((f"R{i}", [prev], f"m{i}", plaus))
        prev = f"m{i}"
    return build_network(rows, {"b"})


# -- from-scratch recomputation of search quantities -------------------------

def recompute(graph):
    """rn, vt, dn, dt for every node, from the node equations with no reuse of
    stored values. Uses the same arithmetic expressions as the search, so the
    results must match bit for bit."""
    rn_m, rn_r, dn_m, dn_r = {}, {}, {}, {}

    def mol_rn(x):
        if x.id not in rn_m:
            if x.met:
                v = x.value
            elif x.buyable:
                v = 0.0
            elif x.frontier:
                v = x.value
            elif not x.children:
                v = INF
            else:
                v = min(rxn_rn(r) for r in x.children)
            rn_m[x.id] = v
        return rn_m[x.id]

    def rxn_rn(r):
        if r.id not in rn_r:
            rn_r[r.id] = r.cost + sum(mol_rn(c) for c in r.children)
        return rn_r[r.id]

    def best_child(x):
        return min(x.children, key=lambda r: (rxn_rn(r), r.id))

    def mol_dn(x):
        if x.id not in dn_m:
            if x.met:
                v = (0.0,)
            elif x.frontier:
                v = (x.d_m - mol_rn(x),)
            elif x.children:
                v = rxn_dn(best_child(x))
            else:
                v = ()
            dn_m[x.id] = v
        return dn_m[x.id]

    def rxn_dn(r):
        if r.id not in dn_r:
            out = ()
            for c in r.children:
                out = out + mol_dn(c)
            dn_r[r.id] = tuple(sorted(out))
        return dn_r[r.id]

    vt_m, vt_r = {}, {}

    def rxn_vt(r):
        if r.id not in vt_r:
            p = r.parent
            a, b, c = rxn_rn(r), mol_rn(p), mol_vt(p)
            vt_r[r.id] = INF if INF in (a, b, c) else a - b + c
        return vt_r[r.id]

    def mol_vt(x):
        if x.id not in vt_m:
            if x is graph.root:
                vt_m[x.id] = mol_rn(x)
            else:
                vt_m[x.id] = min(rxn_vt(r) for r in x.parents)
        return vt_m[x.id]

    out = {}
    track = graph.track
    for x in graph.mols.values():
        out[x.id] = {"rn": mol_rn(x), "vt": mol_vt(x), "proved": None}
        if track:
            out[x.id]["dn"] = mol_dn(x)
    rxns = {}
    for r in graph.rxns.values():
        rxns[r.id] = {"rn": rxn_rn(r), "vt": rxn_vt(r)}
        if track:
            rxns[r.id]["dn"] = rxn_dn(r)
    if track:
        dt = route_dt(graph, mol_rn, mol_vt, rxn_vt, mol_dn, best_child)
        for m, v in dt.items():
            out[m]["dt"] = v
    return out, rxns


def route_dt(graph, mol_rn, mol_vt, rxn_vt, mol_dn, best_child):
    """dt(m) as the multiset of (d - rn) over the frontier leaves (0 for met
    leaves) of the cheapest route through m: the cheapest descent below m
    plus, above it, the chain of cheapest parents with each sibling branch
    completed by its own cheapest descent."""

    def descent(x):
        if x.met:
            return [0.0]
        if x.frontier:
            return [x.d_m - mol_rn(x)]
        if not x.children:
            return []
        out = []
        for c in best_child(x).children:
            out += descent(c)
        return out

    def context(x):
        if x is graph.root:
            return []
        r = min(x.parents, key=lambda r: (rxn_vt(r), r.id))
        out = context(r.parent)
        for c in r.children:
            if c is not x:
                out += descent(c)
        return out

    return {m: tuple(sorted(descent(x) + context(x))) for m, x in graph.mols.items()}


def route_vt(graph, x, mol_rn, mol_vt, rxn_vt):
    """Cost of the cheapest route through x: reaction costs plus leaf estimates."""

    def descent_cost(y):
        return mol_rn(y)

    total = descent_cost(x)
    while x is not graph.root:
        r = min(x.parents, key=lambda r: (rxn_vt(r), r.id))
        total += r.cost + sum(descent_cost(c) for c in r.children if c is not x)
        x = r.parent
    return total


def assert_graph_consistent(graph):
    """Stored values equal the from-scratch recomputation, exactly."""
    mols, rxns = recompute(graph)
    for m, x in graph.mols.items():
        exp = mols[m]
        assert x.rn == exp["rn"], (m, "rn", x.rn, exp["rn"])
        assert x.vt == exp["vt"], (m, "vt", x.vt, exp["vt"])
        if graph.track:
            assert x.dn == exp["dn"], (m, "dn", x.dn, exp["dn"])
            assert x.dt == exp["dt"], (m, "dt", x.dt, exp["dt"])
    for rid, r in graph.rxns.items():
        assert r.rn == rxns[rid]["rn"], (rid, "rn")
        assert r.vt == rxns[rid]["vt"], (rid, "vt")
        if graph.track:
            assert r.dn == rxns[rid]["dn"], (rid, "dn")
    # proved status from its definition
    memo = {}

    def proved(x):
        if x.id not in memo:
            memo[x.id] = x.buyable or any(all(proved(c) for c in r.children)
                                          for r in x.children)
        return memo[x.id]

    for x in graph.mols.values():
        assert x.proved == proved(x), (x.id, "proved")
    # frontier nodes have no children
    for m in graph.frontier:
        assert not graph.mols[m].children


# -- brute-force distances ---------------------------------------------------

def brute_force_distances(network):
    """D for all pairs by full route enumeration (unit costs)."""
    from bidesp.oracle import enumerate_valid_routes

    n = len(network)
    big = n + len(network.reactions)
    # cheapest route cost to each molecule, and cheapest route to m2 containing m1
    best = {m: (0.0 if m in network.buyables else INF) for m in network.ids}
    thru = {}
    for m2 in network.ids:
        row = {}
        for route in enumerate_valid_routes(network, m2, max_depth=big, max_reactions=big,
                                            expand_buyables=True):
            cost = float(len(route))
            if m2 not in network.buyables:
                best[m2] = min(best[m2], cost)
            mols = set(route.leaves()) | {r.product for r in route.reactions}
            for a in mols:
                if cost < row.get(a, INF):
                    row[a] = cost
        thru[m2] = row
    d = {}
    for m1 in network.ids:
        for m2 in network.ids:
            if m1 == m2:
                d[m1, m2] = 0.0
            elif best[m1] == INF:
                d[m1, m2] = INF
            else:
                t = thru[m2].get(m1, INF)
                d[m1, m2] = INF if t == INF else max(0.0, t - best[m1])
    return d, best


def linear_scan(vectors, ids, q, k):
    """Cosine top-k by a plain loop: similarity desc, then id asc."""
    qf = np.asarray(q, dtype=np.float64)
    qsq = float(qf @ qf)
    scored = []
    for i, v in zip(ids, vectors):
        vf = np.asarray(v, dtype=np.float64)
        vsq = float(vf @ vf)
        s = 0.0 if vsq == 0 or qsq == 0 else float(vf @ qf) / math.sqrt(vsq * qsq)
        scored.append((-s, i))
    scored.sort()
    return [(i, -s) for s, i in scored[:k]]


def clustered_bits(n, dim, centers, flip, seed, center_seed=0):
    """Bit vectors scattered around random centres by independent bit flips."""
    cent = (np.random.default_rng(center_seed).random((centers, dim)) < 0.5).astype(np.uint8)
    rng = np.random.default_rng(seed)
    which = rng.integers(0, centers, size=n)
    noise = (rng.random((n, dim)) < flip).astype(np.uint8)
    return cent[which] ^ noise
