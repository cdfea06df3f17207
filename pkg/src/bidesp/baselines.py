"""Uninformed reference searches: random, breadth-first and bidirectional BFS.

They reuse the Retro* and DESP drivers unchanged; only node selection (and,
for bi-BFS, forward template ranking) differs.
"""

from __future__ import annotations

import random
from dataclasses import replace
from typing import Optional

from .core import PlanResult
from . import desp, retrostar
from .retrostar import SearchBudget


def bfs_key(x):
    """Shallowest first, then the node whose creating reaction is most plausible."""
    return (x.depth, -x.plausibility, x.id)


def random_search(network, p_star: str, r_star: Optional[str], budget: SearchBudget,
                  seed: int, models, on_iteration=None) -> PlanResult:
    rng = random.Random(seed)

    def pick(graph):
        if not graph.frontier:
            return None
        return rng.choice(sorted(graph.frontier))

    res = retrostar.run(network, p_star, models, budget, sm=r_star, selector=pick,
                        on_iteration=on_iteration, algo="random")
    res.seed = seed
    return res


def bfs_search(network, p_star: str, r_star: Optional[str], budget: SearchBudget,
               models, on_iteration=None) -> PlanResult:
    return retrostar.run(network, p_star, models, budget, sm=r_star, select_key=bfs_key,
                         on_iteration=on_iteration, algo="bfs")


def bibfs_search(network, p_star: str, r_star: str, budget: int, lam: int, models,
                 config: Optional[desp.DespConfig] = None, knn_index=None,
                 on_iteration=None) -> PlanResult:
    base = config or desp.DespConfig()
    cfg = replace(base, strategy="F2E", lam=lam, max_expansions=budget)
    return desp.run(network, p_star, r_star, cfg, models, knn_index,
                    top_key=bfs_key, bottom_key=desp.bfs_bottom_key,
                    forward_use_distance=False, on_iteration=on_iteration, algo="bi-bfs")
