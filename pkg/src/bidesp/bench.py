"""Benchmark harness: instance construction, the algorithm matrix, metrics."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import baselines, desp, knn, network as netmod, oracle, retrostar
from .core import InputError, PlanResult, Route, route_depth
from .distance import compute_vm
from .models import ModelConfig, Models
from .network import GenerationError, NetworkGenConfig, ReactionNetwork

ALGOS = ("retro*", "retro*+d", "desp-f2e", "desp-f2f", "random", "bfs", "bi-bfs")

RESULT_FIELDS = ["instance", "algo", "solved", "iterations_to_solve", "expansions_used",
                 "route_cost", "route_reactions", "route_depth", "forward_reactions",
                 "wall_ms", "seed"]


@dataclass
class Instance:
    id: str
    p_star: str
    r_star: str
    reference_route: Route
    reference_depth: int
    # unit-cost optimum among routes using r* as a leaf
    oracle_constrained_cost: float


@dataclass
class BenchConfig:
    network: Optional[str] = None
    network_gen: dict = field(default_factory=dict)
    model: ModelConfig = field(default_factory=ModelConfig)
    desp: desp.DespConfig = field(default_factory=desp.DespConfig)
    algos: list = field(default_factory=lambda: list(ALGOS[:4]))
    budgets: list = field(default_factory=lambda: [10, 30, 50])
    instances: int = 200
    seed: int = 0
    heuristic: str = "noisy"
    cost_mode: str = "neg_log_plausibility"
    knn_mode: str = "exact"
    size_bins: list = field(default_factory=lambda: [6, 9, 12])
    threads: Optional[int] = None

    def __post_init__(self):
        if not self.budgets or any(b < 1 for b in self.budgets):
            raise InputError("budgets must be positive")
        if list(self.budgets) != sorted(set(self.budgets)):
            raise InputError("budgets must be strictly ascending")
        for a in self.algos:
            if a not in ALGOS:
                raise InputError(f"unknown algorithm {a!r}")
        if self.instances < 1:
            raise InputError("instance count must be positive")

    @property
    def max_budget(self) -> int:
        return self.budgets[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["desp"] = self.desp.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> "BenchConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InputError(f"unknown config keys: {sorted(extra)}")
        try:
            if "model" in d:
                d["model"] = ModelConfig.from_dict(d["model"])
            if "desp" in d:
                d["desp"] = desp.DespConfig.from_dict(d["desp"])
        except TypeError as exc:
            raise InputError(f"bad config section: {exc}") from None
        if d.get("network") and base_dir is not None and not os.path.isabs(d["network"]):
            d["network"] = str(base_dir / d["network"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "BenchConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data, path.parent)


# -- instances --------------------------------------------------------------

def _leaf_depths(route: Route, target: str) -> dict:
    prod = {r.product: r for r in route.reactions}
    depth = {}
    todo = [(target, 0)]
    while todo:
        m, d = todo.pop()
        if m in prod:
            todo.extend((x, d + 1) for x in prod[m].reactants)
        elif d > depth.get(m, -1):
            depth[m] = d
    return depth


def pick_goal_leaf(network: ReactionNetwork, route: Route, target: str) -> str:
    """Deepest leaf of the route; ties go to the larger molecule, then the lower id."""
    depth = _leaf_depths(route, target)
    deepest = max(depth.values())
    leaves = sorted(m for m, d in depth.items() if d == deepest)
    return min(leaves, key=lambda m: (-network.molecules[m].size, m))


def make_instances(network: ReactionNetwork, count: int, seed: int,
                   vm_unit=None) -> list:
    vm = vm_unit if vm_unit is not None else compute_vm(network, "unit")
    cands = [m for m in network.ids if m not in network.buyables and vm[m] < math.inf]
    order = np.random.default_rng(seed).permutation(len(cands))
    out = []
    for i in order:
        p = cands[int(i)]
        route, _ = oracle.optimal_route(network, p, "unit", vm=vm)
        if len(route) == 1 and len(route.reactions[0].reactants) == 1:
            continue  # r* would be the sole reactant of a one-step route
        r = pick_goal_leaf(network, route, p)
        best = oracle.optimal_route(network, p, "unit", sm=r, vm=vm)
        if best is None:  # pragma: no cover - r* lies on a valid route
            continue
        out.append(Instance(f"I{len(out):04d}", p, r, route, route_depth(route),
                            best[1] - vm[r]))
        if len(out) == count:
            return out
    raise GenerationError(f"only {len(out)} eligible targets, {count} requested")


def instances_to_json(instances) -> list:
    return [{"id": x.id, "p_star": x.p_star, "r_star": x.r_star,
             "reference_reactions": sorted(x.reference_route.ids),
             "reference_depth": x.reference_depth,
             "oracle_constrained_cost": x.oracle_constrained_cost} for x in instances]


# -- running ----------------------------------------------------------------

class Context:
    """Everything a worker needs; built once per process and then read-only."""

    def __init__(self, config: BenchConfig, network: Optional[ReactionNetwork] = None,
                 with_instances: bool = True):
        self.config = config
        self.network = network if network is not None else load_network(config)
        self.models = Models(self.network, config.model, config.cost_mode, config.heuristic)
        net = self.network
        items = [(b, net.molecules[b].fingerprint) for b in sorted(net.buyables)]
        self.knn_index = knn.build(items, config.knn_mode, seed=config.seed,
                                   dim=net.fingerprint_bits)
        self.instances = []
        if with_instances:
            self.instances = make_instances(net, config.instances, config.seed,
                                            compute_vm(net, "unit"))


def load_network(config: BenchConfig) -> ReactionNetwork:
    if config.network:
        return netmod.load(config.network)
    gen = dict(config.network_gen)
    gen.setdefault("seed", config.seed)
    return netmod.generate(NetworkGenConfig.from_dict(gen))


def instance_seed(master: int, counter: int) -> int:
    return int(np.random.SeedSequence([master, counter]).generate_state(1)[0])


def run_algo(ctx: Context, algo: str, inst: Instance, seed: int) -> PlanResult:
    cfg = ctx.config
    budget = cfg.max_budget
    net, models = ctx.network, ctx.models
    dcfg = replace(cfg.desp, max_expansions=budget)
    sb = retrostar.SearchBudget(budget, dcfg.top_max_depth, dcfg.n1)
    try:
        if algo == "retro*":
            res = retrostar.run(net, inst.p_star, models, sb, sm=inst.r_star, algo=algo)
        elif algo == "retro*+d":
            res = desp.run(net, inst.p_star, inst.r_star, replace(dcfg, strategy="RetroStarPlusD"),
                           models, ctx.knn_index, algo=algo)
        elif algo in ("desp-f2e", "desp-f2f"):
            strat = "F2E" if algo == "desp-f2e" else "F2F"
            res = desp.run(net, inst.p_star, inst.r_star, replace(dcfg, strategy=strat),
                           models, ctx.knn_index, algo=algo)
        elif algo == "random":
            res = baselines.random_search(net, inst.p_star, inst.r_star, sb, seed, models)
        elif algo == "bfs":
            res = baselines.bfs_search(net, inst.p_star, inst.r_star, sb, models)
        else:
            res = baselines.bibfs_search(net, inst.p_star, inst.r_star, budget, dcfg.lam,
                                         models, dcfg, ctx.knn_index)
    except Exception as exc:  # isolate one bad run from the matrix
        res = PlanResult(algo=algo, error=f"{type(exc).__name__}: {exc}")
        res.trace = traceback.format_exc().splitlines()[-3:]
    res.algo = algo
    res.instance = inst.id
    res.seed = seed
    return res


_CTX = None


def _init_worker(config_dict, network_json):
    global _CTX
    net = ReactionNetwork.from_json(network_json) if network_json else None
    _CTX = Context(BenchConfig.from_dict(config_dict), net)


def _run_task(task):
    algo, k, seed = task
    return run_algo(_CTX, algo, _CTX.instances[k], seed)


def worker_count(config: BenchConfig) -> int:
    env = os.environ.get("BIDESP_THREADS")
    n = config.threads or (int(env) if env else (os.cpu_count() or 1))
    if env:
        n = min(n, int(env))
    return max(1, n)


def run_matrix(config: BenchConfig, network: Optional[ReactionNetwork] = None,
               ctx: Optional[Context] = None) -> list:
    ctx = ctx or Context(config, network)
    tasks = []
    for k, inst in enumerate(ctx.instances):
        seed = instance_seed(config.seed, k)
        for algo in config.algos:
            tasks.append((algo, k, seed))
    workers = min(worker_count(config), len(tasks))
    if workers <= 1:
        results = [run_algo(ctx, a, ctx.instances[k], s) for a, k, s in tasks]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(config.to_dict(), ctx.network.to_json())) as ex:
            results = list(ex.map(_run_task, tasks, chunksize=8))
    results.sort(key=lambda r: (r.instance, r.algo))
    return results


# -- output -----------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        if math.isnan(x):
            return ""
        return repr(int(x)) if x.is_integer() and abs(x) < 2 ** 53 else repr(x)
    return str(x)


def results_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in results:
        w.writerow([r.instance, r.algo, _fmt(r.solved), _fmt(float(r.iterations_to_solve)),
                    r.expansions_used, _fmt(r.route_cost), r.route_reactions, r.route_depth,
                    r.forward_reaction_count, f"{r.wall_ms:.3f}", r.seed])
    return buf.getvalue()


def write_results_csv(results, path) -> None:
    Path(path).write_text(results_csv(results))


def read_results_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            res = PlanResult(algo=row["algo"], instance=row["instance"],
                             solved=row["solved"] == "1",
                             iterations_to_solve=float(row["iterations_to_solve"]),
                             expansions_used=int(row["expansions_used"]),
                             route_cost=float(row["route_cost"]) if row["route_cost"] else math.nan,
                             route_reactions=int(row["route_reactions"]),
                             route_depth=int(row["route_depth"]),
                             forward_reaction_count=int(row["forward_reactions"]),
                             wall_ms=float(row["wall_ms"]), seed=int(row["seed"]))
            out.append(res)
    return out


def _size_label(size, edges):
    lo = 0
    for e in edges:
        if size < e:
            return f"{lo}-{e - 1}"
        lo = e
    return f"{lo}+"


def aggregate(results, budgets, common_solved_only: bool = True,
              sizes: Optional[dict] = None, size_bins=(6, 9, 12)) -> dict:
    """Solve rates per budget, mean expansions, route lengths on the common set.

    ``sizes`` maps instance id to the target's size for the size-binned rates.
    """
    results = list(results)
    if not results:
        raise InputError("no results to aggregate")
    budgets = sorted(budgets)
    cap = budgets[-1]
    algos = sorted({r.algo for r in results})
    by_algo = {a: [r for r in results if r.algo == a] for a in algos}
    summary = {"budgets": budgets, "algos": {}}
    for a, rs in by_algo.items():
        n = len(rs)
        summary["algos"][a] = {
            "instances": n,
            "solve_rate": {str(b): sum(r.iterations_to_solve <= b for r in rs) / n
                           for b in budgets},
            "mean_expansions": sum(min(r.iterations_to_solve, cap) for r in rs) / n,
            "failures": sum(1 for r in rs if r.error),
        }
    solved_by = {a: {r.instance for r in rs if r.solved and r.iterations_to_solve <= cap}
                 for a, rs in by_algo.items()}
    if common_solved_only:
        common = set.intersection(*solved_by.values())
    else:
        common = set.union(*solved_by.values())
    lengths = {"common_instances": len(common)}
    if common:
        for a, rs in by_algo.items():
            vals = [r.route_reactions for r in rs if r.instance in common and r.solved]
            if vals:
                lengths[a] = {"mean": statistics.fmean(vals),
                              "std": statistics.pstdev(vals) if len(vals) > 1 else 0.0}
    else:
        lengths["absent"] = True
    summary["route_reactions"] = lengths
    if sizes:
        bins = {}
        for a, rs in by_algo.items():
            groups = {}
            for r in rs:
                lab = _size_label(sizes[r.instance], size_bins)
                groups.setdefault(lab, []).append(r.iterations_to_solve <= cap)
            bins[a] = {k: sum(v) / len(v) for k, v in sorted(groups.items())}
        summary["size_bins"] = bins
    return summary


def run_bench(config: BenchConfig, out_dir, network: Optional[ReactionNetwork] = None) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = Context(config, network)
    results = run_matrix(config, ctx=ctx)
    write_results_csv(results, out_dir / "results.csv")
    sizes = {x.id: ctx.network.molecules[x.p_star].size for x in ctx.instances}
    summary = aggregate(results, config.budgets, True, sizes, config.size_bins)
    summary["config"] = config.to_dict()
    summary["seed"] = config.seed
    summary["instances"] = instances_to_json(ctx.instances)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
