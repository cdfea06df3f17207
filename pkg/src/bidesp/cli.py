"""Command line entry point: ``bidesp {gen,extract,plan,bench,oracle}``.

Exit status: 0 on success, 1 for usage errors, 2 for data errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import __version__, bench, distance, network as netmod, oracle
from .core import ContractViolation, InputError, InternalError, route_to_dict, validate_route
from .network import GenerationError, NetworkGenConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    p.add_argument("--config", type=Path, default=None, help="JSON config file")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bidesp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a reaction network")
    _common(p)
    p.add_argument("--out", "-o", type=Path, required=True)
    p.add_argument("--layers", type=int)
    p.add_argument("--per-layer", type=int, dest="molecules_per_layer")
    p.add_argument("--max-producers", type=int, dest="max_producers_per_molecule")
    p.add_argument("--bimolecular", type=float, dest="bimolecular_fraction")
    p.add_argument("--bits", type=int, dest="fingerprint_bits")

    p = sub.add_parser("extract", help="write (m, p*, D) training pairs")
    _common(p)
    p.add_argument("--network", type=Path)
    p.add_argument("--out", "-o", type=Path, required=True)
    p.add_argument("--d-cap", type=float, default=None)
    p.add_argument("--negatives", type=int, default=1)
    p.add_argument("--sim-threshold", type=float, default=0.7)

    p = sub.add_parser("plan", help="plan one (target, starting material) instance")
    _common(p)
    p.add_argument("--network", type=Path)
    p.add_argument("--target", required=True)
    p.add_argument("--sm", default=None, help="required starting material r*")
    p.add_argument("--algo", choices=bench.ALGOS, default="desp-f2e")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--out", "-o", type=Path, default=None, help="route JSON (default stdout)")
    p.add_argument("--trace", type=Path, default=None, help="write the expansion trace here")

    p = sub.add_parser("bench", help="run the algorithm matrix")
    _common(p)
    p.add_argument("--network", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--instances", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("oracle", help="optimal (constrained) route by exact DP")
    _common(p)
    p.add_argument("--network", type=Path)
    p.add_argument("--target", required=True)
    p.add_argument("--sm", default=None)
    p.add_argument("--mode", choices=("unit", "neg_log_plausibility"), default="unit")
    p.add_argument("--out", "-o", type=Path, default=None)
    return ap


def _config(args) -> bench.BenchConfig:
    cfg = bench.BenchConfig.load(args.config) if args.config else bench.BenchConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "network", None):
        cfg = replace(cfg, network=str(args.network))
    return cfg


def _network(cfg: bench.BenchConfig):
    if not cfg.network:
        raise UsageError("no network given (use --network or a config with 'network')")
    return netmod.load(cfg.network)


def _emit(obj, out: Optional[Path]):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def cmd_gen(args):
    cfg = _config(args)
    gen = dict(cfg.network_gen)
    for k in ("layers", "molecules_per_layer", "max_producers_per_molecule",
              "bimolecular_fraction", "fingerprint_bits"):
        v = getattr(args, k)
        if v is not None:
            gen[k] = v
    gen["seed"] = cfg.seed if args.seed is not None or "seed" not in gen else gen["seed"]
    net = netmod.generate(NetworkGenConfig.from_dict(gen))
    netmod.save(net, args.out)
    print(f"wrote {len(net)} molecules, {len(net.reactions)} reactions to {args.out}")


def cmd_extract(args):
    cfg = _config(args)
    net = _network(cfg)
    recs = distance.extract_pairs(net, args.d_cap, args.negatives, args.sim_threshold,
                                  cfg.seed)
    distance.write_pairs_csv(recs, args.out)
    meta = {"config": cfg.to_dict(), "seed": cfg.seed, "d_cap": args.d_cap,
            "negatives_per_target": args.negatives, "sim_threshold": args.sim_threshold,
            "records": len(recs)}
    _emit(meta, Path(str(args.out) + ".meta.json"))
    print(f"wrote {len(recs)} pairs to {args.out}")


def cmd_plan(args):
    cfg = _config(args)
    net = _network(cfg)
    net._check(args.target)
    if args.sm is not None:
        net._check(args.sm)
    budget = args.budget or cfg.max_budget
    cfg = replace(cfg, budgets=[budget], instances=1)
    two_sided = args.algo in ("retro*+d", "desp-f2e", "desp-f2f", "bi-bfs")
    if two_sided and args.sm is None:
        raise UsageError(f"--sm is required for {args.algo}")
    ctx = bench.Context(cfg, net, with_instances=False)
    inst = bench.Instance("cli", args.target, args.sm, None, 0, math.nan)
    res = bench.run_algo(ctx, args.algo, inst, cfg.seed)
    if res.error:
        raise InternalError(res.error)
    out = {"algo": args.algo, "solved": res.solved,
           "iterations_to_solve": None if math.isinf(res.iterations_to_solve)
           else res.iterations_to_solve,
           "expansions_used": res.expansions_used, "config": cfg.to_dict(), "seed": cfg.seed}
    if res.solved and res.route is not None and len(res.route):
        out["route"] = route_to_dict(res.route, args.target, args.sm)
        out["route_cost"] = res.route_cost
        rep = validate_route(res.route, args.target, net.buyables, args.sm)
        out["valid"] = rep.valid
    else:
        out["route"] = None
    _emit(out, args.out)
    if args.trace:
        args.trace.write_text("".join(f"{i}\t{side}\t{m}\n"
                                      for i, (side, m) in enumerate(res.trace, 1)))


def cmd_bench(args):
    cfg = _config(args)
    if args.instances is not None:
        cfg = replace(cfg, instances=args.instances)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    summary = bench.run_bench(cfg, args.out_dir)
    for a, v in sorted(summary["algos"].items()):
        rates = " ".join(f"{b}:{r:.3f}" for b, r in v["solve_rate"].items())
        print(f"{a:10s} solve {rates}  mean_exp {v['mean_expansions']:.2f}")


def cmd_oracle(args):
    cfg = _config(args)
    net = _network(cfg)
    got = oracle.optimal_route(net, args.target, args.mode, sm=args.sm)
    out = {"target": args.target, "sm": args.sm, "mode": args.mode,
           "config": cfg.to_dict(), "seed": cfg.seed, "satisfiable": got is not None}
    if got is not None:
        route, cost = got
        out["cost"] = cost
        out["route"] = route_to_dict(route, args.target, args.sm) if len(route) else None
    _emit(out, args.out)


COMMANDS = {"gen": cmd_gen, "extract": cmd_extract, "plan": cmd_plan, "bench": cmd_bench,
            "oracle": cmd_oracle}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if not args.cmd:
            ap.print_help(sys.stderr)
            return EXIT_USAGE
        COMMANDS[args.cmd](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (InputError, GenerationError, ContractViolation, InternalError, OSError) as exc:
        print(f"bidesp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
