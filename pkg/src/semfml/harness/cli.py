"""Command-line entry point: ``semfml {allocate,train,sweep,adapt,bound}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from ..allocator import ObjectiveWeights, joint_optimize
from ..cost_model import PayloadSizes, SUProfile, round_cost
from ..errors import SemFmlError
from ..fml import AssumptionConstants, DivergenceParams, convergence_bound, load_checkpoint
from .config import ConfigError, _network, load_config
from .experiment import SWEEP_AXES, adaptation_eval, build_problem, run_experiment, sweep, write_sweep
from .scenario import sample_su_profiles

log = logging.getLogger("semfml")


def _read_yaml(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("<file>", f"{path} does not exist") from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"parse failure: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("<file>", "expected a mapping")
    return data


def _emit(obj):
    print(json.dumps(obj, indent=2, default=float))


def _profiles(spec, seed):
    if isinstance(spec, dict):
        count = int(spec.get("count", 1))
        return sample_su_profiles(int(spec.get("seed", seed)), count)
    out = []
    for k, d in enumerate(spec):
        missing = {"channel_gain", "cpu_max_hz", "power_max_w", "capacitance", "intensity_cycles_per_flop",
                   "workload_flops"} - set(d)
        if missing:
            raise ConfigError(f"users[{k}].{sorted(missing)[0]}", "missing")
        out.append(SUProfile(
            id=int(d.get("id", k)), channel_gain=float(d["channel_gain"]), cpu_max=float(d["cpu_max_hz"]),
            power_max=float(d["power_max_w"]), capacitance=float(d["capacitance"]),
            intensity=float(d["intensity_cycles_per_flop"]), workload=float(d["workload_flops"]),
            batch=int(d.get("batch", 1)), dataset_size=int(d.get("dataset_size", 1))))
    return out


def cmd_allocate(args):
    raw = _read_yaml(args.instance)
    net = _network(raw.get("network") or {})
    sus = _profiles(raw.get("users", {}), args.seed or 0)
    sizes = PayloadSizes(**raw["payload"])
    deltas = np.asarray(raw.get("deltas", [-1.0] * len(sus)), dtype=float)
    if deltas.shape != (len(sus),):
        raise ConfigError("deltas", f"expected {len(sus)} entries")
    w = raw.get("weights", {})
    weights = ObjectiveWeights(w.get("rho1_per_j", 1.0), w.get("rho2_per_s", 1.0))
    dec = joint_optimize(sus, deltas, net, sizes, weights, tol=raw.get("tol", 1e-4), max_iter=raw.get("max_iter", 50))
    cost = round_cost(dec, sus, net, sizes, include_bs=False)
    out = dec.to_dict()
    out.update(selected=[int(k) for k in np.flatnonzero(dec.selected)],
               energy_j=cost.total_energy, latency_s=cost.total_latency)
    _emit(out)


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_train(args):
    cfg = _config(args)
    if args.rounds is not None:
        cfg = replace(cfg, schedule=replace(cfg.schedule, rounds=args.rounds))
    res = run_experiment(cfg, out_dir=args.out_dir)
    _emit({**res.summary, "out_dir": str(res.out_dir)})


def cmd_sweep(args):
    cfg = _config(args)
    grid = [float(x) for x in args.grid.split(",") if x.strip()]
    rows = sweep(cfg, args.axis, grid)
    path = write_sweep(rows, Path(args.out_dir) / f"sweep_{args.axis}.csv")
    _emit({"rows": len(rows), "path": str(path),
           "failed": sum(r["metric"] == "error" for r in rows)})


def cmd_adapt(args):
    cfg = _config(args)
    ckpt = load_checkpoint(args.checkpoint)
    problem = build_problem(cfg)
    if ckpt.theta.size != problem.model.dim or ckpt.split != problem.model.dim_su:
        raise ConfigError("checkpoint", "does not match the model built from the config")
    lr = args.lr if args.lr is not None else cfg.schedule.inner_lr
    curve = adaptation_eval(problem.model, ckpt.theta, problem.heldout, args.steps, lr)
    _emit({"steps": list(range(args.steps + 1)), "query_loss": curve})


def cmd_bound(args):
    raw = _read_yaml(args.constants)
    try:
        c = AssumptionConstants(**raw["constants"])
    except TypeError as exc:
        raise ConfigError("constants", str(exc)) from None
    except KeyError:
        raise ConfigError("constants", "missing") from None
    try:
        alpha, beta = float(raw["alpha"]), float(raw["beta"])
        D = int(raw["D"])
        value = convergence_bound(c, alpha, beta, int(raw.get("meta_steps", 1)), int(raw["rounds"]),
                                  int(raw["K"]), int(raw["Kt"]), D, float(raw["gap"]))
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), "missing") from None
    eta1, eta2 = DivergenceParams.lower_bounds(c, alpha, beta, D)
    _emit({"bound": value, "H_L": c.H_L(alpha), "sigma_L2": c.sigma_L2(alpha, D), "mu_L2": c.mu_L2(alpha),
           "eta1_min": eta1, "eta2_min": eta2})


def _global_flags(defaults: bool) -> argparse.ArgumentParser:
    """Flags accepted before or after the subcommand; only the top level sets defaults."""
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=d(None), help="override the configured seed")
    common.add_argument("--out-dir", default=d("out"), help="directory for run artifacts")
    common.add_argument("--log-level", default=d("WARNING"), choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(defaults=False)
    p = argparse.ArgumentParser(prog="semfml", description="Federated meta-learning for semantic communication.",
                                parents=[_global_flags(defaults=True)])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("allocate", parents=[common], help="solve one allocation instance")
    a.add_argument("instance")
    a.set_defaults(func=cmd_allocate)

    t = sub.add_parser("train", parents=[common], help="run an experiment")
    t.add_argument("config")
    t.add_argument("--rounds", type=int, default=None)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", parents=[common], help="run one experiment per grid value")
    s.add_argument("config")
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--grid", required=True, help="comma-separated values")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("adapt", parents=[common], help="fine-tune a checkpoint on held-out SUs")
    d.add_argument("checkpoint")
    d.add_argument("config")
    d.add_argument("--steps", type=int, default=5)
    d.add_argument("--lr", type=float, default=None)
    d.set_defaults(func=cmd_adapt)

    b = sub.add_parser("bound", parents=[common], help="evaluate the stationarity bound")
    b.add_argument("constants")
    b.set_defaults(func=cmd_bound)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (SemFmlError, ValueError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError):
            err["field"] = exc.field
        print(json.dumps(err), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
