"""The outer training loop: selection, allocation, FML round, aggregation."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import fml
from ..allocator import joint_optimize, selection_divergence_objective, total_objective
from ..cost_model import NetworkConfig, PayloadSizes, round_cost
from ..dmib import MonotonePsiNet, importance_profile
from ..errors import InvalidParameterError, SemFmlError
from ..fml import DivergenceParams, TrainingSchedule, loss_divergence, meta_gradient, meta_loss
from ..models import MLPRegressor, QuadraticModel, VIBClassifier
from ..rng import stream
from ..tasks import classification_shards, quadratic_shards, regression_shards
from .baselines import greedy_allocation, random_allocation, random_selection
from .config import ConfigError, ExperimentConfig, save_config
from .scenario import sample_su_profiles

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "round", "train_loss", "test_loss", "num_selected", "selected_ids", "psi", "objective",
    "energy_j", "latency_s", "cum_energy_j", "cum_latency_s", "payload_bits", "bound",
)


@dataclass
class RoundMetrics:
    round: int
    train_loss: float
    test_loss: float
    num_selected: int
    selected_ids: list
    psi: float
    objective: float
    energy_j: float
    latency_s: float
    cum_energy_j: float
    cum_latency_s: float
    payload_bits: float
    bound: float = math.nan

    def row(self) -> dict:
        d = asdict(self)
        d["selected_ids"] = ";".join(str(i) for i in self.selected_ids)
        return d


@dataclass
class Problem:
    model: object
    train: list
    heldout: list
    profiles: list
    network: NetworkConfig
    sizes: PayloadSizes


@dataclass
class ExperimentResult:
    metrics: list
    theta: np.ndarray
    problem: Problem
    summary: dict = field(default_factory=dict)
    out_dir: Path | None = None

    def column(self, name):
        return [getattr(m, name) for m in self.metrics]


# -- problem construction ---------------------------------------------------------

def build_model(cfg: ExperimentConfig):
    family, mp, tp = cfg.task["family"], cfg.model, cfg.task
    if family == "regression":
        return MLPRegressor(tp.get("in_dim", 4), mp.get("hidden", 8))
    if family == "quadratic":
        return QuadraticModel(tp.get("dim", 2))
    return VIBClassifier(tuple(tp.get("modal_dims", (6, 6))), mp.get("latent", 2), tp.get("classes", 3), cfg.ib.zeta)


def build_shards(cfg: ExperimentConfig):
    tp = {k: v for k, v in cfg.task.items() if k != "family"}
    n = cfg.users.count
    family = cfg.task["family"]
    make = {"regression": regression_shards, "quadratic": quadratic_shards,
            "classification": classification_shards}[family]
    if family == "classification":
        tp["modal_dims"] = tuple(tp.get("modal_dims", (6, 6)))
    try:
        return make(cfg.seed, n, **tp)
    except TypeError as exc:
        raise ConfigError("task", f"invalid option for the {family} family: {exc}") from None


def payload_for(model, shard, schedule: TrainingSchedule) -> PayloadSizes:
    """Bits per round for one SU, read off the model's activation width."""
    z, _ = model.su_forward(fml.Tensor(np.zeros(model.dim_su)), shard.support.X[:1])
    width = z.data.size
    passes = 2 * schedule.meta_steps * schedule.batch
    bpv = schedule.bits_per_value
    labels = passes * bpv if schedule.count_labels else 0
    return PayloadSizes(model_bits=bpv * model.dim_su,
                        semantic_data_bits=bpv * width * passes + labels,
                        activation_grad_bits=bpv * width * passes)


def build_problem(cfg: ExperimentConfig) -> Problem:
    model = build_model(cfg)
    shards = build_shards(cfg)
    n_train = cfg.users.train_count
    train, heldout = shards[:n_train], shards[n_train:]
    u = cfg.users
    profiles = sample_su_profiles(
        cfg.seed, n_train, cpu_max_hz=u.cpu_max_hz, power_max_w=u.power_max_w, capacitance=u.capacitance,
        intensity=u.intensity_cycles_per_flop, workload_flops=u.workload_flops, batch=cfg.schedule.batch,
        distance_km=u.distance_km, fading=u.fading)
    profiles = [replace(p, dataset_size=s.size) for p, s in zip(profiles, train)]
    sizes = cfg.payload or payload_for(model, train[0], cfg.schedule)
    return Problem(model, train, heldout, profiles, cfg.network, sizes)


def limit_rbs(net: NetworkConfig, budget: int | None) -> NetworkConfig:
    if budget is None or budget >= net.rb_count:
        return net
    return replace(net, rb_count=budget, uplink_interference=net.uplink_interference[:budget])


# -- selection ---------------------------------------------------------------------

def divergence_scores(model, theta, shards, schedule, params: DivergenceParams, seed: int, t: int):
    """Meta-gradient norm and loss divergence of every candidate SU."""
    norms, deltas = [], []
    for shard in shards:
        D, Dq = fml.draw_batches(shard, schedule, seed, t, "score")
        Dh = fml.hessian_batch(shard, D, Dq, schedule, seed, t, "score")
        g = float(np.linalg.norm(meta_gradient(model, theta, (D, Dq, Dh), schedule.inner_lr)))
        norms.append(g)
        deltas.append(loss_divergence(g, params, len(D)))
    return np.array(norms), np.array(deltas)


def selection_scores(deltas, margin: float = 1.0) -> np.ndarray:
    """Order-preserving shift of the divergences into [-1 - margin, -margin].

    Raw divergences are nonnegative for admissible eta, which would make
    every SU unattractive to the matching; the shift keeps their ranking
    while pricing selection below the radio cost.
    """
    d = np.asarray(deltas, dtype=float)
    spread = float(d.max() - d.min()) or 1.0
    return (d - d.max()) / spread - margin


def resolve_divergence_params(cfg: ExperimentConfig, problem: Problem, theta):
    sel = cfg.selection
    if sel.eta1 is not None and sel.eta2 is not None:
        return DivergenceParams(sel.eta1, sel.eta2), None
    consts = fml.estimate_constants(problem.model, problem.train, probes=sel.probes, seed=cfg.seed, theta0=theta)
    alpha = cfg.schedule.inner_lr or 1e-12
    params = DivergenceParams.from_constants(consts, alpha, cfg.schedule.meta_lr, cfg.schedule.batch, sel.eta_scale)
    if sel.eta1 is not None:
        params = replace(params, eta1=sel.eta1)
    if sel.eta2 is not None:
        params = replace(params, eta2=sel.eta2)
    return params, consts


def weighted_loss(model, theta, shards, alpha) -> float:
    if not shards:
        return math.nan
    w = np.array([s.size for s in shards], dtype=float)
    vals = np.array([meta_loss(model, theta, s, alpha) for s in shards])
    return float(np.dot(w, vals) / w.sum())


# -- the loop ----------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir=None, problem: Problem | None = None) -> ExperimentResult:
    problem = problem or build_problem(cfg)
    model, sched = problem.model, cfg.schedule
    theta = model.init(stream(cfg.seed, "init"))
    params, consts = resolve_divergence_params(cfg, problem, theta)
    budget = cfg.selection.max_selected or problem.network.rb_count
    net = limit_rbs(problem.network, budget)
    n_train = len(problem.train)
    initial_loss = weighted_loss(model, theta, problem.train, sched.inner_lr)

    metrics, cum_e, cum_t = [], 0.0, 0.0
    for t in range(sched.rounds):
        try:
            _, deltas = divergence_scores(model, theta, problem.train, sched, params, cfg.seed, t)
            scores = selection_scores(deltas, cfg.selection.score_margin)
            dec = _allocate(cfg, problem, net, scores, budget, t)
            selected = np.flatnonzero(dec.selected)
            shards = [problem.train[k] for k in selected]
            payload = 0.0
            if shards:
                if cfg.strategy == "fedavg":
                    res = fml.fedavg_local_sgd(model, theta, shards, sched, cfg.seed, t)
                else:
                    res = fml.run_round(model, theta, shards, sched, cfg.channel, cfg.seed, t)
                theta = fml.aggregate(res.params, res.weights)
                payload = float(sum(res.payload_bits.values()))
            cost = round_cost(dec, problem.profiles, net, problem.sizes, include_bs=True)
        except SemFmlError as exc:
            raise type(exc)(f"round {t}: {exc}") from exc
        cum_e += cost.total_energy
        cum_t += cost.total_latency
        bound = math.nan
        if consts is not None and len(selected):
            try:
                bound = fml.convergence_bound(consts, sched.inner_lr, sched.meta_lr, sched.meta_steps, t + 1,
                                              n_train, len(selected), sched.batch, max(initial_loss, 0.0))
            except InvalidParameterError:
                pass
        metrics.append(RoundMetrics(
            round=t,
            train_loss=weighted_loss(model, theta, problem.train, sched.inner_lr),
            test_loss=weighted_loss(model, theta, problem.heldout, sched.inner_lr),
            num_selected=int(len(selected)),
            selected_ids=[problem.train[k].su_id for k in selected],
            psi=selection_divergence_objective(dec.rb, scores),
            objective=total_objective(dec, problem.profiles, scores, net, problem.sizes, cfg.weights),
            energy_j=cost.total_energy, latency_s=cost.total_latency,
            cum_energy_j=cum_e, cum_latency_s=cum_t, payload_bits=payload, bound=bound,
        ))
        log.info("round %d: train %.5f test %.5f selected %d", t, metrics[-1].train_loss,
                 metrics[-1].test_loss, len(selected))

    result = ExperimentResult(metrics, theta, problem)
    result.summary = summarize(cfg, result, params, consts)
    result.summary["initial_train_loss"] = initial_loss
    if out_dir is not None:
        write_outputs(cfg, result, Path(out_dir))
    return result


def _allocate(cfg, problem, net, scores, budget, t):
    K = len(problem.train)
    strategy = cfg.strategy
    if strategy.startswith("tasc"):
        dec = joint_optimize(problem.profiles, scores, net, problem.sizes, cfg.weights)
        if strategy == "tasc":
            return dec
        mask = dec.selected
    else:
        mask = random_selection(K, budget, stream(cfg.seed, "selection", t))
    if strategy.endswith("random"):
        return random_allocation(mask, problem.profiles, net, stream(cfg.seed, "allocation", t))
    return greedy_allocation(mask, problem.profiles, net)


def summarize(cfg, result: ExperimentResult, params, consts) -> dict:
    m = result.metrics
    out = {
        "strategy": cfg.strategy,
        "seed": cfg.seed,
        "rounds": len(m),
        "config_hash": cfg.digest(),
        "final_train_loss": m[-1].train_loss if m else math.nan,
        "final_test_loss": m[-1].test_loss if m else math.nan,
        "total_energy_j": m[-1].cum_energy_j if m else 0.0,
        "total_latency_s": m[-1].cum_latency_s if m else 0.0,
        "eta1": params.eta1,
        "eta2": params.eta2,
        "constants": None if consts is None else consts.to_dict(),
    }
    model = result.problem.model
    if isinstance(model, VIBClassifier):
        out.update(vib_summary(model, result.theta, result.problem.train))
    return out


def vib_summary(model, theta, shards) -> dict:
    rate = np.mean([model.rate_bits(theta, s.query.X) for s in shards])
    dist = np.mean([model.distortion(theta, s.query) for s in shards])
    acc = np.mean([model.accuracy(theta, s.query) for s in shards])
    return {"rate_bits": float(rate), "distortion": float(dist), "accuracy": float(acc)}


def write_outputs(cfg, result: ExperimentResult, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for m in result.metrics:
            writer.writerow(m.row())
    (out_dir / "summary.json").write_text(json.dumps(result.summary, indent=2, default=float))
    save_config(cfg, out_dir / "config.yaml")
    fml.save_checkpoint(out_dir / "checkpoint.npz", result.theta, result.problem.model.dim_su,
                        {"config_hash": cfg.digest(), "strategy": cfg.strategy})
    result.out_dir = out_dir


# -- adaptation and sweeps -------------------------------------------------------------

def adaptation_eval(model, theta, shards, steps: int, lr: float) -> list[float]:
    """Mean query loss after 0..steps full-support SGD steps from ``theta``."""
    if not shards:
        raise InvalidParameterError("no held-out shards")
    if steps < 0:
        raise InvalidParameterError("steps must be >= 0")
    curve = np.zeros(steps + 1)
    for shard in shards:
        th = np.asarray(theta, dtype=float)
        curve[0] += model.loss(fml.Tensor(th), shard.query).item()
        for s in range(1, steps + 1):
            th = fml.inner_update(model, th, shard.support, lr)
            curve[s] += model.loss(fml.Tensor(th), shard.query).item()
    return (curve / len(shards)).tolist()


SWEEP_AXES = ("zeta", "snr", "phi_th", "Kt")


def _with_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "zeta":
        return replace(cfg, ib=replace(cfg.ib, zeta=float(value)))
    if axis == "snr":
        return replace(cfg, channel=replace(cfg.channel, snr_db=float(value)))
    if axis == "phi_th":
        return replace(cfg, ib=replace(cfg.ib, phi_th=float(value)))
    return replace(cfg, selection=replace(cfg.selection, max_selected=int(value)))


def sweep(cfg: ExperimentConfig, axis: str, grid, psi_dims: int = 8) -> list[dict]:
    """One experiment per grid value; tidy rows of (axis, value, metric, value)."""
    if axis not in SWEEP_AXES:
        raise InvalidParameterError(f"axis must be one of {SWEEP_AXES}")
    grid = list(grid)
    if not grid:
        raise InvalidParameterError("empty grid")
    psi = MonotonePsiNet.random(stream(cfg.seed, "psi-net"), psi_dims)
    rows = []
    for value in grid:
        point = _with_axis(cfg, axis, value)
        try:
            res = run_experiment(point)
            stats = {k: v for k, v in res.summary.items() if isinstance(v, (int, float)) and k != "seed"}
            if axis in ("snr", "phi_th"):
                prof = importance_profile(point.channel.noise_variance, psi, psi_dims, point.ib.phi_th)
                stats["active_dims"] = prof.active_dims
        except SemFmlError as exc:
            log.warning("sweep point %s=%s failed: %s", axis, value, exc)
            rows.append({"axis": axis, "value": value, "metric": "error", "result": str(exc)})
            continue
        rows.extend({"axis": axis, "value": value, "metric": k, "result": v} for k, v in stats.items())
    return rows


def write_sweep(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("axis", "value", "metric", "result"))
        writer.writeheader()
        writer.writerows(rows)
    return path
