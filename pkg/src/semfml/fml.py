"""Federated meta-learning over split models.

A round runs, for every selected SU, ``meta_steps`` MAML steps in split
form: the SU encodes a support batch, the activations cross the (ideal or
noisy) uplink, the BS finishes the forward pass and returns activation
gradients, and the SU back-propagates. The query-batch pass at the
adapted parameters then updates theta. The caller aggregates the per-SU
parameter vectors with ``aggregate``.

Also here: the biased meta-gradient estimate with an optional Hessian
correction, the per-SU loss divergence used for selection, and the
stationarity bound in terms of the smoothness/variance constants.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff
from .autodiff import Tensor, grad
from .channel import ChannelRealization, noise_variance_for_snr, sample_rayleigh_gains, transmit_real
from .errors import (
    InsufficientDataError, InvalidParameterError, ModeViolationError, NumericFailureError,
)
from .rng import stream
from .tasks import Batch, overlapping, sample_batch

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainingSchedule:
    inner_lr: float = 1e-3        # alpha
    meta_lr: float = 1e-3         # beta
    meta_steps: int = 1           # tau0
    rounds: int = 10              # C
    batch: int = 16               # B (also D = D' = D'')
    second_order: bool = False    # apply the Hessian correction inside rounds
    shared_bs: bool = False       # one BS copy updated per step instead of per-SU replicas
    count_labels: bool = True     # labels ride with the semantic data
    bits_per_value: int = 32
    grad_clip: float | None = None  # cap on the update-gradient norm

    def __post_init__(self):
        if self.inner_lr < 0 or not self.meta_lr > 0:
            raise InvalidParameterError("need inner_lr >= 0 and meta_lr > 0")
        if self.meta_steps < 1 or self.rounds < 1 or self.batch < 1:
            raise InvalidParameterError("meta_steps, rounds and batch must be >= 1")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise InvalidParameterError("grad_clip must be positive")

    def clip(self, g: np.ndarray) -> np.ndarray:
        if self.grad_clip is None:
            return g
        n = float(np.linalg.norm(g))
        return g if n <= self.grad_clip else g * (self.grad_clip / n)


@dataclass(frozen=True)
class ChannelSpec:
    mode: str = "ideal"           # ideal | simulated
    snr_db: float = 20.0
    fading_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("ideal", "simulated"):
            raise InvalidParameterError(f"unknown channel mode {self.mode!r}")

    @property
    def noise_variance(self) -> float:
        return noise_variance_for_snr(10 ** (self.snr_db / 10))


def _check_finite(g: np.ndarray, what: str):
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise NumericFailureError(f"non-finite {what} at parameter {int(bad[0])}", index=int(bad[0]))


def loss_and_grad(model, theta, batch, rng=None):
    t = Tensor(np.asarray(theta, dtype=float), requires_grad=True)
    loss = model.loss(t, batch, rng)
    g = grad(loss, t).data
    return loss.item(), g


def inner_update(model, theta, batch: Batch, alpha: float, rng=None) -> np.ndarray:
    """One support-set SGD step; ``theta`` is left untouched."""
    if alpha < 0:
        raise InvalidParameterError("inner learning rate must be nonnegative")
    if len(batch) == 0:
        raise InvalidParameterError("empty support batch")
    _, g = loss_and_grad(model, theta, batch, rng)
    _check_finite(g, "gradient")
    return np.asarray(theta, dtype=float) - alpha * g


def meta_gradient(model, theta, batches, alpha: float, mode: str = "hessian-free",
                  hessian_cap: int = 2000) -> np.ndarray:
    """``(I - alpha * Hess l(theta; D'')) grad l(theta - alpha grad l(theta; D); D')``."""
    D, Dq, Dh = batches
    if overlapping(D, Dq, Dh):
        raise InvalidParameterError("the three batches must be disjoint")
    if mode not in ("exact-hessian", "hessian-free"):
        raise InvalidParameterError(f"unknown mode {mode!r}")
    theta = np.asarray(theta, dtype=float)
    if mode == "exact-hessian" and theta.size > hessian_cap:
        raise ModeViolationError(f"exact Hessian needs d <= {hessian_cap}, got {theta.size}")
    phi = inner_update(model, theta, D, alpha)
    _, g = loss_and_grad(model, phi, Dq)
    _check_finite(g, "query gradient")
    if alpha == 0:
        return g
    f = lambda t: model.loss(t, Dh)
    if mode == "exact-hessian":
        return g - alpha * (autodiff.hessian(f, theta) @ g)
    return g - alpha * autodiff.hvp(f, theta, g)


# -- split round ---------------------------------------------------------------

@dataclass
class RoundResult:
    su_ids: list
    params: list            # full theta_k per SU after the round
    query_loss: dict        # SU id -> mean outer loss over the round's steps
    payload_bits: dict      # stage -> total bits over all SUs and steps
    weights: list           # aggregation weights (dataset sizes)


class _Uplink:
    def __init__(self, spec: ChannelSpec, seed, *keys):
        self.spec = spec
        self.rng = stream(seed, "uplink", *keys)

    def send(self, values: np.ndarray) -> np.ndarray:
        if self.spec.mode == "ideal":
            return values
        h = complex(sample_rayleigh_gains(int(self.rng.integers(2 ** 31)), self.spec.fading_scale, 1)[0])
        ch = ChannelRealization(h, self.spec.noise_variance)
        return transmit_real(values, ch, self.rng)


def split_loss_and_grad(model, theta, batch: Batch, uplink: _Uplink | None = None, rng=None):
    """Loss and gradient computed the split way; returns (loss, grad, values sent)."""
    theta = np.asarray(theta, dtype=float)
    ds = model.dim_su
    su = Tensor(theta[:ds], requires_grad=True)
    bs = Tensor(theta[ds:], requires_grad=True)
    z, local = model.su_forward(su, batch.X, rng)                    # SU forward
    received = z.data if uplink is None else uplink.send(z.data)     # semantic data uplink
    z_rx = Tensor(received, requires_grad=True)
    l_bs = model.bs_loss(bs, z_rx, batch.y)                          # BS forward
    g_bs, g_z = grad(l_bs, [bs, z_rx])                               # BS backward
    g_su = grad(z, su, grad_output=g_z.data).data                    # gradient return + SU backward
    loss = l_bs.item()
    if local is not None:
        g_su = g_su + grad(local, su).data
        loss += local.item()
    return loss, np.concatenate([g_su, g_bs.data]), z.data.size


def _batch_keys(seed, round_index, su_id, step):
    return (seed, "batch", round_index, su_id, step)


def draw_batches(shard, schedule: TrainingSchedule, seed, round_index, step):
    keys = _batch_keys(seed, round_index, shard.su_id, step)
    D = sample_batch(shard.support, schedule.batch, stream(*keys, "support"))
    Dq = sample_batch(shard.query, schedule.batch, stream(*keys, "query"))
    return D, Dq


def hessian_batch(shard, D, Dq, schedule, seed, round_index, step):
    """A third batch disjoint from both D and D' (support first, then query)."""
    keys = _batch_keys(seed, round_index, shard.su_id, step)
    try:
        return sample_batch(shard.support, schedule.batch, stream(*keys, "hessian"), exclude=D)
    except InsufficientDataError:
        return sample_batch(shard.query, schedule.batch, stream(*keys, "hessian"), exclude=Dq)


def run_round(model, theta, shards, schedule: TrainingSchedule, channel: ChannelSpec | None = None,
              seed: int = 0, round_index: int = 0) -> RoundResult:
    if not shards:
        raise InvalidParameterError("no SU selected for this round")
    channel = channel or ChannelSpec()
    theta = np.array(theta, dtype=float)  # private copy: the global model is never mutated
    alpha, beta = schedule.inner_lr, schedule.meta_lr
    ds = model.dim_su
    bpv = schedule.bits_per_value

    local = {s.su_id: theta.copy() for s in shards}
    payload = {"ISDT": 0.0, "IAGT": 0.0, "MTA": 0.0}
    losses = {s.su_id: [] for s in shards}
    weights = [float(s.size) for s in shards]

    for step in range(schedule.meta_steps):
        bs_updates = []
        for shard in shards:
            k = shard.su_id
            th = local[k]
            up = _Uplink(channel, seed, round_index, k, step)
            rng = stream(seed, "model-noise", round_index, k, step)
            D, Dq = draw_batches(shard, schedule, seed, round_index, step)
            label_bits = bpv * (len(D) + len(Dq)) if schedule.count_labels else 0.0

            # inner pass on the support batch
            _, g_in, sent = split_loss_and_grad(model, th, D, up, rng)
            _check_finite(g_in, f"inner gradient of SU {k}")
            phi = th - alpha * schedule.clip(g_in)
            # outer pass on the query batch, at the adapted parameters
            loss_q, g_out, sent_q = split_loss_and_grad(model, phi, Dq, up, rng)
            if not math.isfinite(loss_q):
                raise NumericFailureError(f"round {round_index}: SU {k} query loss is {loss_q}")
            _check_finite(g_out, f"outer gradient of SU {k}")
            if schedule.second_order and alpha > 0:
                Dh = hessian_batch(shard, D, Dq, schedule, seed, round_index, step)
                g_out = g_out - alpha * autodiff.hvp(lambda t: model.loss(t, Dh), th, g_out)
            g_out = schedule.clip(g_out)
            losses[k].append(loss_q)
            payload["ISDT"] += bpv * (sent + sent_q) + label_bits
            payload["IAGT"] += bpv * (sent + sent_q)

            if schedule.shared_bs:
                local[k] = np.concatenate([th[:ds] - beta * g_out[:ds], th[ds:]])
                bs_updates.append(g_out[ds:])
            else:
                local[k] = th - beta * g_out
        if schedule.shared_bs and bs_updates:
            w = np.asarray(weights) / sum(weights)
            g_bs = np.tensordot(w, np.stack(bs_updates), axes=1)
            new_bs = local[shards[0].su_id][ds:] - beta * g_bs
            for k in local:
                local[k] = np.concatenate([local[k][:ds], new_bs])

    payload["MTA"] = float(bpv * ds * len(shards))
    return RoundResult(
        su_ids=[s.su_id for s in shards],
        params=[local[s.su_id] for s in shards],
        query_loss={k: float(np.mean(v)) for k, v in losses.items()},
        payload_bits=payload,
        weights=weights,
    )


def fedavg_local_sgd(model, theta, shards, schedule: TrainingSchedule, seed: int = 0,
                     round_index: int = 0) -> RoundResult:
    """Reference FedAvg: plain local SGD on the query batches, no split, no adaptation."""
    if not shards:
        raise InvalidParameterError("no SU selected for this round")
    theta = np.array(theta, dtype=float)
    params, losses = [], {}
    for shard in shards:
        th = theta.copy()
        hist = []
        for step in range(schedule.meta_steps):
            _, Dq = draw_batches(shard, schedule, seed, round_index, step)
            loss, g = loss_and_grad(model, th, Dq)
            hist.append(loss)
            th = th - schedule.meta_lr * schedule.clip(g)
        params.append(th)
        losses[shard.su_id] = float(np.mean(hist))
    return RoundResult([s.su_id for s in shards], params, losses,
                       {"ISDT": 0.0, "IAGT": 0.0, "MTA": float(schedule.bits_per_value * theta.size * len(shards))},
                       [float(s.size) for s in shards])


def aggregate(params, sizes) -> np.ndarray:
    """Dataset-size weighted average of parameter vectors."""
    if len(params) == 0:
        raise InvalidParameterError("nothing to aggregate")
    stack = [np.asarray(p, dtype=float) for p in params]
    if len({p.shape for p in stack}) != 1:
        raise InvalidParameterError("parameter vectors differ in dimension")
    w = np.asarray(sizes, dtype=float)
    if w.shape != (len(stack),) or np.any(w < 0) or w.sum() <= 0:
        raise InvalidParameterError("need one nonnegative size per vector with a positive total")
    return np.tensordot(w, np.stack(stack), axes=1) / w.sum()


def meta_loss(model, theta, shard, alpha: float) -> float:
    """Query loss after one full-support adaptation step."""
    phi = inner_update(model, theta, shard.support, alpha) if alpha > 0 else np.asarray(theta, dtype=float)
    return model.loss(Tensor(phi), shard.query).item()


# -- convergence analysis -------------------------------------------------------

@dataclass(frozen=True)
class AssumptionConstants:
    """Smoothness and variance constants; sigma/mu are roots (not squares)."""
    H: float
    Phi: float
    lam: float
    sigma_G: float
    sigma_H: float
    mu_G: float
    mu_H: float

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidParameterError(f"constant {k} must be finite and nonnegative, got {v}")

    def H_L(self, alpha: float) -> float:
        return 4 * self.H + alpha * self.lam * self.Phi

    def sigma_L2(self, alpha: float, D: int, Dq: int | None = None, Dh: int | None = None) -> float:
        Dq = D if Dq is None else Dq
        Dh = D if Dh is None else Dh
        return (12 * (self.Phi ** 2 + self.sigma_G ** 2 * (D + Dq) / (D * Dq))
                * (1 + self.sigma_H ** 2 * alpha ** 2 / (4 * Dh)))

    def mu_L2(self, alpha: float) -> float:
        return 3 * self.Phi ** 2 * alpha ** 2 * self.mu_H ** 2 + 192 * self.mu_G ** 2

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DivergenceParams:
    eta1: float
    eta2: float

    @staticmethod
    def lower_bounds(c: AssumptionConstants, alpha: float, beta: float, D: int) -> tuple[float, float]:
        eta1 = (math.sqrt(16 * c.mu_G + 4 * alpha * c.Phi * c.mu_H)
                + beta * math.sqrt(140 * (c.mu_G ** 2 + 2 * c.sigma_L2(alpha, D))))
        eta2 = 24 * c.sigma_G ** 2 * (4 + alpha ** 2 * c.sigma_H ** 2) + 6 * alpha ** 2 * c.Phi ** 2 * c.sigma_H ** 2
        return eta1, eta2

    @classmethod
    def from_constants(cls, c: AssumptionConstants, alpha: float, beta: float, D: int, scale: float = 1.0):
        """The smallest admissible pair, times ``scale``."""
        e1, e2 = cls.lower_bounds(c, alpha, beta, D)
        return cls(scale * e1, scale * e2)

    def admissible(self, c: AssumptionConstants, alpha: float, beta: float, D: int) -> bool:
        e1, e2 = self.lower_bounds(c, alpha, beta, D)
        return self.eta1 >= e1 and self.eta2 >= e2


def loss_divergence(g: float, params: DivergenceParams, D: int) -> float:
    """``(eta1 + eta2 / sqrt(D)) g - g^2``; negative for large meta-gradients."""
    if g < 0:
        raise InvalidParameterError("gradient norm must be nonnegative")
    return (params.eta1 + params.eta2 / math.sqrt(D)) * g - g * g


def convergence_bound(c: AssumptionConstants, alpha: float, beta: float, meta_steps: int, rounds: int,
                      K: int, Kt: int, D: int, gap: float, Dq: int | None = None, Dh: int | None = None) -> float:
    """Upper bound on the round-averaged squared meta-gradient norm."""
    if not (0 < alpha and (c.H == 0 or alpha <= 1 / c.H)):
        raise InvalidParameterError(f"alpha={alpha} outside (0, 1/H]")
    HL = c.H_L(alpha)
    if not (0 < beta and (HL == 0 or beta <= 1 / HL)):
        raise InvalidParameterError(f"beta={beta} outside (0, 1/H_L]")
    if not (1 <= Kt <= K) or D < 1 or meta_steps < 1 or rounds < 1:
        raise InvalidParameterError("need 1 <= Kt <= K, D >= 1, meta_steps >= 1, rounds >= 1")
    if gap < 0:
        raise InvalidParameterError("initial optimality gap must be nonnegative")
    diversity = 0.0 if Kt == K else c.mu_L2(alpha) / (K - 1) * (K / Kt - 1)
    return (4 * gap / (beta * meta_steps * rounds)
            + 4 * beta * HL * (2 * c.sigma_L2(alpha, D, Dq, Dh) + diversity)
            + 16 * alpha ** 2 * c.H ** 2 * c.sigma_G ** 2 / D)


def _grad_at(model, theta, batch):
    return loss_and_grad(model, theta, batch)[1]


def _hvp_at(model, theta, batch, v):
    return autodiff.hvp(lambda t: model.loss(t, batch), np.asarray(theta, dtype=float), v)


def estimate_constants(model, shards, probes: int = 4, seed: int = 0, theta0=None, radius: float = 1.0,
                       max_samples: int = 16) -> AssumptionConstants:
    """Empirical stand-ins for the smoothness and variance constants.

    Parameters are probed around ``theta0``; each quantity takes the
    observed maximum (Lipschitz-type constants) or average (variances).
    Hessian terms are measured along random unit directions, so these are
    estimates and not guaranteed bounds.
    """
    if probes < 2:
        raise InvalidParameterError("need at least two probes")
    if not shards:
        raise InvalidParameterError("no shards")
    datas = [s.all_data() for s in shards]
    if any(len(d) < 2 for d in datas):
        raise InsufficientDataError("every shard needs at least two samples")
    rng = stream(seed, "estimate-constants")
    theta0 = model.init(rng) if theta0 is None else np.asarray(theta0, dtype=float)
    pts = [theta0 + radius * rng.normal(0, 1, theta0.size) / math.sqrt(theta0.size) for _ in range(probes)]

    H = Phi = lam = sG = sH = mG = mH = 0.0
    for i, th in enumerate(pts):
        v = rng.normal(0, 1, th.size)
        v /= np.linalg.norm(v)
        grads, hv = [], []
        for data in datas:
            g = _grad_at(model, th, data)
            h = _hvp_at(model, th, data, v)
            grads.append(g)
            hv.append(h)
            Phi = max(Phi, float(np.linalg.norm(g)))
            rows = rng.choice(len(data), size=min(max_samples, len(data)), replace=False)
            per_g = [np.sum((_grad_at(model, th, data.take([r])) - g) ** 2) for r in rows]
            per_h = [np.sum((_hvp_at(model, th, data.take([r]), v) - h) ** 2) for r in rows]
            sG = max(sG, float(np.mean(per_g)))
            sH = max(sH, float(np.mean(per_h)))
        G, Hv = np.stack(grads), np.stack(hv)
        mG = max(mG, float(np.mean(np.sum((G - G.mean(0)) ** 2, axis=1))))
        mH = max(mH, float(np.mean(np.sum((Hv - Hv.mean(0)) ** 2, axis=1))))
        for th2 in pts[i + 1:]:
            dist = float(np.linalg.norm(th - th2))
            for data in datas:
                H = max(H, float(np.linalg.norm(_grad_at(model, th, data) - _grad_at(model, th2, data))) / dist)
                lam = max(lam, float(np.linalg.norm(_hvp_at(model, th, data, v) - _hvp_at(model, th2, data, v))) / dist)
    return AssumptionConstants(H, Phi, lam, math.sqrt(sG), math.sqrt(sH), math.sqrt(mG), math.sqrt(mH))


# -- checkpoints ----------------------------------------------------------------

@dataclass
class Checkpoint:
    theta: np.ndarray
    split: int
    meta: dict = field(default_factory=dict)


def save_checkpoint(path, theta, split: int, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps({"version": CHECKPOINT_VERSION, "split": int(split), "meta": meta or {}})
    with open(path, "wb") as fh:
        np.savez(fh, theta=np.asarray(theta, dtype=float), header=np.array(header))
    return path


def load_checkpoint(path) -> Checkpoint:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        theta = data["theta"].copy()
    if header.get("version") != CHECKPOINT_VERSION:
        raise InvalidParameterError(f"unsupported checkpoint version {header.get('version')}")
    return Checkpoint(theta, header["split"], header.get("meta", {}))
