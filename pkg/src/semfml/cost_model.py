"""Closed-form latency and energy model of one training round.

A round consists of model broadcast (MB), SU-side and BS-side computation,
semantic data uplink (ISDT), activation-gradient downlink (IAGT) and the
final model upload (MTA). The outer learning stage mirrors the inner one
with identical payloads and workloads, so each term appears once in the
round totals. All quantities are SI: Hz, W, W/Hz, s, J, bits.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolationError, InvalidParameterError


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * np.log10(watts) + 30.0


@dataclass(frozen=True)
class NetworkConfig:
    rb_count: int
    rb_bandwidth: float            # W^U, Hz
    downlink_bandwidth: float      # W^D, Hz
    noise_psd: float               # N0, W/Hz (linear)
    bs_power: float                # p_B, W
    bs_cpu: float                  # f_B, Hz
    bs_intensity: float            # kappa_B, cycles/FLOP
    bs_capacitance: float          # varsigma_B
    bs_workload: float             # gamma_B, FLOPs/sample
    uplink_interference: tuple = ()   # I_n per RB, W
    downlink_interference: float = 0.0  # I^D, W

    def __post_init__(self):
        if int(self.rb_count) != self.rb_count or self.rb_count < 1:
            raise InvalidParameterError("rb_count must be a positive integer")
        for name in ("rb_bandwidth", "downlink_bandwidth", "noise_psd", "bs_power", "bs_cpu",
                     "bs_intensity", "bs_capacitance", "bs_workload"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        interference = tuple(float(x) for x in self.uplink_interference) or (0.0,) * self.rb_count
        if len(interference) != self.rb_count:
            raise InvalidParameterError(
                f"uplink_interference has {len(interference)} entries, expected rb_count={self.rb_count}")
        if any(not x >= 0 for x in interference):
            raise InvalidParameterError("uplink_interference must be >= 0")
        if not self.downlink_interference >= 0:
            raise InvalidParameterError("downlink_interference must be >= 0")
        object.__setattr__(self, "uplink_interference", interference)

    @property
    def interference(self) -> np.ndarray:
        return np.asarray(self.uplink_interference)

    def uplink_noise(self) -> np.ndarray:
        """``I_n + W^U N0`` for every RB."""
        return self.interference + self.rb_bandwidth * self.noise_psd


@dataclass(frozen=True)
class SUProfile:
    id: int
    channel_gain: float     # h_k, power gain
    cpu_max: float          # f_k^max, Hz
    power_max: float        # p_k^max, W
    capacitance: float      # varsigma_k
    intensity: float        # kappa_k, cycles/FLOP
    workload: float         # gamma_k, FLOPs/sample
    batch: int = 1          # D_k
    dataset_size: int = 1

    def __post_init__(self):
        if not self.cpu_max > 0:
            raise InvalidParameterError(f"SU {self.id}: cpu_max must be > 0")
        if not self.power_max > 0:
            raise InvalidParameterError(f"SU {self.id}: power_max must be > 0")
        if not self.channel_gain > 0:
            raise InvalidParameterError(f"SU {self.id}: channel_gain must be > 0")
        if self.batch < 1:
            raise InvalidParameterError(f"SU {self.id}: batch must be >= 1")
        if self.capacitance < 0 or self.intensity < 0 or self.workload < 0:
            raise InvalidParameterError(f"SU {self.id}: compute coefficients must be >= 0")

    @property
    def cycles(self) -> float:
        """CPU cycles of one local step, ``kappa * gamma * D``."""
        return self.intensity * self.workload * self.batch


@dataclass(frozen=True)
class PayloadSizes:
    model_bits: float           # xi_M
    semantic_data_bits: float   # xi_d
    activation_grad_bits: float  # xi_g

    def __post_init__(self):
        for name in ("model_bits", "semantic_data_bits", "activation_grad_bits"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0")

    @property
    def uplink_bits(self) -> float:
        return self.semantic_data_bits + self.model_bits


STAGES = ("MB", "SU-compute", "BS-compute", "ISDT", "IAGT", "MTA")


@dataclass
class RoundCost:
    latency: dict = field(default_factory=dict)
    energy: dict = field(default_factory=dict)
    total_latency: float = 0.0
    total_energy: float = 0.0


def uplink_rate(su: SUProfile, rb_assignment, power: float, cfg: NetworkConfig) -> float:
    a = np.asarray(rb_assignment, dtype=float).reshape(-1)
    if a.size != cfg.rb_count:
        raise InvalidParameterError(f"rb_assignment has length {a.size}, expected {cfg.rb_count}")
    if a.sum() > 1:
        raise ConstraintViolationError("rb-per-su", f"SU {su.id} holds {int(a.sum())} RBs")
    if power < 0 or power > su.power_max:
        raise ConstraintViolationError("power-bounds", f"SU {su.id}: p={power} outside [0, {su.power_max}]")
    snr = su.channel_gain * power / cfg.uplink_noise()
    return float(np.sum(a * cfg.rb_bandwidth * np.log2(1.0 + snr)))


def downlink_rate(su: SUProfile, cfg: NetworkConfig) -> float:
    noise = cfg.downlink_interference + cfg.downlink_bandwidth * cfg.noise_psd
    return float(cfg.downlink_bandwidth * np.log2(1.0 + su.channel_gain * cfg.bs_power / noise))


def compute_cost(su: SUProfile, freq: float, meta_steps: int = 1) -> tuple[float, float]:
    if freq == 0:
        raise InvalidParameterError(f"SU {su.id}: CPU frequency is zero")
    if freq < 0 or freq > su.cpu_max * (1 + 1e-12):
        raise ConstraintViolationError("cpu-bounds", f"SU {su.id}: f={freq} outside (0, {su.cpu_max}]")
    cycles = meta_steps * su.cycles
    return cycles / freq, su.capacitance * cycles * freq ** 2


def check_decision(decision, sus, cfg: NetworkConfig) -> None:
    """Raise ConstraintViolationError unless the decision is feasible."""
    a = np.asarray(decision.rb)
    K = len(sus)
    if a.shape != (K, cfg.rb_count):
        raise ConstraintViolationError("shape", f"rb matrix has shape {a.shape}, expected {(K, cfg.rb_count)}")
    if not np.all((a == 0) | (a == 1)):
        raise ConstraintViolationError("binary-rb", "rb entries must be 0 or 1")
    if np.any(a.sum(axis=1) > 1):
        raise ConstraintViolationError("rb-per-su", "an SU holds more than one RB")
    if np.any(a.sum(axis=0) > 1):
        raise ConstraintViolationError("su-per-rb", "an RB is shared by several SUs")
    p = np.asarray(decision.power, dtype=float)
    f = np.asarray(decision.cpu, dtype=float)
    pmax = np.array([s.power_max for s in sus])
    fmax = np.array([s.cpu_max for s in sus])
    if np.any(p < 0) or np.any(p > pmax * (1 + 1e-12)):
        raise ConstraintViolationError("power-bounds", "transmit power outside [0, p_max]")
    if np.any(f < 0) or np.any(f > fmax * (1 + 1e-12)):
        raise ConstraintViolationError("cpu-bounds", "CPU frequency outside [0, f_max]")
    if np.any((a.sum(axis=1) == 0) & (p != 0)):
        raise ConstraintViolationError("power-without-rb", "an SU without an RB has non-zero power")


def round_cost(decision, sus, cfg: NetworkConfig, sizes: PayloadSizes, *,
               meta_steps: int = 1, include_bs: bool = True) -> RoundCost:
    """Per-stage and total latency/energy for one round.

    Every SU in ``sus`` computes; only SUs holding an RB upload. With
    ``include_bs=False`` the BS compute and downlink terms are zeroed, which
    is the simplification the allocator optimizes against.
    """
    check_decision(decision, sus, cfg)
    a = np.asarray(decision.rb, dtype=float)
    p = np.asarray(decision.power, dtype=float)
    f = np.asarray(decision.cpu, dtype=float)
    K = len(sus)
    if K == 0:
        return RoundCost({s: 0.0 for s in STAGES}, {s: 0.0 for s in STAGES})

    cycles = np.array([meta_steps * s.cycles for s in sus])
    cap = np.array([s.capacitance for s in sus])
    gain = np.array([s.channel_gain for s in sus])
    if np.any(f <= 0):
        raise ConstraintViolationError("cpu-bounds", "every computing SU needs f > 0")
    t_cp = cycles / f
    e_cp = cap * cycles * f ** 2

    selected = a.sum(axis=1) > 0
    snr = gain[:, None] * p[:, None] / cfg.uplink_noise()[None, :]
    rate_up = np.sum(a * cfg.rb_bandwidth * np.log2(1.0 + snr), axis=1)
    if np.any(selected & (rate_up <= 0)):
        raise ConstraintViolationError("zero-rate", "a selected SU has zero uplink rate")
    safe = np.where(selected, rate_up, 1.0)
    t_co = np.where(selected, sizes.semantic_data_bits / safe, 0.0)
    t_up = np.where(selected, sizes.model_bits / safe, 0.0)
    e_co = p * t_co
    e_up = p * t_up

    if include_bs:
        rate_dn = np.array([downlink_rate(s, cfg) for s in sus])
        t_mb = sizes.model_bits / rate_dn
        t_iagt = sizes.activation_grad_bits / rate_dn
        t_bs = meta_steps * cfg.bs_intensity * cfg.bs_workload * sum(s.batch for s in sus) / cfg.bs_cpu
        e_bs = (meta_steps * cfg.bs_capacitance * cfg.bs_intensity * cfg.bs_workload
                * sum(s.batch for s in sus) * cfg.bs_cpu ** 2)
        e_mb = cfg.bs_power * float(np.max(t_mb))
        e_iagt = cfg.bs_power * float(np.sum(t_iagt))
    else:
        t_mb = t_iagt = np.zeros(K)
        t_bs = e_bs = e_mb = e_iagt = 0.0

    first = float(np.max(t_cp + t_iagt + t_mb))
    upload = float(np.max(t_co + t_up))
    total_t = first + t_bs + upload
    total_e = float(np.sum(e_cp + e_co + e_up)) + e_mb + e_bs + e_iagt

    latency = {
        "MB": float(np.max(t_mb)),
        "SU-compute": float(np.max(t_cp)),
        "BS-compute": float(t_bs),
        "ISDT": float(np.max(t_co)),
        "IAGT": float(np.max(t_iagt)),
        "MTA": float(np.max(t_up)),
    }
    energy = {
        "MB": e_mb,
        "SU-compute": float(np.sum(e_cp)),
        "BS-compute": float(e_bs),
        "ISDT": float(np.sum(e_co)),
        "IAGT": e_iagt,
        "MTA": float(np.sum(e_up)),
    }
    return RoundCost(latency, energy, total_t, total_e)
