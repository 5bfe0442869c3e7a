"""Joint SU selection, RB matching, transmit power and CPU frequency control.

The round objective ``Psi(a) + rho1 * E + rho2 * T`` splits into a CPU
sub-problem (frequencies only) and a radio sub-problem (RB matching and
power). Both have closed-form solutions once the straggler is fixed, so
each solver enumerates straggler hypotheses and keeps the cheapest.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cost_model import NetworkConfig, PayloadSizes, SUProfile, check_decision, round_cost
from .errors import DegenerateWorkloadError, InvalidParameterError, NumericFailureError

log = logging.getLogger(__name__)

# Relative slack on the power ceiling: chi derived from a p_max transmission
# must map back to a feasible power despite rounding.
FEAS_RTOL = 1e-9


@dataclass(frozen=True)
class ObjectiveWeights:
    rho1: float = 1.0   # 1/J
    rho2: float = 1.0   # 1/s

    def __post_init__(self):
        if not (self.rho1 > 0 and self.rho2 > 0):
            raise InvalidParameterError("rho1 and rho2 must be positive")


@dataclass
class AllocationDecision:
    rb: np.ndarray
    power: np.ndarray
    cpu: np.ndarray
    chi: float = 0.0
    objective: float = math.nan
    history: list = field(default_factory=list)
    warning: str | None = None

    @property
    def selected(self) -> np.ndarray:
        return np.asarray(self.rb).sum(axis=1) > 0

    @property
    def num_selected(self) -> int:
        return int(self.selected.sum())

    def assignment(self) -> dict[int, int]:
        """Map from SU row index to its RB index."""
        rows, cols = np.nonzero(np.asarray(self.rb))
        return {int(k): int(n) for k, n in zip(rows, cols)}

    def to_dict(self) -> dict:
        return {
            "rb": np.asarray(self.rb).astype(int).tolist(),
            "power_w": [float(x) for x in self.power],
            "cpu_hz": [float(x) for x in self.cpu],
            "chi_s": float(self.chi),
            "objective": float(self.objective),
            "history": [float(x) for x in self.history],
            "warning": self.warning,
        }


@dataclass(frozen=True)
class SolverConstants:
    """Scalars of the closed-form sub-solutions, kept for inspection."""
    b1: float = math.nan
    b2: float = math.nan
    c1: float = math.nan
    c2: float = math.nan
    v: np.ndarray | None = None


def _arrays(sus):
    cycles = np.array([s.cycles for s in sus], dtype=float)
    cap = np.array([s.capacitance for s in sus], dtype=float)
    fmax = np.array([s.cpu_max for s in sus], dtype=float)
    return cycles, cap, fmax


def empty_decision(K: int, R: int, cpu=None) -> AllocationDecision:
    return AllocationDecision(
        rb=np.zeros((K, R), dtype=np.int8),
        power=np.zeros(K),
        cpu=np.zeros(K) if cpu is None else np.asarray(cpu, dtype=float),
    )


# -- CPU frequency sub-problem ------------------------------------------------

def sp1_objective(f, sus, w: ObjectiveWeights) -> float:
    cycles, cap, _ = _arrays(sus)
    f = np.asarray(f, dtype=float)
    return float(w.rho1 * np.sum(cap * cycles * f ** 2) + w.rho2 * np.max(cycles / f))


def sp1_constants(sus, straggler: int, w: ObjectiveWeights) -> SolverConstants:
    cycles, cap, _ = _arrays(sus)
    cl = cycles[straggler]
    return SolverConstants(b1=w.rho2 * cl, b2=2.0 * w.rho1 * float(np.sum(cap * cycles ** 3)) / cl ** 2)


def solve_sp1(sus, w: ObjectiveWeights) -> np.ndarray:
    if not sus:
        raise InvalidParameterError("solve_sp1 needs at least one SU")
    cycles, cap, fmax = _arrays(sus)
    if np.any(cycles <= 0):
        bad = [s.id for s, c in zip(sus, cycles) if c <= 0]
        raise DegenerateWorkloadError(f"zero per-step workload for SUs {bad}")
    freqs, objective = kernels.sp1_candidates(cycles, cap, fmax, w.rho1, w.rho2)
    best = int(np.argmin(objective))  # first index wins ties
    return np.minimum(freqs[best], fmax)


# -- transmit power given the transmission time --------------------------------

def required_snr(chi: float, cfg: NetworkConfig, sizes: PayloadSizes) -> float:
    """SNR at which the uplink payload takes exactly ``chi`` seconds."""
    return 2.0 ** (sizes.uplink_bits / (cfg.rb_bandwidth * chi)) - 1.0


def power_given_chi(su: SUProfile, rb: int, chi: float, cfg: NetworkConfig,
                    sizes: PayloadSizes, w: ObjectiveWeights | None = None) -> tuple[float, bool]:
    """Smallest power meeting the transmission time ``chi`` on RB ``rb``.

    Returns ``(power, feasible)``; ``feasible`` is False when that power
    exceeds ``su.power_max`` (the power is still reported).
    """
    if not chi > 0:
        raise InvalidParameterError("chi must be positive")
    noise = cfg.uplink_noise()[rb]
    p = noise * required_snr(chi, cfg, sizes) / su.channel_gain
    if p <= su.power_max * (1 + FEAS_RTOL):
        return float(min(p, su.power_max)), True
    return float(p), False


# -- RB matching ---------------------------------------------------------------

def matching_weights(deltas, chi, sus, cfg: NetworkConfig, sizes: PayloadSizes,
                     w: ObjectiveWeights) -> tuple[np.ndarray, np.ndarray]:
    """Edge weights ``delta_k - v_kn`` and the feasibility mask."""
    deltas = np.asarray(deltas, dtype=float)
    gain = np.array([s.channel_gain for s in sus])
    pmax = np.array([s.power_max for s in sus])
    noise = cfg.uplink_noise()
    power = noise[None, :] * required_snr(chi, cfg, sizes) / gain[:, None]
    feasible = power <= pmax[:, None] * (1 + FEAS_RTOL)
    power = np.minimum(power, pmax[:, None])
    v = np.where(feasible, -w.rho1 * chi * power, deltas[:, None] - 1.0)
    return deltas[:, None] - v, feasible


def min_weight_matching(weights: np.ndarray, eligible: np.ndarray | None = None) -> np.ndarray:
    """Minimum-total-weight matching in which rows may stay unmatched.

    Only edges with strictly negative weight (and ``eligible`` set) can be
    used. The K x R problem becomes a K x (R + K) assignment whose extra
    columns mean "unmatched" at zero cost; unusable edges get a sentinel of
    1e3 times the largest finite magnitude.
    """
    W = np.asarray(weights, dtype=float)
    K, R = W.shape
    usable = W < 0
    if eligible is not None:
        usable &= np.asarray(eligible, dtype=bool)
    a = np.zeros((K, R), dtype=np.int8)
    if K == 0 or not usable.any():
        return a
    finite = np.abs(W[np.isfinite(W)])
    sentinel = 1e3 * max(1.0, float(finite.max()) if finite.size else 1.0)
    cost = np.zeros((K, R + K))
    cost[:, :R] = np.where(usable, W, sentinel)
    col = kernels.linear_assignment(cost)
    for k, n in enumerate(col):
        if n < R and usable[k, n]:
            a[k, n] = 1
    return a


def rb_matching(deltas, chi, sus, cfg: NetworkConfig, sizes: PayloadSizes,
                w: ObjectiveWeights) -> np.ndarray:
    deltas = np.asarray(deltas, dtype=float)
    if deltas.shape != (len(sus),) or not np.all(np.isfinite(deltas)):
        raise InvalidParameterError("deltas must be a finite vector with one entry per SU")
    if not chi > 0:
        raise InvalidParameterError("chi must be positive")
    weights, feasible = matching_weights(deltas, chi, sus, cfg, sizes, w)
    return min_weight_matching(weights, feasible)


# -- transmit power given the RB allocation ------------------------------------

def power_constants(a, sus, cfg: NetworkConfig, w: ObjectiveWeights) -> SolverConstants:
    a = np.asarray(a)
    noise = cfg.uplink_noise()
    rows, cols = np.nonzero(a)
    c1 = float(sum(noise[n] / sus[k].channel_gain for k, n in zip(rows, cols)))
    if c1 > 0:
        exponent = 1.0 + math.sqrt(max(w.rho2 / (w.rho1 * c1), 1.0) - 1.0)
        c2 = math.exp(exponent) if exponent < 709.0 else math.inf  # 2^(x / ln 2) = e^x
    else:
        c2 = math.nan
    return SolverConstants(c1=c1, c2=c2)


def power_bracket(ratio: float, c2: float) -> float:
    """Upper end of the root search: ``c2``, tightened for large ratios.

    For p >= max(ratio, e^2 - 1) the excess (p+1) ln(p+1) - p - ratio is
    already positive, so the bracket stays valid and finite.
    """
    return min(c2, max(ratio, math.e ** 2 - 1.0))


def normalized_power_root(ratio: float, upper: float, tol: float = 1e-12, widen: int = 64) -> float:
    """Zero of ``(p+1) ln(p+1) - p - ratio`` on ``(0, upper]``.

    The bracket is doubled when it fails to contain the sign change.
    """
    hi = upper
    for _ in range(widen):
        root = kernels.bisect_qhat(ratio, hi, tol)
        if not math.isnan(root):
            return root
        hi *= 2.0
    raise NumericFailureError(f"could not bracket the power root (ratio={ratio}, upper={upper})")


def sp2_objective(a, p, deltas, sus, cfg: NetworkConfig, sizes: PayloadSizes,
                  w: ObjectiveWeights) -> float:
    a = np.asarray(a, dtype=float)
    p = np.asarray(p, dtype=float)
    gain = np.array([s.channel_gain for s in sus])
    snr = gain[:, None] * p[:, None] / cfg.uplink_noise()[None, :]
    rate = np.sum(a * cfg.rb_bandwidth * np.log2(1.0 + snr), axis=1)
    sel = a.sum(axis=1) > 0
    if np.any(sel & (rate <= 0)):
        return math.inf
    t = np.where(sel, sizes.uplink_bits / np.where(sel, rate, 1.0), 0.0)
    psi = float(np.sum(a.sum(axis=1) * np.asarray(deltas, dtype=float)))
    return psi + w.rho1 * float(np.sum(p * t)) + w.rho2 * float(np.max(t, initial=0.0))


def power_given_rb(a, sus, w: ObjectiveWeights, cfg: NetworkConfig, sizes: PayloadSizes,
                   deltas=None, tol: float = 1e-12) -> np.ndarray:
    a = np.asarray(a)
    K = len(sus)
    if a.shape != (K, cfg.rb_count):
        raise InvalidParameterError(f"rb matrix has shape {a.shape}, expected {(K, cfg.rb_count)}")
    if np.any(a.sum(axis=1) > 1):
        raise InvalidParameterError("every selected SU must hold exactly one RB")
    p = np.zeros(K)
    rows, cols = np.nonzero(a)
    if rows.size == 0:
        return p
    noise = cfg.uplink_noise()[cols]
    gain = np.array([sus[k].channel_gain for k in rows])
    pmax = np.array([sus[k].power_max for k in rows])
    consts = power_constants(a, sus, cfg, w)
    ratio = w.rho2 / (w.rho1 * consts.c1)
    root = normalized_power_root(ratio, power_bracket(ratio, consts.c2), tol)
    snr_cap = float(np.min(gain * pmax / noise))
    deltas = np.zeros(K) if deltas is None else deltas

    best, best_q = None, math.inf
    for i in range(rows.size):
        # straggler i sets the common SNR; the others match its rate
        snr_l = min(snr_cap, root)
        p_l = snr_l * noise[i] / gain[i]
        cand = np.zeros(K)
        cand[rows] = np.minimum(noise * gain[i] / (noise[i] * gain) * p_l, pmax)
        q = sp2_objective(a, cand, deltas, sus, cfg, sizes, w)
        if q < best_q:
            best, best_q = cand, q
    return best


def uplink_time(a, p, sus, cfg: NetworkConfig, sizes: PayloadSizes) -> float:
    """Slowest uplink (semantic data plus model) among selected SUs."""
    a = np.asarray(a, dtype=float)
    gain = np.array([s.channel_gain for s in sus])
    snr = gain[:, None] * np.asarray(p)[:, None] / cfg.uplink_noise()[None, :]
    rate = np.sum(a * cfg.rb_bandwidth * np.log2(1.0 + snr), axis=1)
    sel = a.sum(axis=1) > 0
    if not sel.any():
        return 0.0
    return float(np.max(sizes.uplink_bits / rate[sel]))


# -- objective of the full problem ---------------------------------------------

def selection_divergence_objective(a, deltas) -> float:
    a = np.asarray(a, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    if a.ndim != 2 or a.shape[0] != deltas.shape[0]:
        raise InvalidParameterError(f"shape mismatch: a {a.shape}, deltas {deltas.shape}")
    return float(np.sum(a * deltas[:, None]))


def total_objective(decision: AllocationDecision, sus, deltas, cfg: NetworkConfig,
                    sizes: PayloadSizes, w: ObjectiveWeights, include_bs: bool = False) -> float:
    cost = round_cost(decision, sus, cfg, sizes, include_bs=include_bs)
    return (selection_divergence_objective(decision.rb, deltas)
            + w.rho1 * cost.total_energy + w.rho2 * cost.total_latency)


# -- joint algorithm -----------------------------------------------------------

def initial_chi(sus, cfg: NetworkConfig, sizes: PayloadSizes) -> float:
    """Slowest uplink when every SU sends at p_max on its quietest RB.

    RB conflicts are ignored on purpose: every SU must be feasible at the
    starting transmission time, otherwise it could never be matched.
    """
    best_noise = float(np.min(cfg.uplink_noise()))
    times = [sizes.uplink_bits / (cfg.rb_bandwidth * math.log2(1.0 + s.channel_gain * s.power_max / best_noise))
             for s in sus]
    return float(max(times))


def joint_optimize(sus, deltas, cfg: NetworkConfig, sizes: PayloadSizes, w: ObjectiveWeights,
                   tol: float = 1e-4, max_iter: int = 50) -> AllocationDecision:
    if not tol > 0 or max_iter < 1:
        raise InvalidParameterError("need tol > 0 and max_iter >= 1")
    deltas = np.asarray(deltas, dtype=float)
    K, R = len(sus), cfg.rb_count
    f = solve_sp1(sus, w)

    chi = initial_chi(sus, cfg, sizes)

    best: AllocationDecision | None = None
    history = []
    for _ in range(max_iter):
        a = rb_matching(deltas, chi, sus, cfg, sizes, w)
        if not a.any():
            break
        p = power_given_rb(a, sus, w, cfg, sizes, deltas)
        cand = AllocationDecision(rb=a, power=p, cpu=f.copy(), chi=chi)
        cand.objective = total_objective(cand, sus, deltas, cfg, sizes, w)
        history.append(cand.objective)
        if best is None or cand.objective < best.objective:
            best = cand
        new_chi = uplink_time(a, p, sus, cfg, sizes)
        done = abs(new_chi - chi) < tol * chi
        chi = new_chi
        if done:
            break

    if best is None:
        log.warning("no feasible SU-RB pair; returning the empty selection")
        best = empty_decision(K, R, cpu=f)
        best.objective = total_objective(best, sus, deltas, cfg, sizes, w)
        best.warning = "no-feasible-pair"
        history.append(best.objective)
    best.history = history
    check_decision(best, sus, cfg)
    return best
