"""Resource-allocation and SU-selection baselines.

Greedy: every SU at its CPU and power ceilings, strongest channels picking
the quietest RBs first. Random: uniform feasible draws of CPU, power and
RB permutation. Either is applied to a given selection mask, which comes
from the joint solver (TASC variants) or from uniform sampling (RUS).
"""
from __future__ import annotations

import numpy as np

from ..allocator import AllocationDecision
from ..cost_model import NetworkConfig
from ..errors import InvalidParameterError


def _check_mask(selected, sus, cfg):
    selected = np.asarray(selected, dtype=bool)
    if selected.shape != (len(sus),):
        raise InvalidParameterError("selection mask needs one entry per SU")
    if selected.sum() > cfg.rb_count:
        raise InvalidParameterError(f"{int(selected.sum())} SUs selected but only {cfg.rb_count} RBs")
    return selected


def greedy_allocation(selected, sus, cfg: NetworkConfig) -> AllocationDecision:
    selected = _check_mask(selected, sus, cfg)
    K, R = len(sus), cfg.rb_count
    a = np.zeros((K, R), dtype=np.int8)
    order = sorted(np.flatnonzero(selected), key=lambda k: (-sus[k].channel_gain, k))
    rbs = sorted(range(R), key=lambda n: (cfg.uplink_noise()[n], n))
    for k, n in zip(order, rbs):
        a[k, n] = 1
    power = np.array([s.power_max for s in sus]) * selected
    cpu = np.array([s.cpu_max for s in sus])
    return AllocationDecision(rb=a, power=power, cpu=cpu)


def random_allocation(selected, sus, cfg: NetworkConfig, rng: np.random.Generator) -> AllocationDecision:
    selected = _check_mask(selected, sus, cfg)
    K, R = len(sus), cfg.rb_count
    a = np.zeros((K, R), dtype=np.int8)
    idx = np.flatnonzero(selected)
    rbs = rng.permutation(R)[: idx.size]
    a[idx, rbs] = 1
    pmax = np.array([s.power_max for s in sus])
    fmax = np.array([s.cpu_max for s in sus])
    # uniform on (0, max]: 1 - U[0, 1) avoids an exact zero
    power = pmax * (1.0 - rng.random(K)) * selected
    cpu = fmax * (1.0 - rng.random(K))
    return AllocationDecision(rb=a, power=power, cpu=cpu)


def random_selection(count: int, budget: int, rng: np.random.Generator) -> np.ndarray:
    mask = np.zeros(count, dtype=bool)
    mask[rng.choice(count, size=min(budget, count), replace=False)] = True
    return mask
