"""Random network instances drawn from the default simulation ranges."""
from __future__ import annotations

import numpy as np

from ..cost_model import NetworkConfig, PayloadSizes, SUProfile, dbm_to_watts
from ..rng import stream

# Uniform draws whose lower end is 0 are floored at this fraction of the
# upper end so that no SU ends up with a zero CPU or zero workload.
RANGE_FLOOR = 0.05


def default_network(rb_count: int = 20, **overrides) -> NetworkConfig:
    kw = dict(
        rb_count=rb_count,
        rb_bandwidth=1e6,
        downlink_bandwidth=20e6,
        noise_psd=dbm_to_watts(-174.0),
        bs_power=1.0,
        bs_cpu=10e9,
        bs_intensity=1 / 16,
        bs_capacitance=1e-28,
        bs_workload=1e6,
    )
    kw.update(overrides)
    return NetworkConfig(**kw)


def default_payload(model_bits: float = 1e6, semantic_data_bits: float = 2e5,
                    activation_grad_bits: float = 2e5) -> PayloadSizes:
    return PayloadSizes(model_bits, semantic_data_bits, activation_grad_bits)


def path_loss_gain(distance_km):
    """Large-scale power gain of the 128.1 + 37.6 log10(d) urban model."""
    return 10.0 ** (-(128.1 + 37.6 * np.log10(distance_km)) / 10.0)


def _floored(rng, lo, hi, size):
    return rng.uniform(max(lo, RANGE_FLOOR * hi), hi, size)


def sample_su_profiles(seed: int, count: int, *, cpu_max_hz=(0.0, 2e9), power_max_w=0.2,
                       capacitance=(0.0, 5e-28), intensity=(0.0, 1 / 32), workload_flops=2e7,
                       batch=64, dataset_size=256, distance_km=(0.05, 0.3),
                       fading=True) -> list[SUProfile]:
    rng = stream(seed, "su-profiles")
    f = _floored(rng, *cpu_max_hz, count)
    cap = _floored(rng, *capacitance, count)
    kap = _floored(rng, *intensity, count)
    dist = rng.uniform(*distance_km, count)
    h = path_loss_gain(dist)
    if fading:
        h = h * rng.exponential(1.0, count)  # |h|^2 of unit Rayleigh fading
    return [
        SUProfile(id=k, channel_gain=float(h[k]), cpu_max=float(f[k]), power_max=power_max_w,
                  capacitance=float(cap[k]), intensity=float(kap[k]), workload=workload_flops,
                  batch=batch, dataset_size=dataset_size)
        for k in range(count)
    ]
