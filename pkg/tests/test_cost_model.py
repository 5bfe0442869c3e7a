import math

import numpy as np
import pytest

from semfml.allocator import AllocationDecision
from semfml.cost_model import (NetworkConfig, PayloadSizes, compute_cost, dbm_to_watts, downlink_rate,
                               round_cost, uplink_rate, watts_to_dbm)
from semfml.errors import ConstraintViolationError, InvalidParameterError

from conftest import make_su


def unit_net(R=2, **kw):
    base = dict(rb_count=R, rb_bandwidth=1e6, downlink_bandwidth=2e7, noise_psd=1e-20, bs_power=1.0,
                bs_cpu=1e10, bs_intensity=1 / 16, bs_capacitance=1e-28, bs_workload=1e6)
    base.update(kw)
    return NetworkConfig(**base)


def test_dbm_roundtrip():
    assert dbm_to_watts(30) == pytest.approx(1.0)
    assert dbm_to_watts(-174) == pytest.approx(3.981071705534986e-21)
    assert watts_to_dbm(dbm_to_watts(-12.5)) == pytest.approx(-12.5)


def test_network_validation():
    with pytest.raises(InvalidParameterError):
        unit_net(rb_bandwidth=0)
    with pytest.raises(InvalidParameterError):
        unit_net(uplink_interference=(0.0,))
    with pytest.raises(InvalidParameterError):
        unit_net(rb_count=0)
    assert unit_net(uplink_interference=(1e-14, 0)).uplink_noise()[0] == pytest.approx(1e-14 + 1e-14)


def test_uplink_rate_trivial_cases():
    net = unit_net()
    su = make_su(channel_gain=1e-10)
    assert uplink_rate(su, [0, 0], 0.1, net) == 0.0
    assert uplink_rate(su, [1, 0], 0.0, net) == 0.0
    p = net.uplink_noise()[0] / su.channel_gain
    assert uplink_rate(su, [1, 0], p, net) == pytest.approx(1e6)
    with pytest.raises(ConstraintViolationError, match="rb-per-su"):
        uplink_rate(su, [1, 1], 0.1, net)
    with pytest.raises(ConstraintViolationError, match="power-bounds"):
        uplink_rate(su, [1, 0], 1.0, net)


def test_uplink_rate_uses_rb_interference():
    net = unit_net(uplink_interference=(0.0, 1e-13))
    su = make_su(channel_gain=1e-10)
    assert uplink_rate(su, [1, 0], 0.1, net) > uplink_rate(su, [0, 1], 0.1, net)


def test_downlink_rate():
    net = unit_net()
    su = make_su(channel_gain=net.downlink_bandwidth * net.noise_psd / net.bs_power)
    assert downlink_rate(su, net) == pytest.approx(2e7)
    assert downlink_rate(su, unit_net(bs_power=2.0)) > downlink_rate(su, net)


def test_downlink_rate_regression(net):
    su = make_su(channel_gain=1e-10)
    assert downlink_rate(su, net) == pytest.approx(205914075.20075026, rel=1e-12)


def test_compute_cost():
    su = make_su(capacitance=2e-28, intensity=1 / 32, workload=1e6, batch=64)
    t, e = compute_cost(su, 1e9)
    assert t == pytest.approx(2e-3) and e == pytest.approx(4e-4)
    t2, e2 = compute_cost(su, 2e9)
    assert t2 == pytest.approx(t / 2) and e2 == pytest.approx(4 * e)
    t3, e3 = compute_cost(su, 1e9, meta_steps=2)
    assert t3 == pytest.approx(2 * t) and e3 == pytest.approx(2 * e)
    with pytest.raises(InvalidParameterError):
        compute_cost(su, 0.0)
    with pytest.raises(ConstraintViolationError):
        compute_cost(su, 3e9)


def _decision(rb, p, f):
    return AllocationDecision(np.asarray(rb), np.asarray(p, dtype=float), np.asarray(f, dtype=float))


def test_round_cost_unselected_su(sizes):
    net = unit_net()
    su = make_su()
    rc = round_cost(_decision([[0, 0]], [0.0], [1e9]), [su], net, sizes)
    assert rc.latency["ISDT"] == 0 and rc.latency["MTA"] == 0
    assert rc.energy["ISDT"] == 0 and rc.energy["MTA"] == 0
    assert rc.latency["SU-compute"] > 0 and rc.latency["MB"] > 0 and rc.latency["IAGT"] > 0


def test_round_cost_symmetry(sizes):
    net = unit_net()
    sus = [make_su(0), make_su(1)]
    two = round_cost(_decision([[1, 0], [0, 1]], [0.1, 0.1], [1e9, 1e9]), sus, net, sizes)
    one = round_cost(_decision([[1, 0]], [0.1], [1e9]), sus[:1], net, sizes)
    for stage in ("MB", "SU-compute", "ISDT", "IAGT", "MTA"):
        assert two.latency[stage] == pytest.approx(one.latency[stage])


def test_round_cost_hand_summed(sizes):
    """Three SUs with hand-set rates, summed term by term in plain loops."""
    net = unit_net(R=3, uplink_interference=(0.0, 2e-14, 0.0))
    sus = [make_su(0, channel_gain=1e-10), make_su(1, channel_gain=4e-11, capacitance=1e-28),
           make_su(2, channel_gain=2e-11, batch=32)]
    rb = [[0, 1, 0], [1, 0, 0], [0, 0, 0]]
    p, f = [0.1, 0.2, 0.0], [1e9, 1.5e9, 5e8]
    rc = round_cost(_decision(rb, p, f), sus, net, sizes)

    noise_dn = net.downlink_bandwidth * net.noise_psd
    lat_first, lat_up, e_total = 0.0, 0.0, 0.0
    n_samples = 0
    t_mb_max = 0.0
    for k, su in enumerate(sus):
        cycles = su.intensity * su.workload * su.batch
        t_cp = cycles / f[k]
        e_total += su.capacitance * cycles * f[k] ** 2
        r_dn = net.downlink_bandwidth * math.log2(1 + su.channel_gain * net.bs_power / noise_dn)
        t_mb, t_g = sizes.model_bits / r_dn, sizes.activation_grad_bits / r_dn
        t_mb_max = max(t_mb_max, t_mb)
        e_total += net.bs_power * t_g
        lat_first = max(lat_first, t_cp + t_mb + t_g)
        n_samples += su.batch
        for n in range(3):
            if rb[k][n]:
                noise = net.uplink_interference[n] + net.rb_bandwidth * net.noise_psd
                r = net.rb_bandwidth * math.log2(1 + su.channel_gain * p[k] / noise)
                t = (sizes.semantic_data_bits + sizes.model_bits) / r
                lat_up = max(lat_up, t)
                e_total += p[k] * t
    e_total += net.bs_power * t_mb_max
    t_bs = net.bs_intensity * net.bs_workload * n_samples / net.bs_cpu
    e_total += net.bs_capacitance * net.bs_intensity * net.bs_workload * n_samples * net.bs_cpu ** 2
    assert rc.total_latency == pytest.approx(lat_first + t_bs + lat_up, rel=1e-12)
    assert rc.total_energy == pytest.approx(e_total, rel=1e-12)
    assert sum(rc.energy.values()) == pytest.approx(rc.total_energy, rel=1e-12)


def test_round_cost_without_bs_terms(sizes):
    net = unit_net()
    sus = [make_su(0), make_su(1)]
    rc = round_cost(_decision([[1, 0], [0, 0]], [0.1, 0.0], [1e9, 1e9]), sus, net, sizes, include_bs=False)
    assert rc.latency["MB"] == rc.latency["IAGT"] == rc.latency["BS-compute"] == 0
    assert rc.total_latency == pytest.approx(rc.latency["SU-compute"] + rc.latency["ISDT"] + rc.latency["MTA"])


@pytest.mark.parametrize("rb,p,f,name", [
    ([[1, 1], [0, 0]], [0.1, 0], [1e9, 1e9], "rb-per-su"),
    ([[1, 0], [1, 0]], [0.1, 0.1], [1e9, 1e9], "su-per-rb"),
    ([[1, 0], [0, 0]], [0.5, 0], [1e9, 1e9], "power-bounds"),
    ([[1, 0], [0, 0]], [0.1, 0], [1e9, 5e9], "cpu-bounds"),
    ([[1, 0], [0, 0]], [0.1, 0.1], [1e9, 1e9], "power-without-rb"),
    ([[0.5, 0], [0, 0]], [0.1, 0], [1e9, 1e9], "binary-rb"),
    ([[1, 0], [0, 0]], [0.0, 0], [1e9, 1e9], "zero-rate"),
])
def test_round_cost_names_violations(rb, p, f, name, sizes):
    with pytest.raises(ConstraintViolationError) as exc:
        round_cost(_decision(rb, p, f), [make_su(0), make_su(1)], unit_net(), sizes)
    assert exc.value.constraint == name


def test_payload_validation():
    with pytest.raises(InvalidParameterError):
        PayloadSizes(0, 1, 1)
    assert PayloadSizes(3, 2, 1).uplink_bits == 5
