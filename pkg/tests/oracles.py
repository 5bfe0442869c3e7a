"""Independent brute-force oracles shared by the unit and acceptance tests."""
import numpy as np

from conftest import partial_matchings


def sp1_grid_min(sus, w, n=50):
    fmax = [s.cpu_max for s in sus]
    axes = [np.linspace(fm / n, fm, n) for fm in fmax]
    F = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(sus))
    c = np.array([s.cycles for s in sus])
    cap = np.array([s.capacitance for s in sus])
    q = w.rho1 * (cap * c * F ** 2).sum(axis=1) + w.rho2 * (c / F).max(axis=1)
    return q.min()


def sp2_grid(a, P, deltas, sus, cfg, sizes, w):
    """Q2 for every power row of P (independent vectorized evaluation)."""
    a = np.asarray(a, dtype=float)
    g = np.array([s.channel_gain for s in sus])
    noise = (a * cfg.uplink_noise()).sum(axis=1)
    sel = a.sum(axis=1) > 0
    rate = np.where(sel, cfg.rb_bandwidth * np.log2(1 + g * P / np.where(sel, noise, 1.0)), np.inf)
    t = np.where(sel, sizes.uplink_bits / rate, 0.0)
    return float(np.dot(a.sum(1), deltas)) + w.rho1 * (P * t).sum(1) + w.rho2 * t.max(1)


def brute_matching_value(W, usable):
    K, R = W.shape
    best = 0.0
    for m in partial_matchings(K, R):
        if all(usable[k, n] for k, n in m):
            best = min(best, sum(W[k, n] for k, n in m))
    return best
