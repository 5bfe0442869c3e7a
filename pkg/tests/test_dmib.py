import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semfml import autodiff as ad
from semfml.autodiff import Tensor
from semfml.dmib import (GaussianPosterior, IBWeights, ImportanceProfile, MonotonePsiNet, adaptive_encode,
                         c_vdmib_loss, fuse, gaussian_kl, importance_profile, kl_per_sample, reparameterize,
                         s_vdmib_loss, transmitted, u_vdmib_loss)
from semfml.errors import InvalidParameterError


def naive_kl(mu, var):
    return sum(0.5 * (m * m + v - math.log(v) - 1) for m, v in zip(mu, var))


def test_kl_trivial_values():
    assert gaussian_kl(GaussianPosterior(np.zeros(3), np.ones(3))) == 0.0
    assert gaussian_kl(GaussianPosterior(np.ones(1), np.ones(1))) == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 31))
def test_kl_nonnegative(d, seed):
    rng = np.random.default_rng(seed)
    post = GaussianPosterior(rng.normal(size=d), rng.uniform(0.05, 4, d))
    kl = gaussian_kl(post)
    assert kl >= 0 and kl == pytest.approx(naive_kl(post.mean, post.var))


def test_kl_monte_carlo():
    rng = np.random.default_rng(0)
    mu, var = np.array([0.8, -0.5, 0.3]), np.array([0.5, 1.7, 0.9])
    z = mu + np.sqrt(var) * rng.standard_normal((1_000_000, 3))
    log_q = -0.5 * np.sum((z - mu) ** 2 / var + np.log(2 * np.pi * var), axis=1)
    log_p = -0.5 * np.sum(z ** 2 + np.log(2 * np.pi), axis=1)
    kl = gaussian_kl(GaussianPosterior(mu, var))
    assert np.mean(log_q - log_p) == pytest.approx(kl, rel=0.01)


def test_posterior_validation():
    with pytest.raises(InvalidParameterError):
        GaussianPosterior(np.zeros(2), np.array([1.0, 0.0]))
    with pytest.raises(InvalidParameterError):
        GaussianPosterior(np.zeros(2), np.ones(3))
    with pytest.raises(InvalidParameterError):
        gaussian_kl(GaussianPosterior(np.zeros((2, 2)), np.ones((2, 2))))
    post = GaussianPosterior.from_logvar(np.zeros(2), np.log([2.0, 3.0]))
    np.testing.assert_allclose(post.var, [2.0, 3.0])
    assert post.dim == 2
    with pytest.raises(InvalidParameterError):
        IBWeights(zeta=-1)


def test_reparameterize():
    post = GaussianPosterior(np.array([1.0, -2.0]), np.array([0.5, 2.0]))
    np.testing.assert_array_equal(reparameterize(post, iota=np.zeros(2)), post.mean)
    tiny = GaussianPosterior(post.mean, np.full(2, 1e-20))
    np.testing.assert_allclose(reparameterize(tiny, 3), post.mean, atol=1e-9)
    np.testing.assert_array_equal(reparameterize(post, 5), reparameterize(post, 5))
    z = reparameterize(GaussianPosterior(np.zeros((200_000, 1)), np.full((200_000, 1), 4.0)), 1)
    assert np.var(z) == pytest.approx(4.0, rel=0.02)


def _fixture(seed=0, B=4, dims=(3, 2)):
    rng = np.random.default_rng(seed)
    posts = [GaussianPosterior(rng.normal(size=(B, d)), rng.uniform(0.2, 2, (B, d))) for d in dims]
    lls = [-rng.uniform(0.1, 2, B) for _ in dims]
    fused = GaussianPosterior(rng.normal(size=(B, sum(dims))), rng.uniform(0.2, 2, (B, sum(dims))))
    fll = -rng.uniform(0.1, 2, B)
    return posts, lls, fused, fll


def test_u_loss_naive_loop():
    posts, lls, _, _ = _fixture()
    zeta = 0.3
    total = 0.0
    for i in range(4):
        for post, ll in zip(posts, lls):
            total += zeta * naive_kl(post.mean[i], post.var[i]) - ll[i]
    assert u_vdmib_loss(posts, lls, zeta) == pytest.approx(total / 4, rel=1e-13)
    assert u_vdmib_loss(posts, lls, 0.0) == pytest.approx(-np.mean(lls[0] + lls[1]))
    zero = [np.zeros(4), np.zeros(4)]
    kl_sum = np.mean([kl_per_sample(p).data for p in posts], axis=1).sum()
    assert u_vdmib_loss(posts, zero, 2.0) == pytest.approx(2.0 * kl_sum)


def test_s_loss_cases():
    _, _, fused, fll = _fixture(1)
    zeta = 0.7
    ref = np.mean([zeta * naive_kl(fused.mean[i], fused.var[i]) - fll[i] for i in range(4)])
    assert s_vdmib_loss(fused, fll, zeta) == pytest.approx(ref, rel=1e-13)
    assert s_vdmib_loss(fused, fll, 0.0) == pytest.approx(-fll.mean())
    std = GaussianPosterior(np.zeros((4, 5)), np.ones((4, 5)))
    assert s_vdmib_loss(std, fll, 3.0) == pytest.approx(-fll.mean())


def test_c_loss_additivity_and_loop():
    posts, lls, fused, fll = _fixture(2)
    for zeta in (0.0, 0.05, 1.0):
        c = c_vdmib_loss(posts, lls, fused, fll, zeta)
        assert c == pytest.approx(u_vdmib_loss(posts, lls, zeta) + s_vdmib_loss(fused, fll, zeta), rel=1e-13)
    assert c_vdmib_loss(posts, lls, fused, fll, 0.0) == pytest.approx(-np.mean(fll + lls[0] + lls[1]))
    values = [c_vdmib_loss(posts, lls, fused, fll, z) for z in np.linspace(0, 5, 11)]
    assert np.all(np.diff(values) >= 0)


def test_loss_shape_errors():
    posts, lls, fused, fll = _fixture(3)
    with pytest.raises(InvalidParameterError):
        u_vdmib_loss(posts, lls[:1], 0.1)
    with pytest.raises(InvalidParameterError):
        u_vdmib_loss(posts, [lls[0], lls[1][:3]], 0.1)
    with pytest.raises(InvalidParameterError):
        c_vdmib_loss(posts, lls, fused, fll[:2], 0.1)


def test_loss_gradients_finite_difference():
    """Gradients of the confluent loss w.r.t. means, variances and decoder weights."""
    rng = np.random.default_rng(4)
    B, dims, classes = 5, (2, 3), 3
    y = rng.integers(0, classes, B)
    iotas = [rng.standard_normal((B, d)) for d in dims]
    sizes = [B * d for d in dims]

    def unpack(theta):
        out, pos = [], 0
        for d, n in zip(dims, sizes):
            m = theta[pos:pos + n].reshape(B, d)
            lv = theta[pos + n:pos + 2 * n].reshape(B, d)
            out.append((m, lv))
            pos += 2 * n
        W = theta[pos:].reshape(sum(dims), classes)
        return out, W

    def loss(theta):
        parts, W = unpack(theta)
        posts = [GaussianPosterior(m, lv.exp()) for m, lv in parts]
        codes = [reparameterize(p, iota=i) for p, i in zip(posts, iotas)]
        lls = []
        for k, z in enumerate(codes):
            Wk = W[sum(dims[:k]):sum(dims[:k + 1])]
            lp = ad.log_softmax(z @ Wk, axis=1)
            lls.append((lp * Tensor(np.eye(classes)[y])).sum(axis=1))
        s = fuse(codes)
        fused = GaussianPosterior(fuse([p.mean for p in posts]), fuse([p.var for p in posts]))
        fll = (ad.log_softmax(s @ W, axis=1) * Tensor(np.eye(classes)[y])).sum(axis=1)
        return c_vdmib_loss(posts, lls, fused, fll, 0.2)

    theta = rng.normal(0, 0.5, 2 * sum(sizes) + sum(dims) * classes)
    _, g = ad.value_and_grad(loss, theta)
    h = 1e-6
    fd = np.array([(float(loss(Tensor(theta + h * e))) - float(loss(Tensor(theta - h * e)))) / (2 * h)
                   for e in np.eye(theta.size)])
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-4


def test_tensor_losses_return_tensors():
    m = Tensor(np.zeros((2, 2)), requires_grad=True)
    post = GaussianPosterior(m, np.ones((2, 2)))
    out = s_vdmib_loss(post, np.zeros(2), 1.0)
    assert isinstance(out, Tensor) and out.item() == 0.0


# -- adaptive transmission

def test_profile_degenerate_and_suffix_sums():
    p = importance_profile(0.1, np.zeros(4))
    assert np.all(p.phi == 0) and p.active_dims == 0
    assert importance_profile(0.1, np.zeros(4), phi_th=0.0).active_dims == 4
    p = importance_profile(0.1, np.ones(4), phi_th=2.5)
    np.testing.assert_array_equal(p.phi, [4, 3, 2, 1])
    assert p.active_dims == 2 and p.dim == 4
    with pytest.raises(InvalidParameterError):
        importance_profile(0.1, np.ones(4), d=3)
    with pytest.raises(InvalidParameterError):
        importance_profile(0.1, -np.ones(2))


def test_psi_net_monotone_grid():
    rng = np.random.default_rng(0)
    grid = np.logspace(-3, 2, 20)
    for _ in range(100):
        net = MonotonePsiNet.random(rng, 6)
        profiles = [importance_profile(s, net, d=6, phi_th=1.0) for s in grid]
        phi = np.array([p.phi for p in profiles])
        assert np.all(np.diff(phi, axis=1) <= 0)
        assert np.all(np.diff(phi, axis=0) >= -1e-12)
        assert np.all(np.diff([p.active_dims for p in profiles]) >= 0)
    with pytest.raises(InvalidParameterError):
        net(-1.0)


def test_payload_nonincreasing_in_snr():
    net = MonotonePsiNet.random(np.random.default_rng(1), 10, scale=0.5)
    snrs = np.linspace(-10, 30, 21)
    sent = [importance_profile(10 ** (-s / 10), net, phi_th=3.0).active_dims for s in snrs]
    assert np.all(np.diff(sent) <= 0)


def test_adaptive_encode_hand_values():
    W = np.array([[3.0, 4.0], [0.0, 2.0], [1.0, 0.0]])
    prof = ImportanceProfile(np.array([0.5, 1.0, 2.0]), np.array([3.5, 3.0, 2.0]), 2)
    x = np.array([1.0, -1.0])
    z = adaptive_encode(x, W, prof)
    expected = [math.tanh((3 - 4) / 5 * 3.5), math.tanh(-1.0 * 3.0), math.tanh(1.0 * 2.0)]
    np.testing.assert_allclose(z, expected, rtol=1e-15)
    np.testing.assert_array_equal(transmitted(z, prof), z[:2])


def test_adaptive_encode_limits_and_errors():
    W = np.eye(2)
    big = ImportanceProfile(np.zeros(2), np.array([1e6, 0.0]), 1)
    z = adaptive_encode(np.array([0.3, 0.7]), W, big)
    assert z[0] == pytest.approx(1.0) and z[1] == 0.0
    with pytest.raises(InvalidParameterError, match="degenerate-row"):
        adaptive_encode(np.ones(2), np.array([[1.0, 0.0], [0.0, 0.0]]), big)
    with pytest.raises(InvalidParameterError):
        adaptive_encode(np.ones(2), np.eye(3, 2), big)
