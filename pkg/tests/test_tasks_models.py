import numpy as np
import pytest

from semfml.autodiff import Tensor
from semfml.errors import InsufficientDataError, InvalidParameterError
from semfml.fml import loss_and_grad, split_loss_and_grad
from semfml.models import LinearRegressor, MLPRegressor, QuadraticModel, VIBClassifier
from semfml.tasks import (Batch, TaskShard, classification_shards, overlapping, quadratic_shards,
                          regression_shards, sample_batch)


def test_batch_and_overlap():
    a = Batch(np.zeros((3, 2)), np.zeros(3), np.array([0, 1, 2]))
    b = Batch(np.zeros((2, 2)), np.zeros(2), np.array([3, 4]))
    assert not overlapping(a, b) and overlapping(a, b, a.take([1]))
    with pytest.raises(InvalidParameterError):
        Batch(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(InsufficientDataError):
        TaskShard(0, a, Batch(np.zeros((0, 2)), np.zeros(0)))
    with pytest.raises(InvalidParameterError):
        TaskShard(0, a, a)


def test_sample_batch_excludes_and_is_deterministic():
    data = Batch(np.arange(20.0)[:, None], np.zeros(20), np.arange(20))
    first = sample_batch(data, 5, np.random.default_rng(0))
    again = sample_batch(data, 5, np.random.default_rng(0))
    assert np.array_equal(first.idx, again.idx)
    rest = sample_batch(data, 50, np.random.default_rng(1), exclude=first)
    assert len(rest) == 15 and not overlapping(first, rest)
    with pytest.raises(InsufficientDataError):
        sample_batch(data, 1, np.random.default_rng(0), exclude=data)


@pytest.mark.parametrize("make", [
    lambda: regression_shards(0, 4),
    lambda: quadratic_shards(0, 4),
    lambda: classification_shards(0, 4),
])
def test_shards_are_disjoint_and_reproducible(make):
    shards = make()
    assert not overlapping(*[s.all_data() for s in shards])
    again = make()
    for s, t in zip(shards, again):
        assert np.array_equal(s.support.X, t.support.X)


def test_regression_skew_ranges():
    shards = regression_shards(1, 6, n_support=(10, 30), noise=(0.0, 0.5))
    sizes = {len(s.support) for s in shards}
    assert len(sizes) > 1 and all(10 <= n <= 30 for n in sizes)
    assert all(0 <= s.params["noise"] <= 0.5 for s in shards)


def test_classification_labels_in_range():
    s = classification_shards(2, 3, classes=4)[0]
    assert s.support.X.shape[1] == 12 and set(np.unique(s.support.y)) <= set(range(4))


MODELS = [
    (QuadraticModel(3), lambda: quadratic_shards(0, 1, dim=3)[0]),
    (LinearRegressor(4), lambda: regression_shards(0, 1)[0]),
    (MLPRegressor(4, 5), lambda: regression_shards(0, 1)[0]),
    (VIBClassifier((6, 6), latent=2, classes=3, zeta=0.1), lambda: classification_shards(0, 1)[0]),
]


@pytest.mark.parametrize("model,shard", MODELS, ids=lambda x: type(x).__name__)
def test_model_gradients_and_split_agree(model, shard):
    shard = shard()
    theta = model.init(np.random.default_rng(0))
    assert theta.size == model.dim == model.dim_su + model.dim_bs
    batch = shard.support.take(range(10))
    loss, g = loss_and_grad(model, theta, batch)
    h = 1e-6
    fd = np.array([(model.loss(Tensor(theta + h * e), batch).item() - model.loss(Tensor(theta - h * e), batch).item())
                   / (2 * h) for e in np.eye(theta.size)])
    assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-8)
    loss2, g2, sent = split_loss_and_grad(model, theta, batch)
    assert loss2 == pytest.approx(loss, rel=1e-13) and np.allclose(g2, g, rtol=1e-12, atol=1e-14)
    assert sent > 0


def test_vib_helpers():
    model = VIBClassifier(zeta=0.5)
    shard = classification_shards(0, 1)[0]
    theta = model.init(np.random.default_rng(1))
    assert model.rate_bits(theta, shard.query.X) >= 0
    assert model.distortion(theta, shard.query) > 0
    assert 0 <= model.accuracy(theta, shard.query) <= 1
    posts = model.posteriors(theta[: model.dim_su], shard.query.X)
    assert len(posts) == 2 and all(np.all(np.abs(np.log(p.var.data)) <= model.LOGVAR_BOUND) for p in posts)
    z, local = model.su_forward(Tensor(theta[: model.dim_su]), shard.query.X, np.random.default_rng(0))
    assert z.shape == (len(shard.query), 4) and local.item() >= 0
