"""Small split models over a flat parameter vector.

The first ``dim_su`` entries of theta live on the SU (encoder side), the
rest on the BS. ``su_forward`` returns the activations that cross the
uplink plus an optional SU-local loss term; ``bs_loss`` finishes the
forward pass from (possibly noisy) received activations.
"""
from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor, as_tensor, concat, log_softmax
from .dmib import GaussianPosterior, kl_per_sample


class ParamLayout:
    def __init__(self, *shapes):
        self.shapes = [tuple(s) for s in shapes]
        self.sizes = [int(np.prod(s)) for s in self.shapes]
        self.size = sum(self.sizes)

    def unpack(self, theta: Tensor):
        out, pos = [], 0
        for shape, n in zip(self.shapes, self.sizes):
            out.append(theta[pos:pos + n].reshape(*shape))
            pos += n
        return out


class SplitModel:
    su_layout = ParamLayout()
    bs_layout = ParamLayout()

    @property
    def dim_su(self) -> int:
        return self.su_layout.size

    @property
    def dim_bs(self) -> int:
        return self.bs_layout.size

    @property
    def dim(self) -> int:
        return self.dim_su + self.dim_bs

    def init(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def su_forward(self, theta_su: Tensor, X, rng=None):
        raise NotImplementedError

    def bs_loss(self, theta_bs: Tensor, z: Tensor, y):
        raise NotImplementedError

    def loss(self, theta, batch, rng=None) -> Tensor:
        theta = as_tensor(theta)
        z, local = self.su_forward(theta[: self.dim_su], batch.X, rng)
        out = self.bs_loss(theta[self.dim_su:], z, batch.y)
        return out if local is None else out + local


class QuadraticModel(SplitModel):
    """Loss 0.5 * curvature * mean_i |theta - x_i|^2; all parameters on the SU."""

    def __init__(self, dim: int, curvature: float = 1.0):
        self.su_layout = ParamLayout((dim,))
        self.bs_layout = ParamLayout()
        self.curvature = curvature

    def init(self, rng):
        return rng.normal(0, 1, self.dim_su)

    def su_forward(self, theta_su, X, rng=None):
        return theta_su.reshape(1, -1) - Tensor(X), None

    def bs_loss(self, theta_bs, z, y):
        return 0.5 * self.curvature * (z * z).sum(axis=1).mean()


class LinearRegressor(SplitModel):
    """z = X w on the SU; the BS only scores 0.5 * mean (z - y)^2."""

    def __init__(self, in_dim: int):
        self.su_layout = ParamLayout((in_dim, 1))
        self.bs_layout = ParamLayout()

    def init(self, rng):
        return rng.normal(0, 0.1, self.dim_su)

    def su_forward(self, theta_su, X, rng=None):
        (w,) = self.su_layout.unpack(theta_su)
        return Tensor(X) @ w, None

    def bs_loss(self, theta_bs, z, y):
        r = z - Tensor(np.asarray(y, dtype=float).reshape(z.shape))
        return 0.5 * (r * r).mean()


class MLPRegressor(SplitModel):
    """tanh hidden layer on the SU, linear head on the BS, squared error."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int = 1):
        self.su_layout = ParamLayout((in_dim, hidden), (hidden,))
        self.bs_layout = ParamLayout((hidden, out_dim), (out_dim,))
        self.in_dim, self.hidden, self.out_dim = in_dim, hidden, out_dim

    def init(self, rng):
        W1 = rng.normal(0, 1 / math.sqrt(self.in_dim), (self.in_dim, self.hidden))
        W2 = rng.normal(0, 1 / math.sqrt(self.hidden), (self.hidden, self.out_dim))
        return np.concatenate([W1.ravel(), np.zeros(self.hidden), W2.ravel(), np.zeros(self.out_dim)])

    def su_forward(self, theta_su, X, rng=None):
        W1, b1 = self.su_layout.unpack(theta_su)
        return (Tensor(X) @ W1 + b1).tanh(), None

    def bs_loss(self, theta_bs, z, y):
        W2, b2 = self.bs_layout.unpack(theta_bs)
        r = z @ W2 + b2 - Tensor(np.asarray(y, dtype=float).reshape(-1, self.out_dim))
        return 0.5 * (r * r).sum(axis=1).mean()


class VIBClassifier(SplitModel):
    """Per-modality Gaussian encoders on the SU, softmax decoder on the BS.

    The SU-local term is ``zeta`` times the summed per-modality KL; the BS
    term is the cross-entropy of the fused code. With ``rng=None`` the
    encoders emit their means (deterministic evaluation).
    """

    LOGVAR_BOUND = 8.0  # soft clamp keeps exp(logvar) finite and nonzero

    def __init__(self, modal_dims=(6, 6), latent: int = 2, classes: int = 3, zeta: float = 1e-2):
        self.modal_dims = tuple(modal_dims)
        self.latent, self.classes, self.zeta = latent, classes, zeta
        shapes = []
        for m in self.modal_dims:
            shapes += [(m, 2 * latent), (2 * latent,)]
        self.su_layout = ParamLayout(*shapes)
        fused = latent * len(self.modal_dims)
        self.bs_layout = ParamLayout((fused, classes), (classes,))

    def init(self, rng):
        parts = []
        for m in self.modal_dims:
            parts += [rng.normal(0, 1 / math.sqrt(m), (m, 2 * self.latent)).ravel(), np.zeros(2 * self.latent)]
        fused = self.latent * len(self.modal_dims)
        parts += [rng.normal(0, 1 / math.sqrt(fused), (fused, self.classes)).ravel(), np.zeros(self.classes)]
        return np.concatenate(parts)

    def posteriors(self, theta_su, X):
        params = self.su_layout.unpack(as_tensor(theta_su))
        X = np.asarray(X, dtype=float)
        out, col = [], 0
        for i, m in enumerate(self.modal_dims):
            W, b = params[2 * i], params[2 * i + 1]
            h = Tensor(X[:, col:col + m]) @ W + b
            col += m
            c = self.LOGVAR_BOUND
            logvar = c * (h[:, self.latent:] / c).tanh()
            out.append(GaussianPosterior.from_logvar(h[:, : self.latent], logvar))
        return out

    def su_forward(self, theta_su, X, rng=None):
        posts = self.posteriors(theta_su, X)
        codes = []
        for p in posts:
            if rng is None:
                codes.append(p.mean)
            else:
                iota = rng.standard_normal(p.mean.shape)
                codes.append(p.mean + p.var.sqrt() * Tensor(iota))
        kl = None
        for p in posts:
            term = kl_per_sample(p)
            kl = term if kl is None else kl + term
        return concat(codes, axis=1), self.zeta * kl.mean()

    def logits(self, theta_bs, z):
        W, b = self.bs_layout.unpack(as_tensor(theta_bs))
        return as_tensor(z) @ W + b

    def log_likelihood(self, theta_bs, z, y) -> Tensor:
        """Per-sample log q(y | z)."""
        lp = log_softmax(self.logits(theta_bs, z), axis=1)
        y = np.asarray(y, dtype=int)
        return lp[np.arange(len(y)), y]

    def bs_loss(self, theta_bs, z, y):
        return -self.log_likelihood(theta_bs, z, y).mean()

    def rate_bits(self, theta, X) -> float:
        """Mean KL to the prior in bits: the payload proxy of the code."""
        posts = self.posteriors(np.asarray(theta)[: self.dim_su], X)
        kl = sum(kl_per_sample(p).data for p in posts)
        return float(np.mean(kl) / math.log(2))

    def distortion(self, theta, batch) -> float:
        theta = np.asarray(theta)
        z, _ = self.su_forward(Tensor(theta[: self.dim_su]), batch.X)
        return float(self.bs_loss(Tensor(theta[self.dim_su:]), z, batch.y).data)

    def accuracy(self, theta, batch) -> float:
        theta = np.asarray(theta)
        z, _ = self.su_forward(Tensor(theta[: self.dim_su]), batch.X)
        pred = self.logits(theta[self.dim_su:], z).data.argmax(axis=1)
        return float(np.mean(pred == np.asarray(batch.y)))
