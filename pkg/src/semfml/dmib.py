"""Variational information-bottleneck losses for multimodal split encoders.

Latent codes are diagonal Gaussians regularized towards N(0, I). The loss
functions accept numpy arrays or autodiff Tensors; they return a float for
plain inputs and a Tensor when any input carries a gradient.

The adaptive layer scales each latent dimension by a noise-dependent
importance, so that a noisier channel spreads the code over more leading
dimensions and the tail can be dropped without sending a mask.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor
from .errors import InvalidParameterError
from .rng import stream


def _val(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=float)


def _result(t: Tensor):
    return t if t.requires_grad else t.item()


@dataclass
class GaussianPosterior:
    """Diagonal Gaussian; ``mean``/``var`` are (d,) or batched (B, d)."""
    mean: object
    var: object

    def __post_init__(self):
        m, v = _val(self.mean), _val(self.var)
        if m.shape != v.shape or m.size == 0:
            raise InvalidParameterError(f"mean {m.shape} and variance {v.shape} must match and be nonempty")
        if not np.all(v > 0):
            raise InvalidParameterError("variances must be strictly positive")

    @classmethod
    def from_logvar(cls, mean, logvar):
        logvar = as_tensor(logvar) if isinstance(logvar, Tensor) or isinstance(mean, Tensor) else np.asarray(logvar)
        var = logvar.exp() if isinstance(logvar, Tensor) else np.exp(logvar)
        return cls(mean, var)

    @property
    def dim(self) -> int:
        return _val(self.mean).shape[-1]


@dataclass(frozen=True)
class IBWeights:
    zeta: float = 1e-2
    phi_th: float = 1e-2

    def __post_init__(self):
        if self.zeta < 0 or self.phi_th < 0:
            raise InvalidParameterError("zeta and phi_th must be nonnegative")


def kl_per_sample(post: GaussianPosterior) -> Tensor:
    """KL(N(mu, Sigma) || N(0, I)) summed over the last axis."""
    m, v = as_tensor(post.mean), as_tensor(post.var)
    return 0.5 * (m * m + v - v.log() - 1.0).sum(axis=-1)


def gaussian_kl(post: GaussianPosterior):
    kl = kl_per_sample(post)
    if kl.ndim:
        raise InvalidParameterError("gaussian_kl takes a single posterior; use kl_per_sample for batches")
    return _result(kl)


def reparameterize(post: GaussianPosterior, rng_seed: int | None = None, *, iota=None):
    """Draw ``mu + sqrt(Sigma) * iota`` with iota ~ N(0, I).

    ``iota`` may be given explicitly (pass zeros to get the mean back).
    """
    shape = _val(post.mean).shape
    if iota is None:
        iota = stream(0 if rng_seed is None else rng_seed, "reparam").standard_normal(shape)
    z = as_tensor(post.mean) + as_tensor(post.var).sqrt() * as_tensor(iota)
    return z if z.requires_grad else z.data


def _batch_size(items):
    sizes = {_val(x).shape[0] if _val(x).ndim else 1 for x in items}
    if len(sizes) != 1:
        raise InvalidParameterError(f"inconsistent batch sizes {sorted(sizes)}")
    return sizes.pop()


def _unimodal_terms(posteriors, log_liks, zeta):
    if len(posteriors) != len(log_liks) or not posteriors:
        raise InvalidParameterError("need one decoder log-likelihood per modality")
    _batch_size([p.mean for p in posteriors] + list(log_liks))
    total = None
    for post, ll in zip(posteriors, log_liks):
        term = zeta * kl_per_sample(post) - as_tensor(ll)
        total = term if total is None else total + term
    return total


def u_vdmib_loss(posteriors, log_liks, zeta: float):
    """Batch mean of sum over modalities of ``zeta * KL_m - log q(y | z_m)``."""
    return _result(_unimodal_terms(posteriors, log_liks, zeta).mean())


def s_vdmib_loss(fused: GaussianPosterior, log_lik, zeta: float):
    """Batch mean of ``zeta * KL(fused) - log q(y | s)``."""
    _batch_size([fused.mean, log_lik])
    return _result((zeta * kl_per_sample(fused) - as_tensor(log_lik)).mean())


def c_vdmib_loss(posteriors, log_liks, fused: GaussianPosterior, fused_log_lik, zeta: float):
    """Confluent loss: fused term plus every per-modality term, batch-averaged."""
    uni = _unimodal_terms(posteriors, log_liks, zeta)
    n_fused = _batch_size([fused.mean, fused_log_lik])
    if n_fused != (uni.shape[0] if uni.ndim else 1):
        raise InvalidParameterError("fused and per-modality batches differ in size")
    fused_term = zeta * kl_per_sample(fused) - as_tensor(fused_log_lik)
    return _result((fused_term + uni).mean())


def fuse(codes) -> np.ndarray:
    """Concatenate per-modality codes along the feature axis."""
    from .autodiff import concat
    if any(isinstance(c, Tensor) for c in codes):
        return concat(codes, axis=-1)
    return np.concatenate([np.asarray(c) for c in codes], axis=-1)


# -- SNR-adaptive transmission ---------------------------------------------------

def _softplus(x):
    return np.logaddexp(0.0, x)


@dataclass
class MonotonePsiNet:
    """psi(sigma2) = softplus(V^2 softplus(u^2 log sigma2 + b) + c).

    Squared weights and increasing activations make every output
    nonnegative and nondecreasing in the noise variance.
    """
    u: np.ndarray   # (hidden,)
    b: np.ndarray   # (hidden,)
    V: np.ndarray   # (d, hidden)
    c: np.ndarray   # (d,)

    @classmethod
    def random(cls, rng: np.random.Generator, dim: int, hidden: int = 8, scale: float = 1.0):
        return cls(rng.normal(0, scale, hidden), rng.normal(0, scale, hidden),
                   rng.normal(0, scale, (dim, hidden)), rng.normal(0, scale, dim))

    @property
    def dim(self) -> int:
        return self.c.size

    def __call__(self, sigma2: float) -> np.ndarray:
        if sigma2 < 0:
            raise InvalidParameterError("noise variance must be nonnegative")
        s = np.log(sigma2 + 1e-12)
        h = _softplus(self.u ** 2 * s + self.b)
        return _softplus((self.V ** 2) @ h + self.c)


@dataclass(frozen=True)
class ImportanceProfile:
    psi: np.ndarray
    phi: np.ndarray
    active_dims: int

    @property
    def dim(self) -> int:
        return self.phi.size


def importance_profile(sigma2: float, psi, d: int | None = None, phi_th: float = 1e-2) -> ImportanceProfile:
    """Suffix sums of the per-dimension importance and the kept prefix length.

    ``psi`` is a MonotonePsiNet, any callable of sigma2, or a fixed array.
    """
    values = np.asarray(psi(sigma2) if callable(psi) else psi, dtype=float)
    if d is not None and values.size != d:
        raise InvalidParameterError(f"importance net has {values.size} outputs, expected {d}")
    if np.any(values < 0):
        raise InvalidParameterError("importance values must be nonnegative")
    phi = np.cumsum(values[::-1])[::-1]
    active = int(np.count_nonzero(phi >= phi_th))
    return ImportanceProfile(values, phi, active)


def adaptive_encode(features, W_bar, profile: ImportanceProfile) -> np.ndarray:
    """``tanh(S(x) . W_j / |W_j| * phi_j)`` for every output dimension j.

    ``features`` is (m,) or (B, m); ``W_bar`` is (d, m). All d entries are
    returned; only the first ``profile.active_dims`` are sent.
    """
    W = np.asarray(W_bar, dtype=float)
    if W.shape[0] != profile.dim:
        raise InvalidParameterError(f"{W.shape[0]} weight rows but profile has {profile.dim} dims")
    norms = np.linalg.norm(W, axis=1)
    if np.any(norms == 0):
        raise InvalidParameterError(f"degenerate-row: weight rows {np.flatnonzero(norms == 0).tolist()} are zero")
    pre = np.asarray(features, dtype=float) @ (W / norms[:, None]).T
    return np.tanh(pre * profile.phi)


def transmitted(code, profile: ImportanceProfile) -> np.ndarray:
    return np.asarray(code)[..., : profile.active_dims]
