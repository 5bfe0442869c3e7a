"""Per-SU data shards and synthetic non-IID task families."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, InvalidParameterError
from .rng import stream


@dataclass
class Batch:
    X: np.ndarray
    y: np.ndarray
    idx: np.ndarray | None = None   # global sample ids, for disjointness checks

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y)
        if len(self.X) != len(self.y):
            raise InvalidParameterError(f"X has {len(self.X)} rows but y has {len(self.y)}")

    def __len__(self):
        return len(self.X)

    def take(self, rows) -> "Batch":
        rows = np.asarray(rows, dtype=int)
        return Batch(self.X[rows], self.y[rows], None if self.idx is None else self.idx[rows])


def overlapping(*batches) -> bool:
    ids = [b.idx for b in batches if b.idx is not None]
    seen: set = set()
    for i in ids:
        s = set(i.tolist())
        if seen & s:
            return True
        seen |= s
    return False


@dataclass
class TaskShard:
    su_id: int
    support: Batch
    query: Batch
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.support) == 0 or len(self.query) == 0:
            raise InsufficientDataError(f"SU {self.su_id}: support and query sets must be nonempty")
        if overlapping(self.support, self.query):
            raise InvalidParameterError(f"SU {self.su_id}: support and query sets overlap")

    @property
    def size(self) -> int:
        return len(self.support) + len(self.query)

    def all_data(self) -> Batch:
        idx = None
        if self.support.idx is not None and self.query.idx is not None:
            idx = np.concatenate([self.support.idx, self.query.idx])
        return Batch(np.concatenate([self.support.X, self.query.X]),
                     np.concatenate([self.support.y, self.query.y]), idx)


def sample_batch(data: Batch, size: int, rng: np.random.Generator, exclude=None) -> Batch:
    """Draw ``size`` rows without replacement, avoiding rows whose ids are in ``exclude``."""
    rows = np.arange(len(data))
    if exclude is not None and data.idx is not None and exclude.idx is not None:
        rows = rows[~np.isin(data.idx, exclude.idx)]
    if rows.size == 0:
        raise InsufficientDataError("no rows left to sample")
    if size >= rows.size:
        return data.take(rows)
    return data.take(np.sort(rng.choice(rows, size=size, replace=False)))


def _split(su, X, y, n_support, offset, params):
    idx = offset + np.arange(len(X))
    return TaskShard(su, Batch(X[:n_support], y[:n_support], idx[:n_support]),
                     Batch(X[n_support:], y[n_support:], idx[n_support:]), params)


def _per_su(r, spec, integer=False):
    """A scalar, or a per-SU uniform draw from a (low, high) pair."""
    if isinstance(spec, (tuple, list)):
        lo, hi = spec
        return int(r.integers(lo, hi + 1)) if integer else float(r.uniform(lo, hi))
    return int(spec) if integer else float(spec)


def regression_shards(seed: int, count: int, in_dim: int = 4, hidden: int = 8, *,
                      n_support=40, n_query=40, head_spread: float = 1.0,
                      input_shift: float = 0.5, noise=0.05) -> list[TaskShard]:
    """y = v_k . tanh(U x) + noise: shared features U, SU-specific heads v_k.

    Heads scatter around a common mean with ``head_spread``; each SU also
    sees inputs centred at its own offset, so shards are non-IID.
    ``n_support``, ``n_query`` and ``noise`` may be (low, high) pairs to
    draw per-SU quantity and label-quality skew.
    """
    rng = stream(seed, "regression-tasks")
    U = rng.normal(0, 1 / np.sqrt(in_dim), (hidden, in_dim)) * 2.0
    v_mean = rng.normal(0, 1, hidden)
    shards = []
    offset = 0
    for k in range(count):
        r = stream(seed, "regression-shard", k)
        ns, nq = _per_su(r, n_support, True), _per_su(r, n_query, True)
        sd = _per_su(r, noise)
        n = ns + nq
        v = v_mean + head_spread * r.normal(0, 1, hidden)
        shift = input_shift * r.normal(0, 1, in_dim)
        X = shift + r.normal(0, 1, (n, in_dim))
        y = np.tanh(X @ U.T) @ v + sd * r.normal(0, 1, n)
        shards.append(_split(k, X, y[:, None], ns, offset, {"head": v, "shift": shift, "noise": sd}))
        offset += n
    return shards


def quadratic_shards(seed: int, count: int, dim: int = 2, *, n_support: int = 32, n_query: int = 32,
                     center_spread: float = 1.0, sample_std: float = 0.5) -> list[TaskShard]:
    """Points around an SU-specific centre c_k; the loss is 0.5 |theta - x|^2."""
    rng = stream(seed, "quadratic-tasks")
    shards = []
    n = n_support + n_query
    for k in range(count):
        c = center_spread * rng.normal(0, 1, dim)
        X = c + sample_std * stream(seed, "quadratic-shard", k).normal(0, 1, (n, dim))
        shards.append(_split(k, X, np.zeros((n, 1)), n_support, k * n, {"center": c, "std": sample_std}))
    return shards


def classification_shards(seed: int, count: int, modal_dims=(6, 6), classes: int = 3, *,
                          n_support: int = 60, n_query: int = 60, separation: float = 2.0,
                          nuisance: int = 3, label_skew: float = 0.5) -> list[TaskShard]:
    """Two-modality Gaussian class clusters with nuisance coordinates.

    Each modality carries a noisy view of the class prototype in its first
    coordinates and pure noise in the last ``nuisance`` ones; SUs differ
    in their label mix.
    """
    rng = stream(seed, "classification-tasks")
    protos = [separation * rng.normal(0, 1, (classes, m - nuisance)) for m in modal_dims]
    shards = []
    n = n_support + n_query
    for k in range(count):
        r = stream(seed, "classification-shard", k)
        mix = r.dirichlet(np.full(classes, 1.0 / max(label_skew, 1e-3)))
        y = r.choice(classes, size=n, p=mix)
        parts = []
        for P, m in zip(protos, modal_dims):
            info = P[y] + r.normal(0, 1, (n, m - nuisance))
            parts.append(np.hstack([info, r.normal(0, 1, (n, nuisance))]))
        X = np.hstack(parts)
        shards.append(_split(k, X, y, n_support, k * n, {"mix": mix}))
    return shards
