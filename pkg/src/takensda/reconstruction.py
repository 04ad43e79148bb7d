"""Maps from delay vectors to full model states.

Two families: a small feedforward regressor trained by stochastic gradient
descent, and nonparametric analog operators (locally constant and locally
linear) over a searchable library of historical delay vectors.  The analog
operators double as the surrogate transition for the nonparametric pipeline
when the library values are successor observations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist


class UntrainedError(RuntimeError):
    """Regressor evaluated before training."""


class TrainingError(RuntimeError):
    def __init__(self, message, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class KernelUnderflowWarning(UserWarning):
    """All kernel values underflowed; uniform weights were used instead."""


class RegressionFallbackWarning(UserWarning):
    """Locally linear fit was singular; fell back to the locally constant value."""


# ---------------------------------------------------------------------------
# Dataset and normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormStats:
    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray


@dataclass(frozen=True)
class ReconstructionDataset:
    """Paired (delay vector, state) training data with its own normalization."""

    inputs: np.ndarray  # (S, d*m)
    targets: np.ndarray  # (S, n)

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-D")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must have the same number of rows")
        if self.inputs.shape[0] == 0:
            raise ValueError("dataset is empty")

    @property
    def norm(self) -> NormStats:
        def stats(a):
            mean = a.mean(axis=0)
            std = a.std(axis=0)
            std = np.where(std < 1e-12, 1.0, std)
            return mean, std

        in_mean, in_std = stats(self.inputs)
        out_mean, out_std = stats(self.targets)
        return NormStats(in_mean, in_std, out_mean, out_std)


# ---------------------------------------------------------------------------
# Feedforward regressor
# ---------------------------------------------------------------------------


def default_hidden(input_dim: int) -> tuple[int, int]:
    width = max(64, 4 * input_dim)
    return (width, width)


@dataclass
class RegressorSpec:
    """Architecture, optimizer settings, and (after training) parameters."""

    hidden: tuple[int, ...] = ()
    activation: str = "tanh"
    epochs: int = 500
    batch_size: int = 64
    learning_rate: float = 1e-3
    lr_decay: float = 9.0  # lr(t) = lr / (1 + decay * progress)
    optimizer: str = "adam"  # "adam" | "gd" (full-batch gradient descent)
    seed: int = 0
    params: list | None = None
    norm: NormStats | None = None
    final_loss: float | None = None
    loss_history: np.ndarray | None = field(default=None, repr=False)

    @property
    def trained(self) -> bool:
        return self.params is not None


def _activation(name: str):
    if name == "tanh":
        return np.tanh, lambda a: 1.0 - a * a  # derivative in terms of activation
    if name == "softplus":
        return (
            lambda z: np.logaddexp(0.0, z),
            lambda a: 1.0 - np.exp(-a),
        )
    raise ValueError(f"unknown activation {name!r}")


def _init_params(rng, sizes):
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = np.sqrt(2.0 / (fan_in + fan_out))
        params.append(rng.standard_normal((fan_in, fan_out)) * scale)
        params.append(np.zeros(fan_out))
    return params


def _forward(params, act, x):
    """Returns activations per layer; last entry is the (linear) output."""
    acts = [x]
    n_layers = len(params) // 2
    h = x
    for layer in range(n_layers):
        w, b = params[2 * layer], params[2 * layer + 1]
        z = h @ w + b
        h = act(z) if layer < n_layers - 1 else z
        acts.append(h)
    return acts


def _backward(params, act_deriv, acts, grad_out):
    grads = [None] * len(params)
    n_layers = len(params) // 2
    delta = grad_out
    for layer in reversed(range(n_layers)):
        h_prev = acts[layer]
        grads[2 * layer] = h_prev.T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer > 0:
            w = params[2 * layer]
            delta = (delta @ w.T) * act_deriv(acts[layer])
    return grads


def train_regressor(data: ReconstructionDataset, spec: RegressorSpec) -> RegressorSpec:
    """Fit the regressor by minimizing the mean squared reconstruction error.

    Inputs and targets are standardized with the dataset's own statistics;
    training is deterministic given ``spec.seed``.
    """
    norm = data.norm
    x = (data.inputs - norm.in_mean) / norm.in_std
    t = (data.targets - norm.out_mean) / norm.out_std
    n_samples, in_dim = x.shape
    out_dim = t.shape[1]
    hidden = tuple(spec.hidden) or default_hidden(in_dim)
    sizes = (in_dim, *hidden, out_dim)
    act, act_deriv = _activation(spec.activation)

    rng = np.random.default_rng(spec.seed)
    params = _init_params(rng, sizes)
    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps_adam = 0.9, 0.999, 1e-8
    step = 0
    losses = np.empty(spec.epochs)

    batch = n_samples if spec.optimizer == "gd" else min(spec.batch_size, n_samples)
    for epoch in range(spec.epochs):
        lr = spec.learning_rate / (1.0 + spec.lr_decay * epoch / max(spec.epochs - 1, 1))
        if spec.optimizer == "gd":
            order = np.arange(n_samples)
        else:
            order = rng.permutation(n_samples)
        epoch_loss = 0.0
        for start in range(0, n_samples, batch):
            sel = order[start : start + batch]
            xb, tb = x[sel], t[sel]
            acts = _forward(params, act, xb)
            resid = acts[-1] - tb
            loss = float(np.sum(resid * resid) / xb.shape[0])
            epoch_loss += loss * xb.shape[0]
            grads = _backward(params, act_deriv, acts, 2.0 * resid / xb.shape[0])
            step += 1
            if spec.optimizer == "gd":
                for p, g in zip(params, grads):
                    p -= lr * g
            else:
                for j, (p, g) in enumerate(zip(params, grads)):
                    adam_m[j] = beta1 * adam_m[j] + (1 - beta1) * g
                    adam_v[j] = beta2 * adam_v[j] + (1 - beta2) * g * g
                    m_hat = adam_m[j] / (1 - beta1**step)
                    v_hat = adam_v[j] / (1 - beta2**step)
                    p -= lr * m_hat / (np.sqrt(v_hat) + eps_adam)
        epoch_loss /= n_samples
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
        losses[epoch] = epoch_loss

    # Final loss in original target units.
    pred = _forward(params, act, x)[-1] * norm.out_std + norm.out_mean
    final = float(np.mean(np.sum((pred - data.targets) ** 2, axis=1)))
    return replace(spec, hidden=hidden, params=params, norm=norm, final_loss=final, loss_history=losses)


def predict_regressor(spec: RegressorSpec, delay_vectors: np.ndarray) -> np.ndarray:
    """Deterministic forward evaluation; accepts a single vector or a batch."""
    if not spec.trained:
        raise UntrainedError("regressor has not been trained")
    act, _ = _activation(spec.activation)
    y = np.atleast_2d(np.asarray(delay_vectors, dtype=float))
    single = np.asarray(delay_vectors).ndim == 1
    xn = (y - spec.norm.in_mean) / spec.norm.in_std
    out = _forward(spec.params, act, xn)[-1] * spec.norm.out_std + spec.norm.out_mean
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Analog library and operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalogLibrary:
    """Delay-vector keys with successor observations or state labels as values."""

    keys: np.ndarray  # (L, D)
    values: np.ndarray  # (L, v)
    value_role: str  # "successor" | "state"
    kernel_scale: float | None = None  # None: median heuristic per query

    def __post_init__(self):
        object.__setattr__(self, "keys", np.atleast_2d(np.asarray(self.keys, dtype=float)))
        object.__setattr__(self, "values", np.atleast_2d(np.asarray(self.values, dtype=float)))
        if self.keys.shape[0] != self.values.shape[0]:
            raise ValueError("keys and values must have equal counts")
        if self.value_role not in ("successor", "state"):
            raise ValueError(f"unknown value role {self.value_role!r}")
        if self.kernel_scale is not None and not self.kernel_scale > 0:
            raise ValueError("kernel scale must be positive")

    @property
    def size(self) -> int:
        return self.keys.shape[0]

    @property
    def key_dim(self) -> int:
        return self.keys.shape[1]


def knn_query_batch(lib: AnalogLibrary, queries: np.ndarray, n_neighbors: int):
    """Indices and distances of the nearest neighbors for each query row.

    Exact search; results sorted ascending by (distance, insertion index).
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if n_neighbors > lib.size:
        raise ValueError(f"requested {n_neighbors} neighbors from a library of {lib.size}")
    d2 = cdist(queries, lib.keys, "sqeuclidean")
    if n_neighbors < lib.size:
        part = np.argpartition(d2, n_neighbors - 1, axis=1)[:, :n_neighbors]
    else:
        part = np.broadcast_to(np.arange(lib.size), (queries.shape[0], lib.size)).copy()
    part_d2 = np.take_along_axis(d2, part, axis=1)
    # Stable (distance, insertion index) ordering.
    order = np.lexsort((part, part_d2), axis=1)
    idx = np.take_along_axis(part, order, axis=1)
    dist = np.sqrt(np.take_along_axis(part_d2, order, axis=1))
    return idx, dist


def knn_query(lib: AnalogLibrary, query: np.ndarray, n_neighbors: int):
    """(key, value, distance) triples of the nearest neighbors of one query."""
    idx, dist = knn_query_batch(lib, np.asarray(query, dtype=float)[None, :], n_neighbors)
    return [(lib.keys[i], lib.values[i], d) for i, d in zip(idx[0], dist[0])]


def _median_lambda(dist: np.ndarray) -> np.ndarray:
    """Per-query kernel scale 1 / (2 median^2) of the neighbor distances."""
    med = np.median(dist, axis=1)
    med2 = np.where(med > 0, 2.0 * med * med, 1.0)
    return 1.0 / med2


def _weights_from_distances(dist: np.ndarray, lam) -> np.ndarray:
    g = np.exp(-np.asarray(lam)[..., None] * dist * dist)
    total = g.sum(axis=1)
    dead = total == 0.0
    if np.any(dead):
        warnings.warn(
            "kernel weights underflowed; using uniform weights", KernelUnderflowWarning, stacklevel=3
        )
        g[dead] = 1.0
        total = g.sum(axis=1)
    w = g / total[:, None]
    # Individual underflows are clamped so weights stay strictly positive.
    w = np.maximum(w, 1e-300)
    return w / w.sum(axis=1)[:, None]


def kernel_weights(query: np.ndarray, neighbors: np.ndarray, kernel_scale: float) -> np.ndarray:
    """Normalized Gaussian kernel weights exp(-lambda ||q - key||^2) / sum."""
    query = np.asarray(query, dtype=float)
    neighbors = np.atleast_2d(np.asarray(neighbors, dtype=float))
    if not kernel_scale > 0:
        raise ValueError("kernel scale must be positive")
    dist = np.linalg.norm(neighbors - query, axis=1)
    return _weights_from_distances(dist[None, :], np.array([kernel_scale]))[0]


def _resolve_lambda(lib: AnalogLibrary, dist: np.ndarray, kernel_scale) -> np.ndarray:
    lam = kernel_scale if kernel_scale is not None else lib.kernel_scale
    if lam is None:
        return _median_lambda(dist)
    return np.full(dist.shape[0], float(lam))


def lc_apply_batch(
    lib: AnalogLibrary,
    queries: np.ndarray,
    n_neighbors: int,
    kernel_scale: float | None = None,
    uniform: bool = False,
) -> np.ndarray:
    """Locally constant analog prediction: kernel-weighted neighbor average."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    idx, dist = knn_query_batch(lib, queries, n_neighbors)
    if uniform:
        w = np.full(idx.shape, 1.0 / n_neighbors)
    else:
        w = _weights_from_distances(dist, _resolve_lambda(lib, dist, kernel_scale))
    return np.einsum("bm,bmv->bv", w, lib.values[idx])


def lc_apply(lib, query, n_neighbors, kernel_scale=None, uniform=False) -> np.ndarray:
    return lc_apply_batch(lib, np.asarray(query, dtype=float)[None, :], n_neighbors, kernel_scale, uniform)[0]


def ll_apply_batch(
    lib: AnalogLibrary,
    queries: np.ndarray,
    n_neighbors: int,
    kernel_scale: float | None = None,
    uniform: bool = False,
    gram_cutoff: float = 1e-8,
) -> np.ndarray:
    """Locally linear analog prediction: weighted affine fit evaluated at the query.

    The regression is centered on the weighted neighbor mean and solved via a
    truncated eigendecomposition of the weighted Gram matrix (relative
    eigenvalue cutoff ``gram_cutoff``): directions the neighbors do not
    resolve are dropped, which bounds the sensitivity of the fit without
    biasing well-conditioned regressions.  Rows whose regression still fails
    fall back to the locally constant value.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if n_neighbors < lib.key_dim + 2:
        warnings.warn(
            f"{n_neighbors} neighbors for a {lib.key_dim}-dimensional regression "
            "is underdetermined",
            stacklevel=2,
        )
    idx, dist = knn_query_batch(lib, queries, n_neighbors)
    keys = lib.keys[idx]  # (B, M, D)
    vals = lib.values[idx]  # (B, M, v)
    if uniform:
        w = np.full(idx.shape, 1.0 / n_neighbors)
    else:
        w = _weights_from_distances(dist, _resolve_lambda(lib, dist, kernel_scale))

    key_mean = np.einsum("bm,bmd->bd", w, keys)
    val_mean = np.einsum("bm,bmv->bv", w, vals)
    kc = keys - key_mean[:, None, :]
    vc = vals - val_mean[:, None, :]
    wkc = kc * w[:, :, None]
    gram = np.matmul(kc.transpose(0, 2, 1), wkc)  # (B, D, D)
    rhs = np.matmul(wkc.transpose(0, 2, 1), vc)  # (B, D, v)
    out = None
    try:
        evals, evecs = np.linalg.eigh(gram)  # (B, D), (B, D, D)
        keep = evals > gram_cutoff * np.maximum(evals[:, -1:], 1e-300)
        inv = np.where(keep, 1.0 / np.where(keep, evals, 1.0), 0.0)
        # slope = V diag(inv) V^T rhs, batched via matmuls
        proj = np.matmul(evecs.transpose(0, 2, 1), rhs)  # (B, D, v)
        slope = np.matmul(evecs, inv[:, :, None] * proj)
        out = val_mean + np.einsum("bd,bdv->bv", queries - key_mean, slope)
    except np.linalg.LinAlgError:
        out = None
    bad = np.ones(queries.shape[0], dtype=bool) if out is None else ~np.isfinite(out).all(axis=1)
    if np.any(bad):
        warnings.warn(
            "locally linear fit singular; falling back to locally constant",
            RegressionFallbackWarning,
            stacklevel=2,
        )
        fallback = np.einsum("bm,bmv->bv", w[bad], vals[bad])
        if out is None:
            out = np.empty((queries.shape[0], lib.values.shape[1]))
            out[~bad] = 0.0
        out[bad] = fallback
    return out


def ll_apply(lib, query, n_neighbors, kernel_scale=None, uniform=False, gram_cutoff=1e-8) -> np.ndarray:
    return ll_apply_batch(
        lib, np.asarray(query, dtype=float)[None, :], n_neighbors, kernel_scale, uniform, gram_cutoff
    )[0]


def build_library(
    key_rows: Sequence[np.ndarray],
    value_rows: Sequence[np.ndarray],
    value_role: str,
    kernel_scale: float | None = None,
) -> AnalogLibrary:
    keys = np.vstack([np.atleast_2d(k) for k in key_rows])
    values = np.vstack([np.atleast_2d(v) for v in value_rows])
    return AnalogLibrary(keys, values, value_role, kernel_scale)
