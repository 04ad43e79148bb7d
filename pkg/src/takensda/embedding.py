"""Delay-coordinate vectors from filtered observations.

A delay vector stacks the last d (denoised) observations, newest first.
Per-particle delay samples are assembled from consecutive analysis ensembles
whose member lineage is preserved, so sample j is member j's own trajectory
over the window.  Delay length selection uses false nearest neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .ensemble_filter import Ensemble


class WarmupError(RuntimeError):
    """Fewer analysis ensembles available than the delay length requires."""


@dataclass(frozen=True)
class DelayEnsemble:
    """Per-particle delay-coordinate samples at one time index."""

    samples: np.ndarray  # (N, d*m), blocks newest first
    k: int
    d: int
    m: int

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[1] != self.d * self.m:
            raise ValueError("samples must be (N, d*m)")

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def block(self, i: int) -> np.ndarray:
        """Samples of the i-th delay block (i = 0 is the newest)."""
        return self.samples[:, i * self.m : (i + 1) * self.m]


def _as_series(series) -> np.ndarray:
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    if series.ndim != 2:
        raise ValueError("series must be (T,) or (T, m)")
    return series


def delay_block_view(series: np.ndarray, d: int) -> np.ndarray:
    """Delay vectors of a plain series: row k-(d-1) holds (y_k, ..., y_{k-d+1}).

    Input (T, m) yields (T - d + 1, d*m); valid time indices are
    k = d-1, ..., T-1 (0-based).
    """
    series = _as_series(series)
    T, m = series.shape
    if T < d:
        raise ValueError(f"series of length {T} too short for delay {d}")
    blocks = [series[d - 1 - i : T - i] for i in range(d)]
    return np.concatenate(blocks, axis=1)


def assemble_samples(posterior_ensembles: Sequence[Ensemble], d: int | None = None, pad: bool = False) -> DelayEnsemble:
    """Stack the last d analysis ensembles into per-particle delay samples.

    ``posterior_ensembles`` is ordered oldest to newest; member j of every
    ensemble must descend from member j of the previous one.  With ``pad``,
    a short window is padded by reusing the earliest ensemble.
    """
    ens = list(posterior_ensembles)
    if not ens:
        raise WarmupError("no analysis ensembles available")
    if d is None:
        d = len(ens)
    if len(ens) < d:
        if not pad:
            raise WarmupError(f"need {d} analysis ensembles, have {len(ens)}")
        ens = [ens[0]] * (d - len(ens)) + ens
    ens = ens[-d:]
    n = ens[-1].size
    m = ens[-1].dim
    for e in ens:
        if e.size != n or e.dim != m:
            raise ValueError("ensembles must share size and dimension")
    samples = np.concatenate([e.members for e in reversed(ens)], axis=1)
    return DelayEnsemble(samples, k=ens[-1].k, d=d, m=m)


@dataclass(frozen=True)
class FnnResult:
    d: int
    fractions: np.ndarray  # false-neighbor fraction for d = 1..d_max
    converged: bool

    def table(self) -> np.ndarray:
        """(d, fraction) rows for plotting."""
        ds = np.arange(1, len(self.fractions) + 1)
        return np.column_stack([ds, self.fractions])


def false_neighbor_fraction(
    series: np.ndarray, d: int, r_tol: float = 10.0, theiler: int | None = None
) -> float:
    """Fraction of nearest neighbors in dimension d that separate at d+1.

    A neighbor is false when the distance added by the extra delay block
    exceeds ``r_tol`` times the distance at dimension d.  Neighbors closer
    than ``theiler`` steps in time are excluded (delay windows within d
    steps share coordinates, so they are trivially close); the default
    exclusion is the window length d itself.
    """
    series = _as_series(series)
    T, m = series.shape
    if T < d + 2:
        raise ValueError("series too short for this delay")
    if theiler is None:
        theiler = d
    emb = delay_block_view(series, d)  # rows correspond to k = d-1 .. T-1
    # Restrict to rows whose extension block y_{k-d} exists: k >= d.
    emb_valid = emb[1:]
    ext = series[: T - d]  # y_{k-d} for k = d .. T-1
    n_rows = emb_valid.shape[0]
    k_query = min(2 * theiler + 2, n_rows)
    tree = cKDTree(emb_valid)
    dist, idx = tree.query(emb_valid, k=k_query, workers=-1)
    rows = np.arange(n_rows)
    valid = (np.abs(idx - rows[:, None]) > theiler) & (idx != rows[:, None])
    has_nn = valid.any(axis=1)
    first = np.argmax(valid, axis=1)
    nn_idx = idx[rows, first]
    nn_dist = dist[rows, first]
    rows = rows[has_nn]
    nn_idx = nn_idx[has_nn]
    nn_dist = nn_dist[has_nn]
    extension = np.linalg.norm(ext[rows] - ext[nn_idx], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = extension / nn_dist
    false = np.where(nn_dist > 0, ratio > r_tol, extension > 0)
    return float(false.mean()) if false.size else 0.0


def estimate_delay_fnn(
    series: np.ndarray,
    d_max: int = 25,
    r_tol: float = 10.0,
    threshold: float = 0.01,
    theiler: int | None = None,
) -> FnnResult:
    """Smallest delay length whose false-neighbor fraction drops below threshold.

    Falls back to d_max (with ``converged=False``) when no tested dimension
    achieves the threshold.
    """
    series = _as_series(series)
    if d_max < 1:
        raise ValueError("d_max must be >= 1")
    if series.shape[0] < d_max + 2:
        raise ValueError("series too short for the requested d_max")
    fractions = np.array(
        [false_neighbor_fraction(series, d, r_tol, theiler) for d in range(1, d_max + 1)]
    )
    below = np.flatnonzero(fractions < threshold)
    if below.size:
        return FnnResult(int(below[0]) + 1, fractions, True)
    return FnnResult(d_max, fractions, False)
