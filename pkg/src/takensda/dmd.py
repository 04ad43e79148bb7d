"""Least-squares Koopman surrogate for denoised-observation dynamics.

A dictionary of observables lifts each observation; the transition matrix is
the least-squares map between consecutive lifted snapshots.  The operator can
be refined iteratively against filtered (denoised) data and updated online
over a sliding window.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import ensemble_filter as enkf


class FitError(ValueError):
    """Empty or inconsistent snapshot input."""


@dataclass(frozen=True)
class Dictionary:
    """Observable dictionary; the first m entries are the coordinate selectors."""

    kind: str  # "identity" | "polynomial"
    m: int
    degree: int = 1

    def __post_init__(self):
        if self.kind not in ("identity", "polynomial"):
            raise ValueError(f"unknown dictionary kind {self.kind!r}")
        if self.kind == "polynomial" and self.degree < 2:
            raise ValueError("polynomial dictionary needs degree >= 2")
        if self.m < 1:
            raise ValueError("observation dimension must be >= 1")

    @property
    def size(self) -> int:
        if self.kind == "identity":
            return self.m
        return self.m + sum(
            _n_monomials(self.m, deg) for deg in range(2, self.degree + 1)
        )

    def lift(self, y: np.ndarray) -> np.ndarray:
        """Evaluate all observables; supports leading batch dimensions."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.m:
            raise ValueError(f"expected last axis {self.m}, got {y.shape[-1]}")
        if self.kind == "identity":
            return y
        cols = [y]
        for deg in range(2, self.degree + 1):
            for combo in itertools.combinations_with_replacement(range(self.m), deg):
                term = np.ones(y.shape[:-1])
                for idx in combo:
                    term = term * y[..., idx]
                cols.append(term[..., None])
        return np.concatenate(cols, axis=-1)


def _n_monomials(m: int, degree: int) -> int:
    from math import comb

    return comb(m + degree - 1, degree)


def identity_dictionary(m: int) -> Dictionary:
    return Dictionary("identity", m)


def polynomial_dictionary(m: int, degree: int = 2) -> Dictionary:
    return Dictionary("polynomial", m, degree)


def lift(y, dictionary: Dictionary) -> np.ndarray:
    return dictionary.lift(y)


@dataclass(frozen=True)
class DmdOperator:
    """Transition matrix on the lifted space plus its observation rows."""

    K: np.ndarray  # (N_k, N_k)
    dictionary: Dictionary
    svd_tol: float
    effective_rank: int
    iteration: int = 0

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        object.__setattr__(self, "K", K)
        if K.shape != (self.dictionary.size, self.dictionary.size):
            raise ValueError(f"operator shape {K.shape} does not match dictionary size")
        if not np.all(np.isfinite(K)):
            raise ValueError("operator entries must be finite")

    @property
    def K_y(self) -> np.ndarray:
        """First m rows of K: the drift of the observation coordinates."""
        return self.K[: self.dictionary.m]

    def predict_mean(self, y: np.ndarray) -> np.ndarray:
        return predict_mean(self, y)

    @property
    def transition(self) -> "_DmdTransition":
        """Batched drift map for use as an ensemble-filter transition."""
        return _DmdTransition(self)


class _DmdTransition:
    """Callable surrogate drift; exposes its matrix when the map is linear."""

    def __init__(self, op: "DmdOperator"):
        self._op = op
        if op.dictionary.kind == "identity":
            self.linear_matrix = op.K_y

    def __call__(self, members: np.ndarray) -> np.ndarray:
        return self._op.dictionary.lift(members) @ self._op.K_y.T


def _as_snapshot_list(snapshots) -> list[np.ndarray]:
    if isinstance(snapshots, np.ndarray) and snapshots.ndim == 2:
        arrs = [snapshots]
    elif isinstance(snapshots, np.ndarray) and snapshots.ndim == 3:
        arrs = list(snapshots)
    else:
        arrs = [np.atleast_2d(np.asarray(a, dtype=float)) for a in snapshots]
    out = [np.asarray(a, dtype=float) for a in arrs if np.asarray(a).size]
    if not out:
        raise FitError("no snapshot data provided")
    return out


def _pair_matrices(snapshots: Sequence[np.ndarray], dictionary: Dictionary):
    # Consecutive pairs are taken inside each trajectory only; pairs never
    # straddle a trajectory boundary.
    g0, g1 = [], []
    for traj in snapshots:
        if traj.ndim != 2 or traj.shape[0] < 2:
            raise FitError("each trajectory needs at least two snapshots")
        lifted = dictionary.lift(traj)
        g0.append(lifted[:-1])
        g1.append(lifted[1:])
    return np.vstack(g0), np.vstack(g1)


def fit(snapshots, dictionary: Dictionary, svd_tol: float = 1e-10, iteration: int = 0) -> DmdOperator:
    """Least-squares operator K minimizing ||G1 - K G0||_F over snapshot pairs.

    ``snapshots`` is one (T, m) trajectory or a sequence of them.  The
    pseudo-inverse uses an SVD with relative singular-value cutoff
    ``svd_tol``; rank deficiency is tolerated (truncated inverse) and
    recorded in ``effective_rank``.
    """
    arrs = _as_snapshot_list(snapshots)
    g0, g1 = _pair_matrices(arrs, dictionary)
    if g0.shape[0] < dictionary.size:
        warnings.warn(
            f"only {g0.shape[0]} snapshot pairs for dictionary size {dictionary.size}; "
            "fit is underdetermined",
            stacklevel=2,
        )
    u, s, vt = np.linalg.svd(g0, full_matrices=False)
    keep = s > svd_tol * (s[0] if s.size and s[0] > 0 else 1.0)
    rank = int(keep.sum())
    if rank == 0:
        K = np.zeros((dictionary.size, dictionary.size))
    else:
        inv_s = np.zeros_like(s)
        inv_s[keep] = 1.0 / s[keep]
        # K^T = pinv(G0) @ G1 so that rows of G1 ~= rows of G0 @ K^T.
        K = (vt.T * inv_s) @ (u.T @ g1)
        K = K.T
    return DmdOperator(K, dictionary, svd_tol, rank, iteration=iteration)


def predict_mean(op: DmdOperator, y) -> np.ndarray:
    """Deterministic surrogate drift K_y Psi(y); noise is the filter's job."""
    y = np.asarray(y, dtype=float)
    return op.dictionary.lift(y) @ op.K_y.T


def residual_cost(op: DmdOperator, snapshots) -> float:
    """Sum of squared Frobenius residuals ||Psi(Y1) - K Psi(Y0)||_F^2.

    Diagnostic for the refinement loop: refitting on the same data can only
    decrease this value.
    """
    arrs = _as_snapshot_list(snapshots)
    g0, g1 = _pair_matrices(arrs, op.dictionary)
    res = g1 - g0 @ op.K.T
    return float(np.sum(res * res))


@dataclass
class RefineResult:
    """History of one refinement run."""

    operators: list  # DmdOperator, length t_max + 1 (initial first)
    posterior_means: list  # per trajectory, (T, m) means from the last pass
    noise: enkf.NoiseEstimate  # averaged final estimate across trajectories
    costs: list = field(default_factory=list)  # per iteration: (before, after) on that pass's means


def _filter_observations(
    op: DmdOperator,
    observations: np.ndarray,
    noise0: enkf.NoiseEstimate,
    ensemble_size: int,
    seed_seq: np.random.SeedSequence,
    inflation: float = 1.0,
    keep_ensembles: bool = False,
):
    """Adaptive-EnKF pass of one trajectory's observations under ``op``."""
    m = op.dictionary.m
    obs_op = enkf.identity_observation(m)
    rng = np.random.default_rng(seed_seq)
    r0 = np.atleast_2d(noise0.r_hat)
    init = enkf.Ensemble(
        observations[0] + rng.standard_normal((ensemble_size, m)) @ np.linalg.cholesky(r0).T,
        k=0,
    )
    return enkf.filter_sequence(
        observations,
        op.transition,
        obs_op,
        init,
        noise0,
        rng,
        inflation=inflation,
        keep_ensembles=keep_ensembles,
    )


def refine(
    initial: DmdOperator,
    observations: Sequence[np.ndarray],
    noise0: enkf.NoiseEstimate,
    t_max: int = 3,
    ensemble_size: int = 100,
    seed: int = 0,
    inflation: float = 1.0,
) -> RefineResult:
    """Alternate filtering and refitting to polish the surrogate operator.

    Each iteration filters every trajectory's raw observations under the
    current operator (adaptive noise, fresh from ``noise0`` each pass) and
    refits the operator on the concatenated posterior means.  Returns all
    operators plus the last pass's posterior means.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    arrs = _as_snapshot_list(observations)
    ops = [initial]
    means: list[np.ndarray] = []
    costs = []
    final_noises = []
    for t in range(t_max):
        means = []
        final_noises = []
        for i, traj in enumerate(arrs):
            try:
                res = _filter_observations(
                    ops[-1],
                    traj,
                    noise0,
                    ensemble_size,
                    np.random.SeedSequence(seed, spawn_key=(t, i)),
                    inflation,
                )
            except (enkf.FilterDivergence, enkf.NumericalError) as exc:
                raise type(exc)(
                    f"filter failed on trajectory {i} at refinement iteration {t}: {exc}"
                ) from exc
            means.append(res.means)
            final_noises.append(res.noise)
        new_op = fit(means, initial.dictionary, initial.svd_tol, iteration=t + 1)
        ops.append(new_op)
        costs.append((residual_cost(ops[-2], means), residual_cost(new_op, means)))
    avg_noise = enkf.NoiseEstimate(
        np.mean([n.q_hat for n in final_noises], axis=0),
        np.mean([n.r_hat for n in final_noises], axis=0),
        alpha=noise0.alpha,
        cov_floor=noise0.cov_floor,
    )
    return RefineResult(ops, means, avg_noise, costs)


def window_update(op: DmdOperator, recent_means: np.ndarray, dictionary: Dictionary | None = None) -> DmdOperator:
    """Refit on a sliding window of posterior means.

    A degenerate window (no variation between snapshots, or rank-0 data)
    leaves the operator untouched: the previous operator is returned and a
    warning is emitted.
    """
    dictionary = dictionary or op.dictionary
    window = np.atleast_2d(np.asarray(recent_means, dtype=float))
    if window.shape[0] < dictionary.size + 1:
        warnings.warn(
            f"window of {window.shape[0]} snapshots is short for dictionary size "
            f"{dictionary.size}; update may be ill-conditioned",
            stacklevel=2,
        )
    if np.all(window == window[0]):
        warnings.warn("degenerate window (identical snapshots); keeping previous operator", stacklevel=2)
        return op
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        new_op = fit(window, dictionary, op.svd_tol, iteration=op.iteration)
    if new_op.effective_rank == 0:
        warnings.warn("degenerate window (rank 0); keeping previous operator", stacklevel=2)
        return op
    return replace(new_op, iteration=op.iteration)
