"""Perturbed-observation ensemble Kalman filter with adaptive noise estimation.

The filter runs over an arbitrary transition operator (possibly one that
consumes a per-member history of past analysis states) and, when the model
error and observation noise covariances are unknown, estimates them online
from lag-0 and lag-1 innovation statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class FilterDivergence(RuntimeError):
    """A member became non-finite during prediction."""

    def __init__(self, message, member: int | None = None, step: int | None = None):
        super().__init__(message)
        self.member = member
        self.step = step


class NumericalError(RuntimeError):
    """Innovation covariance could not be inverted even after jitter."""

    def __init__(self, message, condition: float | None = None, step: int | None = None):
        super().__init__(message)
        self.condition = condition
        self.step = step


@dataclass
class Ensemble:
    """A set of equally weighted members approximating a filtering distribution."""

    members: np.ndarray  # (N, p)
    k: int = 0

    def __post_init__(self):
        self.members = np.atleast_2d(np.asarray(self.members, dtype=float))
        if self.members.shape[0] < 2:
            raise ValueError("an ensemble needs at least 2 members")

    @property
    def size(self) -> int:
        return self.members.shape[0]

    @property
    def dim(self) -> int:
        return self.members.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.members.mean(axis=0)

    @property
    def cov(self) -> np.ndarray:
        dev = self.members - self.mean
        return dev.T @ dev / (self.size - 1)


@dataclass(frozen=True)
class LinearObservation:
    """Linear observation operator y = H x."""

    H: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "H", np.atleast_2d(np.asarray(self.H, dtype=float)))
        if not np.all(np.isfinite(self.H)):
            raise ValueError("observation matrix must be finite")

    @property
    def obs_dim(self) -> int:
        return self.H.shape[0]

    @property
    def state_dim(self) -> int:
        return self.H.shape[1]


def identity_observation(m: int) -> LinearObservation:
    return LinearObservation(np.eye(m))


@dataclass
class NoiseEstimate:
    """Adaptive estimates of model-error and observation-noise covariances.

    Updated from innovation statistics: the lag-0 product corrects the
    observation noise, the lag-1 product (lifted through the Kalman gain)
    corrects the model error.  Eigenvalues are floored at ``cov_floor``.
    """

    q_hat: np.ndarray  # (p, p)
    r_hat: np.ndarray  # (m, m)
    alpha: float = 0.02
    cov_floor: float = 1e-8
    history_len: int = 20
    prev_innovation: np.ndarray | None = None
    innovations: list = field(default_factory=list)
    prior_means: list = field(default_factory=list)

    def __post_init__(self):
        self.q_hat = _floor_spd(np.atleast_2d(np.asarray(self.q_hat, dtype=float)), self.cov_floor)
        self.r_hat = _floor_spd(np.atleast_2d(np.asarray(self.r_hat, dtype=float)), self.cov_floor)
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("smoothing factor must lie in (0, 1]")

    def copy(self) -> "NoiseEstimate":
        return NoiseEstimate(
            self.q_hat.copy(),
            self.r_hat.copy(),
            alpha=self.alpha,
            cov_floor=self.cov_floor,
            history_len=self.history_len,
            prev_innovation=None if self.prev_innovation is None else self.prev_innovation.copy(),
        )

    @classmethod
    def _bare(cls, template: "NoiseEstimate", q_hat, r_hat, prev_innovation) -> "NoiseEstimate":
        # Internal fast path: fields are already floored, skip re-validation.
        out = object.__new__(cls)
        out.q_hat = q_hat
        out.r_hat = r_hat
        out.alpha = template.alpha
        out.cov_floor = template.cov_floor
        out.history_len = template.history_len
        out.prev_innovation = prev_innovation
        out.innovations = []
        out.prior_means = []
        return out


def _floor_spd(a: np.ndarray, floor: float) -> np.ndarray:
    a = 0.5 * (a + a.T)
    if a.shape == (1, 1):
        return np.array([[max(a[0, 0], floor)]])
    vals, vecs = np.linalg.eigh(a)
    if vals[0] >= floor:
        return a
    return (vecs * np.clip(vals, floor, None)) @ vecs.T


def _sqrt_psd(a: np.ndarray) -> np.ndarray:
    """A factor L with L L^T = a; Cholesky when possible, eigen fallback."""
    a = np.atleast_2d(a)
    if a.shape == (1, 1):
        return np.sqrt(np.clip(a, 0.0, None))
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(a)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def predict(ens: Ensemble, transition, q_cov, noise_seed) -> Ensemble:
    """Propagate every member through the transition and add N(0, Q) noise."""
    rng = _as_rng(noise_seed)
    moved = np.asarray(transition(ens.members), dtype=float)
    if moved.shape != ens.members.shape:
        raise ValueError(f"transition returned shape {moved.shape}, expected {ens.members.shape}")
    finite = np.isfinite(moved).all(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise FilterDivergence(f"member {bad} diverged in prediction", member=bad, step=ens.k + 1)
    q_cov = np.atleast_2d(np.asarray(q_cov, dtype=float))
    noise = rng.standard_normal(moved.shape) @ _sqrt_psd(q_cov).T
    return Ensemble(moved + noise, k=ens.k + 1)


def kalman_gain(forecast_cov: np.ndarray, obs: LinearObservation, r_cov: np.ndarray):
    """Gain K = Sigma H^T (H Sigma H^T + R)^-1 with trace-scaled jitter."""
    H = obs.H
    cross = forecast_cov @ H.T  # (p, m)
    s = H @ cross + r_cov
    m = s.shape[0]
    jitter = 1e-10 * max(np.trace(s) / m, 1e-300)
    s_j = s + jitter * np.eye(m)
    try:
        gain = np.linalg.solve(s_j, cross.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "singular innovation covariance", condition=float(np.linalg.cond(s_j))
        ) from exc
    if not np.all(np.isfinite(gain)):
        raise NumericalError(
            "non-finite Kalman gain", condition=float(np.linalg.cond(s_j))
        )
    return gain, s_j


def _analyze_full(forecast: Ensemble, y, obs: LinearObservation, r_cov, rng, inflation=1.0):
    """Perturbed-observation update; returns extras needed by the adaptive loop."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    members = forecast.members
    mean = members.mean(axis=0)
    if inflation != 1.0:
        members = mean + inflation * (members - mean)
    dev = members - mean
    cov = dev.T @ dev / (forecast.size - 1)
    r_cov = np.atleast_2d(np.asarray(r_cov, dtype=float))
    gain, _ = kalman_gain(cov, obs, r_cov)
    eta = rng.standard_normal((forecast.size, obs.obs_dim)) @ _sqrt_psd(r_cov).T
    pseudo = members @ obs.H.T + eta
    analysis = members + (y - pseudo) @ gain.T
    prior_obs_cov = obs.H @ cov @ obs.H.T
    return Ensemble(analysis, k=forecast.k), gain, prior_obs_cov, mean


def analyze(forecast: Ensemble, y, obs: LinearObservation, r_cov, noise_seed, inflation: float = 1.0) -> Ensemble:
    """Member-wise EnKF analysis with pseudo-observations (lineage preserved)."""
    rng = _as_rng(noise_seed)
    ens, _, _, _ = _analyze_full(forecast, y, obs, r_cov, rng, inflation)
    return ens


@dataclass
class PriorStats:
    """Per-step quantities the adaptive update needs from the filter loop."""

    prior_obs_cov: np.ndarray  # H Sigma_f H^T at the current step
    linearization: np.ndarray | None = None  # transition Jacobian estimate F_k
    prev_gain: np.ndarray | None = None  # gain used at the previous step
    prev_analysis_cov_lag2: np.ndarray | None = None  # analysis spread two steps back
    obs_pinv: np.ndarray | None = None  # H^+, precomputable by the caller


def adaptive_update(
    est: NoiseEstimate, innovation, prior_stats, gain, obs: LinearObservation
) -> NoiseEstimate:
    """Secondary-filter update of (Q_hat, R_hat) from innovation products.

    Observation noise: instantaneous estimate e_k e_k^T - H Sigma_f H^T.
    Model error: the lag-1 product e_k e_{k-1}^T combined with the lag-0
    product through the previous gain recovers the true forecast covariance
    (F^-1 H+ C1 + K C0); subtracting the propagated analysis spread leaves
    an instantaneous model-error estimate.  Both estimates are blended with
    factor alpha and eigenvalue-floored.
    """
    eps = np.atleast_1d(np.asarray(innovation, dtype=float))
    if not isinstance(prior_stats, PriorStats):
        prior_stats = PriorStats(np.atleast_2d(np.asarray(prior_stats, dtype=float)))
    prior_obs_cov = np.atleast_2d(np.asarray(prior_stats.prior_obs_cov, dtype=float))
    r_inst = np.outer(eps, eps) - prior_obs_cov
    r_new = _floor_spd((1.0 - est.alpha) * est.r_hat + est.alpha * r_inst, est.cov_floor)

    q_new = est.q_hat
    have_lag = (
        est.prev_innovation is not None
        and prior_stats.linearization is not None
        and prior_stats.prev_gain is not None
        and prior_stats.prev_analysis_cov_lag2 is not None
    )
    if have_lag:
        f_mat = prior_stats.linearization
        h_pinv = prior_stats.obs_pinv
        if h_pinv is None:
            h_pinv = np.linalg.pinv(obs.H)
        lag1 = np.outer(eps, est.prev_innovation)  # C1, (m, m)
        lag0 = np.outer(est.prev_innovation, est.prev_innovation)  # C0, (m, m)
        try:
            forecast_cross = np.linalg.solve(f_mat, h_pinv @ lag1) + prior_stats.prev_gain @ lag0
        except np.linalg.LinAlgError:
            forecast_cross = None
        if forecast_cross is not None and np.all(np.isfinite(forecast_cross)):
            sigma_f = forecast_cross @ h_pinv.T  # estimate of the true forecast covariance
            q_inst = 0.5 * (sigma_f + sigma_f.T) - f_mat @ prior_stats.prev_analysis_cov_lag2 @ f_mat.T
            q_new = _floor_spd((1.0 - est.alpha) * est.q_hat + est.alpha * q_inst, est.cov_floor)

    out = NoiseEstimate._bare(est, q_new, r_new, eps.copy())
    out.innovations = (est.innovations + [eps.copy()])[-est.history_len :]
    out.prior_means = list(est.prior_means)
    return out


def initial_noise_estimate(
    observations: np.ndarray,
    state_dim: int | None = None,
    q_scale: float = 0.1,
    r_scale: float = 0.5,
    alpha: float = 0.02,
    cov_floor: float = 1e-8,
) -> NoiseEstimate:
    """First-guess covariances scaled from the sample variance of the data."""
    obs = np.atleast_2d(np.asarray(observations, dtype=float))
    m = obs.shape[1]
    p = state_dim or m
    var = obs.var(axis=0, ddof=1)
    scale = max(float(var.mean()), 1e-8)
    q0 = q_scale * scale * np.eye(p)
    r0 = r_scale * scale * np.eye(m)
    return NoiseEstimate(q0, r0, alpha=alpha, cov_floor=cov_floor)


@dataclass
class FilterResult:
    """Posterior trail of an assimilation run."""

    ensembles: list  # per-step analysis Ensemble
    means: np.ndarray  # (T, p)
    noise: NoiseEstimate | None
    gains: list | None = None
    noise_trace: list | None = None  # optional per-step (q_hat, r_hat)

    @property
    def spreads(self) -> np.ndarray:
        return np.array([np.sqrt(np.trace(e.cov) / e.dim) for e in self.ensembles])


def _transition_history_len(transition) -> int:
    return int(getattr(transition, "history_len", 1))


def filter_sequence(
    y_seq: np.ndarray,
    transition: Callable[[np.ndarray], np.ndarray],
    obs: LinearObservation,
    init: Ensemble,
    noise: NoiseEstimate | tuple,
    seed,
    inflation: float = 1.0,
    keep_ensembles: bool = True,
    keep_noise_trace: bool = False,
) -> FilterResult:
    """Alternate predict/analyze over a sequence of observations.

    ``noise`` is either a NoiseEstimate (adaptive; a copy is updated each
    step) or a fixed ``(Q, R)`` pair.  Transitions may declare
    ``history_len = d`` to receive, per member, the stacked last d analysis
    states (shape (N, d, p), newest first, padded with the oldest available
    state during warm-up).
    """
    y_seq = np.atleast_2d(np.asarray(y_seq, dtype=float))
    if y_seq.size == 0:
        raise ValueError("observation sequence must be nonempty")
    rng = _as_rng(seed)
    adaptive = isinstance(noise, NoiseEstimate)
    est = noise.copy() if adaptive else None
    if not adaptive:
        q_fixed, r_fixed = (np.atleast_2d(np.asarray(a, dtype=float)) for a in noise)

    hist_len = _transition_history_len(transition)
    history: list[np.ndarray] = [init.members.copy()]
    exact_linear = getattr(transition, "linear_matrix", None)
    obs_pinv = np.linalg.pinv(obs.H) if adaptive else None

    current = init
    ensembles: list[Ensemble] = []
    means = np.empty((y_seq.shape[0], init.dim))
    gains = []
    noise_trace = [] if keep_noise_trace else None
    prev_gain = None
    acov_lag1 = current.cov if adaptive else None
    acov_lag2 = None
    for step_idx, y in enumerate(y_seq):
        q_cov = est.q_hat if adaptive else q_fixed
        r_cov = est.r_hat if adaptive else r_fixed
        if hist_len > 1:
            stacked = _stack_history(history, hist_len)
            trans_in = lambda members, s=stacked: transition(s)  # noqa: E731
        else:
            trans_in = transition
        prev_members = current.members
        try:
            forecast = predict(current, trans_in, q_cov, rng)
            analysis, gain, prior_obs_cov, f_mean = _analyze_full(forecast, y, obs, r_cov, rng, inflation)
        except (FilterDivergence, NumericalError) as exc:
            exc.step = step_idx + 1
            raise
        innovation = y - obs.H @ f_mean
        if adaptive:
            lin = exact_linear
            if lin is None:
                lin = _ensemble_linearization(forecast.members, prev_members)
            stats = PriorStats(
                prior_obs_cov=prior_obs_cov,
                linearization=lin,
                prev_gain=prev_gain,
                prev_analysis_cov_lag2=acov_lag2,
                obs_pinv=obs_pinv,
            )
            est = adaptive_update(est, innovation, stats, gain, obs)
            est.prior_means = (est.prior_means + [f_mean])[-est.history_len :]
            acov_lag2 = acov_lag1
            acov_lag1 = analysis.cov
        current = analysis
        if hist_len > 1:
            history.append(analysis.members.copy())
            if len(history) > hist_len:
                history = history[-hist_len:]
        means[step_idx] = analysis.mean
        if keep_ensembles:
            ensembles.append(analysis)
        gains.append(gain)
        if keep_noise_trace and adaptive:
            noise_trace.append((est.q_hat.copy(), est.r_hat.copy()))
        prev_gain = gain
    return FilterResult(ensembles, means, est, gains, noise_trace)


def _ensemble_linearization(forecast_members: np.ndarray, prev_members: np.ndarray) -> np.ndarray | None:
    """Statistical transition Jacobian: cross-covariance against the prior spread."""
    n = forecast_members.shape[0]
    fdev = forecast_members - forecast_members.mean(axis=0)
    adev = prev_members - prev_members.mean(axis=0)
    cross = fdev.T @ adev / (n - 1)
    acov = adev.T @ adev / (n - 1)
    p = acov.shape[0]
    ridge = 1e-8 * max(np.trace(acov) / p, 1e-300)
    try:
        return np.linalg.solve(acov + ridge * np.eye(p), cross.T).T
    except np.linalg.LinAlgError:
        return None


def _stack_history(history: Sequence[np.ndarray], d: int) -> np.ndarray:
    """(N, d, p) member histories, newest first, oldest entry repeated to pad."""
    padded = list(history)
    while len(padded) < d:
        padded.insert(0, padded[0])
    recent = padded[-d:][::-1]
    return np.stack(recent, axis=1)
