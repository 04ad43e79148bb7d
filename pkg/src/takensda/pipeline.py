"""Offline surrogate construction and online state estimation.

The offline stage fits (and refines) a transition surrogate for the denoised
observations, filters the training observations with it, and learns a map
from delay vectors of the filtered observations to full model states.  The
online stage filters a fresh observation stream, assembles per-particle
delay samples, and pushes them through the reconstruction map to approximate
the filtering distribution of the hidden state.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dmd, embedding, models
from . import ensemble_filter as enkf
from . import reconstruction as recon
from .config import ExperimentConfig, build_ic_sampler, to_dict


class PipelineError(RuntimeError):
    pass


@dataclass
class SurrogateBundle:
    """Everything the online stage needs: transition surrogate + reconstruction map."""

    method: str  # dmd_t | knn_t
    transition: object  # DmdOperator (dmd_t) or AnalogLibrary of successors (knn_t)
    recon_method: str  # regressor | analog_lc | analog_ll
    reconstructor: object  # RegressorSpec or AnalogLibrary of states
    delay: int
    noise: enkf.NoiseEstimate
    config: dict = field(default_factory=dict)
    train_report: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method == "dmd_t":
            if not isinstance(self.transition, dmd.DmdOperator):
                raise PipelineError("dmd_t bundle requires a DmdOperator transition")
        elif self.method == "knn_t":
            if not (
                isinstance(self.transition, recon.AnalogLibrary)
                and self.transition.value_role == "successor"
            ):
                raise PipelineError("knn_t bundle requires a successor AnalogLibrary")
        else:
            raise PipelineError(f"unknown surrogate method {self.method!r}")
        if self.recon_method == "regressor":
            if not isinstance(self.reconstructor, recon.RegressorSpec):
                raise PipelineError("regressor reconstruction requires a RegressorSpec")
        elif self.recon_method in ("analog_lc", "analog_ll"):
            if not (
                isinstance(self.reconstructor, recon.AnalogLibrary)
                and self.reconstructor.value_role == "state"
            ):
                raise PipelineError("analog reconstruction requires a state AnalogLibrary")
        else:
            raise PipelineError(f"unknown reconstruction method {self.recon_method!r}")
        if self.delay < 1:
            raise PipelineError("delay must be >= 1")

    @property
    def obs_dim(self) -> int:
        if self.method == "dmd_t":
            return self.transition.dictionary.m
        return self.transition.values.shape[1]


@dataclass
class PosteriorStateEstimate:
    """Sample approximation of the state filtering distribution at one step."""

    k: int  # 1-based position in the observation stream
    mean: np.ndarray  # (n,)
    cov: np.ndarray  # (n, n)
    spread: float  # sqrt(trace(cov) / n)
    samples: np.ndarray | None = None  # (N, n), kept on request
    delay_samples: np.ndarray | None = None  # (N, d*m), kept on request

    @classmethod
    def from_samples(cls, k: int, samples: np.ndarray, keep_samples: bool = False, delay_samples=None):
        samples = np.asarray(samples, dtype=float)
        mean = samples.mean(axis=0)
        dev = samples - mean
        cov = dev.T @ dev / max(samples.shape[0] - 1, 1)
        spread = float(np.sqrt(np.trace(cov) / samples.shape[1]))
        return cls(
            k,
            mean,
            cov,
            spread,
            samples=samples if keep_samples else None,
            delay_samples=delay_samples if keep_samples else None,
        )


@dataclass
class OnlineRecord:
    """Per-step output: filtered observation plus, after warm-up, a state estimate."""

    k: int
    obs_mean: np.ndarray
    obs_spread: float
    estimate: PosteriorStateEstimate | None


@dataclass
class OnlineResult:
    records: list
    noise: enkf.NoiseEstimate | None
    final_transition: object = None

    @property
    def estimates(self) -> list:
        return [r.estimate for r in self.records if r.estimate is not None]


# ---------------------------------------------------------------------------
# Analog transition (history-dependent surrogate drift)
# ---------------------------------------------------------------------------


class AnalogTransition:
    """Surrogate drift that forecasts from each member's own delay history."""

    def __init__(self, library: recon.AnalogLibrary, n_neighbors: int, operator: str = "lc",
                 kernel_scale: float | None = None, delay: int = 1):
        if library.size < n_neighbors:
            raise PipelineError(
                f"analog library of {library.size} entries cannot serve {n_neighbors} neighbors"
            )
        if operator not in ("lc", "ll"):
            raise PipelineError(f"unknown analog operator {operator!r}")
        self.library = library
        self.n_neighbors = n_neighbors
        self.operator = operator
        self.kernel_scale = kernel_scale
        self.history_len = delay

    def __call__(self, member_histories: np.ndarray) -> np.ndarray:
        # (N, d, m) newest first -> flattened delay vectors (N, d*m).
        n = member_histories.shape[0]
        queries = member_histories.reshape(n, -1)
        apply = recon.lc_apply_batch if self.operator == "lc" else recon.ll_apply_batch
        return apply(self.library, queries, self.n_neighbors, self.kernel_scale)


# ---------------------------------------------------------------------------
# Offline stage
# ---------------------------------------------------------------------------


def _resolve_delay(cfg: ExperimentConfig, series: np.ndarray) -> int:
    if cfg.embedding.delay == "auto":
        res = embedding.estimate_delay_fnn(
            series,
            d_max=cfg.embedding.fnn_d_max,
            r_tol=cfg.embedding.fnn_r_tol,
            threshold=cfg.embedding.fnn_threshold,
        )
        if not res.converged:
            warnings.warn("false-nearest-neighbor fraction never dropped below threshold")
        return res.d
    return int(cfg.embedding.delay)


def _initial_noise(cfg: ExperimentConfig, observations: np.ndarray, state_dim: int) -> enkf.NoiseEstimate:
    return enkf.initial_noise_estimate(
        observations.reshape(-1, observations.shape[-1]),
        state_dim=state_dim,
        q_scale=cfg.filter.q_init_scale,
        r_scale=cfg.filter.r_init_scale,
        alpha=cfg.filter.smoothing,
        cov_floor=cfg.filter.cov_floor,
    )


def _reconstruction_pairs(mean_trails, states, delay):
    inputs, targets = [], []
    for means, xs in zip(mean_trails, states):
        inputs.append(embedding.delay_block_view(means, delay))
        targets.append(xs[delay - 1 :])
    return np.vstack(inputs), np.vstack(targets)


def _build_reconstructor(cfg: ExperimentConfig, inputs, targets, obs_noise_std=None):
    rc = cfg.reconstruction
    if rc.method == "regressor":
        spec = recon.RegressorSpec(
            hidden=tuple(rc.hidden) if rc.hidden else (),
            epochs=rc.epochs,
            batch_size=rc.batch_size,
            learning_rate=rc.learning_rate,
            optimizer=rc.optimizer,
            seed=rc.seed,
        )
        if rc.input_noise > 0.0 and obs_noise_std is not None:
            # Robustify against per-particle input noise: add symmetric
            # perturbed replicas of the training inputs.
            d_blocks = inputs.shape[1] // obs_noise_std.shape[0]
            scale = rc.input_noise * np.tile(obs_noise_std, d_blocks)
            rng = np.random.default_rng(np.random.SeedSequence(rc.seed, spawn_key=(1,)))
            eta = rng.standard_normal(inputs.shape) * scale
            inputs = np.vstack([inputs, inputs + eta, inputs - eta])
            targets = np.vstack([targets, targets, targets])
        dataset = recon.ReconstructionDataset(inputs, targets)
        return recon.train_regressor(dataset, spec)
    return recon.AnalogLibrary(inputs, targets, "state", rc.analog_kernel_scale)


def _reconstruct_batch(bundle: SurrogateBundle, delay_vectors: np.ndarray, cfg: ExperimentConfig) -> np.ndarray:
    if bundle.recon_method == "regressor":
        return recon.predict_regressor(bundle.reconstructor, delay_vectors)
    apply = recon.lc_apply_batch if bundle.recon_method == "analog_lc" else recon.ll_apply_batch
    return apply(
        bundle.reconstructor,
        delay_vectors,
        cfg.reconstruction.analog_neighbors,
        cfg.reconstruction.analog_kernel_scale,
    )


def offline_dmdt(data: models.TrajectorySet, cfg: ExperimentConfig) -> SurrogateBundle:
    """Fit, refine, and package the linear-dictionary surrogate (offline stage)."""
    obs_list = list(data.observations)
    m = data.observations.shape[2]
    dictionary = (
        dmd.identity_dictionary(m)
        if cfg.surrogate.dictionary == "identity"
        else dmd.polynomial_dictionary(m, 2)
    )
    k0 = dmd.fit(obs_list, dictionary, cfg.surrogate.svd_tol)
    noise0 = _initial_noise(cfg, data.observations, dictionary.m)
    n_off = cfg.filter.offline_ensemble_size or cfg.filter.ensemble_size
    result = dmd.refine(
        k0,
        obs_list,
        noise0,
        t_max=cfg.surrogate.refine_iterations,
        ensemble_size=n_off,
        seed=cfg.filter.seed,
        inflation=cfg.filter.inflation,
    )
    delay = _resolve_delay(cfg, result.posterior_means[0])
    if data.length <= delay:
        raise PipelineError(f"trajectory length {data.length} too short for delay {delay}")
    inputs, targets = _reconstruction_pairs(result.posterior_means, list(data.states), delay)
    obs_noise_std = np.sqrt(np.diag(result.noise.r_hat))
    reconstructor = _build_reconstructor(cfg, inputs, targets, obs_noise_std)
    report = {
        "refine_costs": result.costs,
        "effective_rank": result.operators[-1].effective_rank,
        "train_pairs": int(inputs.shape[0]),
    }
    if cfg.reconstruction.method == "regressor":
        report["final_loss"] = reconstructor.final_loss
    return SurrogateBundle(
        "dmd_t",
        result.operators[-1],
        cfg.reconstruction.method,
        reconstructor,
        delay,
        result.noise,
        config=to_dict(cfg),
        train_report=report,
    )


def offline_knnt(data: models.TrajectorySet, cfg: ExperimentConfig) -> SurrogateBundle:
    """Build analog libraries and denoise the training observations (offline stage)."""
    m = data.observations.shape[2]
    delay = _resolve_delay(cfg, data.observations[0])
    if data.length <= delay:
        raise PipelineError(f"trajectory length {data.length} too short for delay {delay}")

    # Transition library: raw delay vectors keyed to successor observations.
    keys, values = [], []
    for y in data.observations:
        view = embedding.delay_block_view(y, delay)
        keys.append(view[:-1])
        values.append(y[delay:])
    transition_lib = recon.AnalogLibrary(
        np.vstack(keys), np.vstack(values), "successor", cfg.surrogate.analog_kernel_scale
    )
    transition = AnalogTransition(
        transition_lib,
        cfg.surrogate.analog_neighbors,
        cfg.surrogate.analog_operator,
        cfg.surrogate.analog_kernel_scale,
        delay,
    )

    noise0 = _initial_noise(cfg, data.observations, m)
    n_off = cfg.filter.offline_ensemble_size or cfg.filter.ensemble_size
    obs_op = enkf.identity_observation(m)
    mean_trails = []
    final_noises = []
    for i, y in enumerate(data.observations):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.filter.seed, spawn_key=(0, i)))
        r0 = np.atleast_2d(noise0.r_hat)
        init = enkf.Ensemble(y[0] + rng.standard_normal((n_off, m)) @ np.linalg.cholesky(r0).T)
        try:
            res = enkf.filter_sequence(
                y, transition, obs_op, init, noise0, rng,
                inflation=cfg.filter.inflation, keep_ensembles=False,
            )
        except (enkf.FilterDivergence, enkf.NumericalError) as exc:
            raise PipelineError(f"offline filtering failed on trajectory {i}: {exc}") from exc
        mean_trails.append(res.means)
        final_noises.append(res.noise)

    inputs, targets = _reconstruction_pairs(mean_trails, list(data.states), delay)
    rc_method = cfg.reconstruction.method
    if rc_method == "regressor":
        obs_noise_std = np.sqrt(np.mean([np.diag(n.r_hat) for n in final_noises], axis=0))
        reconstructor = _build_reconstructor(cfg, inputs, targets, obs_noise_std)
    else:
        reconstructor = recon.AnalogLibrary(inputs, targets, "state", cfg.reconstruction.analog_kernel_scale)
    if reconstructor is not None and rc_method != "regressor":
        if reconstructor.size < cfg.reconstruction.analog_neighbors:
            raise PipelineError(
                f"reconstruction library of {reconstructor.size} entries cannot serve "
                f"{cfg.reconstruction.analog_neighbors} neighbors"
            )
    avg_noise = enkf.NoiseEstimate(
        np.mean([n.q_hat for n in final_noises], axis=0),
        np.mean([n.r_hat for n in final_noises], axis=0),
        alpha=noise0.alpha,
        cov_floor=noise0.cov_floor,
    )
    report = {
        "transition_entries": transition_lib.size,
        "reconstruction_entries": int(inputs.shape[0]),
    }
    return SurrogateBundle(
        "knn_t",
        transition_lib,
        rc_method,
        reconstructor,
        delay,
        avg_noise,
        config=to_dict(cfg),
        train_report=report,
    )


def offline(data: models.TrajectorySet, cfg: ExperimentConfig) -> SurrogateBundle:
    if cfg.surrogate.method == "dmd_t":
        return offline_dmdt(data, cfg)
    return offline_knnt(data, cfg)


# ---------------------------------------------------------------------------
# Online stage
# ---------------------------------------------------------------------------


def _bundle_transition(bundle: SurrogateBundle, cfg: ExperimentConfig, operator=None):
    if bundle.method == "dmd_t":
        op = operator if operator is not None else bundle.transition
        return op.transition
    return AnalogTransition(
        bundle.transition,
        cfg.surrogate.analog_neighbors,
        cfg.surrogate.analog_operator,
        cfg.surrogate.analog_kernel_scale,
        bundle.delay,
    )


def online(
    bundle: SurrogateBundle,
    y_stream: np.ndarray,
    cfg: ExperimentConfig,
    seed: int = 0,
    keep_samples: bool = False,
) -> OnlineResult:
    """Filter a fresh observation stream and reconstruct state estimates.

    Warm-up steps (k < d) emit observation-only records.  For the linear
    surrogate the transition matrix is refit on a sliding window of
    posterior means at the configured cadence.
    """
    y_stream = np.atleast_2d(np.asarray(y_stream, dtype=float))
    if y_stream.ndim == 1:
        y_stream = y_stream[:, None]
    m = bundle.obs_dim
    if y_stream.shape[1] != m:
        raise PipelineError(f"stream dimension {y_stream.shape[1]} does not match bundle m={m}")
    d = bundle.delay
    n_ens = cfg.filter.ensemble_size
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    obs_op = enkf.identity_observation(m)

    est = bundle.noise.copy() if cfg.filter.adaptive else None
    fixed = None
    if est is None:
        fixed = (np.atleast_2d(bundle.noise.q_hat), np.atleast_2d(bundle.noise.r_hat))
    r0 = np.atleast_2d(bundle.noise.r_hat)
    members = y_stream[0] + rng.standard_normal((n_ens, m)) @ enkf._sqrt_psd(r0).T
    current = enkf.Ensemble(members, k=0)

    operator = bundle.transition if bundle.method == "dmd_t" else None
    transition = _bundle_transition(bundle, cfg, operator)
    window_len = cfg.surrogate.window_length or int(
        bundle.config.get("dataset", {}).get("length", 0)
    ) or y_stream.shape[0]
    cadence = cfg.surrogate.update_cadence
    if cadence is None:
        cadence = max(window_len // 2, 1)
    do_window = bundle.method == "dmd_t" and cadence > 0

    hist_len = d if bundle.method == "knn_t" else 1
    history = [current.members.copy()]
    trail: list[enkf.Ensemble] = []
    means_hist: list[np.ndarray] = []
    records: list[OnlineRecord] = []
    obs_pinv = np.eye(m)
    prev_gain = None
    acov_lag1 = current.cov
    acov_lag2 = None
    exact_linear = getattr(transition, "linear_matrix", None)

    for idx, y in enumerate(y_stream):
        k = idx + 1
        q_cov = est.q_hat if est is not None else fixed[0]
        r_cov = est.r_hat if est is not None else fixed[1]
        if hist_len > 1:
            stacked = enkf._stack_history(history, hist_len)
            trans_in = lambda mem, s=stacked: transition(s)  # noqa: E731
        else:
            trans_in = transition
        prev_members = current.members
        try:
            forecast = enkf.predict(current, trans_in, q_cov, rng)
            analysis, gain, prior_obs_cov, f_mean = enkf._analyze_full(
                forecast, y, obs_op, r_cov, rng, cfg.filter.inflation
            )
        except (enkf.FilterDivergence, enkf.NumericalError) as exc:
            exc.step = k
            raise
        if est is not None:
            lin = exact_linear
            if lin is None:
                lin = enkf._ensemble_linearization(forecast.members, prev_members)
            stats = enkf.PriorStats(prior_obs_cov, lin, prev_gain, acov_lag2, obs_pinv)
            est = enkf.adaptive_update(est, y - f_mean, stats, gain, obs_op)
            acov_lag2 = acov_lag1
            acov_lag1 = analysis.cov
        prev_gain = gain
        current = analysis
        if hist_len > 1:
            history.append(analysis.members.copy())
            history = history[-hist_len:]
        trail.append(analysis)
        trail = trail[-d:]
        means_hist.append(analysis.mean)

        obs_spread = float(np.sqrt(np.trace(analysis.cov) / m))
        if k >= d:
            delay_ens = embedding.assemble_samples(trail, d)
            states = _reconstruct_batch(bundle, delay_ens.samples, cfg)
            estimate = PosteriorStateEstimate.from_samples(
                k, states, keep_samples=keep_samples, delay_samples=delay_ens.samples
            )
        else:
            estimate = None
        records.append(OnlineRecord(k, analysis.mean.copy(), obs_spread, estimate))

        if do_window and k >= window_len and k % cadence == 0:
            window = np.asarray(means_hist[-window_len:])
            operator = dmd.window_update(operator, window, operator.dictionary)
            transition = _bundle_transition(bundle, cfg, operator)
            exact_linear = getattr(transition, "linear_matrix", None)

    final_transition = operator if bundle.method == "dmd_t" else bundle.transition
    return OnlineResult(records, est, final_transition)


def online_dmdt(bundle, y_stream, cfg, seed=0, keep_samples=False) -> OnlineResult:
    if bundle.method != "dmd_t":
        raise PipelineError("bundle method is not dmd_t")
    return online(bundle, y_stream, cfg, seed, keep_samples)


def online_knnt(bundle, y_stream, cfg, seed=0, keep_samples=False) -> OnlineResult:
    if bundle.method != "knn_t":
        raise PipelineError("bundle method is not knn_t")
    return online(bundle, y_stream, cfg, seed, keep_samples)


# ---------------------------------------------------------------------------
# Reference filter on the true model (for method comparisons)
# ---------------------------------------------------------------------------


def oracle_enkf(
    model: models.ModelSpec,
    obs_spec: models.ObservationSpec,
    y_stream: np.ndarray,
    cfg: ExperimentConfig,
    seed: int = 0,
    noise: str = "adaptive",
) -> OnlineResult:
    """EnKF with the true dynamics (the model-informed comparison baseline).

    ``noise`` selects how the error statistics are handled: "adaptive"
    estimates them online like every other filter here (the setting the
    surrogates operate in), "exact" uses the true process and observation
    covariances.
    """
    y_stream = np.atleast_2d(np.asarray(y_stream, dtype=float))
    n = model.state_dim
    n_ens = cfg.filter.ensemble_size
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    sampler = build_ic_sampler(cfg, model)
    members = np.stack([sampler(rng) for _ in range(n_ens)])
    init = enkf.Ensemble(members, k=0)
    step = models.step_fn(model)
    zero_noise = np.zeros((n_ens, max(model.noise_dim, 1)))
    transition = lambda mem: step(mem, zero_noise)  # noqa: E731
    q_true = models.process_noise_cov(model)
    if np.trace(q_true) == 0.0:
        q_true = 1e-10 * np.eye(n)
    if noise == "exact":
        noise_arg = (q_true, np.asarray(obs_spec.noise_cov, dtype=float))
    elif noise == "adaptive":
        est0 = enkf.initial_noise_estimate(
            y_stream,
            state_dim=n,
            q_scale=cfg.filter.q_init_scale,
            r_scale=cfg.filter.r_init_scale,
            alpha=cfg.filter.smoothing,
            cov_floor=cfg.filter.cov_floor,
        )
        noise_arg = est0
    else:
        raise PipelineError(f"unknown oracle noise mode {noise!r}")
    obs_op = enkf.LinearObservation(obs_spec.as_matrix())
    res = enkf.filter_sequence(
        y_stream,
        transition,
        obs_op,
        init,
        noise_arg,
        rng,
        inflation=cfg.filter.inflation,
    )
    records = []
    for idx, ens in enumerate(res.ensembles):
        est = PosteriorStateEstimate.from_samples(idx + 1, ens.members)
        obs_mean = obs_op.H @ est.mean
        records.append(OnlineRecord(idx + 1, obs_mean, est.spread, est))
    return OnlineResult(records, None, None)


# ---------------------------------------------------------------------------
# Metrics and density evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    rmse: float
    spread: float
    steps: int


def compute_metrics(estimates, truth: np.ndarray, skip_warmup: int = 0) -> Metrics:
    """Time-and-dimension normalized error and ensemble spread.

    ``estimates`` may be OnlineRecords or PosteriorStateEstimates; records
    without a state estimate (warm-up) are skipped on both sides, as are the
    first ``skip_warmup`` stream positions.
    """
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    pairs = []
    for item in estimates:
        est = item.estimate if isinstance(item, OnlineRecord) else item
        if est is None or est.k <= skip_warmup:
            continue
        if est.k > truth.shape[0]:
            raise PipelineError("estimate index beyond the truth sequence")
        pairs.append((est, truth[est.k - 1]))
    if not pairs:
        raise PipelineError("no estimates to score")
    n = truth.shape[1]
    se = 0.0
    tr = 0.0
    for est, x in pairs:
        diff = est.mean - x
        se += float(diff @ diff)
        tr += float(np.trace(est.cov))
    t_count = len(pairs)
    return Metrics(
        rmse=float(np.sqrt(se / (n * t_count))),
        spread=float(np.sqrt(tr / (n * t_count))),
        steps=t_count,
    )


def component_relative_error(estimates, truth: np.ndarray, component: int) -> float:
    """||mean_c - truth_c|| / ||truth_c|| over the scored steps."""
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    num = 0.0
    den = 0.0
    for item in estimates:
        est = item.estimate if isinstance(item, OnlineRecord) else item
        if est is None:
            continue
        x = truth[est.k - 1, component]
        num += (est.mean[component] - x) ** 2
        den += x**2
    if den == 0.0:
        raise PipelineError("truth component is identically zero")
    return float(np.sqrt(num / den))


def silverman_bandwidth(samples: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if samples.ndim == 1:
        std = samples.std(ddof=1) if n > 1 else 1.0
    else:
        std = float(np.mean(samples.std(axis=0, ddof=1))) if n > 1 else 1.0
    std = std if std > 0 else 1.0
    return float(1.06 * std * n ** (-1.0 / 5.0))


def kde_eval(samples: np.ndarray, bandwidth: float, grid) -> np.ndarray:
    """Gaussian-kernel density on a grid; samples in R^1 or R^2.

    1-D: ``grid`` is an array of points.  2-D: ``grid`` is a pair of axis
    arrays and the result has shape (len(g1), len(g2)).
    """
    samples = np.asarray(samples, dtype=float)
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    if samples.ndim == 1 or (samples.ndim == 2 and samples.shape[1] == 1):
        x = samples.reshape(-1)
        g = np.asarray(grid, dtype=float)
        z = (g[:, None] - x[None, :]) / bandwidth
        return np.exp(-0.5 * z * z).sum(axis=1) / (x.size * bandwidth * np.sqrt(2 * np.pi))
    if samples.ndim == 2 and samples.shape[1] == 2:
        g1, g2 = (np.asarray(g, dtype=float) for g in grid)
        z1 = (g1[:, None] - samples[None, :, 0]) / bandwidth
        z2 = (g2[:, None] - samples[None, :, 1]) / bandwidth
        k1 = np.exp(-0.5 * z1 * z1)
        k2 = np.exp(-0.5 * z2 * z2)
        dens = k1 @ k2.T / (samples.shape[0] * 2 * np.pi * bandwidth**2)
        return dens
    raise ValueError("kde_eval supports 1-D or 2-D samples")
