"""Benchmark dynamical systems: trajectory generation and observation operators.

Four systems are provided: a noisy pendulum, a three-mode interaction SDE,
the (shifted) Lorenz 63 system, and a 1-D Allen-Cahn equation on a periodic
grid.  Each system exposes a one-step map; datasets bundle ground-truth
states with noisy observations of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ALLEN_CAHN_GRID = 100

STATE_DIMS = {"pendulum": 2, "triad": 3, "lorenz63": 3, "allen_cahn": ALLEN_CAHN_GRID}


class ModelError(ValueError):
    """Invalid model or observation configuration."""


@dataclass(frozen=True)
class PendulumParams:
    g: float = 9.8
    l: float = 20.0
    sigma1_sq: float = 0.002
    sigma2_sq: float = 0.002


@dataclass(frozen=True)
class TriadParams:
    omega: float = 0.75
    gamma: float = 0.5
    beta: float = 1.0
    a: float = 1.0
    sigma: float = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class Lorenz63Params:
    a: float = 10.0
    b: float = 8.0 / 3.0
    r: float = 28.0
    g1: float = 0.05
    g2: float = 0.05
    g3: float = 0.05


@dataclass(frozen=True)
class AllenCahnParams:
    eps: float = 1e-4
    theta: float = 5.0


PARAM_TYPES = {
    "pendulum": PendulumParams,
    "triad": TriadParams,
    "lorenz63": Lorenz63Params,
    "allen_cahn": AllenCahnParams,
}

DEFAULT_DT = {"pendulum": 0.05, "triad": 0.1, "lorenz63": 0.01, "allen_cahn": 1.0 / 500}


@dataclass(frozen=True)
class ModelSpec:
    """One of the benchmark systems together with its step size and noise scales."""

    kind: str
    params: object
    dt: float

    def __post_init__(self):
        if self.kind not in STATE_DIMS:
            raise ModelError(f"unknown model kind {self.kind!r}")
        if not isinstance(self.params, PARAM_TYPES[self.kind]):
            raise ModelError(f"params type does not match model kind {self.kind!r}")
        if not self.dt > 0:
            raise ModelError("dt must be positive")
        for name, value in vars(self.params).items():
            if name.startswith("sigma") or name.startswith("g"):
                if isinstance(value, float) and value < 0 and name != "g":
                    raise ModelError(f"noise scale {name} must be >= 0")

    @property
    def state_dim(self) -> int:
        return STATE_DIMS[self.kind]

    @property
    def noise_dim(self) -> int:
        return {"pendulum": 2, "triad": 2, "lorenz63": 3, "allen_cahn": 0}[self.kind]


def default_model_spec(kind: str, dt: float | None = None, **params) -> ModelSpec:
    return ModelSpec(kind, PARAM_TYPES[kind](**params), DEFAULT_DT[kind] if dt is None else dt)


# ---------------------------------------------------------------------------
# One-step maps.  All accept states with arbitrary leading batch dimensions;
# the state lives in the trailing axis.  Euler-Maruyama noise draws are
# standard normal; scaling is applied here.
# ---------------------------------------------------------------------------


def step_pendulum(state, params: PendulumParams, dt: float, noise_draw) -> np.ndarray:
    """Euler-Maruyama step of the noisy pendulum.

    ``noise_draw`` holds the Brownian increments of the step (entries with
    variance dt when simulating); the intensities sigma1/sigma2 scale them.
    """
    state = np.asarray(state, dtype=float)
    noise = np.asarray(noise_draw, dtype=float)
    omega, phi = state[..., 0], state[..., 1]
    s1 = np.sqrt(params.sigma1_sq)
    s2 = np.sqrt(params.sigma2_sq)
    return np.stack(
        [
            omega - dt * (params.g / params.l) * np.sin(phi) + s1 * noise[..., 0],
            phi + dt * omega + s2 * noise[..., 1],
        ],
        axis=-1,
    )


def step_triad(state, params: TriadParams, dt: float, noise_draw) -> np.ndarray:
    """Euler-Maruyama step of the three-mode interaction SDE.

    Drift is L x - D x + B(x, x) with a skew coupling L, damping D on the
    second and third components, and the energy-conserving quadratic term
    B(x, x) = (0, a*u*w, -a*u*v).  Noise enters components 2 and 3 only.
    """
    state = np.asarray(state, dtype=float)
    noise = np.asarray(noise_draw, dtype=float)
    u, v, w = state[..., 0], state[..., 1], state[..., 2]
    p = params
    drift_u = p.omega * v
    drift_v = -2.0 * p.omega * u - p.beta * w - p.gamma * v + p.a * u * w
    drift_w = p.beta * v - p.gamma * w - p.a * u * v
    root_dt = np.sqrt(dt)
    return np.stack(
        [
            u + dt * drift_u,
            v + dt * drift_v + p.sigma * root_dt * noise[..., 0],
            w + dt * drift_w + p.sigma * root_dt * noise[..., 1],
        ],
        axis=-1,
    )


def step_lorenz63(state, params: Lorenz63Params, dt: float, noise_draw) -> np.ndarray:
    """Euler-Maruyama step of the shifted Lorenz 63 system.

    The third component is shifted so the attractor sits around
    v3 = -(r + a); the drift is a(v2-v1), -a*v1 - v2 - v1*v3,
    v1*v2 - b*v3 - b(r+a).
    """
    state = np.asarray(state, dtype=float)
    noise = np.asarray(noise_draw, dtype=float)
    v1, v2, v3 = state[..., 0], state[..., 1], state[..., 2]
    p = params
    drift1 = p.a * (v2 - v1)
    drift2 = -p.a * v1 - v2 - v1 * v3
    drift3 = v1 * v2 - p.b * v3 - p.b * (p.r + p.a)
    root_dt = np.sqrt(dt)
    return np.stack(
        [
            v1 + dt * drift1 + p.g1 * root_dt * noise[..., 0],
            v2 + dt * drift2 + p.g2 * root_dt * noise[..., 1],
            v3 + dt * drift3 + p.g3 * root_dt * noise[..., 2],
        ],
        axis=-1,
    )


def allen_cahn_grid(n: int = ALLEN_CAHN_GRID) -> np.ndarray:
    """Periodic grid of n points on [-1, 1)."""
    return -1.0 + 2.0 * np.arange(n) / n


def _laplacian_symbol(n: int, dx: float) -> np.ndarray:
    # Fourier eigenvalues of the periodic second-difference operator.
    c = np.zeros(n)
    c[0] = -2.0 / dx**2
    c[1] = 1.0 / dx**2
    c[-1] = 1.0 / dx**2
    return np.fft.fft(c)


def step_allen_cahn(field, params: AllenCahnParams, dt: float) -> np.ndarray:
    """Semi-implicit step: Crank-Nicolson diffusion, explicit reaction.

    (I - dt/2 * eps * L) u' = (I + dt/2 * eps * L) u - dt * theta * (u^3 - u)
    with L the periodic second-difference Laplacian.  The circulant system
    is solved exactly in Fourier space.
    """
    u = np.asarray(field, dtype=float)
    n = u.shape[-1]
    dx = 2.0 / n
    lam = _laplacian_symbol(n, dx)
    denom = 1.0 - 0.5 * dt * params.eps * lam
    if np.any(np.abs(denom) < 1e-14):
        raise ModelError("singular Crank-Nicolson system; check eps and dt")
    rhs = u + 0.5 * dt * params.eps * np.fft.ifft(lam * np.fft.fft(u, axis=-1), axis=-1).real
    rhs = rhs - dt * params.theta * (u**3 - u)
    out = np.fft.ifft(np.fft.fft(rhs, axis=-1) / denom, axis=-1).real
    return out


def step_fn(model: ModelSpec) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Batched one-step map (state, noise_draw) -> next state for a model."""
    if model.kind == "pendulum":
        return lambda x, z: step_pendulum(x, model.params, model.dt, z)
    if model.kind == "triad":
        return lambda x, z: step_triad(x, model.params, model.dt, z)
    if model.kind == "lorenz63":
        return lambda x, z: step_lorenz63(x, model.params, model.dt, z)
    if model.kind == "allen_cahn":
        return lambda x, z: step_allen_cahn(x, model.params, model.dt)
    raise ModelError(model.kind)


def process_noise_cov(model: ModelSpec) -> np.ndarray:
    """Covariance of the additive noise of one discrete step."""
    n = model.state_dim
    q = np.zeros((n, n))
    p = model.params
    if model.kind == "pendulum":
        q[0, 0] = p.sigma1_sq * model.dt
        q[1, 1] = p.sigma2_sq * model.dt
    elif model.kind == "triad":
        q[1, 1] = q[2, 2] = p.sigma**2 * model.dt
    elif model.kind == "lorenz63":
        q[0, 0] = p.g1**2 * model.dt
        q[1, 1] = p.g2**2 * model.dt
        q[2, 2] = p.g3**2 * model.dt
    return q


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObservationSpec:
    """Linear observation operator plus Gaussian noise covariance.

    kind is one of:
      selector -- pick state components by index,
      matrix   -- arbitrary linear map,
      sum      -- sum of all state components (m = 1).
    """

    kind: str
    state_dim: int
    indices: tuple[int, ...] | None = None
    matrix: np.ndarray | None = None
    noise_cov: np.ndarray = field(default=None)  # (m, m)

    def __post_init__(self):
        H = self.as_matrix()
        R = np.asarray(self.noise_cov, dtype=float)
        if R.shape != (H.shape[0], H.shape[0]):
            raise ModelError(f"noise covariance shape {R.shape} does not match m={H.shape[0]}")
        if not np.allclose(R, R.T):
            raise ModelError("noise covariance must be symmetric")
        if np.any(np.linalg.eigvalsh(R) < -1e-12):
            raise ModelError("noise covariance must be positive semi-definite")

    @property
    def obs_dim(self) -> int:
        return self.as_matrix().shape[0]

    def as_matrix(self) -> np.ndarray:
        n = self.state_dim
        if self.kind == "selector":
            H = np.zeros((len(self.indices), n))
            for row, idx in enumerate(self.indices):
                if not 0 <= idx < n:
                    raise ModelError(f"selector index {idx} out of range for n={n}")
                H[row, idx] = 1.0
            return H
        if self.kind == "matrix":
            H = np.asarray(self.matrix, dtype=float)
            if H.ndim != 2 or H.shape[1] != n:
                raise ModelError(f"matrix shape {H.shape} does not map R^{n}")
            return H
        if self.kind == "sum":
            return np.ones((1, n))
        raise ModelError(f"unknown observation kind {self.kind!r}")


def selector_observation(state_dim: int, indices, noise_var) -> ObservationSpec:
    m = len(indices)
    return ObservationSpec(
        "selector", state_dim, indices=tuple(indices), noise_cov=np.atleast_1d(noise_var) * np.eye(m)
    )


def observe(x, spec: ObservationSpec, noise_draw) -> np.ndarray:
    """Apply the observation operator: h(x) + noise_draw."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.state_dim:
        raise ModelError(f"state dim {x.shape[-1]} does not match spec n={spec.state_dim}")
    H = spec.as_matrix()
    return x @ H.T + np.asarray(noise_draw, dtype=float)


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectorySet:
    """M trajectories of paired states and noisy observations."""

    states: np.ndarray  # (M, T, n)
    observations: np.ndarray  # (M, T, m)
    seed: int
    model: ModelSpec | None = None
    observation: ObservationSpec | None = None

    def __post_init__(self):
        if self.states.ndim != 3 or self.observations.ndim != 3:
            raise ModelError("states/observations must be (M, T, dim) arrays")
        if self.states.shape[:2] != self.observations.shape[:2]:
            raise ModelError("states and observations must align in (M, T)")

    @property
    def num_trajectories(self) -> int:
        return self.states.shape[0]

    @property
    def length(self) -> int:
        return self.states.shape[1]


_ROLE_INIT, _ROLE_PROCESS, _ROLE_OBS = 0, 1, 2


def _stream(seed: int, traj: int, role: int) -> np.random.Generator:
    # One independent stream per (trajectory, role): changing M or T leaves
    # every other trajectory's draws untouched.
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(traj, role)))


def gaussian_ic_sampler(mean, cov_diag) -> Callable[[np.random.Generator], np.ndarray]:
    mean = np.asarray(mean, dtype=float)
    std = np.sqrt(np.asarray(cov_diag, dtype=float))
    return lambda rng: mean + std * rng.standard_normal(mean.shape)


def lorenz_attractor_ic_sampler(
    model: ModelSpec, mean=(1.0, 1.0, -20.0), cov_diag=(4.0, 4.0, 4.0), spinup: int = 500
) -> Callable[[np.random.Generator], np.ndarray]:
    """Draw a point, then run a deterministic spin-up to land on the attractor."""
    base = gaussian_ic_sampler(mean, cov_diag)
    zero = np.zeros(3)

    def sample(rng):
        x = base(rng)
        for _ in range(spinup):
            x = step_lorenz63(x, model.params, model.dt, zero)
        return x

    return sample


def allen_cahn_ic_sampler(
    perturb_modes: int = 4, perturb_scale: float = 0.1, n: int = ALLEN_CAHN_GRID
) -> Callable[[np.random.Generator], np.ndarray]:
    """Even initial profiles: x^2 cos(pi x) plus random even cosine modes."""
    x = allen_cahn_grid(n)
    base = x**2 * np.cos(np.pi * x)

    def sample(rng):
        u = base.copy()
        for j in range(1, perturb_modes + 1):
            u = u + perturb_scale * rng.standard_normal() * np.cos(j * np.pi * x)
        return u

    return sample


def allen_cahn_test_ic(n: int = ALLEN_CAHN_GRID) -> np.ndarray:
    x = allen_cahn_grid(n)
    return x**2 * np.cos(np.pi * x)


def default_ic_sampler(model: ModelSpec, init_cfg: dict | None = None):
    cfg = dict(init_cfg or {})
    if model.kind == "pendulum":
        return gaussian_ic_sampler(cfg.get("mean", (0.0, 0.0)), cfg.get("cov_diag", (0.2, 0.2)))
    if model.kind == "triad":
        return gaussian_ic_sampler(cfg.get("mean", (0.0, 0.0, 0.0)), cfg.get("cov_diag", (1.0, 1.0, 1.0)))
    if model.kind == "lorenz63":
        return lorenz_attractor_ic_sampler(
            model,
            mean=cfg.get("mean", (1.0, 1.0, -20.0)),
            cov_diag=cfg.get("cov_diag", (4.0, 4.0, 4.0)),
            spinup=int(cfg.get("spinup", 500)),
        )
    if model.kind == "allen_cahn":
        return allen_cahn_ic_sampler(
            perturb_modes=int(cfg.get("perturb_modes", 4)),
            perturb_scale=float(cfg.get("perturb_scale", 0.1)),
        )
    raise ModelError(model.kind)


def generate_dataset(
    model: ModelSpec,
    obs: ObservationSpec,
    num_trajectories: int,
    length: int,
    initial_condition_sampler=None,
    seed: int = 0,
) -> TrajectorySet:
    """Simulate trajectories with independent per-trajectory noise streams."""
    if num_trajectories < 1 or length < 2:
        raise ModelError("need num_trajectories >= 1 and length >= 2")
    if obs.state_dim != model.state_dim:
        raise ModelError("observation spec does not match model state dimension")
    sampler = initial_condition_sampler or default_ic_sampler(model)
    step = step_fn(model)
    n, m = model.state_dim, obs.obs_dim
    H = obs.as_matrix()
    obs_sqrt = _sqrt_psd(np.asarray(obs.noise_cov, dtype=float))

    states = np.empty((num_trajectories, length, n))
    observations = np.empty((num_trajectories, length, m))
    for i in range(num_trajectories):
        x = np.asarray(sampler(_stream(seed, i, _ROLE_INIT)), dtype=float)
        if x.shape != (n,):
            raise ModelError(f"initial condition sampler returned shape {x.shape}, expected ({n},)")
        proc = _stream(seed, i, _ROLE_PROCESS).standard_normal((length - 1, max(model.noise_dim, 1)))
        if model.kind == "pendulum":
            proc = proc * np.sqrt(model.dt)  # Brownian increments; other steps scale internally
        eta = _stream(seed, i, _ROLE_OBS).standard_normal((length, m)) @ obs_sqrt.T
        states[i, 0] = x
        for k in range(1, length):
            x = step(x, proc[k - 1])
            states[i, k] = x
        observations[i] = states[i] @ H.T + eta
    return TrajectorySet(states, observations, seed, model, obs)


def _sqrt_psd(a: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (eigenvalue clipping at zero)."""
    vals, vecs = np.linalg.eigh(a)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
