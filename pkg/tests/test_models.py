import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from takensda import models


def test_pendulum_drift_fixed_point():
    out = models.step_pendulum((0.0, 0.0), models.PendulumParams(), 0.05, (0.0, 0.0))
    assert np.allclose(out, (0.0, 0.0))


def test_pendulum_quarter_turn():
    out = models.step_pendulum((0.0, np.pi / 2), models.PendulumParams(), 0.05, (0.0, 0.0))
    assert out[0] == pytest.approx(-0.0245, abs=1e-12)
    assert out[1] == pytest.approx(np.pi / 2, abs=1e-15)


def test_pendulum_unit_velocity():
    out = models.step_pendulum((1.0, 0.0), models.PendulumParams(), 0.05, (0.0, 0.0))
    assert np.allclose(out, (1.0, 0.05))


def test_triad_origin_fixed_point():
    out = models.step_triad((0.0, 0.0, 0.0), models.TriadParams(), 0.1, (0.0, 0.0))
    assert np.allclose(out, 0.0)


def test_triad_first_component_decoupled():
    # Row 1 of the drift is (0, omega, 0) and the quadratic term has no
    # first component, so u is untouched when v = 0.
    out = models.step_triad((1.0, 0.0, 0.0), models.TriadParams(), 0.1, (0.0, 0.0))
    assert out[0] == 1.0


def test_triad_unit_v():
    out = models.step_triad((0.0, 1.0, 0.0), models.TriadParams(), 0.1, (0.0, 0.0))
    assert np.allclose(out, (0.075, 0.95, 0.1))


def test_lorenz_shifted_equilibrium():
    p = models.Lorenz63Params()
    state = (0.0, 0.0, -(p.r + p.a))
    out = models.step_lorenz63(state, p, 0.01, (0.0, 0.0, 0.0))
    assert np.allclose(out, state)


def test_lorenz_drift_values():
    p = models.Lorenz63Params()
    out = models.step_lorenz63((1.0, 1.0, 0.0), p, 0.01, np.zeros(3))
    assert np.allclose(out, (1.0, 0.89, -1.0033333333333334))
    out0 = models.step_lorenz63((0.0, 0.0, 0.0), p, 0.01, np.zeros(3))
    assert np.allclose(out0, (0.0, 0.0, -1.0133333333333334))


class TestAllenCahn:
    params = models.AllenCahnParams()
    dt = 1.0 / 500

    def test_zero_fixed_point(self):
        u = np.zeros(100)
        assert np.abs(models.step_allen_cahn(u, self.params, self.dt)).max() == 0.0

    def test_one_fixed_point(self):
        u = np.ones(100)
        out = models.step_allen_cahn(u, self.params, self.dt)
        assert np.abs(out - 1.0).max() < 1e-13

    def test_matches_dense_solver(self):
        # Independent oracle: assemble the scheme's matrices densely and solve.
        x = models.allen_cahn_grid()
        u = np.cos(np.pi * x)
        n, dx = 100, 1.0 / 50
        L = np.zeros((n, n))
        for i in range(n):
            L[i, i] = -2.0 / dx**2
            L[i, (i - 1) % n] = 1.0 / dx**2
            L[i, (i + 1) % n] = 1.0 / dx**2
        c = 0.5 * self.dt * self.params.eps
        rhs = (np.eye(n) + c * L) @ u - self.dt * self.params.theta * (u**3 - u)
        expected = np.linalg.solve(np.eye(n) - c * L, rhs)
        out = models.step_allen_cahn(u, self.params, self.dt)
        assert np.abs(out - expected).max() < 1e-12

    def test_zero_coefficients_identity(self):
        u = np.random.default_rng(0).standard_normal(100)
        out = models.step_allen_cahn(u, models.AllenCahnParams(eps=0.0, theta=0.0), self.dt)
        assert np.abs(out - u).max() < 1e-14

    def test_reflection_symmetry_preserved(self):
        # Even initial fields stay even under the scheme.
        x = models.allen_cahn_grid()
        rng = np.random.default_rng(3)
        u = sum(rng.standard_normal() * np.cos(j * np.pi * x) for j in range(4))
        v = models.step_allen_cahn(u, self.params, self.dt)
        for _ in range(20):
            v = models.step_allen_cahn(v, self.params, self.dt)
        reflected = np.roll(v[::-1], 1)
        assert np.abs(v - reflected).max() < 1e-12


def test_observe_sum():
    spec = models.ObservationSpec("sum", 3, noise_cov=np.zeros((1, 1)))
    assert models.observe((1.0, 2.0, 3.0), spec, 0.0) == pytest.approx(6.0)


def test_observe_pendulum_angle():
    spec = models.selector_observation(2, [1], 0.0)
    assert models.observe((5.0, 2.0), spec, 0.0) == pytest.approx(2.0)


def test_observe_identity_selector():
    spec = models.selector_observation(4, [0, 1, 2, 3], 0.0)
    x = np.array([0.3, -1.0, 2.5, 4.0])
    assert np.array_equal(models.observe(x, spec, np.zeros(4)), x)


def test_observe_dimension_mismatch():
    spec = models.selector_observation(2, [1], 0.0)
    with pytest.raises(models.ModelError):
        models.observe((1.0, 2.0, 3.0), spec, 0.0)


@given(
    alpha=st.floats(0.0, 1.0),
    x1=st.lists(st.floats(-10, 10), min_size=3, max_size=3),
    x2=st.lists(st.floats(-10, 10), min_size=3, max_size=3),
)
@settings(max_examples=100, deadline=None)
def test_observe_affine(alpha, x1, x2):
    spec = models.ObservationSpec(
        "matrix", 3, matrix=np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 2.0]]), noise_cov=np.zeros((2, 2))
    )
    x1, x2 = np.array(x1), np.array(x2)
    mix = models.observe(alpha * x1 + (1 - alpha) * x2, spec, np.zeros(2))
    parts = alpha * models.observe(x1, spec, np.zeros(2)) + (1 - alpha) * models.observe(
        x2, spec, np.zeros(2)
    )
    assert np.allclose(mix, parts, atol=1e-9)


class TestGenerateDataset:
    def test_bit_reproducible(self):
        model = models.default_model_spec("pendulum")
        obs = models.selector_observation(2, [1], 0.1)
        a = models.generate_dataset(model, obs, 3, 50, seed=42)
        b = models.generate_dataset(model, obs, 3, 50, seed=42)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.observations, b.observations)

    def test_zero_noise_from_origin(self):
        model = models.default_model_spec("pendulum", sigma1_sq=0.0, sigma2_sq=0.0)
        obs = models.selector_observation(2, [1], 0.0)
        ic = lambda rng: np.zeros(2)
        ts = models.generate_dataset(model, obs, 2, 30, initial_condition_sampler=ic, seed=1)
        assert np.all(ts.states == 0.0)
        assert np.all(ts.observations == 0.0)

    def test_lorenz_shapes(self):
        model = models.default_model_spec("lorenz63")
        obs = models.ObservationSpec("sum", 3, noise_cov=2.0 * np.eye(1))
        ts = models.generate_dataset(model, obs, 30, 200, seed=5)
        assert ts.states.shape == (30, 200, 3)
        assert ts.observations.shape == (30, 200, 1)

    def test_streams_independent_of_trajectory_count(self):
        model = models.default_model_spec("triad")
        obs = models.selector_observation(3, [2], 0.1)
        small = models.generate_dataset(model, obs, 2, 40, seed=9)
        large = models.generate_dataset(model, obs, 5, 40, seed=9)
        assert np.array_equal(small.states, large.states[:2])
        assert np.array_equal(small.observations, large.observations[:2])


def test_zero_noise_step_equals_deterministic_drift():
    # Euler-Maruyama with zero draws reduces to the explicit Euler step.
    rng = np.random.default_rng(11)
    p = models.TriadParams()
    for _ in range(25):
        x = rng.standard_normal(3)
        u, v, w = x
        L = np.array([[0, p.omega, 0], [-2 * p.omega, 0, -p.beta], [0, p.beta, 0]])
        D = np.diag([0.0, p.gamma, p.gamma])
        B = np.array([0.0, p.a * u * w, -p.a * u * v])
        euler = x + 0.1 * (L @ x - D @ x + B)
        assert np.allclose(models.step_triad(x, p, 0.1, np.zeros(2)), euler, atol=1e-14)


def test_process_noise_cov_shapes():
    for kind in ("pendulum", "triad", "lorenz63", "allen_cahn"):
        model = models.default_model_spec(kind)
        q = models.process_noise_cov(model)
        assert q.shape == (model.state_dim, model.state_dim)
        assert np.all(np.linalg.eigvalsh(q) >= 0)
