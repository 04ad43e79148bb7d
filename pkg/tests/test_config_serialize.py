import numpy as np
import pytest

from takensda import config as cfgmod
from takensda import models, serialize

VALID = """
version: 1
name: t
model:
  kind: pendulum
observation: {kind: selector, indices: [1], noise_var: 0.1}
dataset: {trajectories: 2, length: 20, seed: 1}
"""


class TestConfig:
    def test_parses_and_resolves_defaults(self):
        cfg = cfgmod.parse_config(VALID)
        assert cfg.filter.ensemble_size == 100
        assert cfg.surrogate.method == "dmd_t"
        text = cfgmod.resolved_yaml(cfg)
        assert "ensemble_size: 100" in text

    def test_unknown_key_reports_line(self):
        bad = VALID + "typo_section: 3\n"
        with pytest.raises(cfgmod.ConfigError, match="typo_section"):
            cfgmod.parse_config(bad)

    def test_unknown_nested_key_reports_line(self):
        bad = VALID.replace("dataset: {trajectories: 2, length: 20, seed: 1}",
                            "dataset: {trajectories: 2, length: 20, sede: 1}")
        with pytest.raises(cfgmod.ConfigError, match=r":\d+: unknown key 'dataset.sede'"):
            cfgmod.parse_config(bad)

    def test_invalid_values_rejected(self):
        with pytest.raises(cfgmod.ConfigError):
            cfgmod.parse_config(VALID.replace("kind: pendulum", "kind: rocket"))
        with pytest.raises(cfgmod.ConfigError):
            cfgmod.parse_config(VALID.replace("indices: [1]", "indices: [7]"))

    def test_round_trip(self):
        cfg = cfgmod.parse_config(VALID)
        again = cfgmod.parse_config(cfgmod.resolved_yaml(cfg))
        assert again == cfg

    def test_empty_rejected(self):
        with pytest.raises(cfgmod.ConfigError):
            cfgmod.parse_config("")


class TestTrajectoryIO:
    def test_round_trip_bit_exact(self, tmp_path):
        model = models.default_model_spec("triad")
        obs = models.selector_observation(3, [0, 2], 0.1)
        ts = models.generate_dataset(model, obs, 3, 25, seed=4)
        serialize.write_trajectory_set(ts, tmp_path)
        back = serialize.read_trajectory_set(tmp_path)
        assert np.array_equal(back.states, ts.states)
        assert np.array_equal(back.observations, ts.observations)
        assert back.seed == ts.seed

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(serialize.DataError):
            serialize.read_trajectory_set(tmp_path)

    def test_corrupt_cell(self, tmp_path):
        model = models.default_model_spec("pendulum")
        obs = models.selector_observation(2, [1], 0.1)
        ts = models.generate_dataset(model, obs, 1, 5, seed=0)
        paths = serialize.write_trajectory_set(ts, tmp_path)
        text = paths[0].read_text().replace("\t", "\t", 1)
        lines = text.splitlines()
        lines[2] = lines[2].replace(lines[2].split("\t")[1], "not-a-number", 1)
        paths[0].write_text("\n".join(lines) + "\n")
        with pytest.raises(serialize.DataError):
            serialize.read_trajectory_set(tmp_path)


class TestBundleIO:
    def test_dmdt_round_trip(self, tmp_path):
        from takensda import pipeline

        cfg = cfgmod.from_dict({
            "model": {"kind": "pendulum"},
            "observation": {"kind": "selector", "indices": [1], "noise_var": 0.1},
            "dataset": {"trajectories": 2, "length": 60, "seed": 3},
            "filter": {"ensemble_size": 20, "seed": 4},
            "surrogate": {"method": "dmd_t", "refine_iterations": 1},
            "embedding": {"delay": 3},
            "reconstruction": {"method": "regressor", "epochs": 20, "seed": 5},
        })
        data = cfgmod.generate_training_data(cfg)
        bundle = pipeline.offline_dmdt(data, cfg)
        path = tmp_path / "b.npz"
        serialize.save_bundle(bundle, path)
        back = serialize.load_bundle(path)
        assert back.method == "dmd_t"
        assert back.delay == bundle.delay
        assert np.array_equal(back.transition.K, bundle.transition.K)
        q = np.random.default_rng(0).standard_normal((4, 3))
        from takensda import reconstruction as recon

        assert np.array_equal(
            recon.predict_regressor(back.reconstructor, q),
            recon.predict_regressor(bundle.reconstructor, q),
        )

    def test_knnt_round_trip(self, tmp_path):
        from takensda import pipeline

        cfg = cfgmod.from_dict({
            "model": {"kind": "lorenz63"},
            "observation": {"kind": "sum", "noise_var": 2.0},
            "dataset": {"trajectories": 2, "length": 60, "seed": 6},
            "filter": {"ensemble_size": 15, "seed": 7},
            "surrogate": {"method": "knn_t", "analog_neighbors": 10},
            "embedding": {"delay": 4},
            "reconstruction": {"method": "analog_ll", "analog_neighbors": 10},
        })
        data = cfgmod.generate_training_data(cfg)
        bundle = pipeline.offline_knnt(data, cfg)
        path = tmp_path / "b.npz"
        serialize.save_bundle(bundle, path)
        back = serialize.load_bundle(path)
        assert back.method == "knn_t"
        assert np.array_equal(back.transition.keys, bundle.transition.keys)
        assert np.array_equal(back.reconstructor.values, bundle.reconstructor.values)

    def test_corrupt_bundle(self, tmp_path):
        path = tmp_path / "junk.npz"
        path.write_bytes(b"this is not an archive")
        with pytest.raises(serialize.DataError):
            serialize.load_bundle(path)


def test_full_precision_round_trip(tmp_path):
    # 17 significant digits reproduce doubles exactly.
    vals = np.array([[np.pi, 1e-300, 1.0 / 3.0]])
    path = tmp_path / "t.tsv"
    serialize._write_table(path, ["a", "b", "c"], vals)
    _, back = serialize._read_table(path)
    assert np.array_equal(back, vals)
