"""Experiment configuration: schema, validation, and resolution.

Configs are YAML documents with a versioned schema.  Validation walks the
parsed node tree so that errors carry file/line anchors; unknown keys are
rejected.  ``resolve`` fills every default, and the resolved document is
what gets written next to experiment outputs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import models

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; message carries a file/line anchor when known."""


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "pendulum"
    dt: float | None = None
    params: dict = field(default_factory=dict)
    init: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ObservationConfig:
    kind: str = "selector"  # selector | matrix | sum
    indices: list | None = None
    matrix: list | None = None
    noise_var: object = 0.1  # scalar, diagonal list, or full matrix


@dataclass(frozen=True)
class DatasetConfig:
    trajectories: int = 10
    length: int = 200
    seed: int = 12345
    test_length: int = 200
    test_seed: int = 67890
    test_init: dict | None = None


@dataclass(frozen=True)
class FilterConfig:
    ensemble_size: int = 100
    offline_ensemble_size: int | None = None
    adaptive: bool = True
    smoothing: float = 0.02
    cov_floor: float = 1e-8
    inflation: float = 1.0
    q_init_scale: float = 0.1
    r_init_scale: float = 0.5
    seed: int = 777


@dataclass(frozen=True)
class SurrogateConfig:
    method: str = "dmd_t"  # dmd_t | knn_t
    dictionary: str = "identity"  # identity | poly2
    refine_iterations: int = 3
    svd_tol: float = 1e-10
    window_length: int | None = None  # None: offline trajectory length
    update_cadence: int | None = None  # None: window_length // 2; 0 disables
    analog_neighbors: int = 100
    analog_operator: str = "lc"  # lc | ll
    analog_kernel_scale: float | None = None


@dataclass(frozen=True)
class EmbeddingConfig:
    delay: object = 10  # positive int or "auto"
    fnn_d_max: int = 25
    fnn_r_tol: float = 10.0
    fnn_threshold: float = 0.01


@dataclass(frozen=True)
class ReconstructionConfig:
    method: str = "regressor"  # regressor | analog_lc | analog_ll
    hidden: list | None = None  # None: sized from the input dimension
    epochs: int = 500
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 4242
    # Training inputs are posterior means; online inputs are per-particle
    # samples.  input_noise > 0 augments training with perturbed replicas
    # whose per-component scale is input_noise times the estimated
    # observation-noise standard deviation.
    input_noise: float = 0.0
    analog_neighbors: int = 100
    analog_kernel_scale: float | None = None


@dataclass(frozen=True)
class KdeConfig:
    times: list = field(default_factory=list)  # model-time export points
    bandwidth: float | None = None  # None: Silverman's rule
    grid_size: int = 101
    components: list | None = None  # state components; None: all (1-D marginals)


@dataclass(frozen=True)
class ExperimentConfig:
    version: int = SCHEMA_VERSION
    name: str = "experiment"
    model: ModelConfig = field(default_factory=ModelConfig)
    observation: ObservationConfig = field(default_factory=ObservationConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    reconstruction: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    kde: KdeConfig = field(default_factory=KdeConfig)
    output: str = "out"
    bench: dict = field(default_factory=dict)


_SECTION_TYPES = {
    "model": ModelConfig,
    "observation": ObservationConfig,
    "dataset": DatasetConfig,
    "filter": FilterConfig,
    "surrogate": SurrogateConfig,
    "embedding": EmbeddingConfig,
    "reconstruction": ReconstructionConfig,
    "kde": KdeConfig,
}

_FREE_DICT_FIELDS = {"params", "init", "test_init", "bench"}


def _node_to_value(node):
    return yaml.safe_load(yaml.serialize(node))


def _check_node(node, dc_type, path, filename):
    """Reject unknown mapping keys, anchored at the YAML source line."""
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(
            f"{filename}:{node.start_mark.line + 1}: section '{path}' must be a mapping"
        )
    known = {f.name for f in dataclasses.fields(dc_type)}
    for key_node, value_node in node.value:
        key = key_node.value
        if key not in known:
            raise ConfigError(
                f"{filename}:{key_node.start_mark.line + 1}: unknown key '{path}{key}'"
            )
        sub_type = _SECTION_TYPES.get(key) if dc_type is ExperimentConfig else None
        if sub_type is not None:
            _check_node(value_node, sub_type, f"{key}.", filename)


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse, validate, and resolve a YAML experiment configuration."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, filename=str(path))


def parse_config(text: str, filename: str = "<config>") -> ExperimentConfig:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{filename}: invalid YAML: {exc}") from exc
    if node is None:
        raise ConfigError(f"{filename}: empty configuration")
    _check_node(node, ExperimentConfig, "", filename)
    raw = yaml.safe_load(text)
    return from_dict(raw, filename)


def _coerce_section(dc_type, raw: dict, path: str, filename: str):
    kwargs = {}
    for f in dataclasses.fields(dc_type):
        if f.name not in raw:
            continue
        value = raw[f.name]
        if f.name in _FREE_DICT_FIELDS:
            if value is not None and not isinstance(value, dict):
                raise ConfigError(f"{filename}: '{path}{f.name}' must be a mapping")
        kwargs[f.name] = value
    extra = set(raw) - {f.name for f in dataclasses.fields(dc_type)}
    if extra:
        raise ConfigError(f"{filename}: unknown key '{path}{sorted(extra)[0]}'")
    return dc_type(**kwargs)


def from_dict(raw: dict, filename: str = "<config>") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{filename}: top level must be a mapping")
    version = raw.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{filename}: unsupported config version {version}")
    kwargs = {"version": version}
    for key, value in raw.items():
        if key == "version":
            continue
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigError(f"{filename}: section '{key}' must be a mapping")
            kwargs[key] = _coerce_section(_SECTION_TYPES[key], value, f"{key}.", filename)
        elif key in ("name", "output", "bench"):
            kwargs[key] = value
        else:
            raise ConfigError(f"{filename}: unknown key '{key}'")
    cfg = ExperimentConfig(**kwargs)
    validate(cfg, filename)
    return cfg


def validate(cfg: ExperimentConfig, filename: str = "<config>") -> None:
    def fail(msg):
        raise ConfigError(f"{filename}: {msg}")

    if cfg.model.kind not in models.STATE_DIMS:
        fail(f"model.kind must be one of {sorted(models.STATE_DIMS)}")
    if cfg.observation.kind not in ("selector", "matrix", "sum"):
        fail("observation.kind must be selector, matrix, or sum")
    if cfg.observation.kind == "selector" and not cfg.observation.indices:
        fail("observation.indices required for a selector operator")
    if cfg.observation.kind == "matrix" and not cfg.observation.matrix:
        fail("observation.matrix required for a matrix operator")
    if cfg.dataset.trajectories < 1 or cfg.dataset.length < 2:
        fail("dataset needs trajectories >= 1 and length >= 2")
    if cfg.filter.ensemble_size < 2:
        fail("filter.ensemble_size must be >= 2")
    if not 0.0 < cfg.filter.smoothing <= 1.0:
        fail("filter.smoothing must lie in (0, 1]")
    if cfg.surrogate.method not in ("dmd_t", "knn_t"):
        fail("surrogate.method must be dmd_t or knn_t")
    if cfg.surrogate.dictionary not in ("identity", "poly2"):
        fail("surrogate.dictionary must be identity or poly2")
    if cfg.surrogate.analog_operator not in ("lc", "ll"):
        fail("surrogate.analog_operator must be lc or ll")
    if cfg.reconstruction.method not in ("regressor", "analog_lc", "analog_ll"):
        fail("reconstruction.method must be regressor, analog_lc, or analog_ll")
    delay = cfg.embedding.delay
    if not (delay == "auto" or (isinstance(delay, int) and delay >= 1)):
        fail("embedding.delay must be a positive integer or 'auto'")
    try:
        spec = build_model_spec(cfg)
        build_observation_spec(cfg, spec)
    except (models.ModelError, TypeError) as exc:
        fail(str(exc))


def to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def resolved_yaml(cfg: ExperimentConfig) -> str:
    """Canonical YAML of the fully resolved config (every default explicit)."""
    return yaml.safe_dump(to_dict(cfg), sort_keys=True, default_flow_style=False)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_model_spec(cfg: ExperimentConfig) -> models.ModelSpec:
    return models.default_model_spec(cfg.model.kind, dt=cfg.model.dt, **cfg.model.params)


def build_observation_spec(cfg: ExperimentConfig, model_spec: models.ModelSpec) -> models.ObservationSpec:
    oc = cfg.observation
    n = model_spec.state_dim
    if oc.kind == "selector":
        m = len(oc.indices)
    elif oc.kind == "matrix":
        m = len(oc.matrix)
    else:
        m = 1
    noise = oc.noise_var
    if isinstance(noise, (int, float)):
        R = float(noise) * np.eye(m)
    else:
        arr = np.asarray(noise, dtype=float)
        R = np.diag(arr) if arr.ndim == 1 else arr
    return models.ObservationSpec(
        oc.kind if oc.kind != "sum" else "sum",
        n,
        indices=tuple(oc.indices) if oc.indices else None,
        matrix=np.asarray(oc.matrix, dtype=float) if oc.matrix else None,
        noise_cov=R,
    )


def build_ic_sampler(cfg: ExperimentConfig, model_spec: models.ModelSpec, test: bool = False):
    init_cfg = cfg.dataset.test_init if (test and cfg.dataset.test_init is not None) else cfg.model.init
    if test and cfg.model.kind == "allen_cahn" and cfg.dataset.test_init is None:
        # Test streams start from the unperturbed base profile.
        return lambda rng: models.allen_cahn_test_ic()
    return models.default_ic_sampler(model_spec, init_cfg)


def generate_training_data(cfg: ExperimentConfig) -> models.TrajectorySet:
    spec = build_model_spec(cfg)
    obs = build_observation_spec(cfg, spec)
    return models.generate_dataset(
        spec,
        obs,
        cfg.dataset.trajectories,
        cfg.dataset.length,
        initial_condition_sampler=build_ic_sampler(cfg, spec),
        seed=cfg.dataset.seed,
    )


def generate_test_data(cfg: ExperimentConfig, seed: int | None = None) -> models.TrajectorySet:
    spec = build_model_spec(cfg)
    obs = build_observation_spec(cfg, spec)
    return models.generate_dataset(
        spec,
        obs,
        1,
        cfg.dataset.test_length,
        initial_condition_sampler=build_ic_sampler(cfg, spec, test=True),
        seed=cfg.dataset.test_seed if seed is None else seed,
    )
