"""File formats: columnar trajectory/estimate text files and bundle archives.

Text files are tab-separated with a header row and full double precision
(17 significant digits), so reruns with identical seeds are byte-identical.
Bundles are numpy .npz archives with a JSON metadata record; numpy writes
fixed zip timestamps, so bundle bytes are reproducible too.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import dmd, models
from . import ensemble_filter as enkf
from . import reconstruction as recon

FORMAT_VERSION = 1


class DataError(ValueError):
    """Malformed or inconsistent data file."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_table(path: Path, header: list[str], rows) -> None:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _read_table(path: Path) -> tuple[list[str], np.ndarray]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty table")
    header = lines[0].split("\t")
    try:
        data = np.array([[float(v) for v in ln.split("\t")] for ln in lines[1:]])
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric cell: {exc}") from exc
    if data.size and data.shape[1] != len(header):
        raise DataError(f"{path}: row width does not match header")
    return header, data


# ---------------------------------------------------------------------------
# Trajectory sets
# ---------------------------------------------------------------------------


def trajectory_header(n: int, m: int) -> list[str]:
    return ["k"] + [f"x{i+1}" for i in range(n)] + [f"y{j+1}" for j in range(m)]


def write_trajectory_set(ts: models.TrajectorySet, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = ts.states.shape[2]
    m = ts.observations.shape[2]
    header = trajectory_header(n, m)
    paths = []
    for i in range(ts.num_trajectories):
        rows = np.column_stack(
            [np.arange(1, ts.length + 1), ts.states[i], ts.observations[i]]
        )
        path = directory / f"traj_{i:04d}.tsv"
        _write_table(path, header, rows)
        paths.append(path)
    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": ts.seed,
        "trajectories": ts.num_trajectories,
        "length": ts.length,
        "state_dim": n,
        "obs_dim": m,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return paths


def read_trajectory_set(directory: str | Path) -> models.TrajectorySet:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"{directory}: missing manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: invalid JSON: {exc}") from exc
    files = sorted(directory.glob("traj_*.tsv"))
    if len(files) != manifest.get("trajectories"):
        raise DataError(
            f"{directory}: manifest promises {manifest.get('trajectories')} trajectories, "
            f"found {len(files)}"
        )
    n, m = manifest["state_dim"], manifest["obs_dim"]
    states, observations = [], []
    for path in files:
        header, data = _read_table(path)
        if header != trajectory_header(n, m):
            raise DataError(f"{path}: unexpected header")
        if data.shape[0] != manifest["length"]:
            raise DataError(f"{path}: expected {manifest['length']} rows, found {data.shape[0]}")
        states.append(data[:, 1 : 1 + n])
        observations.append(data[:, 1 + n :])
    return models.TrajectorySet(np.stack(states), np.stack(observations), manifest["seed"])


# ---------------------------------------------------------------------------
# Online estimates
# ---------------------------------------------------------------------------


def write_filtered_obs(records, path: str | Path) -> None:
    m = records[0].obs_mean.shape[0]
    header = ["k"] + [f"yhat{j+1}" for j in range(m)] + ["spread"]
    rows = [[r.k, *r.obs_mean, r.obs_spread] for r in records]
    _write_table(Path(path), header, rows)


def write_estimates(records, path: str | Path) -> None:
    ests = [r.estimate for r in records if getattr(r, "estimate", None) is not None]
    if not ests:
        Path(path).write_text("")
        return
    n = ests[0].mean.shape[0]
    header = ["k"] + [f"xhat{i+1}" for i in range(n)] + ["spread"]
    rows = [[e.k, *e.mean, e.spread] for e in ests]
    _write_table(Path(path), header, rows)


def write_posterior_trail(result: enkf.FilterResult, path: str | Path) -> None:
    p = result.means.shape[1]
    header = ["k"] + [f"mean{i+1}" for i in range(p)] + [f"spread{i+1}" for i in range(p)]
    rows = []
    for idx, ens in enumerate(result.ensembles):
        stds = ens.members.std(axis=0, ddof=1)
        rows.append([idx + 1, *result.means[idx], *stds])
    _write_table(Path(path), header, rows)


def dump_ensembles(records, path: str | Path) -> None:
    """Full per-step sample dump (large); requires estimates kept with samples."""
    arrays = {}
    for r in records:
        est = getattr(r, "estimate", None)
        if est is None or est.samples is None:
            continue
        arrays[f"states_k{est.k:05d}"] = est.samples
        if est.delay_samples is not None:
            arrays[f"delays_k{est.k:05d}"] = est.delay_samples
    np.savez(Path(path), **arrays)


def write_kde_grid(path: str | Path, grid, density: np.ndarray, meta: dict) -> None:
    path = Path(path)
    density = np.asarray(density)
    lines = [f"# {json.dumps(meta, sort_keys=True)}"]
    if density.ndim == 1:
        lines.append("value\tdensity")
        for g, dv in zip(np.asarray(grid), density):
            lines.append(f"{_fmt(g)}\t{_fmt(dv)}")
    else:
        g1, g2 = (np.asarray(g) for g in grid)
        lines.append("value1\tvalue2\tdensity")
        for i, a in enumerate(g1):
            for j, b in enumerate(g2):
                lines.append(f"{_fmt(a)}\t{_fmt(b)}\t{_fmt(density[i, j])}")
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Surrogate bundles
# ---------------------------------------------------------------------------


def save_bundle(bundle, path: str | Path) -> None:
    from .pipeline import SurrogateBundle  # local import to avoid a cycle

    assert isinstance(bundle, SurrogateBundle)
    arrays = {}
    meta = {
        "format_version": FORMAT_VERSION,
        "method": bundle.method,
        "recon_method": bundle.recon_method,
        "delay": bundle.delay,
        "config": bundle.config,
        "train_report": bundle.train_report,
        "noise": {"alpha": bundle.noise.alpha, "cov_floor": bundle.noise.cov_floor},
    }
    arrays["noise_q"] = bundle.noise.q_hat
    arrays["noise_r"] = bundle.noise.r_hat
    if bundle.method == "dmd_t":
        op = bundle.transition
        arrays["trans_K"] = op.K
        meta["transition"] = {
            "dictionary": asdict(op.dictionary),
            "svd_tol": op.svd_tol,
            "effective_rank": op.effective_rank,
            "iteration": op.iteration,
        }
    else:
        lib = bundle.transition
        arrays["trans_keys"] = lib.keys
        arrays["trans_values"] = lib.values
        meta["transition"] = {"kernel_scale": lib.kernel_scale}
    if bundle.recon_method == "regressor":
        reg = bundle.reconstructor
        for i, p in enumerate(reg.params):
            arrays[f"reg_param_{i:02d}"] = p
        arrays["reg_norm"] = np.stack(
            [reg.norm.in_mean, reg.norm.in_std]
        )
        arrays["reg_norm_out"] = np.stack([reg.norm.out_mean, reg.norm.out_std])
        meta["regressor"] = {
            "hidden": list(reg.hidden),
            "activation": reg.activation,
            "epochs": reg.epochs,
            "batch_size": reg.batch_size,
            "learning_rate": reg.learning_rate,
            "lr_decay": reg.lr_decay,
            "optimizer": reg.optimizer,
            "seed": reg.seed,
            "final_loss": reg.final_loss,
            "n_params": len(reg.params),
        }
    else:
        lib = bundle.reconstructor
        arrays["recon_keys"] = lib.keys
        arrays["recon_values"] = lib.values
        meta["reconstructor"] = {"kernel_scale": lib.kernel_scale}
    arrays["meta"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_bundle(path: str | Path):
    from .pipeline import SurrogateBundle

    try:
        archive = np.load(Path(path))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read bundle {path}: {exc}") from exc
    try:
        meta = json.loads(bytes(archive["meta"]).decode("utf-8"))
    except (KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: missing or corrupt bundle metadata") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported bundle format {meta.get('format_version')}")
    noise = enkf.NoiseEstimate(
        archive["noise_q"],
        archive["noise_r"],
        alpha=meta["noise"]["alpha"],
        cov_floor=meta["noise"]["cov_floor"],
    )
    if meta["method"] == "dmd_t":
        dmeta = meta["transition"]["dictionary"]
        dictionary = dmd.Dictionary(dmeta["kind"], dmeta["m"], dmeta["degree"])
        transition = dmd.DmdOperator(
            archive["trans_K"],
            dictionary,
            meta["transition"]["svd_tol"],
            meta["transition"]["effective_rank"],
            iteration=meta["transition"]["iteration"],
        )
    else:
        transition = recon.AnalogLibrary(
            archive["trans_keys"],
            archive["trans_values"],
            "successor",
            meta["transition"]["kernel_scale"],
        )
    if meta["recon_method"] == "regressor":
        rmeta = meta["regressor"]
        params = [archive[f"reg_param_{i:02d}"] for i in range(rmeta["n_params"])]
        norm_in = archive["reg_norm"]
        norm_out = archive["reg_norm_out"]
        reconstructor = recon.RegressorSpec(
            hidden=tuple(rmeta["hidden"]),
            activation=rmeta["activation"],
            epochs=rmeta["epochs"],
            batch_size=rmeta["batch_size"],
            learning_rate=rmeta["learning_rate"],
            lr_decay=rmeta["lr_decay"],
            optimizer=rmeta["optimizer"],
            seed=rmeta["seed"],
            params=params,
            norm=recon.NormStats(norm_in[0], norm_in[1], norm_out[0], norm_out[1]),
            final_loss=rmeta["final_loss"],
        )
    else:
        reconstructor = recon.AnalogLibrary(
            archive["recon_keys"],
            archive["recon_values"],
            "state",
            meta["reconstructor"]["kernel_scale"],
        )
    return SurrogateBundle(
        meta["method"],
        transition,
        meta["recon_method"],
        reconstructor,
        meta["delay"],
        noise,
        config=meta["config"],
        train_report=meta["train_report"],
    )


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
