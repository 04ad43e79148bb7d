"""Command-line entry point: generate, train, assimilate, bench.

Every run writes its fully resolved configuration and all seeds next to its
outputs, so reruns into a fresh directory are byte-identical.  Heavy modules
are imported after argument parsing so --threads can cap BLAS workers.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_CRITERIA = 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="takensda",
        description="Model-free data assimilation with delay-embedding state reconstruction.",
    )
    parser.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="simulate training and test trajectory sets")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", default=None, help="output directory (default: config output)")
    gen.add_argument("--seed", type=int, default=None, help="override dataset seed")

    train = sub.add_parser("train", help="build the offline surrogate bundle from a dataset")
    train.add_argument("--config", required=True)
    train.add_argument("--dataset", required=True, help="directory written by generate")
    train.add_argument("--out", default=None)
    train.add_argument("--seed", type=int, default=None, help="override filter seed")

    assim = sub.add_parser("assimilate", help="run online estimation over an observation stream")
    assim.add_argument("--config", required=True)
    assim.add_argument("--bundle", required=True)
    assim.add_argument("--stream", required=True, help="trajectory file with the observation stream")
    assim.add_argument("--out", default=None)
    assim.add_argument("--seed", type=int, default=None, help="override online seed")
    assim.add_argument("--dump-ensembles", action="store_true", help="write per-step sample archives")

    bench_p = sub.add_parser("bench", help="run a reproduction suite with pass/fail criteria")
    bench_p.add_argument("suite", help="pendulum | triad | lorenz63 | allen_cahn | properties")
    bench_p.add_argument("--out", default=None)
    bench_p.add_argument("--seeds", type=int, default=None, help="number of seeds per criterion")
    return parser


def _cap_threads(n: int | None) -> None:
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _out_dir(args, cfg=None, default="out"):
    from pathlib import Path

    if args.out:
        return Path(args.out)
    if cfg is not None:
        return Path(cfg.output)
    return Path(default)


def _write_resolved(cfg, directory, extra_seeds=None) -> None:
    from . import config as cfgmod

    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.resolved.yaml").write_text(cfgmod.resolved_yaml(cfg))
    seeds = {
        "dataset": cfg.dataset.seed,
        "test": cfg.dataset.test_seed,
        "filter": cfg.filter.seed,
        "reconstruction": cfg.reconstruction.seed,
    }
    if extra_seeds:
        seeds.update(extra_seeds)
    (directory / "seeds.json").write_text(json.dumps(seeds, sort_keys=True, indent=1) + "\n")


def _config_hash(cfg) -> str:
    import hashlib

    from . import config as cfgmod

    return hashlib.sha256(cfgmod.resolved_yaml(cfg).encode()).hexdigest()[:16]


def cmd_generate(args) -> int:
    import dataclasses

    from . import config as cfgmod
    from . import serialize

    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, dataset=dataclasses.replace(cfg.dataset, seed=args.seed))
    out = _out_dir(args, cfg)
    train = cfgmod.generate_training_data(cfg)
    test = cfgmod.generate_test_data(cfg)
    serialize.write_trajectory_set(train, out / "train")
    serialize.write_trajectory_set(test, out / "test")
    _write_resolved(cfg, out)
    print(f"wrote {train.num_trajectories} training and {test.num_trajectories} test trajectories to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    import dataclasses

    import yaml

    from . import config as cfgmod
    from . import pipeline, serialize

    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, filter=dataclasses.replace(cfg.filter, seed=args.seed))
    out = _out_dir(args, cfg)
    data = serialize.read_trajectory_set(args.dataset)
    model_spec = cfgmod.build_model_spec(cfg)
    obs_spec = cfgmod.build_observation_spec(cfg, model_spec)
    if data.states.shape[2] != model_spec.state_dim or data.observations.shape[2] != obs_spec.obs_dim:
        raise serialize.DataError(
            f"dataset dims (n={data.states.shape[2]}, m={data.observations.shape[2]}) do not match "
            f"config (n={model_spec.state_dim}, m={obs_spec.obs_dim})"
        )
    if data.length <= 1 + (cfg.embedding.delay if isinstance(cfg.embedding.delay, int) else 1):
        print("warning: trajectories barely longer than the delay; training data is scarce", file=sys.stderr)
    bundle = pipeline.offline(data, cfg)
    out.mkdir(parents=True, exist_ok=True)
    tmp = out / "bundle.npz.tmp"
    serialize.save_bundle(bundle, tmp)
    tmp.replace(out / "bundle.npz")
    report = {
        "method": bundle.method,
        "reconstruction": bundle.recon_method,
        "delay": bundle.delay,
        "train_report": _plain(bundle.train_report),
        "config_hash": _config_hash(cfg),
    }
    (out / "train_report.yaml").write_text(yaml.safe_dump(report, sort_keys=True))
    _write_resolved(cfg, out)
    print(f"wrote bundle to {out / 'bundle.npz'}")
    return EXIT_OK


def _plain(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def cmd_assimilate(args) -> int:
    import numpy as np
    import yaml

    from . import config as cfgmod
    from . import pipeline, serialize

    cfg = cfgmod.load_config(args.config)
    out = _out_dir(args, cfg)
    bundle = serialize.load_bundle(args.bundle)
    if bundle.method != cfg.surrogate.method:
        raise cfgmod.ConfigError(
            f"bundle method {bundle.method!r} does not match config {cfg.surrogate.method!r}"
        )
    header, table = serialize._read_table(args.stream)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg.dataset.test_seed
    if table.size == 0:
        print("warning: empty observation stream; no estimates produced", file=sys.stderr)
        (out / "metrics.yaml").write_text(yaml.safe_dump({"metrics": None, "reason": "empty stream"}))
        _write_resolved(cfg, out, {"online": seed})
        return EXIT_OK
    m = bundle.obs_dim
    n_state = len([h for h in header if h.startswith("x")])
    y_stream = table[:, 1 + n_state :]
    if y_stream.shape[1] != m:
        raise serialize.DataError(
            f"stream has {y_stream.shape[1]} observation columns, bundle expects {m}"
        )
    truth = table[:, 1 : 1 + n_state] if n_state else None

    result = pipeline.online(bundle, y_stream, cfg, seed=seed, keep_samples=args.dump_ensembles)
    serialize.write_filtered_obs(result.records, out / "filtered_obs.tsv")
    serialize.write_estimates(result.records, out / "estimates.tsv")
    if args.dump_ensembles:
        serialize.dump_ensembles(result.records, out / "samples.npz")

    summary = {"config_hash": _config_hash(cfg), "seed": seed, "steps": len(result.records)}
    if truth is not None and truth.shape[1] == _bundle_state_dim(bundle):
        mets = pipeline.compute_metrics(result.records, truth)
        summary["metrics"] = {"rmse": mets.rmse, "spread": mets.spread, "steps": mets.steps}
    else:
        summary["metrics"] = None
    (out / "metrics.yaml").write_text(yaml.safe_dump(_plain(summary), sort_keys=True))

    if cfg.kde.times:
        _export_kde(cfg, result, out)
    _write_resolved(cfg, out, {"online": seed})
    print(f"wrote estimates and metrics to {out}")
    return EXIT_OK


def _bundle_state_dim(bundle) -> int:
    from . import reconstruction as recon

    if bundle.recon_method == "regressor":
        return bundle.reconstructor.params[-1].shape[0]
    return bundle.reconstructor.values.shape[1]


def _export_kde(cfg, result, out) -> None:
    import numpy as np

    from . import config as cfgmod
    from . import pipeline, serialize

    model_dt = cfgmod.build_model_spec(cfg).dt
    by_k = {r.k: r.estimate for r in result.records if r.estimate is not None}
    if not by_k:
        return
    for t_point in cfg.kde.times:
        k = int(round(t_point / model_dt))
        est = by_k.get(k)
        if est is None:
            continue
        samples = est.samples
        if samples is None:
            # Mean/cov only: sample the Gaussian summary for the export.
            rng = np.random.default_rng(cfg.dataset.test_seed + k)
            samples = rng.multivariate_normal(est.mean, est.cov, size=512)
        components = cfg.kde.components or list(range(samples.shape[1]))
        for c in components:
            vals = samples[:, c]
            bw = cfg.kde.bandwidth or pipeline.silverman_bandwidth(vals)
            lo, hi = vals.min() - 3 * bw, vals.max() + 3 * bw
            grid = np.linspace(lo, hi, cfg.kde.grid_size)
            dens = pipeline.kde_eval(vals, bw, grid)
            serialize.write_kde_grid(
                out / f"kde_t{t_point:g}_c{c}.tsv",
                grid,
                dens,
                {"time": t_point, "step": k, "component": c, "bandwidth": bw},
            )


def cmd_bench(args) -> int:
    import yaml

    from . import bench

    if args.suite not in bench.SUITES:
        print(f"error: unknown suite {args.suite!r}; choose from {', '.join(bench.SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    kwargs = {}
    if args.seeds is not None:
        kwargs["seed_count"] = args.seeds
    results = bench.run_suite(args.suite, **kwargs)
    for res in results:
        print(res.line())
    out = _out_dir(args, None, default=f"out/bench_{args.suite}")
    out.mkdir(parents=True, exist_ok=True)
    report = [
        {
            "id": r.cid,
            "name": r.name,
            "passed": bool(r.passed),
            "measured": _plain(r.measured),
            "expected": r.expected,
            "seconds": round(r.seconds, 2),
        }
        for r in results
    ]
    (out / "report.yaml").write_text(yaml.safe_dump(report, sort_keys=False))
    if not all(r.passed for r in results):
        return EXIT_CRITERIA
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _cap_threads(args.threads)

    from . import config as cfgmod
    from . import ensemble_filter as enkf
    from . import models, serialize

    handlers = {
        "generate": cmd_generate,
        "train": cmd_train,
        "assimilate": cmd_assimilate,
        "bench": cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (serialize.DataError, models.ModelError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (enkf.FilterDivergence, enkf.NumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
