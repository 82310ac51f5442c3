"""Command line entry point: ``disbound {bound,train,validate,mi}``."""

import argparse
import csv
from dataclasses import fields
import json
import math
from pathlib import Path
import sys
import time

import numpy as np
import yaml

from . import __version__
from .bounds import (
    DEFAULT_C_GRID,
    SCHEMA_VERSION,
    BoundContext,
    bound_baseline_from_dkl,
    bound_ours_from_distance,
    bound_stochastic_from_distance,
)
from .divergences import disintegrated_kl_gaussian
from .gaussian_net import MlpArchitecture, load_csv, make_blobs, make_moons, split_dataset
from .mutual_info import EnumerationCapError, info_bound_rhs, load_problem, shannon_mi, sibson_mi
from .rng import stream
from .training import METRIC_COLUMNS, TrainingConfig, evaluate_run, train
from .validity_sim import BOUND_KINDS, append_coverage_csv, coverage, maurer_check

SUMMARY_COLUMNS = (
    "method",
    "r_test_mean",
    "r_test_std",
    "bound_mean",
    "bound_std",
    "r_emp_mean",
    "r_emp_std",
    "div_mean",
    "div_std",
    "bound_ce_mean",
)

DEFAULT_TRAIN = {
    "seed": 0,
    "data": {
        "generator": "blobs",
        "path": None,
        "n_features": 10,
        "n_classes": 2,
        "spread": 7.0,
        "separation": 3.0,
        "noise": 0.2,
        "sizes": {"prior": 500, "posterior": 500, "test": 2000},
    },
    "model": {"hidden": [64], "slope": 0.01},
    "training": {
        "epochs_prior": 5,
        "epochs_posterior": 10,
        "lr_prior": 1e-2,
        "lr_posterior": 1e-4,
        "batch_size": 32,
        "sigma2": 1e-3,
        "delta": 0.05,
        "objective": "ours",
        "c_grid": list(DEFAULT_C_GRID),
        "n_eval": 400,
        "catoni_lr": 1e-2,
        "z": 4.0,
    },
}

DEFAULT_SIMULATOR = {
    "bound_kinds": list(BOUND_KINDS),
    "deltas": [0.05, 0.1],
    "mode": "auto",
    "trials": 20000,
    "alpha": 2.0,
    "seed": 0,
}


class ConfigError(ValueError):
    pass


def _merge(defaults, override):
    out = dict(defaults)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_yaml(path):
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"--config: file not found: {path}")
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"--config: {path} must hold a mapping at top level")
    return data


def _out_dir(args):
    if args.out_dir is None:
        return None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# ------------------------------------------------------------ bound


def _parse_floats(text, flag):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{flag}: expected comma separated numbers, got {text!r}")


def cmd_bound(args, parser):
    config = _load_yaml(args.config).get("bound", {})
    for key, value in config.items():
        key = {"T": "t_priors"}.get(key, key.replace("-", "_"))
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    if args.t_priors is None:
        args.t_priors = 1
    checks = [
        ("--method", args.method is not None, "is required"),
        ("--m", args.m is not None and int(args.m) == args.m and args.m >= 1, "must be a positive integer"),
        ("--delta", args.delta is not None and 0 < args.delta < 1, "must lie in (0, 1)"),
        ("--T", args.t_priors is not None and int(args.t_priors) == args.t_priors and args.t_priors >= 1, "must be a positive integer"),
        ("--sigma2", args.sigma2 is not None and args.sigma2 > 0, "must be positive"),
    ]
    for flag, ok, message in checks:
        if not ok:
            parser.error(f"{flag} {message}")
    ctx = BoundContext(m=int(args.m), delta=args.delta, t_priors=int(args.t_priors))
    weights = None
    if args.weights is not None:
        path = Path(args.weights)
        if not path.is_file():
            parser.error(f"--weights: file not found: {path}")
        weights = np.load(path)
        for key in ("w", "v"):
            if key not in weights:
                parser.error("--weights: archive must contain arrays 'w' and 'v' (and 'eps' for baselines)")
    dist_sq = args.dist_sq
    if weights is not None:
        diff = weights["w"] - weights["v"]
        dist_sq = float(diff @ diff)
    method = args.method
    if method == "stochastic":
        if args.risks is None:
            parser.error("--risks is required for the stochastic method")
        risks = args.risks if isinstance(args.risks, list) else _parse_floats(str(args.risks), "--risks")
        if not risks or any(not 0 <= r <= 1 for r in risks):
            parser.error("--risks must be a nonempty list of values in [0, 1]")
        if dist_sq is None or dist_sq < 0:
            parser.error("--dist-sq (or --weights) is required and must be nonnegative")
        report = bound_stochastic_from_distance(ctx, risks, dist_sq, args.sigma2)
    else:
        if args.risk is None or not 0 <= args.risk <= 1:
            parser.error("--risk must lie in [0, 1]")
        if method == "ours":
            if dist_sq is None or dist_sq < 0:
                parser.error("--dist-sq (or --weights) is required and must be nonnegative")
            report = bound_ours_from_distance(ctx, args.risk, dist_sq, args.sigma2)
        else:
            dkl = args.dkl
            if weights is not None:
                if "eps" not in weights:
                    parser.error("--weights: baselines need an 'eps' array")
                dkl = disintegrated_kl_gaussian(weights["w"], weights["eps"], weights["v"], args.sigma2)
            if dkl is None:
                parser.error("--dkl (or --weights) is required for baseline methods")
            grid = DEFAULT_C_GRID
            if args.c_grid is not None:
                grid = _parse_floats(str(args.c_grid), "--c-grid") if not isinstance(args.c_grid, list) else args.c_grid
                if not grid or any(not (c > 0 and math.isfinite(c)) for c in grid):
                    parser.error("--c-grid must list at least one positive value")
            report = bound_baseline_from_dkl(ctx, method, args.risk, dkl, args.sigma2, grid)
    text = _dump_json(report.to_dict())
    sys.stdout.write(text)
    out = _out_dir(args)
    if out is not None:
        (out / "bound.json").write_text(text)
    return 0


# ------------------------------------------------------------ train


def _training_config(cfg, seed):
    known = {f.name for f in fields(TrainingConfig)}
    section = dict(cfg["training"])
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"training: unknown keys {sorted(unknown)}")
    section["seed"] = seed
    section["c_grid"] = tuple(section["c_grid"])
    return TrainingConfig(**section)


def build_datasets(data_cfg, seed):
    sizes = data_cfg["sizes"]
    wanted = (int(sizes["prior"]), int(sizes["posterior"]), int(sizes["test"]))
    if min(wanted) < 1:
        raise ConfigError("data.sizes: every split needs at least one example")
    rng = stream(seed, "data")
    total = sum(wanted)
    generator = data_cfg["generator"]
    if generator == "blobs":
        ds = make_blobs(total, int(data_cfg["n_features"]), int(data_cfg["n_classes"]), rng, float(data_cfg["spread"]), float(data_cfg["separation"]))
    elif generator == "moons":
        ds = make_moons(total, rng, float(data_cfg["noise"]))
    elif generator == "csv":
        path = data_cfg.get("path")
        if not path or not Path(path).is_file():
            raise ConfigError(f"data.path: file not found: {path}")
        ds = load_csv(path)
    else:
        raise ConfigError(f"data.generator must be blobs, moons or csv, got {generator!r}")
    if len(ds) < total:
        raise ConfigError(f"data: {len(ds)} examples cannot fill splits of sizes {wanted}")
    return split_dataset(ds, wanted, stream(seed, "split"))


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})


def format_summary(rows):
    lines = [f"{'method':<12}{'R_T':>16}{'Bnd':>16}{'R_S':>16}{'Div':>20}"]
    for r in rows:
        lines.append(
            f"{r['method']:<12}"
            f"{r['r_test_mean']:>9.4f}±{r['r_test_std']:<6.4f}"
            f"{r['bound_mean']:>9.4f}±{r['bound_std']:<6.4f}"
            f"{r['r_emp_mean']:>9.4f}±{r['r_emp_std']:<6.4f}"
            f"{r['div_mean']:>12.4f}±{r['div_std']:<7.4f}"
        )
    return "\n".join(lines)


def cmd_train(args, parser):
    cfg = _merge(DEFAULT_TRAIN, _load_yaml(args.config))
    seed = int(args.seed if args.seed is not None else cfg["seed"])
    cfg["seed"] = seed
    config = _training_config(cfg, seed)
    s_prior, s, s_test = build_datasets(cfg["data"], seed)
    n_classes = int(max(s_prior.y.max(), s.y.max(), s_test.y.max()) + 1)
    hidden = [int(h) for h in cfg["model"]["hidden"]]
    arch = MlpArchitecture((s.x.shape[1], *hidden, max(n_classes, 2)), float(cfg["model"]["slope"]))
    started = time.perf_counter()
    run = train(arch, config, s_prior, s)
    summary = evaluate_run(arch, run, s, s_test, config)
    elapsed = time.perf_counter() - started
    table = format_summary(summary)
    print(f"parameters d = {arch.n_params}, selected prior {run.selected_prior_index} of {config.epochs_prior}")
    print(table)
    out = _out_dir(args)
    if out is not None:
        (out / "run.json").write_text(run.to_json() + "\n")
        _write_csv(out / "metrics.csv", METRIC_COLUMNS, run.history)
        _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
        (out / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=True))
        (out / "timing.json").write_text(_dump_json({"seconds": elapsed}))
    return 0


# ------------------------------------------------------------ validate / mi


def _problem_from(cfg, config_path):
    if "problem_file" in cfg:
        path = Path(cfg["problem_file"])
        if not path.is_absolute() and config_path is not None:
            path = Path(config_path).parent / path
        if not path.is_file():
            raise ConfigError(f"problem_file: file not found: {path}")
        return load_problem(path, cfg.get("enumeration_cap"))
    if "problem" not in cfg:
        raise ConfigError("config needs a 'problem' section or a 'problem_file' entry")
    problem_cfg = dict(cfg["problem"])
    if "enumeration_cap" in cfg:
        problem_cfg["enumeration_cap"] = cfg["enumeration_cap"]
    return load_problem(problem_cfg)


def cmd_validate(args, parser):
    cfg = _load_yaml(args.config)
    problem = _problem_from(cfg, args.config)
    sim = _merge(DEFAULT_SIMULATOR, cfg.get("simulator"))
    seed = int(args.seed if args.seed is not None else sim["seed"])
    if sim["mode"] == "exact" and not problem.enumerable:
        raise EnumerationCapError(
            f"{problem.name}: |Z|^m * |H| = {problem.enumeration_size} exceeds the cap "
            f"{problem.enumeration_cap}; set simulator.mode to monte_carlo"
        )
    results = []
    failed = False
    print(f"{'bound_kind':<20}{'mode':<13}{'delta':>7}{'trials':>9}{'viol':>7}{'rate':>12}{'cp_upper':>12}")
    for kind in sim["bound_kinds"]:
        for delta in sim["deltas"]:
            res = coverage(problem, kind, float(delta), trials=int(sim["trials"]), seed=seed, alpha=float(sim["alpha"]), mode=sim["mode"])
            results.append(res)
            failed |= res.cp_lower > res.delta
            print(f"{kind:<20}{res.mode:<13}{res.delta:>7.3g}{res.trials:>9}{res.violations:>7}{res.rate:>12.4g}{res.cp_upper:>12.4g}")
    maurer_cfg = cfg.get("maurer", {"m_max": 50})
    maurer_ok = True
    maurer_rows = []
    if maurer_cfg:
        maurer_ok, maurer_rows = maurer_check(int(maurer_cfg.get("m_max", 50)))
        print(f"maurer check through m={maurer_cfg.get('m_max', 50)}: {'pass' if maurer_ok else 'FAIL'}")
    out = _out_dir(args)
    if out is not None:
        append_coverage_csv(out / "coverage.csv", results)
        if maurer_rows:
            with open(out / "maurer.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(("m", "p", "exact", "bound", "passed"))
                writer.writerows(maurer_rows)
    return 1 if failed or not maurer_ok else 0


def cmd_mi(args, parser):
    cfg = _load_yaml(args.config)
    problem = _problem_from(cfg, args.config)
    mi_cfg = _merge({"alphas": [1.5, 2.0, 4.0, 8.0], "delta": 0.05, "monte_carlo": False, "n_samples": 20000, "seed": 0}, cfg.get("mi"))
    seed = int(args.seed if args.seed is not None else mi_cfg["seed"])
    mc = bool(mi_cfg["monte_carlo"])
    if not problem.enumerable and not mc:
        raise EnumerationCapError(
            f"{problem.name}: |Z|^m * |H| = {problem.enumeration_size} exceeds the cap "
            f"{problem.enumeration_cap}; set mi.monte_carlo to true"
        )
    delta = float(mi_cfg["delta"])
    shannon = shannon_mi(problem, monte_carlo=mc, n_samples=int(mi_cfg["n_samples"]), seed=seed)
    out_doc = {
        "schema_version": SCHEMA_VERSION,
        "problem": problem.name,
        "m": problem.m,
        "delta": delta,
        "shannon": {"value": shannon.value, "prior": shannon.prior.probs.tolist(), "stderr": shannon.stderr},
        "sibson": [],
    }
    print(f"{problem.name}: Shannon I = {shannon.value:.6g}")
    for alpha in mi_cfg["alphas"]:
        res = sibson_mi(problem, float(alpha), monte_carlo=mc, n_samples=int(mi_cfg["n_samples"]), seed=seed)
        entry = {"alpha": float(alpha), "value": res.value, "prior": res.prior.probs.tolist(), "stderr": res.stderr}
        if problem.enumerable:
            entry["budgets"] = {kind: info_bound_rhs(kind, problem, float(alpha), delta).psi for kind in ("thm8", "seeger_mi", "esposito")}
        out_doc["sibson"].append(entry)
        print(f"  alpha={alpha:<6g} I_alpha = {res.value:.6g}")
    if problem.enumerable:
        out_doc["kl_version_budget"] = info_bound_rhs("kl_version", problem, 2.0, delta).psi
    text = _dump_json(out_doc)
    out = _out_dir(args)
    if out is not None:
        (out / "mi.json").write_text(text)
    return 0


# ------------------------------------------------------------ parser


def build_parser():
    parser = argparse.ArgumentParser(prog="disbound", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="root seed (overrides the config)")
    common.add_argument("--out-dir", default=None, help="directory for output files")
    common.add_argument("--config", default=None, help="YAML config file")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", parents=[common], help="evaluate one bound")
    b.add_argument("--method", choices=("ours", "rivasplata", "blanchard", "catoni", "stochastic"))
    b.add_argument("--m", type=int)
    b.add_argument("--delta", type=float)
    b.add_argument("--T", dest="t_priors", type=int, default=None)
    b.add_argument("--sigma2", type=float)
    b.add_argument("--risk", type=float, help="empirical risk of the sampled net")
    b.add_argument("--risks", help="comma separated per-net risks (stochastic method)")
    b.add_argument("--dist-sq", type=float, help="squared distance ||w - v||^2")
    b.add_argument("--dkl", type=float, help="disintegrated KL value (baselines)")
    b.add_argument("--weights", help=".npz archive with arrays w, v and optionally eps")
    b.add_argument("--c-grid", default=None, help="comma separated Catoni grid")
    b.set_defaults(func=cmd_bound)

    t = sub.add_parser("train", parents=[common], help="two-phase training and evaluation")
    t.set_defaults(func=cmd_train)
    v = sub.add_parser("validate", parents=[common], help="coverage of bounds on a finite problem")
    v.set_defaults(func=cmd_validate)
    i = sub.add_parser("mi", parents=[common], help="mutual information of a finite problem")
    i.set_defaults(func=cmd_mi)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (ConfigError, EnumerationCapError, ValueError) as exc:
        print(f"disbound {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
