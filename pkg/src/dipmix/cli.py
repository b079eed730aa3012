"""Command-line interface.

Subcommands: gen-data, train, eval, bound, sweep, grid. Experiments are
described by a single JSON config; flags override file values, and every
training run writes a manifest echoing the fully resolved config and seed,
so any artifact can be reproduced byte-for-byte from its manifest. Exit
codes: 0 success, 1 runtime failure, 2 invalid config or arguments.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import bound_report, generalization_gap
from .data import Dataset, apply_stats, gen_spirals, load_csv, save_csv, split, standardize
from .errors import ConfigurationError, DomainError, NumericError, ParseError, ShapeError
from .mixing import MODES, BetaParams, MixConfig, lambda_prior
from .nn import OptimState, load_model, mlp_init, save_model
from .objective import train as train_loop
from .predictor import PredictorConfig, decision_grid, evaluate

OUTPUT_DIR_ENV = "DIPMIX_OUTPUT_DIR"

DEFAULT_CONFIG = {
    "dataset": {
        "generator": {"n_per_class": 500, "noise_std": 0.05, "turns": 1.25, "seed": 0},
        "csv": None,
        "test_fraction": 0.5,
        "split_seed": 0,
        "standardize": True,
    },
    "model": {"layer_sizes": [2, 64, 64, 2], "activation": "relu"},
    "mix": {"mode": "none", "alpha": 0.0, "s": 1, "partner": "batch_permutation"},
    "optim": {"learning_rate": 0.1, "momentum": 0.9, "schedule": [[100, 0.1], [150, 0.1]]},
    "epochs": 200,
    "batch_size": 64,
    "predictor": {"mode": "raw", "s_test": 500, "alpha": None},
    "seeds": [0],
    "output_dir": None,
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(doc: dict) -> dict:
    """Fill defaults and validate, reporting every problem at once."""
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    unknown = set(doc) - set(DEFAULT_CONFIG)
    cfg = _merge(DEFAULT_CONFIG, {k: v for k, v in doc.items() if k in DEFAULT_CONFIG})
    errors = [f"unknown config key {k!r}" for k in sorted(unknown)]

    def check(cond, msg):
        if not cond:
            errors.append(msg)
        return cond

    ds = cfg["dataset"]
    if ds.get("csv") is None:
        gen = ds["generator"]
        check(isinstance(gen.get("n_per_class"), int) and gen["n_per_class"] >= 1,
              "dataset.generator.n_per_class must be a positive integer")
        check(isinstance(gen.get("noise_std"), (int, float)) and gen["noise_std"] >= 0,
              "dataset.generator.noise_std must be >= 0")
        check(isinstance(gen.get("turns"), (int, float)) and gen["turns"] > 0,
              "dataset.generator.turns must be > 0")
    frac = ds.get("test_fraction")
    check(frac is None or (isinstance(frac, (int, float)) and 0 < frac < 1),
          "dataset.test_fraction must be in (0, 1) or null")
    model = cfg["model"]
    sizes = model.get("layer_sizes")
    check(isinstance(sizes, list) and len(sizes) >= 2
          and all(isinstance(s, int) and s >= 1 for s in sizes),
          "model.layer_sizes must be a list of >= 2 positive integers")
    check(model.get("activation") in ("relu", "tanh"),
          "model.activation must be 'relu' or 'tanh'")
    mix = cfg["mix"]
    if check(mix.get("mode") in MODES, f"mix.mode must be one of {MODES}"):
        alpha = mix.get("alpha", 0.0)
        check(isinstance(alpha, (int, float)) and alpha >= 0, "mix.alpha must be >= 0")
        if mix["mode"] != "none":
            check(alpha > 0, f"mix.mode {mix['mode']!r} requires mix.alpha > 0")
        check(isinstance(mix.get("s"), int) and mix["s"] >= 1, "mix.s must be a positive integer")
    optim = cfg["optim"]
    check(isinstance(optim.get("learning_rate"), (int, float)) and optim["learning_rate"] > 0,
          "optim.learning_rate must be > 0")
    check(isinstance(optim.get("momentum"), (int, float)) and 0 <= optim["momentum"] < 1,
          "optim.momentum must be in [0, 1)")
    sched = optim.get("schedule", [])
    ok_sched = isinstance(sched, list) and all(
        isinstance(e, (list, tuple)) and len(e) == 2 for e in sched
    )
    check(ok_sched, "optim.schedule must be a list of [epoch, multiplier] pairs")
    if ok_sched:
        epochs_in_sched = [e for e, _ in sched]
        check(all(b > a for a, b in zip(epochs_in_sched, epochs_in_sched[1:])),
              "optim.schedule epochs must be strictly increasing")
    check(isinstance(cfg.get("epochs"), int) and cfg["epochs"] >= 1,
          "epochs must be a positive integer")
    check(isinstance(cfg.get("batch_size"), int) and cfg["batch_size"] >= 1,
          "batch_size must be a positive integer")
    pred = cfg["predictor"]
    check(pred.get("mode") in ("raw", "dip"), "predictor.mode must be 'raw' or 'dip'")
    check(isinstance(pred.get("s_test"), int) and pred["s_test"] >= 1,
          "predictor.s_test must be a positive integer")
    pa = pred.get("alpha")
    check(pa is None or (isinstance(pa, (int, float)) and pa >= 0),
          "predictor.alpha must be >= 0 or null (inherit mix.alpha)")
    seeds = cfg.get("seeds")
    check(isinstance(seeds, list) and len(seeds) >= 1
          and all(isinstance(s, int) and s >= 0 for s in seeds),
          "seeds must be a nonempty list of nonnegative integers")
    if errors:
        raise ConfigurationError("invalid config:\n  " + "\n  ".join(errors))
    return cfg


def load_config(path) -> dict:
    """Read a config file; a train manifest is accepted and unwrapped."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if isinstance(doc, dict) and "config" in doc and "command" in doc:
        doc = doc["config"]
    return doc


def build_datasets(cfg: dict):
    """Materialize (train, test, stats) from the dataset section."""
    ds_cfg = cfg["dataset"]
    if ds_cfg.get("csv"):
        full = load_csv(ds_cfg["csv"])
    else:
        gen = ds_cfg["generator"]
        full = gen_spirals(gen["n_per_class"], gen["noise_std"], gen["turns"], gen["seed"])
    if ds_cfg.get("test_fraction") is not None:
        train_set, test_set = split(full, ds_cfg["test_fraction"], ds_cfg["split_seed"])
    else:
        train_set, test_set = full, None
    stats = None
    if ds_cfg.get("standardize", True):
        train_set, stats = standardize(train_set)
        if test_set is not None:
            test_set = apply_stats(test_set, stats)
    sizes = cfg["model"]["layer_sizes"]
    problems = []
    if train_set.d != sizes[0]:
        problems.append(f"model input width {sizes[0]} != data dimension {train_set.d}")
    if train_set.k != sizes[-1]:
        problems.append(f"model output width {sizes[-1]} != class count {train_set.k}")
    if cfg["batch_size"] > train_set.n:
        problems.append(f"batch_size {cfg['batch_size']} exceeds train size {train_set.n}")
    if problems:
        raise ConfigurationError("invalid config:\n  " + "\n  ".join(problems))
    return train_set, test_set, stats


def _predictor_prior(mode: str, alpha) -> BetaParams | None:
    """Prediction-time ratio prior: Beta(alpha+1, alpha), or None when alpha=0."""
    if mode == "raw" or alpha is None or alpha == 0:
        return None
    return lambda_prior("label_preserving", float(alpha))


def make_predictor_config(cfg: dict, train_set: Dataset, seed: int) -> PredictorConfig:
    pred = cfg["predictor"]
    alpha = pred.get("alpha")
    if alpha is None:
        alpha = cfg["mix"]["alpha"]
    return PredictorConfig(
        mode=pred["mode"],
        s_test=pred["s_test"],
        prior=_predictor_prior(pred["mode"], alpha),
        partner_pool=train_set.features if pred["mode"] == "dip" else None,
        seed=seed,
    )


def run_training(cfg: dict, seed: int):
    """Train one model under a resolved config; returns params and metrics."""
    train_set, test_set, stats = build_datasets(cfg)
    params = mlp_init(cfg["model"]["layer_sizes"], cfg["model"]["activation"], seed=seed)
    mix = MixConfig(cfg["mix"]["mode"], cfg["mix"]["alpha"], cfg["mix"]["s"],
                    cfg["mix"]["partner"])
    optim = OptimState(cfg["optim"]["learning_rate"], cfg["optim"]["momentum"],
                       [tuple(e) for e in cfg["optim"]["schedule"]])
    rng = np.random.default_rng([seed, 1])
    params, metrics = train_loop(params, train_set, mix, optim,
                                 cfg["epochs"], cfg["batch_size"], rng)
    return params, metrics, train_set, test_set, stats


def write_metrics_csv(metrics, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,train_acc,lr\n")
        for row in metrics:
            fh.write(f"{row.epoch},{row.train_loss!r},{row.train_acc!r},{row.lr!r}\n")


def _output_dir(cfg: dict, flag_value) -> Path:
    out = flag_value or cfg.get("output_dir") or os.environ.get(OUTPUT_DIR_ENV)
    if not out:
        raise ConfigurationError(
            f"no output directory: set output_dir, --output-dir, or ${OUTPUT_DIR_ENV}"
        )
    return Path(out)


def cmd_gen_data(args) -> int:
    ds = gen_spirals(args.n, args.noise, args.turns, args.seed)
    save_csv(ds, args.out)
    counts = ds.labels.sum(axis=0).astype(int)
    names = ds.class_names or [str(i) for i in range(ds.k)]
    per_class = ", ".join(f"class {n}: {c}" for n, c in zip(names, counts))
    print(f"wrote {ds.n} rows to {args.out} ({per_class})")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(load_config(args.config))
    seed = args.seed if args.seed is not None else cfg["seeds"][0]
    out_dir = _output_dir(cfg, args.output_dir)
    cfg["output_dir"] = str(out_dir)
    cfg["seeds"] = [seed]
    params, metrics, train_set, test_set, stats = run_training(cfg, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / "model.json"
    metrics_path = out_dir / "metrics.csv"
    save_model(params, model_path)
    write_metrics_csv(metrics, metrics_path)
    outputs = {"model": str(model_path), "metrics": str(metrics_path)}
    if stats is not None:
        stats_path = out_dir / "standardize.json"
        with open(stats_path, "w", encoding="utf-8") as fh:
            json.dump({"mean": stats.mean.tolist(), "std": stats.std.tolist()}, fh)
            fh.write("\n")
        outputs["standardize"] = str(stats_path)
    train_prior = lambda_prior(cfg["mix"]["mode"], cfg["mix"]["alpha"])
    manifest = {
        "command": "train",
        "package": f"dipmix {__version__}",
        "seed": seed,
        "config": cfg,
        "training_prior": None if train_prior is None else {"a": train_prior.a, "b": train_prior.b},
        "outputs": outputs,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    last = metrics[-1]
    print(f"trained {cfg['epochs']} epochs (mode={cfg['mix']['mode']}); "
          f"final train_loss={last.train_loss:.6f} train_acc={last.train_acc:.4f}")
    print(f"wrote {model_path}, {metrics_path}, {manifest_path}")
    return 0


def _load_stats(path):
    from .data import StandardizeStats

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return StandardizeStats(np.asarray(doc["mean"]), np.asarray(doc["std"]))


def cmd_eval(args) -> int:
    params = load_model(args.model)
    ds = load_csv(args.data)
    stats = _load_stats(args.stats) if args.stats else None
    if stats is not None:
        ds = apply_stats(ds, stats)
    if args.partner_data:
        pool_ds = load_csv(args.partner_data)
        if stats is not None:
            pool_ds = apply_stats(pool_ds, stats)
        pool = pool_ds.features
    else:
        pool = ds.features
    cfg = PredictorConfig(
        mode=args.mode,
        s_test=args.s_test,
        prior=_predictor_prior(args.mode, args.alpha),
        partner_pool=pool if args.mode == "dip" else None,
        seed=args.seed,
    )
    result = evaluate(params, ds, cfg)
    print(json.dumps({
        "accuracy": result.accuracy,
        "misclassification_rate": result.misclassification_rate,
        "mean_loss": result.mean_loss,
        "mode": args.mode,
        "s_test": args.s_test,
        "alpha": args.alpha,
        "seed": args.seed,
        "n": ds.n,
    }, indent=2))
    return 0


def cmd_bound(args) -> int:
    ds = load_csv(args.data)
    if args.standardize:
        ds, _ = standardize(ds)
    prior = lambda_prior(args.mode, args.alpha) if args.mode != "none" else None
    report = bound_report(ds.features, prior, rho=args.rho, c_h=args.c_h,
                          loss_bound=args.loss_bound, delta=args.delta)
    text = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _parse_num_list(text: str, cast):
    try:
        return [cast(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ConfigurationError(f"expected a comma-separated list of numbers, got {text!r}")


def _sweep_cell(cfg: dict, alpha: float, s: int, seed: int):
    cell_cfg = copy.deepcopy(cfg)
    if alpha == 0:
        cell_cfg["mix"] = {"mode": "none", "alpha": 0.0, "s": 1,
                           "partner": cfg["mix"]["partner"]}
    else:
        mode = cfg["mix"]["mode"] if cfg["mix"]["mode"] != "none" else "label_mixing"
        cell_cfg["mix"] = {"mode": mode, "alpha": float(alpha), "s": int(s),
                           "partner": cfg["mix"]["partner"]}
    params, _, train_set, test_set, _ = run_training(cell_cfg, seed)
    if test_set is None:
        raise ConfigurationError("sweep requires dataset.test_fraction to measure a gap")
    pred_cfg = make_predictor_config(cell_cfg, train_set, seed)
    train_eval = evaluate(params, train_set, pred_cfg)
    test_eval = evaluate(params, test_set, pred_cfg)
    return {
        "alpha": float(alpha),
        "S": int(s),
        "mode": cell_cfg["mix"]["mode"],
        "seed": int(seed),
        "train_err": train_eval.misclassification_rate,
        "test_err": test_eval.misclassification_rate,
        "gap": generalization_gap(train_eval, test_eval),
    }


def cmd_sweep(args) -> int:
    cfg = resolve_config(load_config(args.config))
    alphas = _parse_num_list(args.alphas, float)
    s_values = _parse_num_list(args.s_values, int)
    seeds = _parse_num_list(args.seeds, int) if args.seeds else cfg["seeds"]
    if not alphas or not s_values or not seeds:
        raise ConfigurationError("sweep needs nonempty --alphas, --s-values, and seeds")
    out_dir = _output_dir(cfg, args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    progress_path = out_dir / "sweep_progress.json"
    progress = {}
    if progress_path.exists():
        with open(progress_path, "r", encoding="utf-8") as fh:
            progress = json.load(fh)
    failures = 0
    for alpha in alphas:
        for s in s_values:
            for seed in seeds:
                key = f"alpha={alpha:g},S={s},seed={seed}"
                if key in progress and "error" not in progress[key]:
                    continue
                try:
                    progress[key] = _sweep_cell(cfg, alpha, s, seed)
                except Exception as exc:  # keep sweeping; record the failure
                    failures += 1
                    progress[key] = {"error": f"{type(exc).__name__}: {exc}"}
                    print(f"cell {key} failed: {exc}", file=sys.stderr)
                with open(progress_path, "w", encoding="utf-8") as fh:
                    json.dump(progress, fh, indent=2)
    csv_path = out_dir / "sweep.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("alpha,S,mode,seed,train_err,test_err,gap,train_err_se,test_err_se,gap_se\n")
        for alpha in alphas:
            for s in s_values:
                rows = []
                for seed in seeds:
                    row = progress.get(f"alpha={alpha:g},S={s},seed={seed}")
                    if row and "error" not in row:
                        rows.append(row)
                        fh.write(f"{row['alpha']:g},{row['S']},{row['mode']},{row['seed']},"
                                 f"{row['train_err']!r},{row['test_err']!r},{row['gap']!r},,,\n")
                if rows:
                    agg = {}
                    for fld in ("train_err", "test_err", "gap"):
                        vals = np.array([r[fld] for r in rows])
                        agg[fld] = float(vals.mean())
                        agg[fld + "_se"] = (float(vals.std(ddof=1) / np.sqrt(len(vals)))
                                            if len(vals) > 1 else 0.0)
                    fh.write(f"{alpha:g},{s},{rows[0]['mode']},mean,"
                             f"{agg['train_err']!r},{agg['test_err']!r},{agg['gap']!r},"
                             f"{agg['train_err_se']!r},{agg['test_err_se']!r},"
                             f"{agg['gap_se']!r}\n")
    print(f"wrote {csv_path} ({len(alphas) * len(s_values) * len(seeds)} cells, "
          f"{failures} failed)")
    return 0


def cmd_grid(args) -> int:
    params = load_model(args.model)
    pool = None
    if args.mode == "dip":
        if not args.partner_data:
            raise ConfigurationError("--mode dip requires --partner-data for the mix pool")
        pool_ds = load_csv(args.partner_data)
        if args.stats:
            pool_ds = apply_stats(pool_ds, _load_stats(args.stats))
        pool = pool_ds.features
    cfg = PredictorConfig(
        mode=args.mode,
        s_test=args.s_test,
        prior=_predictor_prior(args.mode, args.alpha),
        partner_pool=pool,
        seed=args.seed,
    )
    xs, ys, classes, max_probs = decision_grid(
        params, cfg, (args.xmin, args.xmax), (args.ymin, args.ymax), args.res
    )
    csv_path = Path(f"{args.out_prefix}.csv")
    pgm_path = Path(f"{args.out_prefix}.pgm")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("x,y,class,prob\n")
        for r in range(args.res):
            for c in range(args.res):
                fh.write(f"{float(xs[c])!r},{float(ys[r])!r},"
                         f"{int(classes[r, c])},{float(max_probs[r, c])!r}\n")
    maxval = max(1, params.n_outputs - 1)
    with open(pgm_path, "w", encoding="utf-8") as fh:
        fh.write(f"P2\n{args.res} {args.res}\n{maxval}\n")
        for r in range(args.res):
            fh.write(" ".join(str(v) for v in classes[r]) + "\n")
    print(f"wrote {csv_path} and {pgm_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dipmix",
        description="Sample-mix classifiers with marginalized prediction and "
                    "complexity diagnostics on 2-D synthetic data.",
    )
    parser.add_argument("--version", action="version", version=f"dipmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a two-spirals CSV")
    p.add_argument("--n", type=int, default=500, help="points per class")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--turns", type=float, default=1.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model from a JSON config (or a manifest)")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a CSV dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("raw", "dip"), default="raw")
    p.add_argument("--s-test", type=int, default=500)
    p.add_argument("--alpha", type=float, default=1.0,
                   help="prediction prior is Beta(alpha+1, alpha); 0 disables mixing")
    p.add_argument("--partner-data", default=None,
                   help="CSV whose features form the mix pool (default: --data)")
    p.add_argument("--stats", default=None, help="standardize.json from training")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bound", help="complexity bound report for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mode", choices=MODES, default="label_preserving")
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--c-h", type=float, default=1.0)
    p.add_argument("--loss-bound", type=float, default=10.0)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("sweep", help="train/eval over an alpha x S x seed grid")
    p.add_argument("config")
    p.add_argument("--alphas", required=True, help="comma list; 0 means no mixing")
    p.add_argument("--s-values", required=True, help="comma list of draw counts")
    p.add_argument("--seeds", default=None, help="comma list (default: config seeds)")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("grid", help="export a decision grid as CSV and PGM")
    p.add_argument("--model", required=True)
    p.add_argument("--xmin", type=float, default=-1.5)
    p.add_argument("--xmax", type=float, default=1.5)
    p.add_argument("--ymin", type=float, default=-1.5)
    p.add_argument("--ymax", type=float, default=1.5)
    p.add_argument("--res", type=int, default=128)
    p.add_argument("--mode", choices=("raw", "dip"), default="raw")
    p.add_argument("--s-test", type=int, default=500)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--partner-data", default=None)
    p.add_argument("--stats", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ParseError, DomainError, ShapeError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
