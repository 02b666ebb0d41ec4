"""Batch command-line interface.

Commands: ``synth``, ``train``, ``eval``, ``impute``, ``kernel-check``. Every
command is a pure function of its input files, flags and seed. Settings come
from flags, then a JSON ``--config`` file, then built-in defaults.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import data as D
from .elbo import NumericalError
from .evaluation import EvalReport, knn_cv_accuracy, mse, r2_alignment
from .kernels import ngsm_gram, random_params
from .model import ModelState, TrainConfig, impute, latent_mean, reconstruct, train
from .rff import error_bound, error_bound_epsilon, feature_matrix, sample_spectral_points

log = logging.getLogger("ngmvlvm")

KERNEL_CHECK_SCHEMA = "ngmvlvm-kernel-check-v1"

DEFAULTS = {
    "common": {"seed": 0, "out": ".", "threads": 1},
    "synth": {"preset": "A", "n": 150, "m": 10, "noise_std": 0.1, "missing_frac": 0.0},
    "train": {"data": None, "Q": 2, "L": 100, "D": 2, "I": 1, "T": 10000, "lr": 0.01,
              "beta1": 0.9, "beta2": 0.99, "tol": 1e-4, "window": 100,
              "n_feature_draws": 64},
    "eval": {"data": None, "model": None, "learned": None, "truth": None, "pred": None,
             "metrics": "knn,r2,mse", "k": 1, "folds": 5, "n_feature_draws": None},
    "impute": {"data": None, "model": None, "n_feature_draws": None},
    "kernel-check": {"n": 30, "Q": 2, "D": 2, "Ls": "64,256,1024,4096", "n_seeds": 20,
                     "prob": 0.5, "moment_draws": 100000},
}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def _csv_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                        for x in row])


def _ensure_out(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise UsageError(f"output directory {path} is not writable")
    return path


def _load_data(path):
    if not path:
        raise UsageError("--data <manifest.json> is required")
    if not os.path.isfile(path):
        raise UsageError(f"manifest not found: {path}")
    try:
        return D.load_manifest(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad manifest {path}: {exc}") from exc


def _load_model(path):
    if not path or not os.path.isfile(path):
        raise UsageError(f"model file not found: {path}")
    try:
        return ModelState.load(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad model file {path}: {exc}") from exc


def _manifest_path(manifest, key, base):
    value = manifest.get(key)
    return None if value is None else os.path.join(base, value)


# --------------------------------------------------------------------------
# commands


def cmd_synth(cfg):
    out = _ensure_out(cfg["out"])
    preset = cfg["preset"]
    if preset not in D.PRESETS:
        raise UsageError(f"unknown synthetic config {preset!r}; expected A or B")
    if cfg["n"] < 2 or cfg["m"] < 1:
        raise UsageError("need --n >= 2 and --m >= 1")
    data, X, _ = D.synthetic_dataset(preset, cfg["n"], cfg["seed"], cfg["m"], cfg["noise_std"])
    frac = cfg["missing_frac"]
    masks = D.make_missing_masks(data.dims, data.N, frac, cfg["seed"]) if frac > 0 else None
    views = []
    for v, Y in enumerate(data.views):
        name = f"view{v}.csv"
        D.save_view_csv(os.path.join(out, name), Y, None if masks is None else masks[v])
        views.append({"path": name, "n_cols": int(Y.shape[1]), "kernel": D.PRESETS[preset][v],
                      "noise_std": cfg["noise_std"]})
    D.save_matrix_csv(os.path.join(out, "latent.csv"), X, ["x0", "x1"])
    manifest = {
        "n": data.N, "n_views": data.V, "views": views, "latent": "latent.csv",
        "preset": preset, "kernels": list(D.PRESETS[preset]), "seed": cfg["seed"],
        "missing_frac": frac, "latent_shape": "s_curve",
        "generator_defaults": {"M": cfg["m"], "noise_std": cfg["noise_std"]},
    }
    if masks is not None:
        truth = []
        for v, Y in enumerate(data.views):
            name = f"truth_view{v}.csv"
            D.save_view_csv(os.path.join(out, name), Y)
            truth.append(name)
        manifest["truth_views"] = truth
    D.write_manifest(os.path.join(out, "manifest.json"), manifest)
    print(f"wrote {data.V} views with N={data.N} to {out}")
    return 0


def _train_config(cfg):
    try:
        return TrainConfig(Q=cfg["Q"], L=cfg["L"], D=cfg["D"], I=cfg["I"], T=cfg["T"],
                           lr=cfg["lr"], beta1=cfg["beta1"], beta2=cfg["beta2"],
                           tol=cfg["tol"], window=cfg["window"], seed=cfg["seed"],
                           n_feature_draws=cfg["n_feature_draws"],
                           threads=cfg["threads"]).validate()
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(cfg):
    data, _ = _load_data(cfg["data"])
    config = _train_config(cfg)
    out = _ensure_out(cfg["out"])
    model, history = train(data, config)
    model.save(os.path.join(out, "model.json"))
    _csv_rows(os.path.join(out, "elbo_trace.csv"), ["iteration", "elbo"],
              [(i, float(h)) for i, h in enumerate(history)])
    print(f"trained {len(history)} iterations; final elbo {history[-1]:.6g}")
    return 0


def cmd_eval(cfg):
    data, manifest = _load_data(cfg["data"])
    base = data.meta["base_dir"]
    out = _ensure_out(cfg["out"])
    metrics = [m.strip() for m in cfg["metrics"].split(",") if m.strip()]
    unknown = set(metrics) - {"knn", "r2", "mse"}
    if unknown:
        raise UsageError(f"unknown metrics {sorted(unknown)}")
    model = _load_model(cfg["model"]) if cfg["model"] else None
    if cfg["learned"]:
        learned = D.read_matrix_csv(cfg["learned"])[0]
    elif model is not None:
        learned = latent_mean(model)
    else:
        learned = None
    if learned is not None and learned.shape[0] != data.N:
        raise UsageError(f"learned latents have {learned.shape[0]} rows, data has {data.N}")

    for metric in metrics:
        if metric in ("knn", "r2") and learned is None:
            raise UsageError(f"{metric} needs --model or --learned")
        if metric == "knn":
            if data.labels is None:
                raise UsageError("knn needs labels in the manifest")
            report = knn_cv_accuracy(learned, data.labels, cfg["k"], cfg["folds"], cfg["seed"])
        elif metric == "r2":
            truth_path = cfg["truth"] or _manifest_path(manifest, "latent", base)
            if truth_path is None or not os.path.isfile(truth_path):
                raise UsageError("r2 needs a ground-truth latent file (--truth or manifest)")
            truth = D.read_matrix_csv(truth_path)[0]
            report = EvalReport("r2_alignment", [r2_alignment(learned, truth)],
                                {"fit": "affine, learned -> true"})
        else:
            if cfg["pred"]:
                pred, _ = _load_data(cfg["pred"])
                preds = pred.views
            elif model is not None:
                preds = reconstruct(model, data, cfg["n_feature_draws"], cfg["seed"])
            else:
                raise UsageError("mse needs --pred <manifest> or --model")
            if [p.shape for p in preds] != [Y.shape for Y in data.views]:
                raise UsageError("predicted views do not match data shapes")
            values = [mse(Y, P, None if m is None else ~m)
                      for Y, P, m in zip(data.views, preds, data.masks)]
            report = EvalReport("mse", values, {"per": "view"})
        report.to_json(os.path.join(out, f"report_{metric}.json"))
        report.to_csv(os.path.join(out, f"report_{metric}.csv"))
        print(f"{report.metric}: mean {report.mean:.6g} (std {report.std:.3g})")
    return 0


def cmd_impute(cfg):
    data, manifest = _load_data(cfg["data"])
    base = data.meta["base_dir"]
    model = _load_model(cfg["model"])
    out = _ensure_out(cfg["out"])
    for v, mask in enumerate(data.masks):
        if mask is not None and mask.all(axis=0).any():
            j = int(np.flatnonzero(mask.all(axis=0))[0])
            raise UsageError(f"view {v} column {j} is entirely missing")
    try:
        filled = impute(model, data, cfg["n_feature_draws"], cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    for v, Y in enumerate(filled):
        D.save_view_csv(os.path.join(out, f"view{v}_imputed.csv"), Y)
    truth = manifest.get("truth_views")
    if truth and data.has_missing:
        model_err, base_err = [], []
        for v, name in enumerate(truth):
            mask = data.masks[v]
            if mask is None:
                continue
            Yt = D.read_matrix_csv(os.path.join(base, name))[0]
            col_mean = np.where(~mask, data.views[v], 0).sum(0) / (~mask).sum(0)
            baseline = np.where(mask, col_mean, data.views[v])
            model_err.append(mse(Yt, filled[v], mask))
            base_err.append(mse(Yt, baseline, mask))
        for metric, values in (("imputation_mse", model_err),
                               ("mean_imputation_mse", base_err)):
            report = EvalReport(metric, values, {"per": "masked view"})
            report.to_json(os.path.join(out, f"report_{metric}.json"))
            report.to_csv(os.path.join(out, f"report_{metric}.csv"))
        print(f"masked-entry mse {np.mean(model_err):.6g} vs column-mean "
              f"{np.mean(base_err):.6g}")
    return 0


def cmd_kernel_check(cfg):
    out = _ensure_out(cfg["out"])
    try:
        Ls = [int(x) for x in str(cfg["Ls"]).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --Ls: {exc}") from exc
    if any(L < 2 or L % 2 for L in Ls) or cfg["n"] < 1 or cfg["n_seeds"] < 1:
        raise UsageError("Ls must be even integers >= 2; n and n_seeds >= 1")
    if not 0 < cfg["prob"] < cfg["n"]:
        raise UsageError("prob must lie in (0, n)")
    N, Q, Dim = cfg["n"], cfg["Q"], cfg["D"]
    rows = []
    for s in range(cfg["n_seeds"]):
        rng = np.random.default_rng([cfg["seed"], 23, s])
        X = rng.standard_normal((N, Dim))
        params = random_params(rng, Q, Dim)
        K = ngsm_gram(X, params)
        K_norm = float(np.linalg.norm(K, 2))
        for L in Ls:
            sample = sample_spectral_points(params, L, np.random.default_rng([cfg["seed"], 29, s, L]))
            Phi = feature_matrix(X, sample, params)
            err = float(np.linalg.norm(Phi @ Phi.T - K, 2))
            rows.append((L, s, err, error_bound(N, L, Q, params.alpha, K_norm, err),
                         error_bound_epsilon(N, L, Q, params.alpha, K_norm, cfg["prob"])))
    _csv_rows(os.path.join(out, "kernel_check.csv"),
              ["L", "seed", "spec_norm_err", "bound", "eps_at_prob"], rows)

    # sampler moments against the target bivariate Gaussian
    rng = np.random.default_rng([cfg["seed"], 31])
    params = random_params(rng, Q, Dim)
    n = cfg["moment_draws"]
    sample = sample_spectral_points(params, 2 * n, rng)
    mrows = []
    for q in range(Q):
        W = np.concatenate([sample.W1[q], sample.W2[q]], axis=1)
        target_mean = np.concatenate([params.mu1[q], params.mu2[q]])
        s1, s2 = np.sqrt(params.sigma1sq[q]), np.sqrt(params.sigma2sq[q])
        cov = np.block([[np.diag(s1 * s1), np.diag(params.rho[q] * s1 * s2)],
                        [np.diag(params.rho[q] * s1 * s2), np.diag(s2 * s2)]])
        mean = W.mean(axis=0)
        Wc = W - mean
        for i in range(2 * Dim):
            se = Wc[:, i].std() / np.sqrt(n)
            mrows.append((q, "mean", i, i, float(mean[i]), float(target_mean[i]), float(se)))
            for j in range(i, 2 * Dim):
                prod = Wc[:, i] * Wc[:, j]
                mrows.append((q, "cov", i, j, float(prod.mean()), float(cov[i, j]),
                              float(prod.std() / np.sqrt(n))))
    _csv_rows(os.path.join(out, "sampler_moments.csv"),
              ["component", "stat", "i", "j", "empirical", "target", "stderr"], mrows)
    with open(os.path.join(out, "kernel_check.json"), "w", encoding="utf-8") as fh:
        json.dump({"schema": KERNEL_CHECK_SCHEMA, "seed": cfg["seed"], "n": N, "Q": Q, "D": Dim,
                   "Ls": Ls, "n_seeds": cfg["n_seeds"], "prob": cfg["prob"],
                   "moment_draws": n, "files": ["kernel_check.csv", "sampler_moments.csv"]},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(rows)} error rows and {len(mrows)} moment rows to {out}")
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "impute": cmd_impute,
            "kernel-check": cmd_kernel_check}


# --------------------------------------------------------------------------
# argument parsing


def _add(p, flag, dest, typ, cmd, help_text):
    default = {**DEFAULTS["common"], **DEFAULTS[cmd]}.get(dest)
    p.add_argument(flag, dest=dest, type=typ, default=argparse.SUPPRESS,
                   help=f"{help_text} (default: {default})")


def build_parser():
    parser = argparse.ArgumentParser(prog="ngmvlvm", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _add(p, "--seed", "seed", int, name, "random seed")
        _add(p, "--out", "out", str, name, "output directory")
        _add(p, "--threads", "threads", int, name,
             "worker threads; results do not depend on this")
        p.add_argument("--config", dest="config", default=None,
                       help="JSON file of settings" + (" or preset name A/B" if name == "synth"
                                                       else "") + " (default: none)")
        return p

    p = command("synth", "generate the two-view S-curve datasets (A: RBF/RBF, B: RBF/Gibbs)")
    _add(p, "--n", "n", int, "synth", "number of points")
    _add(p, "--m", "m", int, "synth", "output dimensions per view")
    _add(p, "--noise-std", "noise_std", float, "synth", "observation noise std")
    _add(p, "--missing-frac", "missing_frac", float, "synth",
         "fraction of entries to blank out (also writes truth views)")

    p = command("train", "fit the model to a dataset manifest")
    _add(p, "--data", "data", str, "train", "dataset manifest")
    _add(p, "--Q", "Q", int, "train", "mixture components per view")
    _add(p, "--L", "L", int, "train", "random features per component (L/2 frequency pairs)")
    _add(p, "--D", "D", int, "train", "latent dimension")
    _add(p, "--I", "I", int, "train", "Monte-Carlo samples per iteration")
    _add(p, "--T", "T", int, "train", "maximum iterations")
    _add(p, "--lr", "lr", float, "train", "Adam learning rate")
    _add(p, "--beta1", "beta1", float, "train", "Adam beta1")
    _add(p, "--beta2", "beta2", float, "train", "Adam beta2")
    _add(p, "--tol", "tol", float, "train", "relative moving-average ELBO tolerance")
    _add(p, "--window", "window", int, "train", "moving-average window")
    _add(p, "--n-feature-draws", "n_feature_draws", int, "train",
         "frequency draws averaged at prediction time")

    p = command("eval", "evaluate learned latents and reconstructions")
    _add(p, "--data", "data", str, "eval", "dataset manifest")
    _add(p, "--model", "model", str, "eval", "trained model JSON")
    _add(p, "--learned", "learned", str, "eval", "CSV of learned latents (instead of --model)")
    _add(p, "--truth", "truth", str, "eval", "ground-truth latent CSV (default: manifest)")
    _add(p, "--pred", "pred", str, "eval", "manifest of predicted views for mse")
    _add(p, "--metrics", "metrics", str, "eval", "comma list of knn, r2, mse")
    _add(p, "--k", "k", int, "eval", "neighbours for knn")
    _add(p, "--folds", "folds", int, "eval", "cross-validation folds")
    _add(p, "--n-feature-draws", "n_feature_draws", int, "eval",
         "frequency draws for reconstruction (None: model setting)")

    p = command("impute", "fill missing entries of a masked dataset")
    _add(p, "--data", "data", str, "impute", "dataset manifest with empty cells")
    _add(p, "--model", "model", str, "impute", "model trained on that dataset")
    _add(p, "--n-feature-draws", "n_feature_draws", int, "impute",
         "frequency draws (None: model setting)")

    p = command("kernel-check", "closed-form vs random-feature kernel diagnostics")
    _add(p, "--n", "n", int, "kernel-check", "number of inputs")
    _add(p, "--Q", "Q", int, "kernel-check", "mixture components")
    _add(p, "--D", "D", int, "kernel-check", "input dimension")
    _add(p, "--Ls", "Ls", str, "kernel-check", "comma list of feature counts L")
    _add(p, "--n-seeds", "n_seeds", int, "kernel-check", "random instances per L")
    _add(p, "--prob", "prob", float, "kernel-check", "probability level for eps_at_prob")
    _add(p, "--moment-draws", "moment_draws", int, "kernel-check",
         "frequency pairs for the sampler moment report")
    return parser


def resolve_settings(args) -> dict:
    cmd = args.command
    settings = {**DEFAULTS["common"], **DEFAULTS[cmd]}
    given = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    config = args.config
    if config is not None:
        if cmd == "synth" and config in D.PRESETS:
            settings["preset"] = config
        else:
            if not os.path.isfile(config):
                raise UsageError(f"config file not found: {config}")
            try:
                with open(config, encoding="utf-8") as fh:
                    file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"bad config file {config}: {exc}") from exc
            unknown = set(file_cfg) - set(settings)
            if unknown:
                raise UsageError(f"unknown settings in {config}: {sorted(unknown)}")
            settings.update(file_cfg)
    settings.update(given)
    if settings["threads"] < 1:
        raise UsageError("--threads must be >= 1")
    return settings


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args)
        # BLAS stays single-threaded so outputs do not depend on --threads
        with threadpool_limits(limits=1):
            return COMMANDS[args.command](settings)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
