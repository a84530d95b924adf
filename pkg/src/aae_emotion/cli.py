"""Command-line front end.

Every subcommand reads an optional YAML (or JSON) run configuration and
writes its artifacts under ``--out`` together with ``manifest.json``.
Exit codes: 0 success, 1 validation/config error, 2 I/O error,
3 training divergence.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from .aae import AdversarialAutoencoder, fit_aae, split_rng, write_epoch_logs
from .data import (
    Dataset,
    load_arff,
    load_csv,
    make_session_folds,
    save_arff,
    save_csv,
    standardize_fit,
    synth_blobs,
)
from .errors import DivergedTrainingError, ParseError, ValidationError
from .experiment import ExperimentConfig, TuningGrid, run_table1, run_table2
from .metrics import confusion, uar
from .nn import Network, gradient_check
from .prior import default_layout
from .svm import KernelSpec, MulticlassSvm

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_DIVERGED = 0, 1, 2, 3

DEFAULT_CONFIG = {
    "seed": 0,
    "out": "runs/default",
    "jobs": 1,
    "format": "csv",
    "data": {
        "path": None,
        "format": "csv",
        "label_column": "label",
        "session_column": "session",
        "speaker_column": "speaker",
        "delimiter": ",",
        "class_attribute": None,
        "name_attribute": "name",
        "name_pattern": None,
        "blobs": None,
    },
    "aae": {},
    "code_dim": 2,
    "prior": {"radius": 4.0, "stddev": 0.5},
    "fold": 0,
    "grid": {},
    "experiment": {"which": "table1", "per_class": 100, "methods": None},
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, overrides=None):
    """Defaults, then the config file, then non-None flag overrides."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        text = Path(path).read_text()
        try:
            loaded = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ParseError(f"{path}: invalid config: {exc}")
        if not isinstance(loaded, dict):
            raise ValidationError(f"{path}: config must be a mapping")
        unknown = set(loaded) - set(DEFAULT_CONFIG)
        if unknown:
            raise ValidationError(f"{path}: unknown config keys {sorted(unknown)}")
        cfg = _merge(cfg, loaded)
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    if not isinstance(cfg["seed"], int):
        raise ValidationError("seed must be an explicit integer")
    if not cfg["out"]:
        raise ValidationError("out directory must be non-empty")
    return cfg


def config_digest(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def load_dataset(data_cfg, seed=0):
    if data_cfg.get("blobs"):
        params = {"seed": seed, **data_cfg["blobs"]}
        return synth_blobs(**params)
    path = data_cfg.get("path")
    if not path:
        raise ValidationError("config needs data.path or data.blobs")
    fmt = data_cfg.get("format") or Path(path).suffix.lstrip(".")
    if fmt == "arff":
        kwargs = {"class_attribute": data_cfg.get("class_attribute"),
                  "name_attribute": data_cfg.get("name_attribute", "name")}
        if data_cfg.get("name_pattern"):
            kwargs["name_pattern"] = data_cfg["name_pattern"]
        return load_arff(path, **kwargs)
    if fmt == "csv":
        return load_csv(
            path,
            data_cfg.get("label_column", "label"),
            data_cfg.get("session_column", "session"),
            data_cfg.get("speaker_column", "speaker"),
            data_cfg.get("delimiter", ","),
        )
    raise ValidationError(f"unknown data format {fmt!r}")


def _write_dataset(ds, path, fmt, extra_columns=None):
    if fmt == "arff":
        save_arff(ds, path)
    else:
        save_csv(ds, path, extra_columns=extra_columns)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, command, cfg, artifacts):
    manifest = {
        "command": command,
        "config_hash": config_digest(cfg),
        "seed": cfg["seed"],
        "artifacts": [
            {"name": name, "path": Path(p).name, "sha256": _sha256(p)}
            for name, p in sorted(artifacts.items())
        ],
    }
    path = Path(out) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _fold_split(ds, fold_index):
    plan = make_session_folds(ds)
    if not 0 <= fold_index < len(plan):
        raise ValidationError(f"fold {fold_index} out of range; dataset has {len(plan)} folds")
    return plan[fold_index]


# -- commands ----------------------------------------------------------------


def cmd_train(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(cfg["data"], cfg["seed"])
    fold = _fold_split(ds, int(cfg["fold"]))
    tr, te = fold.split(ds)
    std = standardize_fit(ds.features[tr])
    train = ds.subset(tr).with_features(std.apply(ds.features[tr]))
    test = ds.subset(te).with_features(std.apply(ds.features[te]))
    exp = ExperimentConfig(aae=cfg["aae"])
    aae_cfg = exp.aae_config(ds.n_features, int(cfg["code_dim"]))
    aae_cfg.seed = cfg["seed"]
    prior = default_layout(ds.classes, aae_cfg.code_dim, cfg["prior"]["radius"], cfg["prior"]["stddev"])
    model, logs = fit_aae(train, aae_cfg, prior, np.random.default_rng(cfg["seed"]), test=test)
    model.standardizer = std
    model.train_sessions = list(fold.train_sessions)
    paths = {"model": out / "model.aae", "epoch_log": out / "epoch_log.csv"}
    model.save(paths["model"])
    write_epoch_logs(logs, paths["epoch_log"])
    write_manifest(out, "train", cfg, paths)
    last = [l for l in logs if l.split == "train"][-1]
    print(f"trained {last.epoch} epochs: recon_mse={last.recon_mse:.4f} "
          f"discriminator_ce={last.discriminator_ce:.4f} generator_ce={last.generator_ce:.4f}")
    print(f"wrote {paths['model']}")
    return EXIT_OK


def _model_inputs(model, features):
    return model.standardizer.apply(features) if model.standardizer is not None else features


def _model_outputs(model, features):
    return model.standardizer.inverse(features) if model.standardizer is not None else features


def cmd_encode(cfg, model_path):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    model = AdversarialAutoencoder.load(model_path)
    ds = load_dataset(cfg["data"], cfg["seed"])
    codes = model.encode(_model_inputs(model, ds.features))
    train_sessions = set(getattr(model, "train_sessions", None) or [])
    path = out / "codes.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"code{k}" for k in range(codes.shape[1])] + ["label", "session", "speaker", "split"])
        for i in range(len(ds)):
            split = ("train" if ds.session_ids[i] in train_sessions else "test") if train_sessions else "all"
            w.writerow([format(v, ".17g") for v in codes[i]]
                       + [ds.labels[i], ds.session_ids[i], ds.speaker_ids[i], split])
    write_manifest(out, "encode", cfg, {"codes": path})
    print(f"wrote {len(ds)} code vectors to {path}")
    return EXIT_OK


def read_codes(path):
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        cols = [c for c in reader.fieldnames if c.startswith("code")]
        if not cols:
            raise ValidationError(f"{path}: no code columns (code0, code1, ...)")
        rows = list(reader)
    codes = np.array([[float(r[c]) for c in cols] for r in rows]).reshape(len(rows), len(cols))
    meta = {k: [r.get(k, "") for r in rows] for k in ("label", "session", "speaker")}
    return codes, meta


def cmd_decode(cfg, model_path, codes_path):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    model = AdversarialAutoencoder.load(model_path)
    codes, meta = read_codes(codes_path)
    feats = _model_outputs(model, model.decode(codes))
    n = len(codes)
    ds = Dataset(feats, [l or "unknown" for l in meta["label"]],
                 [s or "decoded" for s in meta["session"]],
                 [s or "decoded" for s in meta["speaker"]], model.feature_names)
    path = out / f"decoded.{cfg['format']}"
    _write_dataset(ds, path, cfg["format"])
    write_manifest(out, "decode", cfg, {"decoded": path})
    print(f"wrote {n} decoded feature vectors to {path}")
    return EXIT_OK


def cmd_generate(cfg, model_path, per_class):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    model = AdversarialAutoencoder.load(model_path)
    synth = model.generate_synthetic(per_class, np.random.default_rng(cfg["seed"]))
    synth = synth.with_features(_model_outputs(model, synth.features))
    path = out / f"synthetic.{cfg['format']}"
    _write_dataset(synth, path, cfg["format"])
    write_manifest(out, "generate", cfg, {"synthetic": path})
    print(f"wrote {len(synth)} synthetic rows ({per_class} per class) to {path}")
    return EXIT_OK


def _load_table(path, cfg):
    data_cfg = dict(cfg["data"], path=str(path), blobs=None, format=Path(path).suffix.lstrip("."))
    return load_dataset(data_cfg)


def cmd_classify(cfg, train_path, test_path, kernel, gamma, box):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    train = _load_table(train_path, cfg)
    test = _load_table(test_path, cfg)
    if train.n_features != test.n_features:
        raise ValidationError("train and test tables have different feature counts")
    std = standardize_fit(train.features)
    if gamma is None:
        gamma = 1.0 / train.n_features
    spec = KernelSpec(kernel, gamma)
    labels = sorted(set(train.classes) | set(test.classes))
    svm = MulticlassSvm.fit(std.apply(train.features), train.labels, spec, box,
                            label_order=train.classes)
    pred = svm.predict(std.apply(test.features))
    cm = confusion(test.labels, pred, labels)
    present = cm.counts.sum(axis=1) > 0
    score = float(np.mean(np.diag(cm.counts)[present] / cm.counts.sum(axis=1)[present]))
    paths = {"predictions": out / "predictions.csv", "confusion": out / "confusion.csv"}
    with paths["predictions"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true", "predicted", "session", "speaker"])
        for t, p, s, sp in zip(test.labels, pred, test.session_ids, test.speaker_ids):
            w.writerow([t, p, s, sp])
    with paths["confusion"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true"] + [f"pred:{l}" for l in labels])
        for l, row in zip(labels, cm.counts):
            w.writerow([l] + [int(c) for c in row])
    write_manifest(out, "classify", cfg, paths)
    print(f"kernel={spec.describe()} box={box:g} UAR={100 * score:.2f}% "
          f"accuracy={100 * cm.correct / cm.total:.2f}%")
    return EXIT_OK


def cmd_experiment(cfg, which):
    out = Path(cfg["out"])
    ds = load_dataset(cfg["data"], cfg["seed"])
    grid = TuningGrid(**cfg["grid"])
    exp_cfg = cfg["experiment"]
    kwargs = {"aae": cfg["aae"], "prior_radius": cfg["prior"]["radius"],
              "prior_stddev": cfg["prior"]["stddev"], "per_class": exp_cfg.get("per_class", 100)}
    if exp_cfg.get("methods"):
        kwargs["methods"] = tuple(exp_cfg["methods"])
    config = ExperimentConfig(**kwargs)
    jobs = int(cfg["jobs"])
    if which == "table1":
        report = run_table1(ds, grid, config, seed=cfg["seed"], jobs=jobs)
    elif which == "table2":
        report = run_table2(ds, None, grid, config, seed=cfg["seed"], jobs=jobs)
    else:
        raise ValidationError(f"unknown experiment {which!r}")
    paths = report.write(out)
    write_manifest(out, f"experiment {which}", cfg, paths)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def gradcheck_suite(seed=0, corrupt=False, tol=1e-4):
    """Gradient checks over all activations and both losses; ``[(name, error, ok)]``."""
    rng = np.random.default_rng(seed)
    results = []
    for act in ("identity", "relu", "tanh", "sigmoid"):
        for loss in ("mse", "bce"):
            out_act = "sigmoid" if loss == "bce" else "identity"
            net = Network.build([4, 5, 3, 2], [act, act, out_act], rng=rng)
            x = rng.standard_normal((6, 4))
            if act == "relu":
                x = _away_from_kinks(net, x, rng)
            t = rng.integers(0, 2, (6, 2)).astype(float) if loss == "bce" else rng.standard_normal((6, 2))
            err = gradient_check(net, loss, x, t, corrupt=corrupt)
            results.append((f"{act}+{loss}", err, err < tol))
    return results


def _away_from_kinks(net, x, rng, margin=1e-3):
    for _ in range(100):
        _, cache = net.forward(x)
        bad = np.zeros(len(x), dtype=bool)
        for layer, z in zip(net.layers, cache.pre):
            if layer.activation == "relu":
                bad |= (np.abs(z) < margin).any(axis=1)
        if not bad.any():
            return x
        x = x.copy()
        x[bad] = rng.standard_normal((bad.sum(), x.shape[1]))
    raise ValidationError("could not place inputs away from relu kinks")


def cmd_gradcheck(seed, corrupt):
    results = gradcheck_suite(seed, corrupt)
    for name, err, ok in results:
        print(f"{'PASS' if ok else 'FAIL'} {name:<18} max relative error {err:.3e}")
    worst = max(e for _, e, _ in results)
    all_ok = all(ok for *_, ok in results)
    print(f"{'all checks passed' if all_ok else 'gradient check FAILED'}; worst {worst:.3e}")
    return EXIT_OK if all_ok else EXIT_VALIDATION


# -- entry point ----------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON run configuration")
    common.add_argument("--seed", type=int, help="root random seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--jobs", type=int, help="parallel outer folds (experiment only)")
    common.add_argument("--format", choices=("csv", "arff"), help="output table format")

    p = argparse.ArgumentParser(prog="aae-emotion", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train an adversarial auto-encoder")
    e = sub.add_parser("encode", parents=[common], help="write code vectors for the data")
    e.add_argument("--model", required=True)
    d = sub.add_parser("decode", parents=[common], help="decode code vectors to features")
    d.add_argument("--model", required=True)
    d.add_argument("--codes", required=True)
    g = sub.add_parser("generate", parents=[common], help="sample labelled synthetic rows")
    g.add_argument("--model", required=True)
    g.add_argument("--per-class", type=int, default=100)
    c = sub.add_parser("classify", parents=[common], help="train an SVM and score a test table")
    c.add_argument("--train", required=True)
    c.add_argument("--test", required=True)
    c.add_argument("--kernel", choices=("linear", "rbf"), default="linear")
    c.add_argument("--gamma", type=float)
    c.add_argument("--box", type=float, default=1.0)
    x = sub.add_parser("experiment", parents=[common], help="run the table1 or table2 experiment")
    x.add_argument("--which", choices=("table1", "table2"))
    gc = sub.add_parser("gradcheck", parents=[common], help="verify backpropagation numerically")
    gc.add_argument("--corrupt", action="store_true", help="perturb analytic gradients (negative control)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args.seed or 0, args.corrupt)
        cfg = load_config(args.config, {"seed": args.seed, "out": args.out, "jobs": args.jobs,
                                        "format": args.format})
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "encode":
            return cmd_encode(cfg, args.model)
        if args.command == "decode":
            return cmd_decode(cfg, args.model, args.codes)
        if args.command == "generate":
            return cmd_generate(cfg, args.model, args.per_class)
        if args.command == "classify":
            return cmd_classify(cfg, args.train, args.test, args.kernel, args.gamma, args.box)
        if args.command == "experiment":
            return cmd_experiment(cfg, args.which or cfg["experiment"].get("which", "table1"))
    except DivergedTrainingError as exc:
        print(f"error: training diverged in {exc.phase} phase (epoch {exc.epoch}): {exc}",
              file=sys.stderr)
        return EXIT_DIVERGED
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TypeError as exc:
        # unexpected keys in config sections reach dataclass constructors
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
