"""Command-line entry point.

Subcommands mirror the experimental workflow: synth (build a synthetic
corpus), train, score, eval, inspect. Exit codes: 0 ok, 1 runtime/data
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataio, metrics, synthetic, training
from .losses import ADCF_PRESETS, AdcfOperatingPoint, LossConfig, adcf_preset

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


# key name -> parser for values coming from the config file
_CONFIG_KEYS = {
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "seed": int,
    "optimizer": str,
    "rho": str,
    "select_on": str,
    "hidden1": int,
    "hidden2": int,
    "lambda_bce": float,
    "alpha": float,
    "adcf_preset": str,
    "c_miss": float,
    "c_fa_non": float,
    "c_fa_spf": float,
    "pi_tar": float,
    "pi_non": float,
    "pi_spf": float,
    "d_asv": int,
    "d_cm": int,
    "asv_embeddings": str,
    "cm_embeddings": str,
    "train_trials": str,
    "dev_trials": str,
}


def parse_config_file(path) -> dict:
    """Line-oriented `key = value` file; '#' starts a comment."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected `key = value`")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](raw)
        except ValueError:
            raise UsageError(
                f"{path}:{lineno}: bad value {raw!r} for {key!r}"
            ) from None
    return values


def _parse_rho(raw: str):
    if raw == "trainable":
        return "trainable"
    try:
        value = float(raw)
    except ValueError:
        raise UsageError(f"--rho must be a float or 'trainable', got {raw!r}") from None
    if not 0.0 <= value <= 1.0:
        raise UsageError(f"--rho must lie in [0, 1], got {value}")
    return value


def _merge(config: dict, args: argparse.Namespace, mapping: dict) -> dict:
    """Overlay flag values (when given) onto config-file values."""
    merged = dict(config)
    for key, attr in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            merged[key] = value
    return merged


def _operating_point(cfg: dict) -> AdcfOperatingPoint:
    op = adcf_preset(cfg.get("adcf_preset", "adcf-default"))
    overrides = {
        k: cfg[k]
        for k in ("c_miss", "c_fa_non", "c_fa_spf", "pi_tar", "pi_non", "pi_spf")
        if k in cfg
    }
    if overrides:
        op = replace(op, **overrides)
    op.validate()
    return op


def _loss_config(cfg: dict) -> LossConfig:
    loss = LossConfig(
        lambda_bce=cfg.get("lambda_bce", 0.5),
        alpha=cfg.get("alpha", 10.0),
        operating_point=_operating_point(cfg),
    )
    loss.validate()
    return loss


def _require_files(*paths) -> None:
    for p in paths:
        if not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")


def cmd_synth(args) -> int:
    cfg = synthetic.preset_with_seed(args.preset, args.seed)
    overrides = {
        name: getattr(args, name)
        for name in (
            "n_speakers",
            "utts_per_speaker",
            "d_asv",
            "d_cm",
            "asv_noise",
            "spoof_shift",
            "spoof_fraction",
        )
        if getattr(args, name) is not None
    }
    if overrides:
        cfg = replace(cfg, **overrides)
    corpus = synthetic.generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_embeddings(corpus.asv_store, out / "asv.semb")
    dataio.write_embeddings(corpus.cm_store, out / "cm.semb")
    dataio.write_trials(corpus.train_trials, out / "train.trl")
    dataio.write_trials(corpus.dev_trials, out / "dev.trl")
    print(f"utterances\t{len(corpus.asv_store)}")
    for split in ("train", "dev"):
        counts = corpus.class_counts(split)
        total = sum(counts.values())
        by_class = " ".join(f"{k}={counts.get(k, 0)}" for k in dataio.LABELS)
        print(f"{split}_trials\t{total}\t{by_class}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg_file = parse_config_file(args.config) if args.config else {}
    cfg = _merge(
        cfg_file,
        args,
        {
            "epochs": "epochs",
            "batch_size": "batch_size",
            "learning_rate": "lr",
            "seed": "seed",
            "optimizer": "optimizer",
            "rho": "rho",
            "select_on": "select_on",
            "hidden1": "hidden1",
            "hidden2": "hidden2",
            "lambda_bce": "lambda_bce",
            "alpha": "alpha",
            "adcf_preset": "adcf_preset",
            "asv_embeddings": "asv_embeddings",
            "cm_embeddings": "cm_embeddings",
            "train_trials": "train_trials",
            "dev_trials": "dev_trials",
        },
    )
    for key in ("asv_embeddings", "cm_embeddings", "train_trials", "dev_trials"):
        if key not in cfg:
            raise UsageError(f"missing required input: {key} (flag or config key)")
    _require_files(
        cfg["asv_embeddings"], cfg["cm_embeddings"], cfg["train_trials"], cfg["dev_trials"]
    )

    train_cfg = training.TrainConfig(
        epochs=cfg.get("epochs", 300),
        batch_size=cfg.get("batch_size", 192),
        learning_rate=cfg.get("learning_rate", 0.005),
        seed=cfg.get("seed", 0),
        optimizer=cfg.get("optimizer", "adam"),
        rho=_parse_rho(str(cfg.get("rho", 0.5))),
        hidden1=cfg.get("hidden1", 384),
        hidden2=cfg.get("hidden2", 160),
        loss=_loss_config(cfg),
        select_on=cfg.get("select_on", "min_adcf"),
    )
    train_cfg.validate()

    asv_store = dataio.read_embeddings(cfg["asv_embeddings"])
    cm_store = dataio.read_embeddings(cfg["cm_embeddings"])
    for key, store, label in (
        ("d_asv", asv_store, "ASV"),
        ("d_cm", cm_store, "CM"),
    ):
        if key in cfg and cfg[key] != store.dim:
            raise dataio.ShapeMismatchError(
                f"{label} store dimension is {store.dim}, config declares {key}={cfg[key]}"
            )
    train_trials = dataio.read_trials(cfg["train_trials"])
    dev_trials = dataio.read_trials(cfg["dev_trials"])

    params, report = training.fit(train_trials, dev_trials, asv_store, cm_store, train_cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "seed": str(train_cfg.seed),
        "epochs": str(train_cfg.epochs),
        "select_on": train_cfg.select_on,
        "tau_mode": "joint",
        "best_epoch": "" if report.best_epoch is None else str(report.best_epoch),
    }
    dataio.save_checkpoint(params, meta, out / "model.smdl")
    (out / "train_log.tsv").write_text(report.to_tsv(), encoding="utf-8")
    if report.epochs:
        best = report.epochs[(report.best_epoch or len(report.epochs)) - 1]
        print(f"best_epoch\t{best.epoch}")
        print(f"best_dev_min_adcf\t{best.dev_min_adcf:.12g}")
        print(f"best_dev_min_adcf_norm\t{best.dev_min_adcf_norm:.12g}")
    else:
        print("no training epochs; checkpoint holds initial parameters")
    print(f"wall_time_s\t{report.wall_time_s:.3f}")
    return EXIT_OK


def cmd_score(args) -> int:
    _require_files(args.checkpoint, args.asv_embeddings, args.cm_embeddings, args.trials)
    params, _meta = dataio.load_checkpoint(args.checkpoint)
    asv_store = dataio.read_embeddings(args.asv_embeddings)
    cm_store = dataio.read_embeddings(args.cm_embeddings)
    if asv_store.dim != params.d_asv or cm_store.dim != params.d_cm:
        raise dataio.ShapeMismatchError(
            f"checkpoint expects d_asv={params.d_asv}, d_cm={params.d_cm}; "
            f"stores have dim {asv_store.dim} and {cm_store.dim}"
        )
    trials = dataio.read_trials(args.trials)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.dump_branch:
        scores, asv_cal, cm_cal = training.score_trials_with_branches(
            trials, asv_store, cm_store, params
        )
        lines = [
            f"{t.enrol_id}\t{t.test_id}\t{a:.6f}\t{c:.6f}\n"
            for t, a, c in zip(trials, asv_cal, cm_cal)
        ]
        (out / "scores.branch.tsv").write_text("".join(lines), encoding="utf-8")
    else:
        scores = training.score_trials(trials, asv_store, cm_store, params)
    dataio.write_scores(scores, out / "scores.tsv")
    print(f"scored\t{len(scores)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg_file = parse_config_file(args.config) if args.config else {}
    cfg = _merge(cfg_file, args, {"adcf_preset": "adcf_preset"})
    op = _operating_point(cfg)
    _require_files(args.scores, args.trials)
    scores = dataio.read_scores(args.scores)
    trials = dataio.read_trials(args.trials)
    labeled = dataio.join_scores_with_trials(scores, trials)
    sweep = metrics.min_adcf(labeled, op)
    eers = metrics.eer_report(labeled)
    print(f"min_adcf\t{sweep.min_adcf:.12g}")
    print(f"min_adcf_norm\t{sweep.min_adcf_normalized:.12g}")
    print(f"argmin_tau\t{sweep.argmin_tau:.12g}")
    print(f"sv_eer\t{eers['sv_eer']:.12g}")
    print(f"spf_eer\t{eers['spf_eer']:.12g}")
    print(f"sasv_eer\t{eers['sasv_eer']:.12g}")
    if args.det:
        rows = ["tau\tp_miss\tp_fa_non\tp_fa_spf"]
        for p in metrics.det_points(labeled):
            rows.append(f"{p.tau:.12g}\t{p.p_miss:.12g}\t{p.p_fa_non:.12g}\t{p.p_fa_spf:.12g}")
        Path(args.det).write_text("\n".join(rows) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_inspect(args) -> int:
    _require_files(args.path)
    with open(args.path, "rb") as fh:
        magic = fh.read(4)
    if magic == dataio.SEMB_MAGIC:
        store = dataio.read_embeddings(args.path)
        print("format\tSEMB")
        print(f"dim\t{store.dim}")
        print(f"count\t{len(store)}")
    elif magic == dataio.SMDL_MAGIC:
        tensors, metadata = dataio.read_checkpoint_raw(args.path)
        print("format\tSMDL")
        for key in sorted(metadata):
            print(f"meta\t{key}\t{metadata[key]}")
        for name, arr in tensors.items():
            shape = "x".join(str(d) for d in arr.shape) or "scalar"
            norm = float(np.linalg.norm(arr.astype("float64")))
            print(f"tensor\t{name}\t{shape}\t{norm:.6g}")
    else:
        raise dataio.BadMagicError(f"{args.path}: unrecognized magic {magic!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sasvfuse",
        description="Spoofing-aware speaker verification back-end toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--preset", required=True, choices=sorted(synthetic.PRESETS))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-speakers", dest="n_speakers", type=int, default=None)
    p.add_argument("--utts-per-speaker", dest="utts_per_speaker", type=int, default=None)
    p.add_argument("--d-asv", dest="d_asv", type=int, default=None)
    p.add_argument("--d-cm", dest="d_cm", type=int, default=None)
    p.add_argument("--asv-noise", dest="asv_noise", type=float, default=None)
    p.add_argument("--spoof-shift", dest="spoof_shift", type=float, default=None)
    p.add_argument("--spoof-fraction", dest="spoof_fraction", type=float, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the fusion back-end")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--asv-embeddings", dest="asv_embeddings", default=None)
    p.add_argument("--cm-embeddings", dest="cm_embeddings", default=None)
    p.add_argument("--train-trials", dest="train_trials", default=None)
    p.add_argument("--dev-trials", dest="dev_trials", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--optimizer", choices=training.OPTIMIZERS, default=None)
    p.add_argument("--rho", default=None, help="fusion weight in [0,1], or 'trainable'")
    p.add_argument("--lambda-bce", dest="lambda_bce", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--adcf-preset", dest="adcf_preset", choices=sorted(ADCF_PRESETS), default=None)
    p.add_argument("--select-on", dest="select_on", choices=training.SELECT_MODES, default=None)
    p.add_argument("--hidden1", type=int, default=None)
    p.add_argument("--hidden2", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score trials with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--asv-embeddings", dest="asv_embeddings", required=True)
    p.add_argument("--cm-embeddings", dest="cm_embeddings", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-branch", dest="dump_branch", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="evaluate a score file against labeled trials")
    p.add_argument("--scores", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--adcf-preset", dest="adcf_preset", choices=sorted(ADCF_PRESETS), default=None)
    p.add_argument("--det", default=None, help="write DET staircase TSV to this path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="print header information for a SEMB/SMDL file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors itself
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (dataio.FormatError, dataio.MissingEmbeddingError) as exc:
        message = exc.args[0] if exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, training.NonFiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
