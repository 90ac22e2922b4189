"""Operator entry point.

Subcommands: synth, preprocess, train, eval, gradcheck, export-weights.
Every command accepts --seed, --out-dir and --config; a config file is
flat ``key = value`` text whose keys mirror the long flag names (dashes
or underscores), and explicit CLI flags override it.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import metrics, pipeline, presets, storage, synthetic, training
from .basis import build_spec
from .cells import CiRnnParams
from .numerics import Rng
from .training import TrainConfig


def _load_config_file(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SystemExit(f"{path}: line {lineno}: expected key = value")
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


class _Args(argparse.Namespace):
    pass


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _build_parser(file_cfg: dict) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cirnn",
        description="Context-integrated GRU toolkit: data prep, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def opt(p, flag, **kw):
        key = flag.lstrip("-").replace("-", "_")
        if key in file_cfg:
            typ = kw.get("type", str)
            if kw.get("action") in ("store_true", "store_false"):
                kw["default"] = file_cfg[key].lower() in ("1", "true", "yes")
            else:
                kw["default"] = typ(file_cfg[key])
        p.add_argument(flag, **kw)

    def common(p):
        opt(p, "--seed", type=int, default=0, help="master random seed")
        opt(p, "--out-dir", default=".", help="directory for outputs")
        p.add_argument("--config", help="flat key=value config file (already applied)")

    p = sub.add_parser("synth", help="generate a synthetic multi-regime dataset")
    common(p)
    opt(p, "--units", type=int, default=30)
    opt(p, "--test-units", type=int, default=10)
    opt(p, "--min-cycles", type=int, default=60)
    opt(p, "--max-cycles", type=int, default=100)
    opt(p, "--n-x", type=int, default=4)
    opt(p, "--regimes", type=int, default=3)
    opt(p, "--noise-std", type=float, default=0.0)
    opt(p, "--cap", type=int, default=60)
    opt(p, "--tag", default="SYNTH")

    p = sub.add_parser("preprocess", help="parse, normalize, label and window a dataset")
    common(p)
    opt(p, "--data-dir", default=".", help="directory holding train_/test_/RUL_ files")
    opt(p, "--subset", default=None, help="FD001..FD004 or a custom tag (e.g. SYNTH)")
    opt(p, "--sensors", type=_int_list, default=None, help="custom sensor ids, e.g. 1,2,8")
    opt(p, "--settings", type=_int_list, default=None, help="custom op-setting ids")
    opt(p, "--seq-len", type=int, default=15)
    opt(p, "--k-val", type=int, default=15)
    opt(p, "--regimes", type=int, default=None, help="regime count for contextual mode")
    opt(p, "--cap", type=int, default=125)
    opt(p, "--smooth-window", type=int, default=3)
    opt(p, "--eval-mode", choices=("last", "all"), default="last")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--contextual", dest="contextual", action="store_true", default=None)
    grp.add_argument("--no-contextual", dest="contextual", action="store_false")
    grp2 = p.add_mutually_exclusive_group()
    grp2.add_argument("--normalize-target", dest="normalize_target",
                      action="store_true", default=None)
    grp2.add_argument("--raw-target", dest="normalize_target", action="store_false")

    p = sub.add_parser("train", help="train a model on a preprocessed dataset")
    common(p)
    opt(p, "--data", required="data" not in file_cfg, help="preprocessed dataset file")
    opt(p, "--preset", default=None, help="named configuration (see presets)")
    opt(p, "--model", choices=("gru", "cirnn"), default=None)
    opt(p, "--hidden", type=int, default=None)
    opt(p, "--batch", type=int, default=None)
    opt(p, "--lr", type=float, default=None)
    opt(p, "--optimizer", choices=training.OPTIMIZER_KINDS, default=None)
    opt(p, "--epochs", type=int, default=200)
    opt(p, "--patience", type=int, default=10)
    opt(p, "--clip", type=float, default=5.0)
    opt(p, "--degree", type=int, default=2, help="polynomial basis degree")
    opt(p, "--context-features", action="store_true", default=False,
        help="append op-settings to the primary inputs (baseline CxF)")
    opt(p, "--name", default=None, help="output name stem")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test windows")
    common(p)
    opt(p, "--checkpoint", required="checkpoint" not in file_cfg)
    opt(p, "--data", required="data" not in file_cfg)
    opt(p, "--phm08", action="store_true", default=False,
        help="swap score constants to the (13, 10) convention")
    opt(p, "--report", default=None, help="report CSV path")

    p = sub.add_parser("gradcheck", help="finite-difference check of the BPTT gradients")
    common(p)
    opt(p, "--cell", choices=("both", "gru", "cirnn"), default="both")
    opt(p, "--instances", type=int, default=20)
    opt(p, "--t", type=int, default=None, help="fix the sequence length")
    opt(p, "--eps", type=float, default=1e-5)
    opt(p, "--threshold", type=float, default=1e-4)

    p = sub.add_parser("export-weights", help="dump context-cell input coefficients as CSV")
    common(p)
    opt(p, "--checkpoint", required="checkpoint" not in file_cfg)
    opt(p, "--out", default=None, help="CSV path")

    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = synthetic.SynthSpec(
        n_units=args.units, n_test_units=args.test_units,
        min_cycles=args.min_cycles, max_cycles=args.max_cycles,
        n_x=args.n_x, n_regimes=args.regimes, noise_std=args.noise_std,
        rul_cap=args.cap, seed=args.seed,
    )
    data = synthetic.generate(spec)
    paths = synthetic.write_files(data, args.out_dir, args.tag)
    for label, path in paths.items():
        print(f"{label}: {path}")
    print(f"units: {spec.n_units} train, {spec.n_test_units} test; "
          f"regimes: {spec.n_regimes}; signal sensors: 1..{spec.n_x}")
    return 0


def _resolve_preprocess_mode(args):
    subset = args.subset
    contextual = args.contextual
    regimes = args.regimes
    if subset in pipeline.SUBSET_REGIMES:
        if regimes is None:
            regimes = pipeline.SUBSET_REGIMES[subset]
        if contextual is None:
            contextual = regimes > 1
        normalize_target = args.normalize_target
        if normalize_target is None:
            normalize_target = subset in ("FD001", "FD003")
    else:
        if contextual is None:
            contextual = regimes is not None and regimes > 1
        normalize_target = bool(args.normalize_target)
    if contextual and regimes is None:
        raise pipeline.DataError("contextual normalization needs --regimes for custom data")
    return contextual, regimes or 1, normalize_target


def cmd_preprocess(args) -> int:
    subset = args.subset
    train_path = os.path.join(args.data_dir, f"train_{subset}.txt")
    test_path = os.path.join(args.data_dir, f"test_{subset}.txt")
    truth_path = os.path.join(args.data_dir, f"RUL_{subset}.txt")
    if not os.path.exists(train_path):
        print(f"error: missing {train_path}", file=sys.stderr)
        return 1

    contextual, regimes, normalize_target = _resolve_preprocess_mode(args)
    train_units = pipeline.select_features(
        pipeline.parse_cmapss(train_path), subset, args.sensors, args.settings)
    test_units = truths = None
    if os.path.exists(test_path):
        test_units = pipeline.select_features(
            pipeline.parse_cmapss(test_path), subset, args.sensors, args.settings)
        if not os.path.exists(truth_path):
            print(f"error: {test_path} present but {truth_path} missing", file=sys.stderr)
            return 1
        truths = [float(v) for v in open(truth_path).read().split()]

    opts = pipeline.PipelineOptions(
        seq_len=args.seq_len, k_val=args.k_val, contextual=contextual,
        n_regimes=regimes, smooth_window=args.smooth_window, rul_cap=args.cap,
        normalize_target=normalize_target, seed=args.seed,
    )
    data = pipeline.preprocess(train_units, opts, test_units, truths,
                               eval_mode=args.eval_mode)
    sensors, settings = pipeline.feature_selection(subset, args.sensors, args.settings)
    data.sensors, data.settings = sensors, settings

    os.makedirs(args.out_dir, exist_ok=True)
    out_path = os.path.join(args.out_dir, f"dataset_{subset}.bin")
    storage.save_dataset(out_path, data)
    print(f"dataset: {out_path}")
    print(f"train units: {len(train_units)}"
          + (f", test units: {len(test_units)}" if test_units else ""))
    if data.regime_stats is not None:
        print(f"fitted regimes: {data.regime_stats.k}")
    print(f"windows: {len(data.train)} train, {len(data.val)} val"
          + (f", {len(data.test)} test" if data.test is not None else ""))
    return 0


def _assemble_inputs(batch, model: str, context_features: bool):
    """Model-facing arrays: the baseline with CxF sees [x, z] as primary."""
    if model == "gru" and context_features:
        xs = np.concatenate([batch.xs, batch.zs], axis=2)
        return pipeline.SequenceBatch(xs, None, batch.y, batch.unit_ids, batch.end_cycles)
    if model == "gru":
        return pipeline.SequenceBatch(batch.xs, None, batch.y, batch.unit_ids,
                                      batch.end_cycles)
    return batch


def cmd_train(args) -> int:
    data = storage.load_dataset(args.data)
    if args.preset is not None:
        pre = presets.get_preset(args.preset)
        model = pre.model
        hidden, seq_len, batch_size = pre.hidden_units, pre.sequence_length, pre.batch_size
        lr, optimizer = pre.learning_rate, pre.optimizer
        context_features = pre.context_features and model == "gru"
        if pre.contextual_norm != data.options.contextual:
            print(f"warning: preset {pre.name} expects contextual_norm="
                  f"{pre.contextual_norm} but dataset was preprocessed with "
                  f"{data.options.contextual}", file=sys.stderr)
        name = args.name or pre.name
    else:
        missing = [f for f, v in (("--model", args.model), ("--hidden", args.hidden),
                                  ("--batch", args.batch), ("--lr", args.lr),
                                  ("--optimizer", args.optimizer)) if v is None]
        if missing:
            print(f"error: without --preset, set {', '.join(missing)}", file=sys.stderr)
            return 1
        model, hidden, batch_size = args.model, args.hidden, args.batch
        lr, optimizer = args.lr, args.optimizer
        seq_len = data.options.seq_len
        context_features = args.context_features
        name = args.name or model

    if seq_len != data.options.seq_len:
        print(f"error: preset sequence length {seq_len} but dataset windows are "
              f"{data.options.seq_len} long; re-run preprocess with --seq-len {seq_len}",
              file=sys.stderr)
        return 1

    cfg = TrainConfig(
        hidden_units=hidden, sequence_length=seq_len, batch_size=batch_size,
        learning_rate=lr, optimizer=optimizer, epochs=args.epochs,
        seed=args.seed, clip_norm=args.clip, patience=args.patience,
    )
    train_b = _assemble_inputs(data.train, model, context_features)
    val_b = _assemble_inputs(data.val, model, context_features)

    basis = None
    if model == "cirnn":
        basis = build_spec("polynomial", args.degree, data.train.zs.shape[2])

    params, logs = training.train(model, train_b, val_b, cfg, basis=basis)

    os.makedirs(args.out_dir, exist_ok=True)
    log_path = os.path.join(args.out_dir, f"{name}_loss_log.csv")
    training.write_loss_log(log_path, logs)
    ckpt = storage.Checkpoint(
        model_kind=model, params=params, seed=args.seed,
        config={"preset": args.preset, "hidden_units": hidden,
                "sequence_length": seq_len, "batch_size": batch_size,
                "learning_rate": lr, "optimizer": optimizer,
                "epochs": args.epochs, "patience": args.patience,
                "clip_norm": args.clip},
        regime_stats=data.regime_stats, context_minmax=data.context_minmax,
        primary_minmax=data.primary_minmax, target_minmax=data.target_minmax,
        sensors=data.sensors, settings=data.settings,
        context_as_primary=context_features,
    )
    ckpt_path = os.path.join(args.out_dir, f"{name}.ckpt")
    storage.save_checkpoint(ckpt_path, ckpt)
    print(f"checkpoint: {ckpt_path}")
    print(f"loss log: {log_path}")
    print(f"epochs run: {len(logs)}; best val RMSE: "
          f"{min(l.val_rmse for l in logs):.6f}")
    return 0


def cmd_eval(args) -> int:
    ckpt = storage.load_checkpoint(args.checkpoint)
    data = storage.load_dataset(args.data)
    if data.test is None:
        print("error: dataset has no test windows", file=sys.stderr)
        return 1
    batch = _assemble_inputs(data.test, ckpt.model_kind, ckpt.context_as_primary)
    p = ckpt.params
    if batch.xs.shape[2] != p.n_x:
        print(f"error: checkpoint expects {p.n_x} primary inputs but data "
              f"windows carry {batch.xs.shape[2]}", file=sys.stderr)
        return 1
    if isinstance(p, CiRnnParams) and batch.zs.shape[2] != p.basis.n_z:
        print(f"error: checkpoint expects {p.basis.n_z} context inputs but data "
              f"windows carry {batch.zs.shape[2]}", file=sys.stderr)
        return 1

    preds = training.predict_batch(p, batch.xs, batch.zs)
    truths = batch.y
    if ckpt.target_minmax is not None:
        preds = pipeline.minmax_denormalize(preds[:, None], ckpt.target_minmax)[:, 0]
        truths = pipeline.minmax_denormalize(truths[:, None], ckpt.target_minmax)[:, 0]

    a1, a2 = ((metrics.PHM08_A1, metrics.PHM08_A2) if args.phm08
              else (metrics.DEFAULT_A1, metrics.DEFAULT_A2))
    report = metrics.evaluate_per_unit(preds, truths, batch.unit_ids, a1, a2)
    os.makedirs(args.out_dir, exist_ok=True)
    report_path = args.report or os.path.join(args.out_dir, "eval_report.csv")
    metrics.write_report_csv(report_path, report)
    print(f"report: {report_path}")
    print(f"units: {report.n_units}")
    print(f"RMSE  mean={report.rmse_mean:.4f} std={report.rmse_std:.4f}")
    print(f"Score mean={report.score_mean:.4f} std={report.score_std:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    cells = ("gru", "cirnn") if args.cell == "both" else (args.cell,)
    rng = Rng(args.seed)
    worst: dict[str, float] = {}
    for cell in cells:
        for i in range(args.instances):
            errors = training.gradient_check_instance(cell, rng, t=args.t, eps=args.eps)
            for group, err in errors.items():
                key = f"{cell}:{group}"
                worst[key] = max(worst.get(key, 0.0), err)
    failed = False
    for key in sorted(worst):
        status = "ok" if worst[key] < args.threshold else "FAIL"
        if status == "FAIL":
            failed = True
        print(f"{key:12s} max_error={worst[key]:.3e}  {status}")
    print(f"threshold: {args.threshold:g} ({'FAIL' if failed else 'all groups pass'})")
    return 1 if failed else 0


def cmd_export_weights(args) -> int:
    ckpt = storage.load_checkpoint(args.checkpoint)
    if not isinstance(ckpt.params, CiRnnParams):
        print("error: weight export needs a context-cell checkpoint "
              "(the baseline has no per-context blocks)", file=sys.stderr)
        return 1
    p = ckpt.params
    m = p.basis.m
    os.makedirs(args.out_dir, exist_ok=True)
    out_path = args.out or os.path.join(args.out_dir, "weights.csv")
    with open(out_path, "w") as fh:
        fh.write("gate,feature,hidden," + ",".join(f"g{j + 1}" for j in range(m)) + "\n")
        for gate, mat in (("As", p.As), ("Ah", p.Ah), ("Ar", p.Ar)):
            blocks = mat.reshape(p.n_h, p.n_x, m)
            for feat in range(p.n_x):
                for row in range(p.n_h):
                    vals = ",".join(repr(v) for v in blocks[row, feat])
                    fh.write(f"{gate},{feat + 1},{row + 1},{vals}\n")
    print(f"weights: {out_path}")
    print(f"blocks: 3 gates x {p.n_x} features, each {p.n_h}x{m}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "export-weights": cmd_export_weights,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    file_cfg = {}
    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1]
        file_cfg = _load_config_file(cfg_path)
    parser = _build_parser(file_cfg)
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (pipeline.ParseError, pipeline.DataError, training.ConfigError,
            training.TrainingError, storage.ArchiveError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
