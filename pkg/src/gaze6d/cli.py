"""Command-line entry points.

Subcommands cover the whole pipeline: dataset generation, training,
per-subject fine-tuning, evaluation, plane-point conversion, and a gradient
self-check.  Every run directory gets a config.json snapshot; rerunning a
command from its snapshot reproduces the outputs byte for byte.

Exit codes: 0 success, 2 usage or config error, 3 numeric failure.
Set GAZE6D_LOG=DEBUG|INFO|WARNING for logging verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import calibration, metrics, model, synth
from .camera import CameraIntrinsics
from .errors import ConfigError, GeometryError, TrainingDiverged
from .pogz import (FRAME_CAMERA_PLANE, FRAME_SCREEN_PLANE, PlanePoint,
                   RigidTransform, pog_to_pogz, pogz_to_pog)

log = logging.getLogger("gaze6d")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

GRADCHECK_TOLERANCE = 1e-4


def _setup_logging() -> None:
    level = os.environ.get("GAZE6D_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        return json.load(f)


def _pick(args, cfg: dict, key: str, default):
    """CLI flag wins over config file wins over default."""
    cli = getattr(args, key, None)
    if cli is not None:
        return cli
    if key in cfg:
        return cfg[key]
    return default


def _write_snapshot(out_dir: Path, snapshot: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w") as f:
        json.dump(snapshot, f, indent=2, sort_keys=True)


def _weights_from(args, cfg: dict) -> model.LossWeights:
    base = model.LossWeights().to_dict()
    base.update(cfg.get("weights", {}))
    for task, flag in [("g_n", "lambda_gn"), ("g_o", "lambda_go"), ("pogz", "lambda_pogz"),
                       ("r_on", "lambda_r"), ("face", "lambda_face")]:
        v = getattr(args, flag, None)
        if v is not None:
            base[task] = v
    return model.LossWeights.from_dict(base)


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    cfg = _load_config_file(args.config)
    mode = _pick(args, cfg, "mode", "general")
    n_subjects = int(_pick(args, cfg, "subjects", 12))
    frames = int(_pick(args, cfg, "frames", 100))
    seed = int(_pick(args, cfg, "seed", 0))
    kappa_range = float(_pick(args, cfg, "kappa_range", 0.09))
    noise_sigma = float(_pick(args, cfg, "noise_sigma", 0.035))

    scene_dict = cfg.get("scene")
    if scene_dict is not None:
        scene = synth.SceneConfig.from_dict({**scene_dict, "seed": seed})
    else:
        scene = synth.SceneConfig(seed=seed)

    out_dir = Path(args.out)
    snapshot = {
        "command": "gen",
        "mode": mode,
        "subjects": n_subjects,
        "frames": frames,
        "seed": seed,
        "kappa_range": kappa_range,
        "noise_sigma": noise_sigma,
        "scene": scene.to_dict(),
    }
    _write_snapshot(out_dir, snapshot)

    subjects = synth.make_subjects(n_subjects, seed, kappa_range, noise_sigma)
    stats = synth.generate_dataset(scene, subjects, frames, mode, out_dir / "dataset.jsonl")
    log.info("wrote %s", out_dir / "dataset.jsonl")

    if mode == "calibration":
        ds = synth.load_dataset(out_dir / "dataset.jsonl")
        records = [
            calibration.CalibrationRecord(
                subject=s.subject,
                face_px=s.bbox.center,
                bbox=s.bbox,
                g_o=calibration.derive_calibration_label(scene.intrinsics, s.bbox.center),
            )
            for s in ds.samples
        ]
        calibration.write_calibration_set(records, out_dir / "calibration_records.jsonl")

    print(f"dataset: {out_dir / 'dataset.jsonl'} ({n_subjects} subjects x {frames} frames, mode={mode})")
    if stats:
        print(f"{'attribute':>12}  {'mean':>8} {'target':>8}  {'std':>8} {'target':>8}")
        for name, s in stats.items():
            print(f"{name:>12}  {s['mean']:8.4f} {s['target_mean']:8.4f}  {s['std']:8.4f} {s['target_std']:8.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _train_config(args, cfg: dict) -> model.TrainConfig:
    # the --fraction flag lands in the snapshot as calibration_fraction
    fraction = _pick(args, cfg, "fraction", cfg.get("calibration_fraction", 1.0))
    return model.TrainConfig(
        lr=float(_pick(args, cfg, "lr", 1e-4)),
        batch_size=int(_pick(args, cfg, "batch_size", 128)),
        epochs=int(_pick(args, cfg, "epochs", 120)),
        seed=int(_pick(args, cfg, "seed", 0)),
        weights=_weights_from(args, cfg),
        val_fraction=float(_pick(args, cfg, "val_fraction", 0.1)),
        finetune_lr=float(_pick(args, cfg, "finetune_lr", 1e-5)),
        finetune_steps=int(_pick(args, cfg, "finetune_steps", 100)),
        finetune_batch=int(_pick(args, cfg, "finetune_batch", 8)),
        calibration_fraction=float(fraction),
    )


def cmd_train(args) -> int:
    cfg = _load_config_file(args.config)
    data_path = _pick(args, cfg, "data", None)
    if data_path is None:
        raise ConfigError("train needs --data")
    folds = int(_pick(args, cfg, "folds", 0))
    tc = _train_config(args, cfg)

    out_dir = Path(args.out)
    snapshot = {"command": "train", "data": str(data_path), "folds": folds, **tc.to_dict()}
    _write_snapshot(out_dir, snapshot)

    dataset = synth.load_dataset(data_path)
    if folds <= 0:
        params, history = model.train(tc, dataset)
        model.save_params(params, out_dir / "params.json")
        (out_dir / "history.csv").write_text(model.history_to_csv(history))
        last = history[-1] if history else None
        if last is not None:
            print(f"final: train_loss={last.train_loss:.4f} val_loss={last.val_loss:.4f} "
                  f"val_angular_deg={last.val_angular_deg:.3f}")
        return EXIT_OK

    # cross-subject folds: subject id modulo fold count picks the held-out fold
    for fold in range(folds):
        held = [sid for sid in dataset.subject_ids() if sid % folds == fold]
        train_rows = [s for s in dataset.samples if s.subject % folds != fold]
        test_rows = [s for s in dataset.samples if s.subject % folds == fold]
        if not train_rows or not test_rows:
            raise ConfigError(f"fold {fold}: empty split (subjects {dataset.subject_ids()})")
        fold_dir = out_dir / f"fold_{fold}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        sub_ds = synth.Dataset(header=dataset.header, samples=train_rows)
        params, history = model.train(tc, sub_ds)
        model.save_params(params, fold_dir / "params.json")
        (fold_dir / "history.csv").write_text(model.history_to_csv(history))
        held_ds = synth.Dataset(header=dataset.header, samples=test_rows)
        report = metrics.evaluate(params, held_ds)
        (fold_dir / "report.csv").write_text(report.to_csv())
        print(f"fold {fold}: held-out subjects {held}, "
              f"g_n mean {report.overall.gn_deg_mean:.3f} deg over {report.overall.n} samples")
    return EXIT_OK


# ---------------------------------------------------------------------------
# finetune


def cmd_finetune(args) -> int:
    cfg = _load_config_file(args.config)
    params_path = _pick(args, cfg, "params", None)
    calib_path = _pick(args, cfg, "calib", None)
    if params_path is None or calib_path is None:
        raise ConfigError("finetune needs --params and --calib")
    subject_filter = _pick(args, cfg, "subject", None)
    tc = _train_config(args, cfg)

    out_dir = Path(args.out)
    snapshot = {"command": "finetune", "params": str(params_path), "calib": str(calib_path),
                "subject": subject_filter, **tc.to_dict()}
    _write_snapshot(out_dir, snapshot)

    base = model.load_params(params_path)
    calib = synth.load_dataset(calib_path)
    subjects = calib.subject_ids() if subject_filter is None else [int(subject_filter)]
    for sid in subjects:
        rows = calib.by_subject(sid)
        if not rows:
            raise ConfigError(f"no calibration frames for subject {sid} in {calib_path}")
        used = rows[: math.ceil(len(rows) * tc.calibration_fraction)]
        if calib.mode == "calibration":
            # lens-fixation frames: labels come from the pixel derivation only
            used = synth.calibration_view(used, calib.intrinsics)
        tuned = model.fine_tune(base, tc, used, calib.intrinsics)
        path = out_dir / f"params_subject_{sid}.json"
        model.save_params(tuned, path)
        print(f"subject {sid}: fine-tuned on {len(used)}/{len(rows)} frames -> {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    cfg = _load_config_file(args.config)
    params_path = _pick(args, cfg, "params", None)
    data_path = _pick(args, cfg, "data", None)
    if params_path is None or data_path is None:
        raise ConfigError("eval needs --params and --data")
    screen_path = _pick(args, cfg, "screen", None)

    out_dir = Path(args.out)
    snapshot = {"command": "eval", "params": str(params_path), "data": str(data_path),
                "screen": None if screen_path is None else str(screen_path)}
    _write_snapshot(out_dir, snapshot)

    params = model.load_params(params_path)
    dataset = synth.load_dataset(data_path)
    transform = None if screen_path is None else RigidTransform.load(screen_path)
    report = metrics.evaluate(params, dataset, screen_transform=transform)
    (out_dir / "report.csv").write_text(report.to_csv())
    print(report.table())
    return EXIT_OK


# ---------------------------------------------------------------------------
# convert


def _convert_record(rec: dict, direction: str, transform: RigidTransform) -> dict:
    point = rec["point"]
    gaze = np.asarray(rec["gaze"], dtype=float)
    if direction == "pogz2pog":
        src = PlanePoint(float(point[0]), float(point[1]), frame=FRAME_CAMERA_PLANE)
        dst = pogz_to_pog(src, gaze, transform)
        out_gaze = transform.apply_direction(gaze)
    else:
        src = PlanePoint(float(point[0]), float(point[1]), frame=FRAME_SCREEN_PLANE)
        dst = pog_to_pogz(src, gaze, transform)
        out_gaze = transform.inverse.apply_direction(gaze)
    return {
        "point": [dst.x, dst.y],
        "gaze": [float(v) for v in out_gaze],
        "behind": dst.behind,
    }


def cmd_convert(args) -> int:
    transform = RigidTransform.load(args.transform)
    stream_in = open(args.input) if args.input else sys.stdin
    stream_out = open(args.output, "w") if args.output else sys.stdout
    try:
        for i, line in enumerate(stream_in):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out = _convert_record(rec, args.dir, transform)
            except (ValueError, KeyError, TypeError, IndexError, GeometryError) as exc:
                # keep streaming: emit an error record for the bad line
                out = {"error": str(exc), "line": i}
            stream_out.write(json.dumps(out, sort_keys=True) + "\n")
    finally:
        if args.input:
            stream_in.close()
        if args.output:
            stream_out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for restart in range(args.restarts):
        seed = args.seed + restart
        params = model.init_params(seed=seed)
        batch = model.make_gradcheck_batch(params, seed=seed, n=args.batch)
        rel = model.gradient_check(params, batch, model.LossWeights())
        worst = max(worst, rel)
        print(f"restart {restart}: max relative gradient error {rel:.3e}")
    print(f"overall max {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e})")
    if worst > GRADCHECK_TOLERANCE or not np.isfinite(worst):
        print("FAIL", file=sys.stderr)
        return EXIT_NUMERIC
    print("OK")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaze6d", description="desk-scale 6-DoF gaze pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--mode", choices=["general", "calibration"])
    p.add_argument("--subjects", type=int, help="number of subjects")
    p.add_argument("--frames", type=int, help="frames per subject")
    p.add_argument("--seed", type=int)
    p.add_argument("--kappa-range", dest="kappa_range", type=float,
                   help="per-subject bias drawn uniformly from +-range (radians)")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--config", help="JSON config; flags override it")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the multi-task model")
    p.add_argument("--data", help="dataset JSONL")
    p.add_argument("--folds", type=int, help="cross-subject folds (0 = single run)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="fine-tune on calibration frames, per subject")
    p.add_argument("--params", help="trained params JSON")
    p.add_argument("--calib", help="calibration dataset JSONL (gen --mode calibration)")
    p.add_argument("--subject", type=int, help="only this subject id")
    p.add_argument("--fraction", type=float, help="fraction of calibration frames to use")
    _add_train_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate params on a labeled dataset")
    p.add_argument("--params", help="params JSON")
    p.add_argument("--data", help="dataset JSONL")
    p.add_argument("--screen", help="camera-to-screen rigid transform JSON")
    p.add_argument("--config", help="JSON config; flags override it")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("convert", help="convert plane points between camera and screen frames")
    p.add_argument("--dir", choices=["pogz2pog", "pog2pogz"], required=True,
                   help="conversion direction")
    p.add_argument("--transform", required=True, help="camera-to-screen rigid transform JSON")
    p.add_argument("--input", help="JSONL input (default stdin)")
    p.add_argument("--output", help="JSONL output (default stdout)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=8)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--finetune-lr", dest="finetune_lr", type=float)
    p.add_argument("--finetune-steps", dest="finetune_steps", type=int)
    p.add_argument("--finetune-batch", dest="finetune_batch", type=int)
    p.add_argument("--lambda-gn", dest="lambda_gn", type=float)
    p.add_argument("--lambda-go", dest="lambda_go", type=float)
    p.add_argument("--lambda-pogz", dest="lambda_pogz", type=float)
    p.add_argument("--lambda-r", dest="lambda_r", type=float)
    p.add_argument("--lambda-face", dest="lambda_face", type=float)
    p.add_argument("--config", help="JSON config; flags override it")
    p.add_argument("--out", required=True, help="run directory")


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, GeometryError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
