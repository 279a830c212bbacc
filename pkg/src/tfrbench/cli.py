"""Command-line entry point: extract features, train/evaluate, render."""

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import audio_io, bench, featuregram, nn

CACHE_ENV = "TFRBENCH_CACHE"

TRANSFORM_CHOICES = ("linear-stft", "mel-stft", "cqt", "cwt", "mfcc")
BAND_CHOICES = ("wide", "narrow")
_BAND_NAMES = {"wide": "wideband", "narrow": "narrowband"}


def _feature_name(entry, tspec):
    stem = Path(entry.path).stem
    return f"{stem}__{tspec.kind}_{tspec.band}.tfr"


def _transform_spec(args, parser):
    band = _BAND_NAMES[args.band]
    try:
        return featuregram.TransformSpec(args.transform, band)
    except ValueError as exc:
        parser.error(str(exc))


def _prepare_clip(path):
    clip = audio_io.load_wav(path)
    clip = audio_io.resample(clip, audio_io.CANONICAL_RATE)
    return audio_io.standardize(clip)


def _extract_one(job):
    audio_path, out_path, kind, band = job
    clip = _prepare_clip(audio_path)
    img = featuregram.extract_feature(
        clip, featuregram.TransformSpec(kind, band))
    featuregram.save_feature(img, out_path)
    return img.shape


def cmd_extract(args, parser):
    tspec = _transform_spec(args, parser)
    manifest = audio_io.load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = Path(args.manifest).parent

    jobs = []
    for entry in manifest.entries:
        audio_path = Path(entry.path)
        if not audio_path.is_absolute():
            audio_path = base / audio_path
        jobs.append((str(audio_path), str(out_dir / _feature_name(
            entry, tspec)), tspec.kind, tspec.band))

    failures = 0
    shape = None
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = pool.map(_extract_one_safe, jobs)
            for job, (ok, info) in zip(jobs, results):
                if ok:
                    shape = info
                else:
                    failures += 1
                    print(f"extract failed: {job[0]}: {info}",
                          file=sys.stderr)
    else:
        for job in jobs:
            ok, info = _extract_one_safe(job)
            if ok:
                shape = info
            else:
                failures += 1
                print(f"extract failed: {job[0]}: {info}", file=sys.stderr)

    n_ok = len(jobs) - failures
    shape_txt = f"{shape[0]}x{shape[1]}" if shape else "-"
    print(f"extracted {n_ok}/{len(jobs)} features ({shape_txt}) "
          f"to {out_dir}")
    return 1 if failures else 0


def _extract_one_safe(job):
    try:
        return True, _extract_one(job)
    except Exception as exc:  # per-file failures must not kill the job
        return False, str(exc)


def _load_features(manifest, feature_dir, tspec):
    features = []
    labels = []
    folds = []
    for entry in manifest.entries:
        path = Path(feature_dir) / _feature_name(entry, tspec)
        if not path.exists():
            raise FileNotFoundError(
                f"missing feature file {path}; run `tfrbench extract` first")
        img = featuregram.load_feature(str(path))
        features.append(img.values)
        labels.append(entry.label)
        folds.append(entry.fold)
    return (np.array(features), np.array(labels, dtype=int),
            np.array(folds, dtype=int))


def _model_config(args, n_classes):
    return nn.ModelConfig(
        architecture=args.model,
        filter_shape="square3x3" if args.filter == "3x3" else "freq_spanning",
        n_classes=n_classes)


def cmd_train(args, parser):
    tspec = _transform_spec(args, parser)
    manifest = audio_io.load_manifest(args.manifest, n_folds=args.folds)
    feature_dir = args.features or os.environ.get(CACHE_ENV) or args.out
    features, labels, folds = _load_features(manifest, feature_dir, tspec)

    model_cfg = _model_config(args, int(labels.max()) + 1)
    train_cfg = nn.TrainConfig(epochs=args.epochs, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    saved = {}

    def keep_checkpoint(run, fold, acc, net):
        ckpt = out_dir / f"model_run{run}_fold{fold}.ckpt"
        nn.save_checkpoint(str(ckpt), model_cfg, net.params)
        saved[(run, fold)] = str(ckpt)
        print(f"run {run} fold {fold}: best accuracy {acc:.4f}")

    report = bench.run_cv(features, labels, folds, model_cfg, train_cfg,
                          k_folds=args.folds, n_runs=args.runs,
                          on_result=keep_checkpoint)

    report_path = out_dir / "report.json"
    report_path.write_text(report.to_json())
    (out_dir / "confusion.csv").write_text(report.confusion_csv())
    print(f"median accuracy {report.median:.4f} "
          f"(MAD {report.mad:.4f}) over {len(report.accuracies)} "
          f"fold-run evaluations")
    print(f"report written to {report_path}")
    return 0


def cmd_render(args, parser):
    try:
        img = featuregram.load_feature(args.feature)
    except featuregram.FeatureFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    featuregram.export_png(img, args.png)
    print(f"rendered {args.feature} -> {args.png}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tfrbench",
        description="Time-frequency representation benchmark pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--manifest", required=True,
                       help="CSV manifest (path,label,fold)")
        p.add_argument("--transform", required=True,
                       choices=TRANSFORM_CHOICES)
        p.add_argument("--band", default="narrow", choices=BAND_CHOICES)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")

    p_extract = sub.add_parser("extract", help="extract feature files")
    add_common(p_extract)
    p_extract.add_argument("--workers", type=int, default=1)

    p_train = sub.add_parser(
        "train", help="run cross-validation training and evaluation")
    add_common(p_train)
    p_train.add_argument("--model", default="conv3",
                         choices=("conv3", "conv5"))
    p_train.add_argument("--filter", default="3x3", choices=("3x3", "Mx3"))
    p_train.add_argument("--folds", type=int, default=5)
    p_train.add_argument("--runs", type=int, default=1)
    p_train.add_argument("--epochs", type=int, default=50)
    p_train.add_argument("--features", default=None,
                         help=f"feature dir (default: ${CACHE_ENV} or --out)")

    p_render = sub.add_parser("render", help="render a feature file as PNG")
    p_render.add_argument("feature", help="TFR1 feature file")
    p_render.add_argument("png", help="output PNG path")
    p_render.add_argument("--seed", type=int, default=0)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "extract":
            return cmd_extract(args, parser)
        if args.command == "train":
            return cmd_train(args, parser)
        if args.command == "render":
            return cmd_render(args, parser)
    except (audio_io.ManifestError, audio_io.AudioError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 1
    parser.error("unknown command")


if __name__ == "__main__":
    sys.exit(main())
