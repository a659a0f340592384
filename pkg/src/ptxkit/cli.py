"""Operator entry points.

Subcommands: synth, prepare-folds, train, evaluate, ensemble-search,
render, plot-roc. Every command writes files (no interactive display),
is deterministic given its config and seed, and exits 0 on success, 1 on
runtime failure (one-line diagnostic on stderr), 2 on usage errors.

Option precedence for ``train``: command-line flags > config file >
built-in defaults. The PTXKIT_DATA_ROOT environment variable, when set,
anchors relative data paths.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import data, ensemble, reports, synthgen
from .evaluation import auc_score, average_curves, roc_curve
from .models.checkpoint import load_checkpoint, model_from_checkpoint
from .preprocess import AugmentationParams, make_bag, resize
from .training import METHODS, TrainConfig, train

log = logging.getLogger("ptxkit")


def _rooted(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    root = os.environ.get("PTXKIT_DATA_ROOT")
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    cfg_path = _rooted(path)
    if not cfg_path.is_file():
        raise FileNotFoundError(f"config file not found: {cfg_path}")
    with open(cfg_path) as fh:
        loaded = yaml.safe_load(fh) or {}
    if not isinstance(loaded, dict):
        raise ValueError(f"{cfg_path}: config must be a mapping")
    return loaded


def _layered(flag_value, config: dict, key: str, default=None):
    if flag_value is not None:
        return flag_value
    if key in config and config[key] is not None:
        return config[key]
    return default


def cmd_synth(args: argparse.Namespace) -> int:
    spec = synthgen.SynthSpec(
        n_cases=args.n_cases,
        positive_fraction=args.positive_fraction,
        side=args.side,
        seed=args.seed,
    )
    records = synthgen.generate(spec, _rooted(args.out_dir))
    print(f"wrote {len(records)} cases under {args.out_dir}")
    return 0


def cmd_prepare_folds(args: argparse.Namespace) -> int:
    records = data.load_manifest(_rooted(args.manifest))
    assignment = data.assign_folds(records, k=args.k, seed=args.seed)
    out = _rooted(args.out)
    data.save_folds(assignment, out)
    print(f"wrote fold assignment for {len(assignment.by_patient)} patients to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config_file = _load_config(args.config)
    manifest = _layered(args.manifest, config_file, "manifest")
    folds_file = _layered(args.folds, config_file, "folds")
    if manifest is None or folds_file is None:
        raise ValueError("train requires --manifest and --folds (flag or config file)")
    out_dir = _rooted(_layered(args.out_dir, config_file, "out_dir", "runs"))

    config = TrainConfig(
        method=args.method,
        fold=_layered(args.fold, config_file, "fold", 0),
        lr=_layered(args.lr, config_file, "lr"),
        epochs=_layered(args.epochs, config_file, "epochs"),
        batch_size=_layered(args.batch_size, config_file, "batch_size", 16),
        decay=_layered(args.decay, config_file, "decay", 0.95),
        seed=_layered(args.seed, config_file, "seed", 0),
        input_size=_layered(args.input_size, config_file, "input_size"),
        early_stop=_layered(args.early_stop, config_file, "early_stop"),
        init_from=_layered(args.init_from, config_file, "init_from"),
    )
    aug_cfg = config_file.get("augmentation")
    aug = AugmentationParams.from_dict(aug_cfg) if aug_cfg else None

    records = data.load_manifest(_rooted(manifest))
    assignment = data.load_folds(_rooted(folds_file), records)
    result = train(records, assignment, config, out_dir, aug=aug)
    print(
        f"{config.method} fold {config.fold}: best val metric "
        f"{result.best_metric:.4f} at epoch {result.best_epoch}; "
        f"checkpoint {result.checkpoint_path}"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    records = data.load_manifest(_rooted(args.manifest))
    assignment = data.load_folds(_rooted(args.folds), records)
    methods = tuple(args.methods)
    out_dir = _rooted(args.out_dir)
    evaluations, _ = reports.evaluate_methods(
        records, assignment, _rooted(args.checkpoint_dir), methods, out_dir
    )
    for method, ev in evaluations.items():
        print(f"{method}: AUC {ev.mean_auc:.3f} +/- {ev.std_auc:.3f}")
        if ev.dice_mean is not None:
            print(
                f"{method}: Dice {ev.dice_mean:.3f} over {ev.dice_cases} "
                "positively classified cases"
            )
    print(f"report written to {out_dir}")
    return 0


def cmd_ensemble_search(args: argparse.Namespace) -> int:
    table = ensemble.ScoreTable.load(_rooted(args.scores))
    out_dir = _rooted(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    per_fold = ensemble.cross_validated_search(table, args.grid_step)
    global_w, global_auc = ensemble.exhaustive_search(table, args.grid_step)

    fold_curves = []
    for res in per_fold:
        mask = table.folds == res.fold
        fused = ensemble.combine(table, res.weights)
        fold_curves.append(roc_curve(fused[mask], table.labels[mask]))
    averaged = average_curves(fold_curves)
    test_aucs = [res.test_auc for res in per_fold]

    payload = {
        "grid_step": args.grid_step,
        "per_fold": [
            {
                "fold": res.fold,
                "weights": {m: w for m, w in zip(ensemble.METHODS, res.weights)},
                "search_auc": round(res.search_auc, 6),
                "test_auc": round(res.test_auc, 6),
            }
            for res in per_fold
        ],
        "test_auc_mean": round(float(np.mean(test_aucs)), 6),
        "test_auc_std": round(float(np.std(test_aucs)), 6),
        "global": {
            "weights": {m: w for m, w in zip(ensemble.METHODS, global_w)},
            "auc": round(global_auc, 6),
        },
    }
    with open(out_dir / "ensemble.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    reports.write_curve(out_dir / "curve_ensemble.csv", averaged)

    from .plots import save_roc_figure

    curves = {"ensemble": averaged}
    aucs = {"ensemble": float(np.mean(test_aucs))}
    for method in ensemble.METHODS:
        per_fold_method = []
        for fold in sorted(set(int(f) for f in table.folds)):
            mask = table.folds == fold
            per_fold_method.append(
                roc_curve(table.scores[method][mask], table.labels[mask])
            )
        curves[method] = average_curves(per_fold_method)
        aucs[method] = float(
            np.mean([auc_score(table.scores[method][table.folds == f],
                               table.labels[table.folds == f])
                     for f in sorted(set(int(f) for f in table.folds))])
        )
    save_roc_figure(curves, out_dir / "ensemble_roc.png", aucs)

    print(
        "ensemble: mean test AUC "
        f"{payload['test_auc_mean']:.3f} +/- {payload['test_auc_std']:.3f}; "
        f"global weights {payload['global']['weights']}"
    )
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    if not args.mil_checkpoint and not args.fcn_checkpoint:
        raise ValueError("render needs --mil-checkpoint and/or --fcn-checkpoint")
    image = data.load_image(_rooted(args.image))
    out_dir = _rooted(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem

    from . import inference, plots

    written = []
    if args.mil_checkpoint:
        model = model_from_checkpoint(load_checkpoint(_rooted(args.mil_checkpoint)))
        bag = make_bag(image, patch_size=model.config.input_size)
        from .models.mil import mil_forward

        score = mil_forward(model, bag)
        frame = resize(image, bag.frame_side)
        out = out_dir / f"{stem}_patches.png"
        fig = plots.render_patch_frames(
            frame, bag.origins, bag.patch_size, score.patch_scores, out
        )
        plots.close_figure(fig)
        written.append(out)
        print(f"bag score {score.bag_score:.3f} -> {out}")
    if args.fcn_checkpoint:
        payload = load_checkpoint(_rooted(args.fcn_checkpoint))
        model = model_from_checkpoint(payload)
        input_size = int((payload.get("train_config") or {}).get("input_size") or 448)
        prob_map = inference.fcn_prob_maps(model, [image], input_size)[0]
        out = out_dir / f"{stem}_probability.png"
        fig = plots.render_probability_overlay(resize(image, input_size), prob_map, out)
        plots.close_figure(fig)
        written.append(out)
        print(f"lesion area fraction {ensemble.fcn_area_score(prob_map):.4f} -> {out}")
    return 0


def cmd_plot_roc(args: argparse.Namespace) -> int:
    from .plots import save_roc_figure

    curves = {}
    for path in args.curves:
        curve = reports.load_curve(_rooted(path))
        curves[Path(path).stem.replace("curve_", "")] = curve
    save_roc_figure(curves, _rooted(args.out))
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptxkit",
        description="pneumothorax detection/localization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic benchmark dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-cases", type=int, default=100)
    p.add_argument("--positive-fraction", type=float, default=0.5)
    p.add_argument("--side", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare-folds", help="patient-grouped cross-validation split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare_folds)

    p = sub.add_parser("train", help="train one method on one fold")
    p.add_argument("method", choices=METHODS)
    p.add_argument("--fold", type=int, default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--folds", default=None, help="fold assignment file")
    p.add_argument("--config", default=None, help="YAML run config")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--decay", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--input-size", type=int, default=None)
    p.add_argument("--early-stop", type=float, default=None)
    p.add_argument("--init-from", default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="out-of-fold scoring and ROC report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--folds", required=True)
    p.add_argument("--checkpoint-dir", required=True)
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    p.add_argument("--out-dir", default="report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ensemble-search", help="exhaustive linear fusion search")
    p.add_argument("--scores", required=True, help="scores.csv from evaluate")
    p.add_argument("--grid-step", type=float, default=ensemble.DEFAULT_GRID_STEP)
    p.add_argument("--out-dir", default="report")
    p.set_defaults(func=cmd_ensemble_search)

    p = sub.add_parser("render", help="overlay images for one case")
    p.add_argument("image", help="image file (raster or DICOM)")
    p.add_argument("--mil-checkpoint", default=None)
    p.add_argument("--fcn-checkpoint", default=None)
    p.add_argument("--out-dir", default="overlays")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("plot-roc", help="overlay ROC curve tables in one figure")
    p.add_argument("curves", nargs="+", help="curve CSV files (fpr,tpr)")
    p.add_argument("--out", default="roc.png")
    p.set_defaults(func=cmd_plot_roc)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single diagnostic line, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
