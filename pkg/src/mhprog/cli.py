"""Command-line interface.

Exit codes: 0 success, 1 partial success (some rows failed), 2 fatal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import PROFILES, RunConfig, load_config
from .core_data import PixelSpacing, Stage, load_manifest, load_scan
from .errors import EmptyInput, MhprogError, ShapeMismatch, UnpairedFile
from .fusion import FusionConfig, FusionDataset, evaluate_harness, load_checkpoint, save_checkpoint, train
from .fusion.model import Batch, forward
from .reporting import roc_svg, coefficient_text, write_json, write_roc_csv, write_table_csv
from .segmetrics import report as seg_report
from .stats import DataMatrix, run_protocol
from .stats.protocol import PUBLISHED_LOGISTIC

log = logging.getLogger("mhprog")

EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2
HORIZONS = {"w2": Stage.W2, "m3": Stage.M3, "m6": Stage.M6, "m12": Stage.M12}


# --- helpers ----------------------------------------------------------------------

def _config(args) -> RunConfig:
    overrides = {
        "out": Path(args.out) if getattr(args, "out", None) else None,
        "seed": getattr(args, "seed", None),
        "profile": getattr(args, "profile", None),
        "manifest": Path(args.manifest) if getattr(args, "manifest", None) else None,
    }
    for key in ("epochs", "lam", "superior_threshold", "classification_threshold", "dp_window"):
        overrides[key] = getattr(args, key, None)
    cfg_path = getattr(args, "config", None)
    dataset = getattr(args, "dataset", None)
    if cfg_path is None and dataset is not None and (Path(dataset) / "study.cfg").is_file():
        cfg_path = Path(dataset) / "study.cfg"
    if dataset is not None and overrides["manifest"] is None and cfg_path is None:
        overrides["manifest"] = Path(dataset) / "manifest.csv"
    cfg = load_config(cfg_path, overrides)
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg


def _series(cfg: RunConfig):
    if cfg.manifest is None:
        raise EmptyInput("no manifest given (use --manifest or a config file)")
    errors = []
    series = load_manifest(cfg.manifest, errors=errors, scan_root=cfg.scan_root)
    for e in errors:
        log.warning("manifest %s", e)
    if not series:
        raise EmptyInput(f"{cfg.manifest}: no usable rows")
    return series, errors


def _write_errors(path: Path, errors) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eye_id", "stage", "reason"])
        for e in errors:
            w.writerow([e.eye_id, e.stage, e.reason])


def _horizon(args) -> Stage:
    return HORIZONS[(args.horizon or "w2").lower()]


def _features(cfg: RunConfig, series, features_path, horizon: Stage | None):
    """Load (or extract) features and (re)derive dynamics for the configured window."""
    errors = []
    if features_path:
        feats = pipeline.read_features(features_path)
    else:
        res = pipeline.extract_all(series, cfg.spacing, cfg.min_pixels)
        feats, errors = res.features, res.errors
    last = horizon if cfg.dp_window == "horizon" else None
    errors += pipeline.dynamics_all(feats, cfg.epsilon, cfg.lam, cfg.stage_days, last)
    return feats, errors


# --- commands -----------------------------------------------------------------------

def cmd_extract(args) -> int:
    cfg = _config(args)
    series, manifest_errors = _series(cfg)
    res = pipeline.extract_all(series, cfg.spacing, cfg.min_pixels)
    out = cfg.out / "features.csv"
    pipeline.write_features(out, res.features)
    errors = res.errors + [pipeline.RowError("?", "?", str(e)) for e in manifest_errors]
    if errors:
        _write_errors(cfg.out / "extract_errors.csv", errors)
    log.info("wrote %d feature rows to %s (%d failures)", len(res.features), out, len(errors))
    return EXIT_PARTIAL if errors else EXIT_OK


def cmd_dynamics(args) -> int:
    cfg = _config(args)
    src = Path(args.features) if args.features else cfg.out / "features.csv"
    feats = pipeline.read_features(src)
    if not feats:
        raise EmptyInput(f"{src}: no feature rows")
    last = _horizon(args) if cfg.dp_window == "horizon" else None
    errors = pipeline.dynamics_all(feats, cfg.epsilon, cfg.lam, cfg.stage_days, last)
    out = cfg.out / "features_dynamics.csv"
    pipeline.write_features(out, feats, with_dynamics=True)
    if errors:
        _write_errors(cfg.out / "dynamics_errors.csv", errors)
    log.info("wrote %s", out)
    return EXIT_PARTIAL if errors else EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    horizon = _horizon(args)
    series, _ = _series(cfg)
    feats, errors = _features(cfg, series, args.features, horizon)
    hd = pipeline.horizon_data(series, feats, horizon, cfg.superior_threshold, cfg.weighted_dp)
    if len(hd.y) == 0:
        raise EmptyInput(f"no eyes with BCVA at PRE and {horizon.value}")
    m = DataMatrix(hd.columns, hd.X, hd.y, hd.ids)
    rep = run_protocol(m, hd.dp_columns, target=hd.delta, include_dp=not args.without_dp,
                       missing_threshold=cfg.missing_threshold, vif_limit=cfg.vif_limit,
                       alpha=cfg.screen_alpha, seed=cfg.seed, threshold=cfg.threshold)
    h = horizon.value.lower()
    payload = {
        "horizon": h,
        "profile": cfg.profile,
        "superior_threshold": cfg.superior_threshold,
        "without_dp_flag": bool(args.without_dp),
        "n": int(len(hd.y)),
        "n_superior": int(hd.y.sum()),
        "dp_columns": hd.dp_columns,
        **rep.as_dict(),
        "published_logistic": PUBLISHED_LOGISTIC.get(h),
    }
    if args.without_dp and payload["comparison"]:
        payload["comparison"]["with_dp"] = None
    write_json(cfg.out / f"fit_{h}.json", payload)
    curves = {}
    c = rep.comparison
    if c is not None:
        models = [("without_dp", c.without_dp)] + ([] if args.without_dp else [("with_dp", c.with_dp)])
        for name, ev in models:
            write_roc_csv(cfg.out / f"roc_{h}_{name}.csv", ev.roc_thresholds, ev.roc_fpr, ev.roc_tpr)
            curves[name.replace("_", " ")] = (ev.roc_fpr, ev.roc_tpr, ev.auc)
        (cfg.out / f"roc_{h}.svg").write_text(roc_svg(curves, f"Logistic regression, {horizon.value}"),
                                             encoding="utf-8")
        best = c.without_dp if args.without_dp else c.with_dp
        text = coefficient_text(best.fit.as_dict(), f"Horizon {horizon.value}")
        (cfg.out / f"coefficients_{h}.txt").write_text(text, encoding="utf-8")
    return EXIT_PARTIAL if errors else EXIT_OK


def _label_files(d: Path) -> dict[str, Path]:
    return {p.name: p for p in sorted(d.iterdir()) if p.suffix.lower() in (".png", ".pgm")}


def cmd_segmetrics(args) -> int:
    cfg = _config(args)
    pred, truth = _label_files(Path(args.pred)), _label_files(Path(args.truth))
    if not pred and not truth:
        raise EmptyInput("no label images found")
    unpaired = sorted(set(pred) ^ set(truth))
    if unpaired:
        raise UnpairedFile(f"files without a partner: {unpaired}")
    unit = PixelSpacing(1.0, 1.0)
    names = sorted(pred)
    preds = [load_scan(pred[n], unit) for n in names]
    truths = [load_scan(truth[n], unit) for n in names]
    rep = seg_report(preds, truths, aggregate=args.aggregate)
    out = cfg.out / "segmetrics.csv"
    write_table_csv(out, rep.table(), ["class", "dice", "iou", "accuracy", "f1", "roc_auc", "support", "fallback"])
    log.info("wrote %s", out)
    return EXIT_OK


def build_fusion_dataset(cfg: RunConfig, series, feats, horizon: Stage) -> tuple[FusionDataset, list[int]]:
    hd = pipeline.horizon_data(series, feats, horizon, cfg.superior_threshold, cfg.weighted_dp)
    by_id = {s.eye_id: s for s in series}
    clin_idx = [hd.columns.index(c) for c in hd.clinical]
    val_names = [c for c in hd.columns if c not in hd.clinical]
    val_idx = [hd.columns.index(c) for c in val_names]
    X = pipeline.impute_columns(hd.X)
    images, keep = [], []
    for i, eye in enumerate(hd.ids):
        ref = pipeline.first_scan_path(by_id[eye])
        if ref is None:
            log.warning("eye %s has no PRE scan; left out of the fusion dataset", eye)
            continue
        scan = load_scan(ref.path, ref.spacing or cfg.spacing, ref.orientation)
        images.append(pipeline.scan_image(scan.labels, cfg.image_size))
        keep.append(i)
    if not keep:
        raise EmptyInput("no eyes with a PRE scan and outcome")
    keep = np.array(keep)
    data = FusionDataset(np.stack(images), X[np.ix_(keep, clin_idx)], X[np.ix_(keep, val_idx)], hd.y[keep],
                         [hd.ids[i] for i in keep], val_names, list(hd.clinical))
    dp_idx = [val_names.index(c) for c in hd.dp_columns]
    return data, dp_idx


def _fusion_config(cfg: RunConfig, data: FusionDataset) -> FusionConfig:
    return FusionConfig(image_size=cfg.image_size, patch=cfg.patch, d_model=cfg.d_model, n_heads=cfg.n_heads,
                        n_encoder_blocks=cfg.n_encoder_blocks, clinical_dim=data.v_c.shape[1],
                        values_dim=data.v_v.shape[1], head_hidden=cfg.head_hidden, seed=cfg.seed)


def cmd_train_fusion(args) -> int:
    cfg = _config(args)
    horizon = _horizon(args)
    series, _ = _series(cfg)
    feats, errors = _features(cfg, series, args.features, horizon)
    data, dp_idx = build_fusion_dataset(cfg, series, feats, horizon)
    fcfg = _fusion_config(cfg, data)
    h = horizon.value.lower()
    report = evaluate_harness(data, fcfg, seed=cfg.seed, dp_columns=dp_idx, epochs=cfg.epochs,
                              lr_grid=tuple(cfg.lr_grid), batch_size=cfg.batch_size, folds=cfg.folds, horizon=h)
    report["values_names"] = data.values_names
    report["clinical_names"] = data.clinical_names
    write_json(cfg.out / f"fusion_{h}.json", report)
    curves = {r["label"]: (r["test"]["roc"]["fpr"], r["test"]["roc"]["tpr"], r["test"]["auc"])
              for r in report["rows"] + report["logistic"] if "test" in r}
    (cfg.out / f"fusion_{h}.svg").write_text(roc_svg(curves, f"Ablation grid, {horizon.value}", 380),
                                             encoding="utf-8")

    # final tri-modal model with DP, trained on every labeled eye
    full = next(r for r in report["rows"] if r["modalities"] == "cd+values+image" and r["with_dp"])
    mc, sc = data.v_c.mean(axis=0), data.v_c.std(axis=0)
    mv, sv = data.v_v.mean(axis=0), data.v_v.std(axis=0)
    sc, sv = np.where(sc > 0, sc, 1.0), np.where(sv > 0, sv, 1.0)
    std = FusionDataset(data.images, (data.v_c - mc) / sc, (data.v_v - mv) / sv, data.y, data.ids)
    res = train(std, fcfg, epochs=cfg.epochs, lr=full["chosen_lr"], batch_size=cfg.batch_size)
    save_checkpoint(cfg.out / f"fusion_{h}.ckpt.json", res.params, fcfg, extra={
        "horizon": h,
        "clinical_names": data.clinical_names,
        "values_names": data.values_names,
        "v_c_mean": mc.tolist(), "v_c_sd": sc.tolist(),
        "v_v_mean": mv.tolist(), "v_v_sd": sv.tolist(),
        "loss_trace": res.loss_trace,
    })
    return EXIT_PARTIAL if errors else EXIT_OK


def _vector(given, names, means):
    """Sample inputs as a list (in checkpoint order) or a name -> value dict; missing names take the training mean."""
    if isinstance(given, dict):
        unknown = set(given) - set(names)
        if unknown:
            raise ValueError(f"unknown input names {sorted(unknown)}; expected {names}")
        return np.array([float(given[n]) if given.get(n) is not None else float(m) for n, m in zip(names, means)])
    return np.asarray(given, dtype=float)


def cmd_predict(args) -> int:
    params, fcfg, extra = load_checkpoint(args.checkpoint)
    sample_path = Path(args.sample)
    sample = json.loads(sample_path.read_text(encoding="utf-8"))
    img = sample.get("image")
    if isinstance(img, str):
        p = Path(img)
        labels = load_scan(p if p.is_absolute() else sample_path.parent / p, PixelSpacing(1.0, 1.0)).labels
        image = pipeline.scan_image(labels, fcfg.image_size)
    elif img is None:
        image = np.zeros((fcfg.image_size, fcfg.image_size))
    else:
        image = np.asarray(img, dtype=float)
    means_c = extra.get("v_c_mean", [0.0] * fcfg.clinical_dim)
    means_v = extra.get("v_v_mean", [0.0] * fcfg.values_dim)
    v_c = _vector(sample.get("clinical", {}), extra.get("clinical_names", []), means_c)
    v_v = _vector(sample.get("values", {}), extra.get("values_names", []), means_v)
    if len(v_c) != fcfg.clinical_dim or len(v_v) != fcfg.values_dim:
        raise ShapeMismatch(f"expected {fcfg.clinical_dim} clinical and {fcfg.values_dim} values inputs")
    if image.shape != (fcfg.image_size, fcfg.image_size):
        raise ShapeMismatch(f"image must be {fcfg.image_size}x{fcfg.image_size}, got {image.shape}")
    if "v_c_sd" in extra:
        v_c = (v_c - np.array(means_c)) / np.array(extra["v_c_sd"])
        v_v = (v_v - np.array(means_v)) / np.array(extra["v_v_sd"])
    probs = forward(Batch(image[None], v_c[None], v_v[None]), params, fcfg)[0]
    out = {"p_superior": float(probs[0]), "p_not_superior": float(probs[1])}
    print(json.dumps(out))
    if getattr(args, "out", None):
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_json(Path(args.out) / "prediction.json", out, timestamp=False)
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _config(args)
    lines = []
    for path in sorted(cfg.out.glob("fit_*.json")):
        doc = json.loads(path.read_text(encoding="utf-8"))
        c = doc.get("comparison") or {}
        lines.append(f"== Logistic regression, horizon {doc['horizon']} (n={doc['n']}) ==")
        for key in ("without_dp", "with_dp"):
            ev = c.get(key)
            if ev:
                lines.append(f"{key:<11} accuracy {ev['accuracy']:.3f}  AUC {ev['auc']:.3f}  "
                             f"Nagelkerke R2 {ev['nagelkerke_r2']:.3f}")
        if c.get("lr_test"):
            lines.append(f"LR test: statistic {c['lr_test']['statistic']:.3f}, df {c['lr_test']['df']}, "
                         f"p {c['lr_test']['p']:.3g}")
        best = (c.get("with_dp") or c.get("without_dp") or {}).get("fit")
        if best:
            lines.append(coefficient_text(best, "Final model terms"))
    for path in sorted(cfg.out.glob("fusion_*.json")):
        if path.name.endswith(".ckpt.json"):
            continue
        doc = json.loads(path.read_text(encoding="utf-8"))
        lines.append(f"== Fusion ablation, horizon {doc['horizon']} (n_test={doc['n_test']}) ==")
        for r in doc["rows"] + doc["logistic"]:
            if "test" in r:
                t = r["test"]
                lines.append(f"{r['label']:<32} AUC {t['auc']:.3f}  acc {t['accuracy']:.3f}  "
                             f"sens {t['sensitivity']:.3f}  spec {t['specificity']:.3f}")
    if not lines:
        raise EmptyInput(f"no fit_*.json or fusion_*.json in {cfg.out}")
    out = cfg.out / "report.txt"
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(out.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import make_study
    path = make_study(args.out, n_eyes=args.n_eyes, seed=args.seed or 0)
    print(path)
    return EXIT_OK


# --- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mhprog", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, horizon=False):
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--manifest", help="study manifest CSV (overrides config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--profile", choices=PROFILES)
        p.add_argument("--lambda", dest="lam", type=float, help="shape-weight strength (extended profile)")
        p.add_argument("--superior-threshold", type=int, help="letters gain for Superior (e.g. 15)")
        p.add_argument("--classification-threshold", help="probability cut-off or 'youden'")
        p.add_argument("--dp-window", choices=("full", "horizon"),
                       help="derive dynamics from all follow-up or only up to the horizon")
        if horizon:
            p.add_argument("--horizon", choices=sorted(HORIZONS), default="w2")
            p.add_argument("--without-dp", action="store_true", help="exclude dynamic parameters")
            p.add_argument("--features", help="features CSV from 'extract' or 'dynamics'")

    p = sub.add_parser("extract", help="morphometry for every scan in the manifest")
    common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("dynamics", help="append recovery-rate columns to PRE rows")
    common(p)
    p.add_argument("--features", help="features CSV (default: <out>/features.csv)")
    p.add_argument("--horizon", choices=sorted(HORIZONS), default=None)
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("fit", help="logistic protocol with and without dynamic parameters")
    common(p, horizon=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("segmetrics", help="per-class segmentation metrics")
    common(p)
    p.add_argument("--pred", required=True, help="directory of predicted label images")
    p.add_argument("--truth", required=True, help="directory of ground-truth label images")
    p.add_argument("--aggregate", choices=("micro", "macro"), default="micro")
    p.set_defaults(func=cmd_segmetrics)

    p = sub.add_parser("train-fusion", help="train and evaluate the multimodal classifier")
    common(p, horizon=True)
    p.add_argument("--dataset", help="directory holding manifest.csv (and optionally study.cfg)")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_fusion)

    p = sub.add_parser("predict", help="P(Superior) for one sample from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample", required=True, help="JSON with image, clinical and values entries")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="summarise fit/fusion JSON reports in the output directory")
    common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write the synthetic demo study")
    p.add_argument("--out", required=True)
    p.add_argument("--n-eyes", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (MhprogError, FileNotFoundError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
