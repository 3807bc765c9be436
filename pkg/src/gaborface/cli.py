"""Command-line front end.

Subcommands mirror the pipeline stages so every artifact can be built,
inspected and re-used independently:

    synth       generate a deterministic synthetic dataset
    normalize   raw images + landmarks -> canonical face PGMs
    train-masks expression masks from grouped normalized faces
    extract     feature store from normalized faces
    train-pca   whitening PCA model from a feature store
    enroll      gallery file from features + model + subject manifest
    identify    ranked results CSV for a probe feature store
    verify      threshold decisions CSV
    evaluate    report.csv with the five measures and curves
    run         the whole pipeline from a config file
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import matcher, metrics, pca, pipeline, synth
from .errors import GaborFaceError, InvalidParameterError, ProvenanceError
from .expressmask import ExpressionMaskSet
from .features import read_feature_store
from .filterbank import FilterBank, FilterParams, build_filter_bank
from .normalize import elliptical_mask, normalize_face, load_grey, \
    parse_landmark_file, write_pgm
from .pipeline import (
    ExperimentConfig,
    check_family,
    extract_batch,
    load_normalized,
    make_config,
    parse_config_file,
    rank_probes,
    read_manifest,
    run_pipeline,
)


def _parse_window(text: str):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise InvalidParameterError(f"bad window spec {text!r}, want WxH")


def _filter_params(args) -> FilterParams:
    if getattr(args, "config", None):
        values = parse_config_file(args.config)
        fp = {k: (float(v) if k in pipeline._CONFIG_FLOATS else int(v))
              for k, v in values.items()
              if k in pipeline._CONFIG_FLOATS | {"n_scales", "n_orients"}}
        return FilterParams(**fp)
    return FilterParams()


def _load_bank(args) -> FilterBank:
    cache = getattr(args, "filter_cache", None)
    if cache and Path(cache).exists():
        bank = FilterBank.load(cache)
        # an explicit config pins the parameters; a bare cache is trusted
        if args.config and bank.params != _filter_params(args):
            raise ProvenanceError(
                f"filter cache {cache} params differ from --config")
        return bank
    bank = build_filter_bank(_filter_params(args))
    if cache:
        bank.save(cache)
    return bank


# ---------------------------------------------------------------------------
# subcommand handlers

def _cmd_synth(args):
    paths = synth.synth_dataset(args.out, args.seed, args.subjects,
                                args.expressions, sessions=args.sessions)
    for key in ("landmarks", "train", "gallery", "probes", "groups"):
        print(f"{key}: {paths[key]}")
    return 0


def _cmd_normalize(args):
    entries = parse_landmark_file(args.landmarks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "mask.pgm", elliptical_mask() * np.uint8(255))
    seen = set()
    for path, lm in entries:
        image_id = Path(path).stem
        if image_id in seen:
            raise InvalidParameterError(f"duplicate image id {image_id!r}")
        seen.add(image_id)
        face = normalize_face(load_grey(path), lm)
        write_pgm(out / f"{image_id}.pgm", face.pixels)
    print(f"normalized {len(entries)} faces into {out}")
    return 0


def _cmd_train_masks(args):
    rows = read_manifest(args.groups)
    if args.dataset:
        base = Path(args.dataset)
        rows = [pipeline.ManifestRow(r.image_id, base / Path(r.path).name,
                                     r.subject_id) for r in rows]
    faces = {r.image_id: load_normalized(r.path) for r in rows}
    bank = _load_bank(args)
    cfg = ExperimentConfig(method="mlg", filter_params=bank.params)
    mask_set = pipeline.build_masks(cfg, faces, rows, bank)
    mask_set.save(args.out)
    kept = [int(m.sum()) for m in mask_set.masks]
    print(f"masks: {args.out} kept-per-orientation {kept}")
    return 0


def _cmd_extract(args):
    rows = read_manifest(args.faces)
    faces = {r.image_id: load_normalized(r.path) for r in rows}
    ww, wh = _parse_window(args.window)
    kind = args.kind
    bank, selection = None, None
    if kind == "greys":
        method = "pca"
    else:
        bank = _load_bank(args)
        if args.masks and args.masks != "none":
            mask_set = ExpressionMaskSet.load(args.masks)
            selection = mask_set.masks
            method = "mlg"
        else:
            selection = elliptical_mask()
            method = "lg"
    cfg = ExperimentConfig(method=method,
                           filter_params=bank.params if bank else FilterParams(),
                           window_w=ww, window_h=wh, step=args.step,
                           jobs=args.jobs)
    store = extract_batch(cfg, rows, faces, bank, selection, args.out)
    print(f"features: {args.out} images={len(store.ids)} "
          f"length={store.vectors.shape[1]}")
    return 0


def _cmd_train_pca(args):
    store = read_feature_store(args.features)
    model = pca.train(store.vectors, args.components,
                      provenance=pipeline.store_family(store))
    model.save(args.out)
    print(f"model: {args.out} components={model.n_components} "
          f"features={model.n_features}")
    return 0


def _cmd_enroll(args):
    store = read_feature_store(args.features)
    model = pca.PcaModel.load(args.model)
    check_family(model, store, "gallery")
    subject_of = {r.image_id: r.subject_id for r in read_manifest(args.manifest)}
    missing = [i for i in store.ids if i not in subject_of]
    if missing:
        raise InvalidParameterError(f"manifest lacks subjects for {missing}")
    templates = pca.project(model, store.vectors)
    entries = tuple((subject_of[i], t) for i, t in zip(store.ids, templates))
    gallery = matcher.Gallery(entries=entries, model_hash=model.digest())
    gallery.save(args.out)
    print(f"gallery: {args.out} entries={len(gallery)}")
    return 0


def _load_matching(args):
    store = read_feature_store(args.features)
    model = pca.PcaModel.load(args.model)
    gallery = matcher.Gallery.load(args.gallery)
    check_family(model, store, "probe")
    if gallery.model_hash != model.digest():
        raise ProvenanceError("gallery was enrolled with a different model")
    return store, model, gallery


def _cmd_identify(args):
    store, model, gallery = _load_matching(args)
    top = args.top if args.top else len(gallery)
    rows = []
    for image_id, y in zip(store.ids, pca.project(model, store.vectors)):
        for rank, (gallery_id, dist) in enumerate(
                matcher.identify(gallery, y)[:top], start=1):
            rows.append((image_id, rank, gallery_id, dist))
    prov = pipeline.sha256_parts(b"results", model.digest(),
                                 pipeline.gallery_digest(gallery),
                                 store.provenance).hex()
    matcher.write_results_csv(args.out, rows, prov)
    print(f"results: {args.out} probes={len(store.ids)} depth={top}")
    return 0


def _cmd_verify(args):
    import csv

    store, model, gallery = _load_matching(args)
    prov = pipeline.sha256_parts(b"verify", model.digest(),
                                 pipeline.gallery_digest(gallery),
                                 store.provenance).hex()
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# provenance={prov}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["probe_id", "gallery_id", "distance", "accepted"])
        for image_id, y in zip(store.ids, pca.project(model, store.vectors)):
            for subject_id, template in gallery.entries:
                accepted, dist = matcher.verify(template, y, args.threshold)
                writer.writerow([image_id, subject_id, repr(dist),
                                 int(accepted)])
    print(f"verification: {args.out} threshold={args.threshold}")
    return 0


def _cmd_evaluate(args):
    rows, prov = matcher.read_results_csv(args.scores)
    truth = {r.image_id: r.subject_id for r in read_manifest(args.probes)}
    # full-depth results mention every gallery entry for every probe,
    # so the distinct-id count recovers the gallery size; truncated
    # (--top) lists then fail the per-probe depth check
    gallery_size = len({gallery_id for _, _, gallery_id, _ in rows})
    rankings, _, genuine, impostor = rank_probes(rows, truth, gallery_size)
    targets = tuple(float(t) for t in args.targets.split(","))
    trials = metrics.TrialSet(rankings=tuple(rankings),
                              gallery_size=gallery_size,
                              genuine_scores=tuple(genuine),
                              impostor_scores=tuple(impostor))
    report = metrics.evaluate(trials, targets=targets)
    metrics.write_report_csv(args.out, report, prov)
    for name, value in report.measures().items():
        print(f"{name} = {value:.4f}")
    return 0


def _cmd_run(args):
    values = parse_config_file(args.config)
    cfg = make_config(values, base_dir=Path(args.config).parent)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.out is not None:
        overrides["out_dir"] = Path(args.out)
    if args.method is not None:
        overrides["method"] = args.method
    if args.filter_cache is not None:
        overrides["filter_cache"] = Path(args.filter_cache)
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    report, out_dir = run_pipeline(cfg)
    if cfg.trials > 0:
        print(f"report: {out_dir / 'trials.csv'} and {out_dir / 'summary.csv'}")
    else:
        print(f"report: {out_dir / 'report.csv'}")
    for name, value in report.measures().items():
        print(f"{name} = {value:.4f}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaborface",
        description="masked log-Gabor + PCA face recognition pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--expressions", type=int, default=3)
    p.add_argument("--sessions", type=int, default=2)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("normalize", help="normalize raw images")
    p.add_argument("--landmarks", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_normalize)

    p = sub.add_parser("train-masks", help="build expression masks")
    p.add_argument("--groups", required=True,
                   help="manifest grouping normalized faces by subject")
    p.add_argument("--dataset", default=None,
                   help="directory overriding manifest paths")
    p.add_argument("--filter-cache", default=None, help="persisted bank file")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_masks)

    p = sub.add_parser("extract", help="extract feature vectors")
    p.add_argument("--faces", required=True, help="normalized-face manifest")
    p.add_argument("--filter-cache", default=None, help="persisted bank file")
    p.add_argument("--masks", default="none",
                   help="expression mask file or 'none'")
    p.add_argument("--window", default="4x4")
    p.add_argument("--step", type=int, default=4)
    p.add_argument("--kind", choices=("lg", "greys"), default="lg")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("train-pca", help="train the whitening PCA model")
    p.add_argument("--features", required=True)
    p.add_argument("--components", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_pca)

    p = sub.add_parser("enroll", help="build a gallery from features")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_enroll)

    p = sub.add_parser("identify", help="rank probes against a gallery")
    p.add_argument("--gallery", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--top", type=int, default=0,
                   help="limit output depth (default: full gallery)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_identify)

    p = sub.add_parser("verify", help="threshold decisions for probes")
    p.add_argument("--gallery", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("evaluate", help="compute the performance report")
    p.add_argument("--scores", required=True, help="identify results CSV")
    p.add_argument("--probes", required=True, help="probe truth manifest")
    p.add_argument("--targets", default="97,98,99,100")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="run the full pipeline from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--method", choices=pipeline.METHODS, default=None)
    p.add_argument("--filter-cache", default=None,
                   help="persisted bank file (overrides the config)")
    p.set_defaults(func=_cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GaborFaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
