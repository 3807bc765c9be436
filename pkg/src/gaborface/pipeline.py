"""End-to-end experiment orchestration.

Wires the stages together: normalize -> (expression masks) -> extract
-> train PCA -> enroll -> identify -> evaluate.  Three methods share
the plumbing and differ only in the feature step:

    pca  - grey values of the unmasked ellipse pixels (baseline)
    lg   - log-Gabor magnitudes selected under the ellipse mask
    mlg  - log-Gabor magnitudes selected under expression masks

Every artifact embeds a lineage digest of its inputs; stages that
combine artifacts check the digests and refuse mixed lineages.
Everything is deterministic under a fixed config and seed: no
timestamps, stable iteration orders, seeded subset sampling.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import expressmask, matcher, metrics, pca
from ._binio import sha256_parts
from .errors import InvalidInputError, InvalidParameterError, ProvenanceError
from .features import (
    FeatureStore,
    extract_features,
    filter_magnitudes,
    read_feature_store,
    select_locations,
    window_origins,
    write_feature_store,
)
from .filterbank import FilterBank, FilterParams, build_filter_bank
from .normalize import (
    NormalizedFace,
    elliptical_mask,
    load_grey,
    normalize_face,
    parse_landmark_file,
    read_pgm,
    write_pgm,
)

METHODS = ("pca", "lg", "mlg")


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "mlg"
    filter_params: FilterParams = field(default_factory=FilterParams)
    window_w: int = 4
    window_h: int = 4
    step: int = 4
    components: int = 40
    seed: int = 0
    jobs: int = 1
    targets: tuple = (97.0, 98.0, 99.0, 100.0)
    landmarks: Path = None
    train_manifest: Path = None
    gallery_manifest: Path = None
    probe_manifest: Path = None
    groups_manifest: Path = None   # mask training groups; defaults to train
    masks_file: Path = None        # precomputed expression masks
    filter_cache: Path = None
    out_dir: Path = Path("out")
    trials: int = 0
    train_subset: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameterError(f"unknown method {self.method!r}")
        if self.components < 1:
            raise InvalidParameterError("components must be >= 1")
        if self.jobs < 1:
            raise InvalidParameterError("jobs must be >= 1")


_CONFIG_INTS = {"window_w", "window_h", "step", "components", "seed", "jobs",
                "trials", "train_subset", "n_scales", "n_orients"}
_CONFIG_FLOATS = {"lambda0", "s_lambda", "beta", "s_theta"}
_CONFIG_PATHS = {"landmarks", "train_manifest", "gallery_manifest",
                 "probe_manifest", "groups_manifest", "masks_file",
                 "filter_cache", "out_dir"}


def parse_config_file(path) -> dict:
    """key=value lines, # comments; values stay strings."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidInputError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def make_config(values: dict, base_dir=Path(".")) -> ExperimentConfig:
    """Typed ExperimentConfig from a string mapping."""
    base_dir = Path(base_dir)
    fp_kwargs, kwargs = {}, {}
    for key, raw in values.items():
        if key in _CONFIG_FLOATS:
            fp_kwargs[key] = float(raw)
        elif key in {"n_scales", "n_orients"}:
            fp_kwargs[key] = int(raw)
        elif key in _CONFIG_INTS:
            kwargs[key] = int(raw)
        elif key in _CONFIG_PATHS:
            p = Path(raw)
            kwargs[key] = p if p.is_absolute() else base_dir / p
        elif key == "targets":
            kwargs[key] = tuple(float(v) for v in raw.split(",") if v)
        elif key == "method":
            kwargs[key] = raw
        else:
            raise InvalidParameterError(f"unknown config key {key!r}")
    if fp_kwargs:
        kwargs["filter_params"] = FilterParams(**fp_kwargs)
    return ExperimentConfig(**kwargs)


# ---------------------------------------------------------------------------
# manifests

@dataclass(frozen=True)
class ManifestRow:
    image_id: str
    path: Path
    subject_id: str


def read_manifest(path) -> list:
    base = Path(path).parent
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_id", "image_path", "subject_id"]:
            raise InvalidInputError(f"{path}: unexpected header {header}")
        for image_id, image_path, subject_id in reader:
            p = Path(image_path)
            rows.append(ManifestRow(image_id, p if p.is_absolute() else base / p,
                                    subject_id))
    if not rows:
        raise InvalidInputError(f"{path}: empty manifest")
    return rows


# ---------------------------------------------------------------------------
# stage helpers

def _pmap(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def face_digest(face: NormalizedFace) -> bytes:
    return sha256_parts(b"normface", face.pixels)


def normalize_batch(rows, landmark_map: dict, out_dir, jobs: int = 1) -> dict:
    """Normalize every manifest row; returns {image_id: NormalizedFace}.

    Faces are also written as PGM files (plus the shared mask) when
    ``out_dir`` is given.
    """
    todo, seen = [], set()
    for row in rows:
        if row.image_id in seen:
            continue
        seen.add(row.image_id)
        key = str(Path(row.path).resolve())
        if key not in landmark_map:
            raise InvalidInputError(f"no landmarks for {row.path}")
        todo.append((row.image_id, Path(row.path), landmark_map[key]))

    def work(item):
        image_id, path, lm = item
        return image_id, normalize_face(load_grey(path), lm)

    faces = dict(_pmap(work, todo, jobs))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_pgm(out_dir / "mask.pgm",
                  (elliptical_mask() * np.uint8(255)))
        for image_id, face in faces.items():
            write_pgm(out_dir / f"{image_id}.pgm", face.pixels)
    return faces


def load_landmark_map(path) -> dict:
    return {str(Path(p).resolve()): lm for p, lm in parse_landmark_file(path)}


def load_normalized(path) -> NormalizedFace:
    """Re-wrap a persisted face PGM with the canonical mask."""
    pixels = read_pgm(path)
    mask = elliptical_mask()
    pixels = pixels.copy()
    pixels[~mask] = 0
    return NormalizedFace(pixels=pixels, valid_mask=mask)


def ellipse_digest() -> bytes:
    return sha256_parts(b"ellipse", elliptical_mask())


def masks_digest(mask_set: expressmask.ExpressionMaskSet) -> bytes:
    return sha256_parts(b"exprmasks", mask_set.masks)


def family_digest(kind: str, bank_digest: bytes, mask_digest: bytes,
                  window) -> bytes:
    return sha256_parts(b"family", kind, bank_digest, mask_digest,
                        int(window[0]), int(window[1]), int(window[2]))


def store_family(store: FeatureStore) -> bytes:
    return family_digest(store.kind, store.bank_digest, store.mask_digest,
                         store.window)


def build_masks(cfg: ExperimentConfig, faces: dict, groups_rows,
                bank: FilterBank) -> expressmask.ExpressionMaskSet:
    """Expression masks from per-subject smallest-scale magnitudes."""
    ellipse = elliptical_mask()
    by_subject = {}
    for row in groups_rows:
        by_subject.setdefault(row.subject_id, []).append(row.image_id)
    persons = []
    for subject in sorted(by_subject):
        ids = by_subject[subject]
        if len(ids) < 2:
            raise InvalidInputError(
                f"subject {subject!r} has {len(ids)} expression images, need >= 2")
        stack = [filter_magnitudes(faces[i], bank, ellipse)[:, 0] for i in ids]
        persons.append(np.stack(stack))  # (E, n_orients, H, W)
    prov = sha256_parts(b"masks-src", bank.digest(),
                        *[face_digest(faces[i]) for s in sorted(by_subject)
                          for i in by_subject[s]])
    return expressmask.build_expression_masks(persons, ellipse, provenance=prov)


def extract_batch(cfg: ExperimentConfig, rows, faces: dict,
                  bank: FilterBank, selection_mask, out_path) -> FeatureStore:
    """Compute one feature store for a manifest, in manifest order."""
    ellipse = elliptical_mask()
    window = (cfg.window_w, cfg.window_h, cfg.step)
    ids = [row.image_id for row in rows]

    if cfg.method == "pca":
        kind, bank_digest, mask_digest = "greys", b"\x00" * 32, ellipse_digest()
        window, origins = (0, 0, 0), ()
        vectors = np.stack([faces[i].pixels[ellipse].astype(np.float64)
                            for i in ids])
    else:
        kind = "loggabor"
        bank_digest = bank.digest()
        mask_digest = sha256_parts(b"selection", selection_mask)
        if selection_mask.ndim == 2:
            origins = [window_origins(selection_mask, *window)] \
                * bank.params.n_orients
        else:
            origins = [window_origins(m, *window) for m in selection_mask]

        def work(image_id):
            stack = filter_magnitudes(faces[image_id], bank, ellipse)
            locs = select_locations(stack, selection_mask, *window)
            return extract_features(stack, locs)

        vectors = np.stack(_pmap(work, ids, cfg.jobs))

    provenance = sha256_parts(
        b"store-src", kind, bank_digest, mask_digest,
        int(window[0]), int(window[1]), int(window[2]),
        *[face_digest(faces[i]) for i in ids])
    write_feature_store(out_path, ids, vectors, kind=kind,
                        provenance=provenance, bank_digest=bank_digest,
                        mask_digest=mask_digest, window=window,
                        origins=origins)
    return read_feature_store(out_path)


def gallery_digest(gallery: matcher.Gallery) -> bytes:
    parts = [b"gallery"]
    for sid, t in gallery.entries:
        parts.extend((sid, t))
    return sha256_parts(*parts)


def check_family(model: pca.PcaModel, store: FeatureStore, role: str) -> None:
    if model.provenance != store_family(store):
        raise ProvenanceError(
            f"{role} feature store does not match the model's lineage")


def rank_probes(results_rows, truth: dict, gallery_size: int):
    """Per-probe rank of the first correct-subject entry, probe order.

    ``results_rows`` are (probe_id, rank, gallery_id, distance) at full
    depth; ``truth`` maps probe_id -> subject_id.  Also splits the
    distances into genuine/impostor score sets.
    """
    by_probe = {}
    for probe_id, rank, gallery_id, dist in results_rows:
        by_probe.setdefault(probe_id, []).append((rank, gallery_id, dist))
    rankings, order, genuine, impostor = [], [], [], []
    for probe_id, entries in by_probe.items():
        subject = truth[probe_id]
        entries.sort()
        if [rank for rank, _, _ in entries] != list(range(1, gallery_size + 1)):
            raise InvalidInputError(
                f"probe {probe_id!r}: expected full-depth results "
                f"(ranks 1..{gallery_size})")
        correct = [rank for rank, gid, _ in entries if gid == subject]
        if not correct:
            raise InvalidInputError(
                f"probe {probe_id!r}: true subject {subject!r} not in gallery")
        rankings.append(correct[0])
        order.append(probe_id)
        for rank, gid, dist in entries:
            (genuine if gid == subject else impostor).append(dist)
    return rankings, order, genuine, impostor


# ---------------------------------------------------------------------------
# full pipeline

def _train_and_score(cfg, train_vectors, train_prov_family, gallery_store,
                     gallery_rows, probe_store, probe_rows, out_dir,
                     tag: str = ""):
    """PCA -> enroll -> identify -> evaluate on prepared stores."""
    model = pca.train(train_vectors, cfg.components,
                      provenance=train_prov_family)
    check_family(model, gallery_store, "gallery")
    check_family(model, probe_store, "probe")

    subject_of = {row.image_id: row.subject_id for row in gallery_rows}
    templates = pca.project(model, gallery_store.vectors)
    entries = tuple((subject_of[i], t)
                    for i, t in zip(gallery_store.ids, templates))
    gallery = matcher.Gallery(entries=entries, model_hash=model.digest())

    results_rows = []
    probes = pca.project(model, probe_store.vectors)
    for image_id, y in zip(probe_store.ids, probes):
        ranked = matcher.identify(gallery, y)
        for rank, (gallery_id, dist) in enumerate(ranked, start=1):
            results_rows.append((image_id, rank, gallery_id, dist))

    truth = {row.image_id: row.subject_id for row in probe_rows}
    rankings, _, genuine, impostor = rank_probes(results_rows, truth,
                                                 len(gallery))
    trials = metrics.TrialSet(rankings=tuple(rankings),
                              gallery_size=len(gallery),
                              genuine_scores=tuple(genuine),
                              impostor_scores=tuple(impostor))
    report = metrics.evaluate(trials, targets=cfg.targets)

    if out_dir is not None:
        model.save(out_dir / f"model{tag}.bin")
        gallery.save(out_dir / f"gallery{tag}.bin")
        results_prov = sha256_parts(b"results", model.digest(),
                                    gallery_digest(gallery),
                                    probe_store.provenance).hex()
        matcher.write_results_csv(out_dir / f"results{tag}.csv", results_rows,
                                  results_prov)
        metrics.write_report_csv(out_dir / f"report{tag}.csv", report,
                                 results_prov)
    return report


def run_pipeline(cfg: ExperimentConfig):
    """Execute the configured experiment; returns (report, out_dir).

    In repeated-trials mode (cfg.trials > 0) the training set is
    re-sampled cfg.trials times with the seeded generator; per-trial
    measures land in trials.csv, their mean/std in summary.csv, and the
    returned report is the first trial's.
    """
    for name in ("landmarks", "train_manifest", "gallery_manifest",
                 "probe_manifest"):
        if getattr(cfg, name) is None:
            raise InvalidParameterError(f"config requires {name}")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_rows = read_manifest(cfg.train_manifest)
    gallery_rows = read_manifest(cfg.gallery_manifest)
    probe_rows = read_manifest(cfg.probe_manifest)
    groups_rows = read_manifest(cfg.groups_manifest or cfg.train_manifest)

    landmark_map = load_landmark_map(cfg.landmarks)
    all_rows = train_rows + gallery_rows + probe_rows + groups_rows
    faces = normalize_batch(all_rows, landmark_map, out_dir / "normalized",
                            jobs=cfg.jobs)

    bank = None
    if cfg.method in ("lg", "mlg"):
        if cfg.filter_cache and Path(cfg.filter_cache).exists():
            bank = FilterBank.load(cfg.filter_cache)
            if bank.params != cfg.filter_params:
                raise ProvenanceError("filter cache params differ from config")
        else:
            bank = build_filter_bank(cfg.filter_params)
            bank.save(cfg.filter_cache or out_dir / "filters.bin")

    ellipse = elliptical_mask()
    if cfg.method == "mlg":
        if cfg.masks_file and Path(cfg.masks_file).exists():
            mask_set = expressmask.ExpressionMaskSet.load(cfg.masks_file)
        else:
            mask_set = build_masks(cfg, faces, groups_rows, bank)
            mask_set.save(out_dir / "masks.bin")
        selection_mask = mask_set.masks
    elif cfg.method == "lg":
        selection_mask = ellipse
    else:
        selection_mask = None

    train_store = extract_batch(cfg, train_rows, faces, bank, selection_mask,
                                out_dir / "train_features.bin")
    gallery_store = extract_batch(cfg, gallery_rows, faces, bank,
                                  selection_mask, out_dir / "gallery_features.bin")
    probe_store = extract_batch(cfg, probe_rows, faces, bank, selection_mask,
                                out_dir / "probe_features.bin")
    family = store_family(train_store)
    if family != store_family(gallery_store) or family != store_family(probe_store):
        raise ProvenanceError("feature stores disagree in lineage")

    if cfg.trials <= 0:
        report = _train_and_score(cfg, train_store.vectors, family,
                                  gallery_store, gallery_rows, probe_store,
                                  probe_rows, out_dir)
        return report, out_dir

    # repeated-trials protocol: seeded training subsets
    n_train = train_store.vectors.shape[0]
    subset = cfg.train_subset or n_train
    if subset > n_train:
        raise InvalidParameterError(
            f"train_subset {subset} exceeds training size {n_train}")
    reports = []
    for trial in range(cfg.trials):
        rng = np.random.default_rng(
            np.random.SeedSequence([int(cfg.seed), 0xF1, trial]))
        idx = np.sort(rng.choice(n_train, size=subset, replace=False))
        rep = _train_and_score(cfg, train_store.vectors[idx], family,
                               gallery_store, gallery_rows, probe_store,
                               probe_rows, out_dir, tag=f"_trial{trial}")
        reports.append(rep)

    names = list(reports[0].measures())
    with open(out_dir / "trials.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trial"] + names)
        for i, rep in enumerate(reports):
            m = rep.measures()
            writer.writerow([i] + [repr(float(m[k])) for k in names])
    with open(out_dir / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["measure", "mean", "std"])
        for k in names:
            vals = np.array([rep.measures()[k] for rep in reports])
            std = vals.std(ddof=1) if len(vals) > 1 else 0.0
            writer.writerow([k, repr(float(vals.mean())), repr(float(std))])
    return reports[0], out_dir
