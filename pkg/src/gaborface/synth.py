"""Deterministic synthetic face-like dataset for desk-scale experiments.

Each subject gets a band-limited random texture plus fixed dark blobs
for eyes and nose.  Expressions vary a mouth arc and cheek blobs in the
lower face; every image additionally draws a random smooth illumination
gradient, a small in-plane rotation and a translation jitter.  Landmarks
(eye centres, chin) are emitted exactly, mapped through the same pose
transform as the drawing.

All randomness is keyed by numpy SeedSequence([seed, stream, subject,
session, expression]) so a dataset is a pure function of its seed and
session 2 is a fresh draw of the expression streams, never a re-use of
session 1.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .normalize import Landmarks, write_landmark_file, write_pgm

SRC_SIZE = 160
# canonical feature geometry (pixels, 0-based, upright pose)
EYE_L = (56.0, 60.0)
EYE_R = (104.0, 60.0)
CHIN = (80.0, 118.0)
MOUTH = (80.0, 104.0)

_TEXTURE, _DEFORM, _POSE, _STATIC = 1, 2, 3, 4


def _rng(seed, stream, subject=0, session=0, expression=0):
    key = [int(seed), stream, subject, session, expression]
    return np.random.default_rng(np.random.SeedSequence(key))


def _texture(seed, subject) -> np.ndarray:
    """Smooth per-subject base texture around mid-grey."""
    rng = _rng(seed, _TEXTURE, subject)
    white = rng.standard_normal((SRC_SIZE, SRC_SIZE))
    fx = np.fft.fftfreq(SRC_SIZE)
    fy = np.fft.fftfreq(SRC_SIZE)
    gx, gy = np.meshgrid(fx, fy)
    lowpass = np.exp(-(gx ** 2 + gy ** 2) / (2 * 0.04 ** 2))
    field = np.real(np.fft.ifft2(np.fft.fft2(white) * lowpass))
    field /= max(np.abs(field).max(), 1e-12)
    return 128.0 + 45.0 * field


def _blob(u, v, cx, cy, sx, sy):
    return np.exp(-((u - cx) ** 2 / (2 * sx * sx)
                    + (v - cy) ** 2 / (2 * sy * sy)))


def _features_static(u, v, rng) -> np.ndarray:
    """Eyes, nose and stable per-subject marks in the upper face."""
    eye_depth = rng.uniform(80.0, 100.0)
    nose_depth = rng.uniform(30.0, 45.0)
    out = -eye_depth * _blob(u, v, EYE_L[0], EYE_L[1], 3.5, 3.5)
    out -= eye_depth * _blob(u, v, EYE_R[0], EYE_R[1], 3.5, 3.5)
    out -= nose_depth * _blob(u, v, 80.0, 82.0, 2.5, 9.0)
    # identity marks live above the deformation zone, where expression
    # masks keep pixels
    for _ in range(4):
        cx = rng.uniform(52.0, 108.0)
        cy = rng.uniform(32.0, 52.0)
        amp = rng.uniform(35.0, 55.0) * rng.choice((-1.0, 1.0))
        out += amp * _blob(u, v, cx, cy, rng.uniform(3.0, 6.0),
                           rng.uniform(3.0, 6.0))
    for _ in range(2):
        cx = rng.uniform(62.0, 98.0)
        cy = rng.uniform(62.0, 78.0)
        amp = rng.uniform(25.0, 40.0) * rng.choice((-1.0, 1.0))
        out += amp * _blob(u, v, cx, cy, 4.0, 4.0)
    return out


def _features_expression(u, v, rng) -> np.ndarray:
    """Mouth arc plus cheek blobs; the deformation-heavy region."""
    curvature = rng.uniform(-0.25, 0.25)
    dy = rng.uniform(-10.0, 10.0)
    half_w = rng.uniform(12.0, 19.0)
    depth = rng.uniform(90.0, 130.0)
    out = np.zeros_like(u)
    for t in np.linspace(-1.0, 1.0, 17):
        cx = MOUTH[0] + t * half_w
        cy = MOUTH[1] + dy + curvature * (t * half_w) ** 2
        out -= depth * _blob(u, v, cx, cy, 3.0, 3.0)
    for _ in range(4):
        cx = rng.uniform(58.0, 102.0)
        cy = rng.uniform(90.0, 120.0)
        amp = rng.uniform(-65.0, 65.0)
        out += amp * _blob(u, v, cx, cy, 9.0, 9.0)
    return out


def _render(seed, subject, session, expression, texture):
    pose = _rng(seed, _POSE, subject, session, expression)
    deform = _rng(seed, _DEFORM, subject, session, expression)
    static = _rng(seed, _STATIC, subject)  # per-subject depths, expression-free

    angle = math.radians(pose.uniform(-4.0, 4.0))
    jx, jy = pose.uniform(-3.0, 3.0, size=2)
    light_phi = pose.uniform(0.0, 2.0 * math.pi)
    light_gain = pose.uniform(0.08, 0.18)
    lm_jitter = pose.uniform(-1.2, 1.2, size=6)
    noise_sigma = 2.0

    c = (SRC_SIZE - 1) / 2.0
    x = np.arange(SRC_SIZE, dtype=np.float64)
    gx, gy = np.meshgrid(x, x)
    # image -> canonical: undo jitter, rotate back about the centre
    ca, sa = math.cos(-angle), math.sin(-angle)
    px, py = gx - c - jx, gy - c - jy
    u = c + ca * px - sa * py
    v = c + sa * px + ca * py

    # bilinear texture lookup at canonical coordinates
    u0 = np.clip(np.floor(u).astype(np.int64), 0, SRC_SIZE - 2)
    v0 = np.clip(np.floor(v).astype(np.int64), 0, SRC_SIZE - 2)
    fu = np.clip(u - u0, 0.0, 1.0)
    fv = np.clip(v - v0, 0.0, 1.0)
    tex = (texture[v0, u0] * (1 - fu) * (1 - fv)
           + texture[v0, u0 + 1] * fu * (1 - fv)
           + texture[v0 + 1, u0] * (1 - fu) * fv
           + texture[v0 + 1, u0 + 1] * fu * fv)

    img = tex + _features_static(u, v, static) + _features_expression(u, v, deform)
    shade = 1.0 + light_gain * ((gx - c) * math.cos(light_phi)
                                + (gy - c) * math.sin(light_phi)) / c
    img = img * shade + pose.normal(0.0, noise_sigma, img.shape)
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    # canonical -> image for the landmark points; eye landmarks carry a
    # small placement error, like manual selection would
    ca, sa = math.cos(angle), math.sin(angle)

    def fwd(p, ox=0.0, oy=0.0):
        dx, dy = p[0] - c, p[1] - c
        return (c + jx + ca * dx - sa * dy + ox,
                c + jy + sa * dx + ca * dy + oy)

    lm = Landmarks(left_eye=fwd(EYE_L, lm_jitter[0], lm_jitter[1]),
                   right_eye=fwd(EYE_R, lm_jitter[2], lm_jitter[3]),
                   chin=fwd(CHIN, lm_jitter[4], lm_jitter[5]))
    return img, lm


def _write_manifest(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "image_path", "subject_id"])
        writer.writerows(rows)


def synth_dataset(out_dir, seed: int, n_subjects: int, n_expressions: int,
                  sessions: int = 2) -> dict:
    """Generate images, landmarks and manifests under ``out_dir``.

    Returns a dict of the written file paths: landmarks, train/gallery/
    probes manifests and the mask-training groups file.  Train, gallery
    and groups cover session 1; probes cover session 2 (when present).
    """
    if n_subjects < 2 or n_expressions < 2:
        raise InvalidInputError("need at least 2 subjects and 2 expressions")
    if sessions < 1:
        raise InvalidInputError("need at least 1 session")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)

    landmark_entries = []
    manifest_rows = {s: [] for s in range(1, sessions + 1)}
    for subject in range(1, n_subjects + 1):
        texture = _texture(seed, subject)
        for session in range(1, sessions + 1):
            for expr in range(1, n_expressions + 1):
                img, lm = _render(seed, subject, session, expr, texture)
                image_id = f"s{session}_p{subject:03d}_e{expr}"
                rel = Path("images") / f"{image_id}.pgm"
                write_pgm(out / rel, img)
                landmark_entries.append((rel.as_posix(), lm))
                manifest_rows[session].append(
                    (image_id, rel.as_posix(), f"p{subject:03d}"))

    paths = {"landmarks": out / "landmarks.txt"}
    write_landmark_file(paths["landmarks"], landmark_entries)

    session1 = manifest_rows[1]
    paths["train"] = out / "train.csv"
    _write_manifest(paths["train"], session1)
    paths["gallery"] = out / "gallery.csv"
    _write_manifest(paths["gallery"],
                    [r for r in session1 if r[0].endswith("_e1")])
    paths["groups"] = out / "groups.csv"
    _write_manifest(paths["groups"], session1)
    probe_rows = manifest_rows[sessions] if sessions > 1 else session1
    paths["probes"] = out / "probes.csv"
    _write_manifest(paths["probes"], probe_rows)
    return paths
