"""Masked log-Gabor magnitudes and sliding-window feature selection.

The magnitude stack of a face is, per (orientation, scale),

    V = abs(IFFT2(G * FFT2(I))) * mask

where G is the frequency-domain filter raster.  Feature selection runs
on the smallest scale only: the raster is tiled by windows (origins at
multiples of the step from the top-left, partial windows clipped) and
every window holding at least one unmasked pixel contributes the
coordinates of its maximum unmasked magnitude, ties resolved to the
first pixel in raster-scan order.  Features at the remaining scales of
the same orientation are read at the selected coordinates, giving a
vector laid out orientation-major, then location, then scale.

Selection runs per image: which window wins where varies from face to
face, but the set of contributing windows is fixed by the mask alone,
so every image of a dataset yields a vector of the same length.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._binio import (
    read_array,
    read_exact,
    read_header,
    read_str,
    write_array,
    write_header,
    write_str,
)
from .errors import InvalidParameterError, ShapeError
from .filterbank import FilterBank
from .normalize import NormalizedFace

_MAGIC = b"LGFS"
_VERSION = 1


def filter_magnitudes(face, bank: FilterBank, mask: np.ndarray) -> np.ndarray:
    """Masked magnitude rasters for every (orientation, scale).

    Parameters
    ----------
    face : NormalizedFace or 2-D array
        Grey raster; uint8 input is promoted to float64.
    bank : FilterBank
        Frequency-domain rasters matching the face dimensions.
    mask : 2-D bool array
        Pixels outside the mask are exactly 0 in the output.

    Returns
    -------
    ndarray, shape (n_orients, n_scales, H, W), non-negative float64.
    """
    img = face.pixels if isinstance(face, NormalizedFace) else face
    img = np.asarray(img, dtype=np.float64)
    p = bank.params
    if img.shape != (p.height, p.width):
        raise ShapeError(f"face {img.shape} vs bank {(p.height, p.width)}")
    if mask.shape != img.shape:
        raise ShapeError(f"mask {mask.shape} vs face {img.shape}")
    m = mask.astype(np.float64)
    spectrum = np.fft.fft2(img)
    mags = np.empty_like(bank.filters)
    for i_o in range(p.n_orients):
        for i_s in range(p.n_scales):
            mags[i_o, i_s] = np.abs(
                np.fft.ifft2(bank.filters[i_o, i_s] * spectrum)) * m
    return mags


@dataclass(frozen=True)
class FeatureLocationSet:
    """Per-orientation pixel coordinates picked by the window search.

    ``coords[o]`` is an (k_o, 2) int array of 0-based (x, y) pairs in
    window raster order, duplicates removed.
    """

    coords: tuple
    window_w: int
    window_h: int
    step: int

    @property
    def counts(self):
        return [len(c) for c in self.coords]

    @property
    def total(self) -> int:
        return sum(self.counts)


def window_origins(mask: np.ndarray, window_w: int, window_h: int,
                   step: int) -> np.ndarray:
    """(x0, y0) origins of windows containing >= 1 unmasked pixel.

    Raster order over the window grid; fixed by the mask alone, so all
    images of a dataset share it.
    """
    _check_window(mask.shape, window_w, window_h, step)
    h, w = mask.shape
    origins = []
    for y0 in range(0, h, step):
        for x0 in range(0, w, step):
            if mask[y0:y0 + window_h, x0:x0 + window_w].any():
                origins.append((x0, y0))
    return np.array(origins, dtype=np.int32).reshape(-1, 2)


def _check_window(shape, window_w, window_h, step):
    if window_w < 1 or window_h < 1:
        raise InvalidParameterError("window must be at least 1x1")
    if step < 1:
        raise InvalidParameterError("step must be >= 1")
    if window_h > shape[0] or window_w > shape[1]:
        raise InvalidParameterError(
            f"window {window_w}x{window_h} larger than raster {shape}")


def _select_one(mag: np.ndarray, mask: np.ndarray, ww: int, wh: int,
                step: int) -> np.ndarray:
    h, w = mag.shape
    if ww == wh == step and h % step == 0 and w % step == 0:
        # exact tiling: vectorized per-window argmax, raster tie-break
        hm, wm = h // step, w // step
        vals = np.where(mask, mag, -np.inf)
        vals = vals.reshape(hm, step, wm, step).transpose(0, 2, 1, 3)
        vals = vals.reshape(hm, wm, step * step)
        occ = mask.reshape(hm, step, wm, step).transpose(0, 2, 1, 3)
        occ = occ.reshape(hm, wm, step * step).any(axis=-1)
        flat = vals.argmax(axis=-1)
        wy, wx = np.nonzero(occ)  # row-major: window raster order
        iy, ix = np.divmod(flat[wy, wx], step)
        return np.column_stack((wx * step + ix, wy * step + iy)).astype(np.int32)

    coords, seen = [], set()
    for y0 in range(0, h, step):
        for x0 in range(0, w, step):
            msub = mask[y0:y0 + wh, x0:x0 + ww]
            if not msub.any():
                continue
            sub = mag[y0:y0 + wh, x0:x0 + ww]
            flat = int(np.argmax(np.where(msub, sub, -np.inf)))
            iy, ix = divmod(flat, sub.shape[1])
            pt = (x0 + ix, y0 + iy)
            if pt not in seen:  # overlapping windows may re-pick a pixel
                seen.add(pt)
                coords.append(pt)
    return np.array(coords, dtype=np.int32).reshape(-1, 2)


def select_locations(stack: np.ndarray, mask: np.ndarray, window_w: int,
                     window_h: int, step: int) -> FeatureLocationSet:
    """Run the sliding-window search on the smallest scale.

    ``mask`` is either one (H, W) grid shared by all orientations or an
    (n_orients, H, W) stack (per-orientation expression masks already
    intersected with the face ellipse).
    """
    n_orients = stack.shape[0]
    h, w = stack.shape[2], stack.shape[3]
    _check_window((h, w), window_w, window_h, step)
    if mask.ndim == 2:
        masks = [mask] * n_orients
    elif mask.shape == (n_orients, h, w):
        masks = list(mask)
    else:
        raise ShapeError(f"mask shape {mask.shape} unusable for stack "
                         f"{stack.shape}")
    coords = tuple(
        _select_one(stack[o, 0], np.asarray(masks[o], dtype=bool),
                    window_w, window_h, step)
        for o in range(n_orients))
    return FeatureLocationSet(coords=coords, window_w=window_w,
                              window_h=window_h, step=step)


def extract_features(stack: np.ndarray, locs: FeatureLocationSet) -> np.ndarray:
    """Gather magnitudes at the selected locations across all scales.

    Layout: orientation-major, then location, then scale; length
    n_scales * sum over orientations of the location counts.
    """
    n_orients, n_scales, h, w = stack.shape
    if len(locs.coords) != n_orients:
        raise ShapeError("location set orientation count mismatch")
    parts = []
    for o in range(n_orients):
        c = locs.coords[o]
        if len(c) == 0:
            continue
        if c[:, 0].min() < 0 or c[:, 0].max() >= w \
                or c[:, 1].min() < 0 or c[:, 1].max() >= h:
            raise IndexError("feature location outside raster bounds")
        # (n_scales, k) -> (k, n_scales): location-major, scale within
        parts.append(stack[o, :, c[:, 1], c[:, 0]].reshape(len(c), n_scales))
    if not parts:
        return np.empty(0, dtype=np.float64)
    return np.concatenate([p.ravel() for p in parts])


# ---------------------------------------------------------------------------
# feature store: one binary file per dataset

@dataclass(frozen=True)
class FeatureStore:
    """Persisted feature vectors keyed by image identifier."""

    kind: str                 # "loggabor" or "greys"
    provenance: bytes
    bank_digest: bytes
    mask_digest: bytes
    window: tuple             # (window_w, window_h, step); (0,0,0) for greys
    origins: tuple            # per-orientation (k,2) window-origin arrays
    ids: tuple
    vectors: np.ndarray       # (n_images, n_features) float64

    def index_of(self, image_id: str) -> int:
        return self.ids.index(image_id)


def write_feature_store(path, ids: Sequence[str], vectors: np.ndarray, *,
                        kind: str, provenance: bytes, bank_digest: bytes,
                        mask_digest: bytes, window=(0, 0, 0),
                        origins=()) -> None:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] != len(ids):
        raise ShapeError("vectors must be (n_images, n_features)")
    with open(path, "wb") as fh:
        write_header(fh, _MAGIC, _VERSION, provenance)
        write_str(fh, kind)
        fh.write(bank_digest)
        fh.write(mask_digest)
        fh.write(struct.pack("<3I", *window))
        fh.write(struct.pack("<I", len(origins)))
        for org in origins:
            org = np.asarray(org, dtype=np.int32).reshape(-1, 2)
            fh.write(struct.pack("<I", len(org)))
            write_array(fh, org, np.int32)
        fh.write(struct.pack("<2I", vectors.shape[0], vectors.shape[1]))
        for image_id in ids:
            write_str(fh, image_id)
        write_array(fh, vectors, np.float64)


def read_feature_store(path) -> FeatureStore:
    with open(path, "rb") as fh:
        provenance = read_header(fh, _MAGIC, _VERSION)
        kind = read_str(fh)
        bank_digest = read_exact(fh, 32)
        mask_digest = read_exact(fh, 32)
        window = struct.unpack("<3I", read_exact(fh, 12))
        (n_orients,) = struct.unpack("<I", read_exact(fh, 4))
        origins = []
        for _ in range(n_orients):
            (k,) = struct.unpack("<I", read_exact(fh, 4))
            origins.append(read_array(fh, (k, 2), np.int32))
        n_images, n_features = struct.unpack("<2I", read_exact(fh, 8))
        ids = tuple(read_str(fh) for _ in range(n_images))
        vectors = read_array(fh, (n_images, n_features), np.float64)
    return FeatureStore(kind=kind, provenance=provenance,
                        bank_digest=bank_digest, mask_digest=mask_digest,
                        window=window, origins=tuple(origins), ids=ids,
                        vectors=vectors)
