"""Per-orientation expression masks from cross-expression variance.

Facial expressions move some regions (mouth, cheeks) much more than
others; magnitudes there are unstable across images of one person.  For
each orientation the smallest-scale magnitude rasters of a person's
expression images are reduced to a per-pixel population variance, the
variance rasters are averaged over persons with equal weight, and the
averaged raster is thresholded by its own mean over the face ellipse:
pixels with variance <= mean survive, high-variance pixels are
eliminated.  Masks apply to every scale of their orientation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._binio import read_array, read_exact, read_header, write_header
from .errors import InvalidInputError, ShapeError

_MAGIC = b"XMSK"
_VERSION = 1


def variance_image(rasters) -> np.ndarray:
    """Per-pixel population variance across one person's expressions.

    Two-pass evaluation (mean, then mean squared deviation); divides by
    the expression count, not count - 1.
    """
    stack = np.asarray(rasters, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[0] < 2:
        raise InvalidInputError("need >= 2 equal-sized rasters")
    mean = stack.mean(axis=0)
    return ((stack - mean) ** 2).mean(axis=0)


@dataclass(frozen=True)
class ExpressionMaskSet:
    """One binary mask per orientation, each a subset of the ellipse."""

    masks: np.ndarray       # (n_orients, H, W) bool
    provenance: bytes

    def __post_init__(self):
        self.masks.setflags(write=False)

    @property
    def n_orients(self) -> int:
        return self.masks.shape[0]

    def save(self, path) -> None:
        n_o, h, w = self.masks.shape
        with open(path, "wb") as fh:
            write_header(fh, _MAGIC, _VERSION, self.provenance)
            fh.write(struct.pack("<3I", n_o, h, w))
            for m in self.masks:
                fh.write(np.packbits(m, axis=None).tobytes())

    @classmethod
    def load(cls, path) -> "ExpressionMaskSet":
        with open(path, "rb") as fh:
            provenance = read_header(fh, _MAGIC, _VERSION)
            n_o, h, w = struct.unpack("<3I", read_exact(fh, 12))
            n_bytes = (h * w + 7) // 8
            masks = np.empty((n_o, h, w), dtype=bool)
            for i in range(n_o):
                bits = np.unpackbits(read_array(fh, (n_bytes,), np.uint8))
                masks[i] = bits[:h * w].reshape(h, w).astype(bool)
        return cls(masks=masks, provenance=provenance)


def build_expression_masks(persons, ellipse: np.ndarray,
                           provenance: bytes = b"\x00" * 32) -> ExpressionMaskSet:
    """Derive the mask set from per-person smallest-scale magnitudes.

    Parameters
    ----------
    persons : sequence
        One entry per person: array (n_expressions, n_orients, H, W) of
        smallest-scale magnitude rasters, already masked by ``ellipse``.
        Expression counts may differ between persons but must be >= 2.
    ellipse : (H, W) bool array
        The face-region mask; thresholds are means over it and every
        output mask is intersected with it.
    """
    if len(persons) == 0:
        raise InvalidInputError("no persons supplied")
    stacks = [np.asarray(p, dtype=np.float64) for p in persons]
    n_orients, h, w = stacks[0].shape[1:]
    for s in stacks:
        if s.ndim != 4 or s.shape[1:] != (n_orients, h, w):
            raise ShapeError("person stacks disagree in shape")
        if s.shape[0] < 2:
            raise InvalidInputError("every person needs >= 2 expressions")
    if ellipse.shape != (h, w):
        raise ShapeError("ellipse mask shape mismatch")
    if not ellipse.any():
        raise InvalidInputError("ellipse mask is empty")

    masks = np.empty((n_orients, h, w), dtype=bool)
    for o in range(n_orients):
        avg = np.zeros((h, w))
        for s in stacks:
            avg += variance_image(s[:, o])
        avg /= len(stacks)
        t = avg[ellipse].mean()
        masks[o] = (avg <= t) & ellipse
    return ExpressionMaskSet(masks=masks, provenance=provenance)
