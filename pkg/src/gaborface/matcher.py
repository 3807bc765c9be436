"""Gallery enrollment, cosine ranking and threshold verification.

Templates are whitened PCA projections.  The dissimilarity is the
negated cosine, d = -cos(y1, y2), in [-1, 1] with lower meaning more
similar; it is invariant to positive rescaling of either vector.
Identification sorts a probe against every enrolled entry (stable sort,
so equal distances keep enrollment order); verification accepts when
the distance is at or below the operating threshold.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from ._binio import read_array, read_exact, read_header, read_str, \
    write_array, write_header, write_str
from .errors import FormatError, InvalidInputError, ShapeError

_MAGIC = b"GALY"
_VERSION = 1


def distance(y1, y2) -> float:
    """Negated cosine similarity of two templates."""
    a = np.asarray(y1, dtype=np.float64).ravel()
    b = np.asarray(y2, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"template lengths differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise InvalidInputError("zero-norm template")
    return float(-np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class Gallery:
    """Immutable enrolled template set.

    ``entries`` is a sequence of (subject_id, template) pairs; the same
    subject may appear more than once (distinct entries).  ``model_hash``
    ties the gallery to the PCA model that produced the templates.
    """

    entries: tuple
    model_hash: bytes = b"\x00" * 32

    def __post_init__(self):
        if len(self.entries) == 0:
            raise InvalidInputError("gallery must hold at least one entry")
        entries = tuple((str(sid), np.asarray(t, dtype=np.float64).ravel())
                        for sid, t in self.entries)
        p = entries[0][1].shape[0]
        for sid, t in entries:
            if t.shape[0] != p:
                raise ShapeError("gallery templates disagree in length")
            if not np.linalg.norm(t) > 0:
                raise InvalidInputError(f"zero-norm template for {sid!r}")
        object.__setattr__(self, "entries", entries)
        mat = np.stack([t for _, t in entries])
        object.__setattr__(self, "_matrix", mat)
        object.__setattr__(self, "_norms", np.linalg.norm(mat, axis=1))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def subject_ids(self):
        return [sid for sid, _ in self.entries]

    def save(self, path) -> None:
        p = self.entries[0][1].shape[0]
        with open(path, "wb") as fh:
            write_header(fh, _MAGIC, _VERSION, self.model_hash)
            fh.write(struct.pack("<2I", len(self.entries), p))
            for sid, t in self.entries:
                write_str(fh, sid)
                write_array(fh, t, np.float64)

    @classmethod
    def load(cls, path) -> "Gallery":
        with open(path, "rb") as fh:
            model_hash = read_header(fh, _MAGIC, _VERSION)
            n, p = struct.unpack("<2I", read_exact(fh, 8))
            entries = []
            for _ in range(n):
                sid = read_str(fh)
                entries.append((sid, read_array(fh, (p,), np.float64)))
        return cls(entries=tuple(entries), model_hash=model_hash)


def identify(gallery: Gallery, probe) -> list:
    """Rank every gallery entry against the probe.

    Returns [(subject_id, distance), ...] sorted by ascending distance;
    equal distances stay in enrollment order.
    """
    y = np.asarray(probe, dtype=np.float64).ravel()
    ny = np.linalg.norm(y)
    if ny == 0.0:
        raise InvalidInputError("zero-norm probe")
    mat, norms = gallery._matrix, gallery._norms
    if y.shape[0] != mat.shape[1]:
        raise ShapeError(f"probe length {y.shape[0]} vs gallery {mat.shape[1]}")
    d = -(mat @ y) / (norms * ny)
    order = np.argsort(d, kind="stable")
    return [(gallery.entries[i][0], float(d[i])) for i in order]


def verify(template, probe, threshold: float):
    """Threshold decision: accept iff distance <= threshold."""
    d = distance(template, probe)
    return d <= threshold, d


# ---------------------------------------------------------------------------
# ranked-results CSV: probe_id,rank,gallery_id,distance

def write_results_csv(path, rows, provenance_hex: str) -> None:
    """Write ranked identification rows with an embedded provenance line."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# provenance={provenance_hex}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["probe_id", "rank", "gallery_id", "distance"])
        for probe_id, rank, gallery_id, dist in rows:
            writer.writerow([probe_id, rank, gallery_id, repr(float(dist))])


def read_results_csv(path):
    """Return (rows, provenance_hex); rows as written."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# provenance="):
            raise FormatError(f"{path}: missing provenance line")
        provenance_hex = first.split("=", 1)[1]
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["probe_id", "rank", "gallery_id", "distance"]:
            raise FormatError(f"{path}: unexpected header {header}")
        rows = [(pid, int(rank), gid, float(dist))
                for pid, rank, gid, dist in reader]
    return rows, provenance_hex
