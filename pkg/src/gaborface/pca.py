"""Whitened principal component analysis of feature vectors.

Training centres the r stacked vectors and eigendecomposes the
population covariance C = (1/r) sum d_j d_j^T.  When the vectors are
longer than the training count (the usual case here: tens of thousands
of features, hundreds of images) the covariance is rank-deficient and
the r x r Gram matrix D D^T / r is decomposed instead; its nonzero
spectrum is identical and data-space eigenvectors are recovered as
u = D^T v / sqrt(r lambda).  Projection whitens:

    y_k = u_k . (x - m) / sqrt(lambda_k)

so training projections have unit variance per component, which makes
the cosine distance downstream behave like a Mahalanobis angle.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from ._binio import read_array, read_exact, read_header, write_array, write_header
from .errors import InvalidInputError, InvalidParameterError, ShapeError

_MAGIC = b"PCAM"
_VERSION = 1

# relative eigenvalue floor: components at or below eps*lambda_1 are noise
EIGENVALUE_FLOOR = 1e-12


@dataclass(frozen=True)
class PcaModel:
    """Mean, eigenvalues (descending) and orthonormal basis rows."""

    mean: np.ndarray
    eigenvalues: np.ndarray
    basis: np.ndarray           # (p, N), rows are unit eigenvectors
    provenance: bytes = b"\x00" * 32

    def __post_init__(self):
        self.mean.setflags(write=False)
        self.eigenvalues.setflags(write=False)
        self.basis.setflags(write=False)

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    @property
    def n_components(self) -> int:
        return self.eigenvalues.shape[0]

    def digest(self) -> bytes:
        from ._binio import sha256_parts

        return sha256_parts(b"pca-model", self.mean, self.eigenvalues,
                            self.basis)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            write_header(fh, _MAGIC, _VERSION, self.provenance)
            fh.write(struct.pack("<2I", self.n_features, self.n_components))
            write_array(fh, self.mean, np.float64)
            write_array(fh, self.eigenvalues, np.float64)
            write_array(fh, self.basis, np.float64)

    @classmethod
    def load(cls, path) -> "PcaModel":
        with open(path, "rb") as fh:
            provenance = read_header(fh, _MAGIC, _VERSION)
            n, p = struct.unpack("<2I", read_exact(fh, 8))
            mean = read_array(fh, (n,), np.float64)
            eigenvalues = read_array(fh, (p,), np.float64)
            basis = read_array(fh, (p, n), np.float64)
        return cls(mean=mean, eigenvalues=eigenvalues, basis=basis,
                   provenance=provenance)


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    # sign convention: largest-|component| of each eigenvector positive
    idx = np.abs(basis).argmax(axis=1)
    flips = basis[np.arange(basis.shape[0]), idx] < 0
    basis[flips] *= -1.0
    return basis


def train(vectors, n_components: int, provenance: bytes = b"\x00" * 32) -> PcaModel:
    """Fit a whitening PCA model to r stacked feature vectors.

    ``n_components`` is an upper bound: it is capped at min(r - 1, N)
    and further reduced if trailing eigenvalues fall at or below
    EIGENVALUE_FLOOR times the largest (a warning is emitted whenever
    fewer components than requested survive).
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("training data must be (r, N)")
    r, n = x.shape
    if r < 2:
        raise InvalidInputError("need at least 2 training vectors")
    if n_components < 1:
        raise InvalidParameterError("n_components must be >= 1")

    mean = x.mean(axis=0)
    d = x - mean
    if n <= r:
        cov = d.T @ d / r
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        eigvals = eigvals[order]
        basis = eigvecs[:, order].T
    else:
        gram = d @ d.T / r
        eigvals, eigvecs = np.linalg.eigh(gram)
        order = np.argsort(eigvals)[::-1]
        eigvals = eigvals[order]
        eigvecs = eigvecs[:, order]
        keep = eigvals > 0
        basis = np.zeros((eigvals.shape[0], n))
        if keep.any():
            scale = np.sqrt(r * eigvals[keep])
            basis[keep] = (d.T @ eigvecs[:, keep] / scale).T

    if eigvals.size == 0 or eigvals[0] <= 0:
        raise InvalidInputError("training data has zero variance")
    kept = eigvals > EIGENVALUE_FLOOR * eigvals[0]
    attainable = min(int(kept.sum()), r - 1, n)
    p = min(n_components, attainable)
    if p < 1:
        raise InvalidInputError("no usable principal components")
    if p < n_components:
        warnings.warn(
            f"requested {n_components} components, only {p} attainable",
            stacklevel=2)

    basis = basis[:p].copy()
    norms = np.linalg.norm(basis, axis=1)
    basis /= norms[:, None]
    basis = _fix_signs(basis)
    return PcaModel(mean=mean, eigenvalues=eigvals[:p].copy(), basis=basis,
                    provenance=provenance)


def project(model: PcaModel, x) -> np.ndarray:
    """Whitened projection of one vector or a batch (rows)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != model.n_features:
        raise ShapeError(
            f"vector length {arr.shape[-1]} vs model {model.n_features}")
    return (arr - model.mean) @ model.basis.T / np.sqrt(model.eigenvalues)
