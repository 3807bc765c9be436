"""Log-Gabor filter banks sampled on the discrete frequency grid.

A log-Gabor filter is a band-pass filter defined directly in the
frequency domain as the product of a Gaussian on the log-frequency
axis and a Gaussian on the orientation axis:

    G(f, theta) = exp(-ln^2(f/f0) / (2 ln^2(k/f0)))
                * exp(-wrap(theta - theta_o)^2 / (2 sigma_theta^2))

There is no DC response: the radial term is undefined at f = 0 and the
zero-frequency sample is pinned to exactly 0.  The angular deviation is
wrapped into (-pi/2, pi/2] so a filter selects orientation, not
direction (pi-periodic).

A bank covers ``n_orients`` orientations times ``n_scales`` scales.
Scale n_s has wavelength lambda0 * s_lambda**(n_s - 1) pixels, centre
frequency f0 = 1/lambda, and a bandwidth fixed by ``beta`` octaves via
the ratio k/f0 = sigma_f(beta).  Orientation n_o is centred on
theta_o = pi*(n_o - 1)/n_orients with angular sigma (pi/n_orients)/s_theta.

Filters are real-valued rasters laid out in the standard unshifted
transform order (frequencies in cycles/pixel, negative frequencies in
the upper half), ready to multiply elementwise with an FFT of the same
size.  Rasters are symmetrized across the grid so G(fx, fy) equals
G(-fx, -fy) exactly, including the Nyquist row/column where naive
sampling breaks the identity on even-sized grids.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._binio import (
    ZERO_DIGEST,
    read_array,
    read_header,
    sha256_parts,
    write_array,
    write_header,
)
from .errors import InvalidParameterError

_MAGIC = b"LGFB"
_VERSION = 1


def sigma_f(beta: float) -> float:
    """Radial bandwidth ratio k/f0 for a bandwidth of ``beta`` octaves.

    Evaluates exp(-0.25 * beta * sqrt(2 ln 2)).  One octave gives
    0.74500..., the usual log-Gabor figure.

    Parameters
    ----------
    beta : float
        Bandwidth in octaves, > 0.

    Returns
    -------
    float
        Ratio in (0, 1), used as k/f0 in the radial Gaussian.
    """
    if beta <= 0:
        raise InvalidParameterError(f"beta must be > 0, got {beta}")
    return math.exp(-0.25 * beta * math.sqrt(2.0 * math.log(2.0)))


def wrap_orientation(dtheta):
    """Wrap angular deviations into (-pi/2, pi/2] (pi-periodic)."""
    return np.pi / 2 - (np.pi / 2 - np.asarray(dtheta)) % np.pi


def filter_value(f, theta, f0: float, k_over_f0: float, theta_o: float,
                 sigma_theta: float):
    """Evaluate the log-Gabor transfer function.

    Parameters
    ----------
    f : array_like
        Frequency magnitude in cycles/pixel, >= 0.
    theta : array_like
        Frequency angle in radians.
    f0 : float
        Centre frequency, > 0.
    k_over_f0 : float
        Radial bandwidth ratio in (0, 1).
    theta_o : float
        Centre orientation in radians.
    sigma_theta : float
        Angular standard deviation in radians, > 0.

    Returns
    -------
    ndarray or float
        Filter gain in [0, 1]; exactly 0 wherever f == 0.
    """
    if f0 <= 0:
        raise InvalidParameterError(f"f0 must be > 0, got {f0}")
    if not 0.0 < k_over_f0 < 1.0:
        raise InvalidParameterError(f"k/f0 must lie in (0,1), got {k_over_f0}")
    if sigma_theta <= 0:
        raise InvalidParameterError(f"sigma_theta must be > 0, got {sigma_theta}")

    f = np.asarray(f, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    scalar = f.ndim == 0 and theta.ndim == 0
    f, theta = np.atleast_1d(f), np.atleast_1d(theta)
    if np.any(f < 0):
        raise InvalidParameterError("f must be >= 0")

    log_sigma = math.log(k_over_f0)
    with np.errstate(divide="ignore"):
        radial = np.exp(-np.log(np.where(f > 0, f, 1.0) / f0) ** 2
                        / (2.0 * log_sigma * log_sigma))
    radial = np.where(f > 0, radial, 0.0)

    d = wrap_orientation(theta - theta_o)
    angular = np.exp(-(d * d) / (2.0 * sigma_theta * sigma_theta))

    out = radial * angular
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class FilterParams:
    """Parameter set fully determining a filter bank.

    lambda0 is the wavelength (pixels) of the smallest scale, s_lambda
    the multiplicative scale step, beta the radial bandwidth in
    octaves, s_theta the angular scaling factor (sigma_theta equals the
    orientation spacing divided by s_theta), and width/height the
    raster dimensions of the target transform.
    """

    lambda0: float = 5.0
    s_lambda: float = 1.6
    beta: float = 1.0
    n_scales: int = 4
    n_orients: int = 6
    s_theta: float = 1.5
    width: int = 128
    height: int = 128

    def __post_init__(self):
        if self.lambda0 <= 0:
            raise InvalidParameterError("lambda0 must be > 0")
        if self.s_lambda <= 1:
            raise InvalidParameterError("s_lambda must be > 1")
        if self.beta <= 0:
            raise InvalidParameterError("beta must be > 0")
        if self.n_scales < 1 or self.n_orients < 1:
            raise InvalidParameterError("scale/orientation counts must be >= 1")
        if self.s_theta <= 0:
            raise InvalidParameterError("s_theta must be > 0")
        if self.width < 2 or self.height < 2:
            raise InvalidParameterError("raster dimensions must be >= 2")

    def wavelength(self, n_s: int) -> float:
        """Wavelength in pixels of scale ``n_s`` (1-based)."""
        return self.lambda0 * self.s_lambda ** (n_s - 1)

    def orientation(self, n_o: int) -> float:
        """Centre orientation in radians of orientation ``n_o`` (1-based)."""
        return math.pi * (n_o - 1) / self.n_orients

    @property
    def sigma_theta(self) -> float:
        return (math.pi / self.n_orients) / self.s_theta

    def pack(self) -> bytes:
        return struct.pack(
            "<4d4I",
            self.lambda0, self.s_lambda, self.beta, self.s_theta,
            self.n_scales, self.n_orients, self.width, self.height,
        )

    @classmethod
    def unpack(cls, raw: bytes) -> "FilterParams":
        lam0, s_lam, beta, s_th, n_s, n_o, w, h = struct.unpack("<4d4I", raw)
        return cls(lambda0=lam0, s_lambda=s_lam, beta=beta, n_scales=n_s,
                   n_orients=n_o, s_theta=s_th, width=w, height=h)

    def digest(self) -> bytes:
        return sha256_parts(b"filter-params", self.pack())


@dataclass(frozen=True)
class FilterBank:
    """Immutable bank of frequency-domain rasters.

    ``filters`` has shape (n_orients, n_scales, height, width), float64,
    indexed 0-based; orientation n_o and scale n_s from the construction
    formulas are 1-based.
    """

    params: FilterParams
    filters: np.ndarray

    def __post_init__(self):
        self.filters.setflags(write=False)

    def get(self, n_o: int, n_s: int) -> np.ndarray:
        """Raster for 1-based orientation ``n_o`` and scale ``n_s``."""
        return self.filters[n_o - 1, n_s - 1]

    def digest(self) -> bytes:
        return sha256_parts(b"filter-bank", self.params.pack(), self.filters)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            write_header(fh, _MAGIC, _VERSION, ZERO_DIGEST)
            fh.write(self.params.pack())
            write_array(fh, self.filters, np.float64)

    @classmethod
    def load(cls, path) -> "FilterBank":
        with open(path, "rb") as fh:
            read_header(fh, _MAGIC, _VERSION)
            params = FilterParams.unpack(fh.read(struct.calcsize("<4d4I")))
            shape = (params.n_orients, params.n_scales,
                     params.height, params.width)
            filters = read_array(fh, shape, np.float64)
        return cls(params=params, filters=filters)


def _frequency_grid(width: int, height: int):
    fx = np.fft.fftfreq(width)
    fy = np.fft.fftfreq(height)
    gx, gy = np.meshgrid(fx, fy)
    return np.hypot(gx, gy), np.arctan2(gy, gx)


def build_filter_bank(params: FilterParams) -> FilterBank:
    """Sample every (orientation, scale) transfer function on the grid.

    Returns a FilterBank whose rasters are exactly symmetric under
    (fx, fy) -> (-fx, -fy).  Plain sampling already satisfies this away
    from the Nyquist edges; on even-sized grids the Nyquist row/column
    holds both +/- frequencies in one sample, so each raster is averaged
    with its reflected self (identity except at those edge bins).
    """
    f, theta = _frequency_grid(params.width, params.height)
    k_over_f0 = sigma_f(params.beta)
    s_theta = params.sigma_theta

    ry = (-np.arange(params.height)) % params.height
    rx = (-np.arange(params.width)) % params.width

    filters = np.empty(
        (params.n_orients, params.n_scales, params.height, params.width))
    for i_o in range(params.n_orients):
        theta_o = params.orientation(i_o + 1)
        for i_s in range(params.n_scales):
            f0 = 1.0 / params.wavelength(i_s + 1)
            g = filter_value(f, theta, f0, k_over_f0, theta_o, s_theta)
            filters[i_o, i_s] = 0.5 * (g + g[np.ix_(ry, rx)])
    return FilterBank(params=params, filters=filters)
