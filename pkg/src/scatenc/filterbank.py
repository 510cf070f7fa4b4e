"""Periodized frequency-domain Morlet filter banks.

Filters live on the FFT grid of the image they will be applied to. Row axis
is the vertical frequency ``wy``, column axis the horizontal frequency
``wx``, both in radians per pixel as returned by ``2*pi*fftfreq``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

TYPICAL_J = (4, 5, 6)
TYPICAL_L = (2, 4, 6, 8)
MIN_SIZE = 8


class FilterBankError(ValueError):
    pass


@dataclass(frozen=True)
class FilterParams:
    J: int
    L: int
    width: int
    height: int
    sigma0: float = 0.8
    xi0: float = 3 * math.pi / 4
    slant: float | None = None  # None -> 4 / L

    def __post_init__(self):
        if self.J < 1 or self.L < 1:
            raise FilterBankError(f"J and L must be >= 1, got J={self.J}, L={self.L}")
        if self.width < 1 or self.height < 1:
            raise FilterBankError(f"invalid raster size {self.width}x{self.height}")
        if not 0 < self.xi0 < math.pi:
            raise FilterBankError(f"xi0 must lie in (0, pi), got {self.xi0}")
        if self.sigma0 <= 0:
            raise FilterBankError(f"sigma0 must be positive, got {self.sigma0}")
        if self.slant is not None and self.slant <= 0:
            raise FilterBankError(f"slant must be positive, got {self.slant}")
        if self.J not in TYPICAL_J or self.L not in TYPICAL_L:
            logger.info("J=%d, L=%d lies outside the evaluated grid J in %s, L in %s",
                        self.J, self.L, TYPICAL_J, TYPICAL_L)

    @property
    def eff_slant(self) -> float:
        return 4.0 / self.L if self.slant is None else self.slant

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def orientations(self) -> list[float]:
        """Orientation grid in degrees: 0, 180/L, ..., 180 (L-1)/L."""
        return [k * 180.0 / self.L for k in range(self.L)]


@dataclass
class Filter:
    gamma: float  # degrees
    j: int
    spectrum: np.ndarray  # complex, shape (height, width), FFT ordering

    @property
    def peak(self) -> float:
        return float(np.abs(self.spectrum).max())


@dataclass
class FilterBank:
    params: FilterParams
    filters: list[Filter] = field(default_factory=list)

    def __len__(self):
        return len(self.filters)

    def __iter__(self):
        return iter(self.filters)

    def get(self, j: int, gamma_index: int) -> Filter:
        return self.filters[j * self.params.L + gamma_index]

    def stack(self) -> np.ndarray:
        """All spectra as an array of shape (n_filters, height, width)."""
        if not self.filters:
            return np.zeros((0,) + self.params.shape, dtype=complex)
        return np.stack([f.spectrum for f in self.filters])


@dataclass
class LPReport:
    a_min: float
    a_max: float
    annulus: tuple[float, float]
    n_points: int

    @property
    def ratio(self) -> float:
        return self.a_min / self.a_max if self.a_max > 0 else 0.0

    def to_dict(self) -> dict:
        return {"a_min": self.a_min, "a_max": self.a_max, "ratio": self.ratio,
                "annulus": list(self.annulus), "n_points": self.n_points}


def frequency_grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    wy = 2 * np.pi * np.fft.fftfreq(height)
    wx = 2 * np.pi * np.fft.fftfreq(width)
    return np.meshgrid(wy, wx, indexing="ij")


def _precision(params: FilterParams, gamma: float) -> np.ndarray:
    # Spatial covariance of the envelope: std sigma0 along the carrier,
    # sigma0 / slant across it, rotated by gamma.
    theta = math.radians(gamma)
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    sig = params.sigma0
    cov = rot @ np.diag([sig ** 2, (sig / params.eff_slant) ** 2]) @ rot.T
    return cov


def _gauss(cov: np.ndarray, wx: np.ndarray, wy: np.ndarray) -> np.ndarray:
    q = cov[0, 0] * wx * wx + 2 * cov[0, 1] * wx * wy + cov[1, 1] * wy * wy
    return np.exp(-0.5 * q)


def _periodized_pair(params: FilterParams, gamma: float, j: int,
                     wy: np.ndarray, wx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Periodized dilated carrier Gaussian and DC Gaussian at scale j.

    Returns ``(sum_k g(2^j (w + 2 pi k) - xi), sum_k g(2^j (w + 2 pi k)))``.
    """
    cov = _precision(params, gamma)
    theta = math.radians(gamma)
    xi_x, xi_y = params.xi0 * math.cos(theta), params.xi0 * math.sin(theta)
    scale = 2.0 ** j
    # widest frequency-domain std of the envelope
    fstd = 1.0 / (params.sigma0 * min(1.0, 1.0 / params.eff_slant))
    reach = (params.xi0 + 12 * fstd) / (2 * np.pi * scale)
    K = int(math.ceil(reach)) + 1
    carrier = np.zeros(np.broadcast(wy, wx).shape)
    dc = np.zeros_like(carrier)
    for ky in range(-K, K + 1):
        for kx in range(-K, K + 1):
            ux = scale * (wx + 2 * np.pi * kx)
            uy = scale * (wy + 2 * np.pi * ky)
            carrier += _gauss(cov, ux - xi_x, uy - xi_y)
            dc += _gauss(cov, ux, uy)
    return carrier, dc


def _raw_spectrum(params: FilterParams, gamma: float, j: int,
                  wy: np.ndarray, wx: np.ndarray) -> np.ndarray:
    carrier, dc = _periodized_pair(params, gamma, j, wy, wx)
    zero = np.zeros((1, 1))
    c0, d0 = _periodized_pair(params, gamma, j, zero, zero)
    beta = c0[0, 0] / d0[0, 0]
    return carrier - beta * dc


def _check_size(params: FilterParams):
    if params.width < MIN_SIZE or params.height < MIN_SIZE:
        raise FilterBankError(
            f"raster too small for mother wavelet: {params.width}x{params.height} "
            f"(need at least {MIN_SIZE}x{MIN_SIZE})")


def _normalizer(params: FilterParams, gamma: float) -> float:
    wy, wx = frequency_grid(*params.shape)
    return 1.0 / np.abs(_raw_spectrum(params, gamma, 0, wy, wx)).max()


def make_mother_morlet(params: FilterParams, gamma: float) -> Filter:
    """Finest-scale (j=0) zero-sum Morlet filter oriented at ``gamma`` degrees.

    The spectrum is normalized to a peak modulus of one on the grid.
    """
    _check_size(params)
    wy, wx = frequency_grid(*params.shape)
    raw = _raw_spectrum(params, gamma, 0, wy, wx)
    return Filter(gamma=float(gamma), j=0, spectrum=raw / np.abs(raw).max())


def build_filter_bank(params: FilterParams) -> FilterBank:
    """J*L Morlet filters ordered j-major, orientation-minor.

    Scale j is the mother spectrum dilated in frequency by 2**j; every scale
    of one orientation shares the mother's normalization constant.
    """
    _check_size(params)
    coarsest = 2 ** (params.J - 1) * params.sigma0
    if coarsest > min(params.width, params.height) / 2:
        raise FilterBankError(
            f"J too large for image size: coarsest envelope {coarsest:g} px exceeds "
            f"half of {min(params.width, params.height)} px")
    wy, wx = frequency_grid(*params.shape)
    gammas = params.orientations()
    norms = [_normalizer(params, g) for g in gammas]
    filters = []
    for j in range(params.J):
        for g, c in zip(gammas, norms):
            filters.append(Filter(gamma=g, j=j,
                                  spectrum=c * _raw_spectrum(params, g, j, wy, wx)))
    return FilterBank(params=params, filters=filters)


def littlewood_paley(bank: FilterBank, annulus: tuple[float, float]) -> LPReport:
    """Min/max of sum_f |f(w)|^2 + |f(-w)|^2 over grid points in the annulus."""
    r_lo, r_hi = annulus
    if not 0 < r_lo < r_hi <= np.pi:
        raise FilterBankError(f"annulus must satisfy 0 < r_lo < r_hi <= pi, got {annulus}")
    h, w = bank.params.shape
    wy, wx = frequency_grid(h, w)
    radius = np.hypot(wx, wy)
    mask = (radius >= r_lo) & (radius <= r_hi)
    if not mask.any():
        raise FilterBankError(f"annulus {annulus} contains no grid points for {w}x{h}")
    total = np.zeros((h, w))
    for f in bank.filters:
        p = np.abs(f.spectrum) ** 2
        total += p + reflect(p)
    vals = total[mask]
    return LPReport(a_min=float(vals.min()), a_max=float(vals.max()),
                    annulus=(float(r_lo), float(r_hi)), n_points=int(mask.sum()))


def reflect(a: np.ndarray) -> np.ndarray:
    """``a(-w)`` on the FFT grid."""
    return np.roll(a[::-1, ::-1], 1, axis=(0, 1))
