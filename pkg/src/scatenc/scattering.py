"""Translation-invariant 2D scattering (layers 0, 1, 2).

Convolutions are circular and computed by spectral multiplication; every
modulus field is kept at full resolution and reduced by its global mean.
"""
from __future__ import annotations

import functools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft as sfft

from .filterbank import FilterBank, FilterParams, build_filter_bank


class ScatteringError(ValueError):
    pass


@dataclass(frozen=True)
class ScatteringConfig:
    M: int = 2
    J: int = 5
    L: int = 4
    sigma0: float | None = None
    xi0: float | None = None
    slant: float | None = None

    def __post_init__(self):
        if self.M not in (1, 2):
            raise ScatteringError(f"M must be 1 or 2, got {self.M}")
        if self.J < 1 or self.L < 1:
            raise ScatteringError(f"J and L must be >= 1, got J={self.J}, L={self.L}")

    def filter_params(self, height: int, width: int) -> FilterParams:
        kw = {k: getattr(self, k) for k in ("sigma0", "xi0", "slant")
              if getattr(self, k) is not None}
        return FilterParams(J=self.J, L=self.L, width=width, height=height, **kw)

    def to_dict(self) -> dict:
        return {"M": self.M, "J": self.J, "L": self.L, "sigma0": self.sigma0,
                "xi0": self.xi0, "slant": self.slant}


@dataclass(frozen=True)
class Path:
    layer: int
    j1: int | None = None
    g1: int | None = None
    j2: int | None = None
    g2: int | None = None

    def __post_init__(self):
        if self.layer == 2 and not self.j2 > self.j1:
            raise ScatteringError(f"layer-2 path needs j2 > j1, got j1={self.j1}, j2={self.j2}")

    @property
    def label(self) -> str:
        if self.layer == 0:
            return "m0"
        if self.layer == 1:
            return f"m1_j{self.j1}g{self.g1}"
        return f"m2_j{self.j1}g{self.g1}_j{self.j2}g{self.g2}"

    @classmethod
    def from_label(cls, label: str) -> "Path":
        parts = label.split("_")
        try:
            layer = int(parts[0][1:])
            idx = []
            for p in parts[1:]:
                j, g = p[1:].split("g")
                idx += [int(j), int(g)]
        except (ValueError, IndexError):
            raise ScatteringError(f"malformed path label {label!r}") from None
        if layer != len(idx) // 2:
            raise ScatteringError(f"malformed path label {label!r}")
        return cls(layer, *idx)


@dataclass
class ScatteringFeatures:
    config: ScatteringConfig
    paths: list[Path]
    values: np.ndarray

    def layer(self, m: int) -> np.ndarray:
        return np.array([v for p, v in zip(self.paths, self.values) if p.layer == m])


@dataclass
class FeatureMatrix:
    values: np.ndarray  # (n_images, n_features)
    paths: list[Path]
    image_ids: list[str]
    config: ScatteringConfig | None = None

    @property
    def labels(self) -> list[str]:
        return [p.label for p in self.paths]

    def columns(self, layers: Sequence[int]) -> np.ndarray:
        return np.array([i for i, p in enumerate(self.paths) if p.layer in layers], dtype=int)

    def select_layers(self, max_layer: int) -> "FeatureMatrix":
        """Restrict to paths of layer <= max_layer (e.g. the M=1 model from M=2 features)."""
        cols = self.columns(range(max_layer + 1))
        return FeatureMatrix(self.values[:, cols], [self.paths[i] for i in cols],
                             list(self.image_ids), self.config)


@dataclass
class EnergyProfile:
    e_pruned_kept: float  # layer-2 energy on j2 > j1
    e_leq: float  # layer-2 energy on j2 <= j1 (diagnostic only)

    @property
    def ratio(self) -> float:
        total = self.e_pruned_kept + self.e_leq
        return self.e_leq / total if total > 0 else 0.0


def feature_paths(config: ScatteringConfig) -> list[Path]:
    J, L = config.J, config.L
    paths = [Path(0)]
    paths += [Path(1, j1, g1) for j1 in range(J) for g1 in range(L)]
    if config.M == 2:
        paths += [Path(2, j1, g1, j2, g2)
                  for j1 in range(J) for g1 in range(L)
                  for j2 in range(j1 + 1, J) for g2 in range(L)]
    return paths


@functools.lru_cache(maxsize=16)
def _bank(params: FilterParams) -> tuple[FilterBank, np.ndarray]:
    bank = build_filter_bank(params)
    return bank, bank.stack()


def bank_for(config: ScatteringConfig, shape: tuple[int, int]) -> FilterBank:
    return _bank(config.filter_params(*shape))[0]


def wavelet_modulus(u: np.ndarray, f) -> np.ndarray:
    """|psi * u| by circular convolution. ``f`` is a Filter or a raw spectrum."""
    spec = getattr(f, "spectrum", f)
    u = np.asarray(u)
    if u.shape != spec.shape:
        raise ScatteringError(f"shape mismatch: image {u.shape} vs filter {spec.shape}")
    return np.abs(sfft.ifft2(sfft.fft2(u) * spec))


def _modulus_stack(u_hat: np.ndarray, spectra: np.ndarray) -> np.ndarray:
    return np.abs(sfft.ifft2(u_hat[None] * spectra, axes=(-2, -1)))


def _validate(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise ScatteringError(f"expected a 2D image, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ScatteringError("non-finite image")
    return u


def scatter(u: np.ndarray, config: ScatteringConfig) -> ScatteringFeatures:
    u = _validate(u)
    J, L = config.J, config.L
    _, spectra = _bank(config.filter_params(*u.shape))
    u1 = _modulus_stack(sfft.fft2(u), spectra)  # (J*L, H, W)
    values = [u.mean()]
    values += list(u1.mean(axis=(-2, -1)))
    if config.M == 2:
        u1_hat = sfft.fft2(u1, axes=(-2, -1))
        for j1 in range(J):
            finer = spectra[(j1 + 1) * L:]
            if len(finer) == 0:
                continue
            for g1 in range(L):
                u2 = _modulus_stack(u1_hat[j1 * L + g1], finer)
                values += list(u2.mean(axis=(-2, -1)))
    return ScatteringFeatures(config, feature_paths(config), np.array(values))


def energy_profile(u: np.ndarray, config: ScatteringConfig) -> EnergyProfile:
    """Squared layer-2 coefficients split into j2 > j1 and the pruned j2 <= j1 branch."""
    if config.M != 2:
        raise ScatteringError("energy_profile needs an M=2 config")
    u = _validate(u)
    J, L = config.J, config.L
    _, spectra = _bank(config.filter_params(*u.shape))
    u1_hat = sfft.fft2(_modulus_stack(sfft.fft2(u), spectra), axes=(-2, -1))
    coeffs = np.empty((J, L, J, L))
    for k in range(J * L):
        u2 = _modulus_stack(u1_hat[k], spectra)
        coeffs[k // L, k % L] = u2.mean(axis=(-2, -1)).reshape(J, L)
    j1, j2 = np.meshgrid(np.arange(J), np.arange(J), indexing="ij")
    kept = (j2 > j1)[:, None, :, None]
    sq = coeffs ** 2
    e_kept = float(np.sum(sq, where=np.broadcast_to(kept, sq.shape)))
    e_leq = float(np.sum(sq, where=~np.broadcast_to(kept, sq.shape)))
    return EnergyProfile(e_kept, e_leq)


def batch_scatter(images: Sequence[np.ndarray], config: ScatteringConfig,
                  image_ids: Sequence[str] | None = None, threads: int = 1) -> FeatureMatrix:
    """Scatter every image; rows are independent so thread count never changes the result."""
    paths = feature_paths(config)
    if image_ids is None:
        image_ids = [str(i) for i in range(len(images))]
    if len(image_ids) != len(images):
        raise ScatteringError("image_ids and images differ in length")
    if not len(images):
        return FeatureMatrix(np.zeros((0, len(paths))), paths, [], config)
    shapes = {np.shape(im) for im in images}
    if len(shapes) > 1:
        raise ScatteringError(f"mixed image shapes: {sorted(shapes)}")
    # build the bank before fanning out so workers share it
    _validate(images[0])
    _bank(config.filter_params(*np.shape(images[0])))

    def row(im):
        return scatter(im, config).values

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(row, images))
    else:
        rows = [row(im) for im in images]
    return FeatureMatrix(np.vstack(rows), paths, list(image_ids), config)
