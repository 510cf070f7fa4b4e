"""Synthetic textures and planted voxel responses.

Every generator is a pure function of its seed.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .scattering import FeatureMatrix

KINDS = ("gaussian_field", "bars", "phase_scrambled")
PLANT_KINDS = ("layer1_only", "layer2_only", "mixed", "null")


class SynthError(ValueError):
    pass


@dataclass
class TextureSpec:
    kind: str = "gaussian_field"
    size: int = 128
    seed: int = 0
    alpha: float = 2.0  # power-law exponent (gaussian_field)
    bar_length: float = 12.0
    bar_width: float = 2.0
    density: float = 1.0  # bar area over image area, before overlap
    orientations: tuple[float, ...] = (0.0, 90.0)  # degrees
    jitter: float = 10.0  # orientation jitter std, degrees
    source: "TextureSpec | None" = None  # phase_scrambled

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SynthError(f"unknown texture kind {self.kind!r}; expected one of {KINDS}")
        if self.size < 8:
            raise SynthError(f"texture size must be >= 8, got {self.size}")
        if self.kind == "phase_scrambled" and self.source is None:
            raise SynthError("phase_scrambled texture needs a source spec")
        if isinstance(self.source, dict):
            self.source = TextureSpec(**self.source)
        self.orientations = tuple(float(o) for o in self.orientations)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.source is None:
            d.pop("source")
        return d


@dataclass
class PlantSpec:
    kinds: dict[str, int] = field(default_factory=lambda: {k: 50 for k in PLANT_KINDS})
    snr: float = 1.0
    seed: int = 7

    def __post_init__(self):
        bad = set(self.kinds) - set(PLANT_KINDS)
        if bad:
            raise SynthError(f"unknown plant kinds {sorted(bad)}; expected {PLANT_KINDS}")
        if not self.snr >= 0:
            raise SynthError(f"snr must be >= 0, got {self.snr}")

    def voxel_kinds(self) -> list[str]:
        return [k for k in PLANT_KINDS for _ in range(self.kinds.get(k, 0))]


@dataclass
class SessionLabels:
    image_ids: list[str]
    session: np.ndarray  # int, 1..S
    block: np.ndarray  # int

    def __post_init__(self):
        self.session = np.asarray(self.session, dtype=int)
        self.block = np.asarray(self.block, dtype=int)
        if not len(self.image_ids) == len(self.session) == len(self.block):
            raise SynthError("session labels: image_ids, session and block differ in length")
        if len(set(self.image_ids)) != len(self.image_ids):
            raise SynthError("session labels: duplicate image ids")

    @property
    def n_sessions(self) -> int:
        return len(np.unique(self.session))

    def aligned(self, image_ids: Sequence[str]) -> "SessionLabels":
        """Reorder to match ``image_ids``."""
        pos = {iid: i for i, iid in enumerate(self.image_ids)}
        missing = [i for i in image_ids if i not in pos]
        if missing:
            raise SynthError(f"no session label for image ids {missing[:5]}")
        idx = np.array([pos[i] for i in image_ids], dtype=int)
        return SessionLabels(list(image_ids), self.session[idx], self.block[idx])


@dataclass
class VoxelResponses:
    values: np.ndarray  # (n_images, n_voxels)
    image_ids: list[str]
    voxel_ids: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.image_ids), len(self.voxel_ids)):
            raise SynthError(f"responses shape {self.values.shape} does not match "
                             f"{len(self.image_ids)} images x {len(self.voxel_ids)} voxels")

    def aligned(self, image_ids: Sequence[str]) -> "VoxelResponses":
        pos = {iid: i for i, iid in enumerate(self.image_ids)}
        missing = [i for i in image_ids if i not in pos]
        if missing:
            raise SynthError(f"no responses for image ids {missing[:5]}")
        idx = np.array([pos[i] for i in image_ids], dtype=int)
        return VoxelResponses(self.values[idx], list(image_ids), list(self.voxel_ids))


@dataclass
class GroundTruth:
    kinds: list[str]
    support: list[list[int]]  # feature columns per voxel
    weights: list[list[float]]
    noise_scale: list[float]
    noise_seed: list[int]
    snr: float
    feature_labels: list[str]

    def to_dict(self) -> dict:
        return asdict(self)


def _normalize(u: np.ndarray) -> np.ndarray:
    u = u - u.mean()
    sd = u.std()
    return u / sd if sd > 0 else u


def _gaussian_field(spec: TextureSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.size
    noise = rng.standard_normal((n, n))
    wy = np.fft.fftfreq(n)[:, None]
    wx = np.fft.fftfreq(n)[None, :]
    r = np.hypot(wx, wy)
    r[0, 0] = 1.0
    shaped = np.fft.ifft2(np.fft.fft2(noise) * r ** (-spec.alpha / 2)).real
    return _normalize(shaped)


def _bars(spec: TextureSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.size
    n_bars = max(1, int(round(spec.density * n * n / (spec.bar_length * spec.bar_width))))
    img = np.zeros((n, n))
    half = spec.bar_length / 2 + spec.bar_width
    r = int(math.ceil(half))
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1].astype(float)
    for _ in range(n_bars):
        cy, cx = rng.uniform(0, n, size=2)
        base = spec.orientations[rng.integers(len(spec.orientations))]
        theta = math.radians(base + spec.jitter * rng.standard_normal())
        iy, ix = int(cy), int(cx)
        # offsets from the true center to each pixel of the local patch
        ox, oy = dx - (cx - ix), dy - (cy - iy)
        along = ox * math.cos(theta) + oy * math.sin(theta)
        across = -ox * math.sin(theta) + oy * math.cos(theta)
        # soft edges keep the rendering anti-aliased
        a = np.clip(spec.bar_length / 2 + 0.5 - np.abs(along), 0, 1)
        b = np.clip(spec.bar_width / 2 + 0.5 - np.abs(across), 0, 1)
        rows = (iy + np.arange(-r, r + 1)) % n
        cols = (ix + np.arange(-r, r + 1)) % n
        patch = img[np.ix_(rows, cols)]
        img[np.ix_(rows, cols)] = np.maximum(patch, a * b)
    return _normalize(img)


def gen_texture(spec: TextureSpec) -> np.ndarray:
    """Zero-mean, unit-variance texture raster of shape (size, size)."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "gaussian_field":
        return _gaussian_field(spec, rng)
    if spec.kind == "bars":
        return _bars(spec, rng)
    return phase_scramble(gen_texture(spec.source), spec.seed)


def phase_scramble(u: np.ndarray, seed: int) -> np.ndarray:
    """Replace Fourier phases by random Hermitian-symmetric ones, keeping amplitudes and the mean."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise SynthError("phase_scramble: non-finite input")
    rng = np.random.default_rng(seed)
    spec = np.fft.fft2(u)
    # phases of a real white-noise field are uniform and Hermitian-symmetric
    phase = np.angle(np.fft.fft2(rng.standard_normal(u.shape)))
    out = np.abs(spec) * np.exp(1j * phase)
    out[0, 0] = spec[0, 0]
    return np.fft.ifft2(out).real


def radial_power(u: np.ndarray, n_bands: int = 16) -> np.ndarray:
    """Power spectrum averaged over radial frequency bands."""
    p = np.abs(np.fft.fft2(u)) ** 2
    h, w = u.shape
    r = np.hypot(np.fft.fftfreq(h)[:, None], np.fft.fftfreq(w)[None, :])
    edges = np.linspace(0, r.max() + 1e-12, n_bands + 1)
    band = np.digitize(r, edges) - 1
    return np.array([p[band == b].mean() if np.any(band == b) else 0.0 for b in range(n_bands)])


def gen_session_labels(n_images: int, n_sessions: int = 6, blocks_per_session: int = 36,
                       image_ids: Sequence[str] | None = None) -> SessionLabels:
    """Consecutive images fill sessions in order; blocks cycle 1..blocks_per_session."""
    if n_sessions < 1 or blocks_per_session < 1:
        raise SynthError("n_sessions and blocks_per_session must be >= 1")
    if n_images % n_sessions:
        raise SynthError(f"{n_images} images are not divisible into {n_sessions} sessions")
    per = n_images // n_sessions
    if image_ids is None:
        image_ids = [f"img{i:04d}" for i in range(n_images)]
    session = np.repeat(np.arange(1, n_sessions + 1), per)
    within = np.tile(np.arange(per), n_sessions)
    block = within * blocks_per_session // per + 1
    return SessionLabels(list(image_ids), session, block)


def _zscore(x: np.ndarray) -> np.ndarray:
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return (x - x.mean(axis=0)) / sd


def support_columns(features: FeatureMatrix, kind: str) -> np.ndarray:
    if kind == "layer1_only":
        return features.columns([1])
    if kind == "layer2_only":
        return features.columns([2])
    if kind == "mixed":
        return features.columns([1, 2])
    return np.zeros(0, dtype=int)


def support_design(features: FeatureMatrix, kind: str) -> np.ndarray:
    """Design block a plant kind draws its signal from.

    Layer-1 columns are z-scored. Layer-2 columns are z-scored after removing
    their least-squares fit on the layer-0/1 columns, so a layer-2 plant
    carries only information the first layer cannot express linearly.
    """
    x = features.values
    blocks = []
    if kind in ("layer1_only", "mixed"):
        blocks.append(_zscore(x[:, features.columns([1])]))
    if kind in ("layer2_only", "mixed"):
        low = _zscore(x[:, features.columns([0, 1])])
        high = _zscore(x[:, features.columns([2])])
        coef, *_ = np.linalg.lstsq(low, high, rcond=None)
        blocks.append(high - low @ coef)
    if not blocks:
        return np.zeros((x.shape[0], 0))
    return np.hstack(blocks)


def gen_voxels(features: FeatureMatrix, plant: PlantSpec,
               sessions: SessionLabels | None = None) -> tuple[VoxelResponses, GroundTruth]:
    """Planted responses: z-scored support features times standard-normal weights, plus noise.

    Noise variance is var(signal) / snr; null voxels and snr=0 get unit-variance noise,
    snr=inf disables noise.
    """
    x = features.values
    if not np.all(np.isfinite(x)):
        raise SynthError("gen_voxels: non-finite features")
    if sessions is not None:
        sessions.aligned(features.image_ids)
    kinds = plant.voxel_kinds()
    seeds = np.random.SeedSequence(plant.seed).spawn(len(kinds))
    n = x.shape[0]
    y = np.zeros((n, len(kinds)))
    gt = GroundTruth(kinds=kinds, support=[], weights=[], noise_scale=[], noise_seed=[],
                     snr=plant.snr, feature_labels=features.labels)
    for v, (kind, ss) in enumerate(zip(kinds, seeds)):
        wseed, nseed = (int(s) for s in ss.generate_state(2))
        cols = support_columns(features, kind)
        w = np.random.default_rng(wseed).standard_normal(len(cols))
        signal = support_design(features, kind) @ w
        var = signal.var()
        if kind == "null" or plant.snr == 0:
            scale = 1.0
        elif math.isinf(plant.snr):
            scale = 0.0
        else:
            if var == 0:
                raise SynthError(f"voxel {v} ({kind}): planted signal has zero variance")
            scale = math.sqrt(var / plant.snr)
        if kind == "null" or plant.snr == 0:
            signal = np.zeros(n)
        noise = np.random.default_rng(nseed).standard_normal(n)
        y[:, v] = signal + scale * noise
        gt.support.append(cols.tolist())
        gt.weights.append(w.tolist())
        gt.noise_scale.append(scale)
        gt.noise_seed.append(nseed)
    voxel_ids = [f"v{v:04d}" for v in range(len(kinds))]
    return VoxelResponses(y, list(features.image_ids), voxel_ids), gt


def replay_voxels(features: FeatureMatrix, gt: GroundTruth) -> np.ndarray:
    """Recompute planted responses from a ground-truth record."""
    n = features.values.shape[0]
    y = np.zeros((n, len(gt.kinds)))
    for v, kind in enumerate(gt.kinds):
        if kind != "null" and gt.snr != 0:
            y[:, v] = support_design(features, kind) @ np.array(gt.weights[v])
        y[:, v] += gt.noise_scale[v] * np.random.default_rng(gt.noise_seed[v]).standard_normal(n)
    return y


# Six texture classes for the default study: two power-law fields, two bar
# families and the phase-scrambled twins of the bar families. The twins share
# the power spectrum of their source, so they differ only in higher-order
# statistics.
def default_class_specs(size: int = 128) -> list[dict]:
    return [
        {"kind": "gaussian_field", "alpha": 1.0},
        {"kind": "gaussian_field", "alpha": 2.5},
        {"kind": "bars", "orientations": [0.0, 90.0]},
        {"kind": "bars", "orientations": [45.0, 135.0], "bar_length": 20.0},
        {"kind": "phase_scrambled", "source": {"kind": "bars", "orientations": [0.0, 90.0]}},
        {"kind": "phase_scrambled",
         "source": {"kind": "bars", "orientations": [45.0, 135.0], "bar_length": 20.0}},
    ]


def texture_set(class_specs: Sequence[dict], n_images: int, size: int, seed: int
                ) -> tuple[list[np.ndarray], list[str], list[int]]:
    """Images cycle through the classes so every session sees every class.

    Returns images, image ids and 1-based class labels.
    """
    C = len(class_specs)
    if C == 0:
        raise SynthError("texture_set needs at least one class")
    seeds = np.random.SeedSequence(seed).generate_state(n_images)
    images, ids, labels = [], [], []
    for i in range(n_images):
        c = i % C
        d = dict(class_specs[c])
        s = int(seeds[i])
        if "source" in d:
            d["source"] = dict(d["source"], size=size, seed=s)
        spec = TextureSpec(size=size, seed=s, **d)
        images.append(gen_texture(spec))
        ids.append(f"img{i:04d}")
        labels.append(c + 1)
    return images, ids, labels
