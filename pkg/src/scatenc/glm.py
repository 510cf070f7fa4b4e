"""Single-design GLM turning BOLD time courses into one activity value per image."""
from __future__ import annotations

import functools
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg
from scipy.optimize import minimize_scalar
from scipy.stats import gamma

from .encoding import EncodingError
from .synth import VoxelResponses


class GLMError(EncodingError):
    pass


@functools.lru_cache(maxsize=8)
def _peak(peak: float, undershoot: float, ratio: float) -> float:
    res = minimize_scalar(lambda t: -_raw_hrf(np.array([t]), peak, undershoot, ratio)[0],
                          bounds=(0.1, 3 * peak), method="bounded",
                          options={"xatol": 1e-10})
    return -res.fun


def _raw_hrf(t, peak, undershoot, ratio):
    t = np.asarray(t, dtype=float)
    return gamma.pdf(t, peak) - ratio * gamma.pdf(t, undershoot)


def canonical_hrf(t, peak: float = 6.0, undershoot: float = 16.0, ratio: float = 1 / 6) -> np.ndarray:
    """Double-gamma HRF scaled to a unit maximum; zero for t < 0."""
    return _raw_hrf(t, peak, undershoot, ratio) / _peak(peak, undershoot, ratio)


def hrf_integral(t, peak: float = 6.0, undershoot: float = 16.0, ratio: float = 1 / 6) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    raw = gamma.cdf(t, peak) - ratio * gamma.cdf(t, undershoot)
    return raw / _peak(peak, undershoot, ratio)


def design_matrix(onsets: Mapping[str, Sequence[float]], n_scans: int, tr: float,
                  duration: float = 1.0, hrf: Mapping | None = None) -> tuple[np.ndarray, list[str]]:
    """One regressor per image plus a trailing intercept column.

    Each onset contributes a boxcar of ``duration`` seconds (divided by its
    length, so duration=0 is a unit impulse) convolved with the HRF and
    sampled at scan times ``k * tr``. Repeated presentations add up.
    """
    hrf = dict(hrf or {})
    times = np.arange(n_scans) * tr
    cols = []
    for iid, ons in onsets.items():
        reg = np.zeros(n_scans)
        for on in ons:
            if duration > 0:
                reg += (hrf_integral(times - on, **hrf)
                        - hrf_integral(times - on - duration, **hrf)) / duration
            else:
                reg += canonical_hrf(times - on, **hrf)
        cols.append(reg)
    cols.append(np.ones(n_scans))
    return np.column_stack(cols), list(onsets) + ["intercept"]


def fit_glm_betas(bold: np.ndarray, onsets: Mapping[str, Sequence[float]], tr: float,
                  duration: float = 1.0, voxel_ids: Sequence[str] | None = None,
                  hrf: Mapping | None = None) -> VoxelResponses:
    """OLS activity estimate per image and voxel from a (time, voxels) BOLD array."""
    bold = np.asarray(bold, dtype=float)
    if bold.ndim == 1:
        bold = bold[:, None]
    if not tr > 0:
        raise GLMError(f"tr must be > 0, got {tr}")
    if not np.all(np.isfinite(bold)):
        raise GLMError("BOLD data contain non-finite values")
    n_scans = bold.shape[0]
    span = n_scans * tr
    for iid, ons in onsets.items():
        bad = [o for o in ons if not 0 <= o < span]
        if bad or not len(ons):
            raise GLMError(f"image {iid}: onsets {bad or 'missing'} outside scan duration [0, {span:g}) s")
    X, names = design_matrix(onsets, n_scans, tr, duration, hrf)
    _, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > diag.max() * max(X.shape) * np.finfo(float).eps))
    if rank < X.shape[1]:
        # regressors with weight in the null space are the collinear ones
        vt = np.linalg.svd(X, full_matrices=False)[2]
        null = vt[rank:]
        involved = np.max(np.abs(null), axis=0) > 1e-8
        culprits = [n for n, hit in zip(names, involved) if hit]
        raise GLMError(f"rank-deficient design; collinear regressors: {', '.join(culprits)}")
    beta, *_ = np.linalg.lstsq(X, bold, rcond=None)
    if voxel_ids is None:
        voxel_ids = [f"v{v:04d}" for v in range(bold.shape[1])]
    return VoxelResponses(beta[:-1], list(onsets), list(voxel_ids))
