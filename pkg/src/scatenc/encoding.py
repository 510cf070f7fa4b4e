"""Per-voxel ridge encoding models with nested leave-one-session-out CV."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .scattering import FeatureMatrix
from .synth import SessionLabels, VoxelResponses

DEFAULT_LAMBDAS = tuple(np.logspace(-3, 5, 10))


class EncodingError(ValueError):
    pass


class DegenerateTarget(EncodingError):
    pass


@dataclass
class RidgeFit:
    weights: np.ndarray
    intercept: float
    lam: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.weights + self.intercept


@dataclass
class CVResult:
    voxel_ids: list[str]
    fold_sessions: list[int]
    fold_r2: np.ndarray  # (n_folds, n_voxels)
    fold_lambda: np.ndarray  # (n_folds, n_voxels)
    lambda_grid: list[float]
    coefs: np.ndarray | None = field(default=None, repr=False)  # (n_folds, n_features, n_voxels)
    intercepts: np.ndarray | None = field(default=None, repr=False)  # (n_folds, n_voxels)
    feature_labels: list[str] = field(default_factory=list)

    @property
    def mean_r2(self) -> np.ndarray:
        return self.fold_r2.mean(axis=0)

    def to_dict(self) -> dict:
        return {
            "voxel_ids": list(self.voxel_ids),
            "fold_sessions": [int(s) for s in self.fold_sessions],
            "lambda_grid": [float(x) for x in self.lambda_grid],
            "mean_r2": [_f(x) for x in self.mean_r2],
            "fold_r2": [[_f(x) for x in row] for row in self.fold_r2],
            "fold_lambda": [[_f(x) for x in row] for row in self.fold_lambda],
            "feature_labels": list(self.feature_labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CVResult":
        try:
            fold_r2 = np.array(d["fold_r2"], dtype=float)
            return cls(voxel_ids=[str(v) for v in d["voxel_ids"]],
                       fold_sessions=[int(s) for s in d["fold_sessions"]],
                       fold_r2=fold_r2.reshape(len(d["fold_sessions"]), len(d["voxel_ids"])),
                       fold_lambda=np.array(d["fold_lambda"], dtype=float),
                       lambda_grid=[float(x) for x in d["lambda_grid"]],
                       feature_labels=list(d.get("feature_labels", [])))
        except (KeyError, TypeError, ValueError) as e:
            raise EncodingError(f"malformed CV result: {e}") from None


def _f(x: float) -> float | None:
    # JSON has no NaN
    return None if not np.isfinite(x) else float(x)


@dataclass
class ComparisonMap:
    voxel_ids: list[str]
    scores1: np.ndarray
    scores2: np.ndarray
    delta: np.ndarray
    labels: list[str]
    threshold: float
    top_k: list[int]  # voxel indices, best scores1 first

    def counts(self) -> dict:
        return {k: self.labels.count(k) for k in ("red", "blue", "unlabeled")}


def ridge_fit(X: np.ndarray, y: np.ndarray, lam: float) -> RidgeFit:
    """Ridge on training-centered data: (Xc'Xc + lam I) w = Xc'yc, intercept from the means."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not lam > 0:
        raise EncodingError(f"lambda must be > 0, got {lam}")
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise EncodingError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if X.shape[0] < 2:
        raise EncodingError("ridge needs at least 2 samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise EncodingError("ridge: non-finite inputs")
    xm, ym = X.mean(axis=0), y.mean()
    Xc, yc = X - xm, y - ym
    w = np.linalg.solve(Xc.T @ Xc + lam * np.eye(X.shape[1]), Xc.T @ yc)
    return RidgeFit(weights=w, intercept=float(ym - xm @ w), lam=float(lam))


def r2_score(y_true, y_pred, baseline: float) -> float:
    """Predictive r^2 against a fixed baseline (the training mean)."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or len(y_true) < 1:
        raise EncodingError(f"r2_score: bad shapes {y_true.shape} vs {y_pred.shape}")
    den = np.sum((y_true - baseline) ** 2)
    if den == 0:
        raise DegenerateTarget("degenerate target")
    return float(1.0 - np.sum((y_true - y_pred) ** 2) / den)


def _r2_columns(y_true: np.ndarray, y_pred: np.ndarray, baseline: np.ndarray) -> np.ndarray:
    den = np.sum((y_true - baseline) ** 2, axis=0)
    num = np.sum((y_true - y_pred) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, 1.0 - num / np.where(den > 0, den, 1.0), np.nan)


class _RidgePath:
    """SVD of standardized training features; solves every lambda and voxel at once."""

    def __init__(self, X: np.ndarray, Y: np.ndarray, standardize: bool = True):
        self.xm = X.mean(axis=0)
        sd = X.std(axis=0) if standardize else np.ones(X.shape[1])
        self.sd = np.where(sd > 0, sd, 1.0)
        self.ym = Y.mean(axis=0)
        Z = (X - self.xm) / self.sd
        U, s, Vt = np.linalg.svd(Z, full_matrices=False)
        self.s, self.V = s, Vt.T
        self.UtY = U.T @ (Y - self.ym)

    def coef(self, lam: np.ndarray) -> np.ndarray:
        """Raw-scale weights (n_features, n_voxels) for per-voxel lambdas."""
        shrink = self.s[:, None] / (self.s[:, None] ** 2 + lam[None, :])
        return (self.V @ (shrink * self.UtY)) / self.sd[:, None]

    def intercept(self, coef: np.ndarray) -> np.ndarray:
        return self.ym - self.xm @ coef

    def predict_grid(self, Xt: np.ndarray, lambdas: Sequence[float]) -> np.ndarray:
        """Predictions (n_lambdas, n_test, n_voxels)."""
        A = ((Xt - self.xm) / self.sd) @ self.V
        out = np.empty((len(lambdas), Xt.shape[0], self.UtY.shape[1]))
        for i, lam in enumerate(lambdas):
            f = self.s / (self.s ** 2 + lam)
            out[i] = (A * f) @ self.UtY + self.ym
        return out


def _check_inputs(X: FeatureMatrix, Y: VoxelResponses, sessions: SessionLabels):
    Y = Y.aligned(X.image_ids)
    sessions = sessions.aligned(X.image_ids)
    if not np.all(np.isfinite(Y.values)):
        raise EncodingError("voxel responses contain non-finite values")
    if not np.all(np.isfinite(X.values)):
        raise EncodingError("features contain non-finite values")
    return Y, sessions


def _ridge_refit(Xtr, Ytr, lam_vec, standardize):
    path = _RidgePath(Xtr, Ytr, standardize)
    coef = path.coef(lam_vec)
    return coef, path.intercept(coef)


def fit_outer_fold(X: np.ndarray, Y: np.ndarray, session: np.ndarray, held_out: int,
                   lambda_grid: Sequence[float], per_voxel: bool = True,
                   standardize: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Select lambda by inner leave-one-session-out on the training sessions, then refit.

    Only rows whose session differs from ``held_out`` are ever read.
    Returns (coef, intercept, chosen lambda per voxel).
    """
    grid = np.asarray(sorted(lambda_grid), dtype=float)
    train = session != held_out
    Xtr, Ytr, str_ = X[train], Y[train], session[train]
    inner = np.unique(str_)
    n_vox = Y.shape[1]
    if len(grid) == 1:
        lam = np.full(n_vox, grid[0])
    else:
        scores = np.zeros((len(grid), n_vox))
        for t in inner:
            fit_rows = str_ != t
            path = _RidgePath(Xtr[fit_rows], Ytr[fit_rows], standardize)
            pred = path.predict_grid(Xtr[~fit_rows], grid)
            yt = Ytr[~fit_rows]
            for i in range(len(grid)):
                scores[i] += _r2_columns(yt, pred[i], path.ym)
        scores /= len(inner)
        scores = np.where(np.isnan(scores), -np.inf, scores)
        if per_voxel:
            lam = grid[np.argmax(scores, axis=0)]  # first max = smallest lambda
        else:
            lam = np.full(n_vox, grid[np.argmax(scores.mean(axis=1))])
    coef, icpt = _ridge_refit(Xtr, Ytr, lam, standardize)
    return coef, icpt, lam


def nested_cv_encode(X: FeatureMatrix, Y: VoxelResponses, sessions: SessionLabels,
                     lambda_grid: Sequence[float] = DEFAULT_LAMBDAS, per_voxel: bool = True,
                     standardize: bool = True) -> CVResult:
    """Outer leave-one-session-out; inner leave-one-session-out selects lambda per voxel.

    The score of a voxel is the mean of its outer-fold predictive r^2, each
    measured against the training-fold mean.
    """
    if len(lambda_grid) == 0:
        raise EncodingError("lambda grid is empty")
    if any(not lam > 0 for lam in lambda_grid):
        raise EncodingError("lambda grid values must be > 0")
    Y, sessions = _check_inputs(X, Y, sessions)
    sess = sessions.session
    ids, counts = np.unique(sess, return_counts=True)
    if len(ids) < 3:
        raise EncodingError(f"nested CV needs >= 3 sessions, got {len(ids)}")
    small = ids[counts < 2]
    if len(small):
        raise EncodingError(f"sessions with fewer than 2 images: {small.tolist()}")
    x, y = X.values, Y.values
    n_f, n_v = x.shape[1], y.shape[1]
    r2 = np.zeros((len(ids), n_v))
    lams = np.zeros((len(ids), n_v))
    coefs = np.zeros((len(ids), n_f, n_v))
    icpts = np.zeros((len(ids), n_v))
    for k, s in enumerate(ids):
        coef, icpt, lam = fit_outer_fold(x, y, sess, s, lambda_grid, per_voxel, standardize)
        test = sess == s
        pred = x[test] @ coef + icpt
        r2[k] = _r2_columns(y[test], pred, y[~test].mean(axis=0))
        lams[k], coefs[k], icpts[k] = lam, coef, icpt
    return CVResult(list(Y.voxel_ids), ids.tolist(), r2, lams, sorted(float(v) for v in lambda_grid),
                    coefs, icpts, X.labels)


def loso_ridge(X: FeatureMatrix, Y: VoxelResponses, sessions: SessionLabels, lam: float,
               standardize: bool = True) -> CVResult:
    """Plain leave-one-session-out ridge with a fixed lambda (no inner loop)."""
    if not lam > 0:
        raise EncodingError(f"lambda must be > 0, got {lam}")
    Y, sessions = _check_inputs(X, Y, sessions)
    sess = sessions.session
    ids = np.unique(sess)
    x, y = X.values, Y.values
    lam_vec = np.full(y.shape[1], float(lam))
    r2 = np.zeros((len(ids), y.shape[1]))
    coefs = np.zeros((len(ids), x.shape[1], y.shape[1]))
    icpts = np.zeros((len(ids), y.shape[1]))
    for k, s in enumerate(ids):
        train, test = sess != s, sess == s
        coef, icpt = _ridge_refit(x[train], y[train], lam_vec, standardize)
        r2[k] = _r2_columns(y[test], x[test] @ coef + icpt, y[train].mean(axis=0))
        coefs[k], icpts[k] = coef, icpt
    return CVResult(list(Y.voxel_ids), ids.tolist(), r2, np.tile(lam_vec, (len(ids), 1)),
                    [float(lam)], coefs, icpts, X.labels)


def compare_models(scores1, scores2, voxel_ids1: Sequence[str], voxel_ids2: Sequence[str] | None = None,
                   threshold: float = 0.05, top_k: int = 2000) -> ComparisonMap:
    """Label voxels red (gain > threshold), blue (gain <= 0) or unlabeled."""
    voxel_ids2 = voxel_ids1 if voxel_ids2 is None else voxel_ids2
    if list(voxel_ids1) != list(voxel_ids2):
        raise EncodingError("compare_models: voxel ids of the two score sets are misaligned")
    s1 = np.asarray(scores1, dtype=float)
    s2 = np.asarray(scores2, dtype=float)
    if s1.shape != s2.shape or len(s1) != len(voxel_ids1):
        raise EncodingError("compare_models: score and id lengths differ")
    delta = s2 - s1
    labels = ["red" if d > threshold else "blue" if d <= 0 else "unlabeled" for d in delta]
    # NaN scores sort last
    key = np.where(np.isnan(s1), -np.inf, s1)
    order = np.argsort(-key, kind="stable")
    return ComparisonMap(list(voxel_ids1), s1, s2, delta, labels, float(threshold),
                         order[:max(0, top_k)].tolist())
