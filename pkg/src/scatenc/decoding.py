"""One-vs-rest l2-penalized logistic regression and block-wise cross-validated decoding."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

DEFAULT_DECODE_LAMBDAS = (0.01, 0.1, 1.0, 10.0, 100.0)


class DecodingError(ValueError):
    pass


@dataclass
class LabeledActivity:
    values: np.ndarray  # (n_images, n_voxels)
    labels: np.ndarray  # class id per image
    blocks: np.ndarray  # CV group per image
    image_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.labels = np.asarray(self.labels)
        self.blocks = np.asarray(self.blocks)
        n = self.values.shape[0]
        if self.values.ndim != 2 or len(self.labels) != n or len(self.blocks) != n:
            raise DecodingError("activity, labels and blocks differ in length")
        if len(np.unique(self.labels)) < 2:
            raise DecodingError("decoding needs at least 2 classes")
        if not self.image_ids:
            self.image_ids = [str(i) for i in range(n)]


@dataclass
class BinaryFit:
    w: np.ndarray
    b: float
    converged: bool
    n_iter: int
    objective: list[float]


@dataclass
class OvrModel:
    classes: np.ndarray
    W: np.ndarray  # (n_classes, n_features)
    b: np.ndarray
    lam: float
    converged: list[bool]

    def scores(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.W.T + self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax keeps the first maximum: ties go to the lowest class id
        return self.classes[np.argmax(self.scores(X), axis=1)]


@dataclass
class DecodeResult:
    fold_groups: list
    fold_accuracy: list[float]
    fold_lambda: list[float]
    flagged: list[bool]
    chance: float

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracy))

    def to_dict(self) -> dict:
        return {"fold_groups": [_plain(g) for g in self.fold_groups],
                "fold_accuracy": [float(a) for a in self.fold_accuracy],
                "fold_lambda": [float(x) for x in self.fold_lambda],
                "flagged": list(self.flagged),
                "mean_accuracy": self.mean_accuracy,
                "chance": self.chance}


def _plain(x):
    return x.item() if hasattr(x, "item") else x


def _objective(X, t, w, b, lam):
    m = X @ w + b
    z = 2 * t - 1
    return float(np.sum(np.logaddexp(0.0, -z * m)) + lam * w @ w)


def logistic_binary(X: np.ndarray, t: np.ndarray, lam: float, tol: float = 1e-6,
                    max_iter: int = 1000) -> BinaryFit:
    """Minimize sum log(1 + exp(-z (w.x + b))) + lam |w|^2 by damped Newton from zero.

    ``t`` holds 0/1 targets; the intercept is not penalized.
    """
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    theta = np.zeros(d + 1)
    pen = np.full(d + 1, 2 * lam)
    pen[-1] = 0.0
    obj = _objective(X, t, theta[:-1], theta[-1], lam)
    history = [obj]
    for it in range(1, max_iter + 1):
        p = expit(Xa @ theta)
        grad = Xa.T @ (p - t) + pen * theta
        if np.max(np.abs(grad)) <= tol:
            return BinaryFit(theta[:-1], float(theta[-1]), True, it - 1, history)
        H = (Xa * (p * (1 - p))[:, None]).T @ Xa + np.diag(pen)
        # tiny ridge on the intercept keeps H invertible for one-class targets
        H[-1, -1] += 1e-12
        step = np.linalg.solve(H, grad)
        eta = 1.0
        while True:
            cand = theta - eta * step
            new = _objective(X, t, cand[:-1], cand[-1], lam)
            if new <= obj or eta < 1e-10:
                break
            eta *= 0.5
        if new > obj:
            break
        theta, obj = cand, new
        history.append(obj)
    p = expit(Xa @ theta)
    grad = Xa.T @ (p - t) + pen * theta
    ok = bool(np.max(np.abs(grad)) <= tol)
    return BinaryFit(theta[:-1], float(theta[-1]), ok, len(history) - 1, history)


def logistic_ovr_fit(data: LabeledActivity | np.ndarray, lam: float,
                     labels: np.ndarray | None = None, threads: int = 1) -> OvrModel:
    """One binary logistic fit per class; accepts LabeledActivity or (X, labels)."""
    if isinstance(data, LabeledActivity):
        X, y = data.values, data.labels
    else:
        X, y = np.asarray(data, dtype=float), np.asarray(labels)
    if not lam > 0:
        raise DecodingError(f"lambda must be > 0, got {lam}")
    if not np.all(np.isfinite(X)):
        raise DecodingError("logistic fit: non-finite data")
    classes = np.unique(y)

    def fit(c):
        return logistic_binary(X, (y == c).astype(float), lam)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            fits = list(ex.map(fit, classes))
    else:
        fits = [fit(c) for c in classes]
    return OvrModel(classes=classes, W=np.vstack([f.w for f in fits]),
                    b=np.array([f.b for f in fits]), lam=float(lam),
                    converged=[f.converged for f in fits])


def _standardize(train: np.ndarray, *others: np.ndarray):
    m = train.mean(axis=0)
    sd = train.std(axis=0)
    sd[sd == 0] = 1.0
    return [(a - m) / sd for a in (train,) + others]


def _fold_accuracy(Xtr, ytr, Xte, yte, lam, threads):
    """Accuracy on test rows whose class was seen in training, plus a flag if any were dropped."""
    Xtr, Xte = _standardize(Xtr, Xte)
    model = logistic_ovr_fit(Xtr, lam, ytr, threads=threads)
    return _score(model, Xte, yte)


def _score(model: OvrModel, Xte, yte):
    seen = np.isin(yte, model.classes)
    if not seen.any():
        return np.nan, True
    acc = float(np.mean(model.predict(Xte[seen]) == yte[seen]))
    return acc, bool((~seen).any())


def fit_decode_fold(X: np.ndarray, y: np.ndarray, groups: np.ndarray, held_out,
                    lambda_grid: Sequence[float], threads: int = 1):
    """Pick lambda by inner leave-one-group-out on the training groups, then refit.

    Only rows outside ``held_out`` are read. Returns (model on standardized
    features, lambda, training mean, training std).
    """
    grid = sorted(float(x) for x in lambda_grid)
    tr = groups != held_out
    Xtr, ytr, gtr = X[tr], y[tr], groups[tr]
    if len(grid) == 1:
        lam = grid[0]
    else:
        inner = np.unique(gtr)
        mean_acc = []
        for cand in grid:
            vals = [_fold_accuracy(Xtr[gtr != t], ytr[gtr != t], Xtr[gtr == t], ytr[gtr == t],
                                   cand, threads)[0] for t in inner]
            mean_acc.append(np.nanmean(vals))
        # first maximum: ties go to the smallest lambda
        lam = grid[int(np.argmax(mean_acc))]
    m = Xtr.mean(axis=0)
    sd = Xtr.std(axis=0)
    sd[sd == 0] = 1.0
    model = logistic_ovr_fit((Xtr - m) / sd, lam, ytr, threads=threads)
    return model, lam, m, sd


def block_cv_decode(data: LabeledActivity, lambda_grid: Sequence[float] = DEFAULT_DECODE_LAMBDAS,
                    threads: int = 1) -> DecodeResult:
    """Leave-one-block-out accuracy with lambda picked by inner leave-one-block-out."""
    if not np.all(np.isfinite(data.values)):
        raise DecodingError("decoding: non-finite activity")
    if not len(lambda_grid):
        raise DecodingError("lambda grid is empty")
    if any(not lam > 0 for lam in lambda_grid):
        raise DecodingError("lambda grid values must be > 0")
    groups = np.unique(data.blocks)
    if len(groups) < 3:
        raise DecodingError(f"block CV needs >= 3 blocks, got {len(groups)}")
    X, y, g = data.values, data.labels, data.blocks
    accs, lams, flags = [], [], []
    for held in groups:
        model, lam, m, sd = fit_decode_fold(X, y, g, held, lambda_grid, threads)
        te = g == held
        acc, flag = _score(model, (X[te] - m) / sd, y[te])
        missing = set(np.unique(y)) - set(model.classes)
        accs.append(acc)
        lams.append(lam)
        flags.append(flag or bool(missing))
    return DecodeResult(list(groups), accs, lams, flags, 1.0 / len(np.unique(y)))
