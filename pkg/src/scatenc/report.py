"""Summary tables for a finished (or partial) encoding study."""
from __future__ import annotations

import csv
import datetime as _dt
from pathlib import Path

import numpy as np

from .encoding import CVResult, ComparisonMap, compare_models
from .io import fmt, write_json
from .stats import WilcoxonError, wilcoxon_signed_rank

SECTIONS = ("models", "comparison", "wilcoxon_top_k", "decode")


def _mean(x) -> float | None:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    return float(x.mean()) if len(x) else None


def _wilcoxon(a, b) -> dict:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    ok = np.isfinite(a) & np.isfinite(b)
    try:
        res = wilcoxon_signed_rank(a[ok], b[ok])
    except WilcoxonError as e:
        return {"error": str(e)}
    d = res.to_dict()
    # differences are a - b
    d["direction"] = "a>b" if res.t_plus > res.t_minus else "b>a" if res.t_minus > res.t_plus else "none"
    return d


def write_map_csv(path, cmp: ComparisonMap):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["voxel_id", "r2_a", "r2_b", "delta", "label"])
        for i, vid in enumerate(cmp.voxel_ids):
            wr.writerow([vid, fmt(cmp.scores1[i]), fmt(cmp.scores2[i]), fmt(cmp.delta[i]),
                         cmp.labels[i]])


def write_scatter_csv(path, cmp: ComparisonMap):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["voxel_id", "r2_a", "r2_b"])
        for i in cmp.top_k:
            wr.writerow([cmp.voxel_ids[i], fmt(cmp.scores1[i]), fmt(cmp.scores2[i])])


def write_report(out_dir, cv1: CVResult | None = None, cv2: CVResult | None = None,
                 decode: dict | None = None, ground_truth: dict | None = None,
                 threshold: float = 0.05, top_k: int = 2000, extra: dict | None = None) -> dict:
    """Write summary.json plus map.csv / scatter.csv when both models are present.

    Missing inputs are listed under ``missing`` rather than failing the report.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(), "missing": []}
    models = {}
    for name, cv in (("M1", cv1), ("M2", cv2)):
        if cv is not None:
            models[name] = {"mean_r2": _mean(cv.mean_r2), "n_voxels": len(cv.voxel_ids)}
    if models:
        summary["models"] = models
    if cv1 is not None and cv2 is not None:
        cmp = compare_models(cv1.mean_r2, cv2.mean_r2, cv1.voxel_ids, cv2.voxel_ids,
                             threshold=threshold, top_k=top_k)
        write_map_csv(out / "map.csv", cmp)
        write_scatter_csv(out / "scatter.csv", cmp)
        summary["comparison"] = {"threshold": threshold, "counts": cmp.counts(),
                                 "top_k": len(cmp.top_k)}
        idx = np.array(cmp.top_k, dtype=int)
        # a = M1, b = M2: "b>a" means second-order features fit better
        summary["wilcoxon_top_k"] = _wilcoxon(cmp.scores1[idx], cmp.scores2[idx])
        if ground_truth is not None:
            summary["planted"] = _planted(cmp, ground_truth["kinds"])
    if decode is not None:
        summary["decode"] = {"fold_accuracy": decode["fold_accuracy"],
                             "mean_accuracy": decode["mean_accuracy"],
                             "chance": decode.get("chance")}
    summary["missing"] = [s for s in SECTIONS if s not in summary]
    if extra:
        summary.update(extra)
    write_json(out / "summary.json", summary)
    return summary


def _planted(cmp: ComparisonMap, kinds: list[str]) -> dict:
    kinds_arr = np.array(kinds)
    labels = np.array(cmp.labels)
    res = {}
    for k in dict.fromkeys(kinds):
        m = kinds_arr == k
        res[k] = {"n": int(m.sum()), "red": int(np.sum(labels[m] == "red")),
                  "red_fraction": float(np.mean(labels[m] == "red")),
                  "mean_r2_M1": _mean(cmp.scores1[m]), "mean_r2_M2": _mean(cmp.scores2[m]),
                  "wilcoxon": _wilcoxon(cmp.scores1[m], cmp.scores2[m])}
    return res


def strip_timestamp(summary: dict) -> dict:
    return {k: v for k, v in summary.items() if k != "timestamp"}
