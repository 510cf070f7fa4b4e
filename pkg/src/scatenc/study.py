"""The synthetic desk-scale study: textures -> scattering -> planted voxels -> encode/compare/decode."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .decoding import DEFAULT_DECODE_LAMBDAS, LabeledActivity, block_cv_decode
from .encoding import DEFAULT_LAMBDAS, nested_cv_encode
from .report import write_report
from .scattering import ScatteringConfig, batch_scatter
from .synth import (PLANT_KINDS, PlantSpec, default_class_specs, gen_session_labels, gen_voxels,
                    texture_set)

log = logging.getLogger(__name__)


@dataclass
class StudyConfig:
    seed: int = 7
    n_images: int = 216
    size: int = 128
    J: int = 5
    L: int = 4
    n_sessions: int = 6
    blocks_per_session: int = 36
    voxels_per_kind: int = 50
    snr: float = 1.0
    lambda_grid: tuple = DEFAULT_LAMBDAS
    decode_lambda_grid: tuple = DEFAULT_DECODE_LAMBDAS
    decode_cv_unit: str = "session"
    threshold: float = 0.05
    top_k: int = 2000
    classes: list = field(default_factory=default_class_specs)


def synth_dataset(cfg: StudyConfig, threads: int = 1):
    """Images, features, sessions, class labels, responses and ground truth."""
    images, ids, labels = texture_set(cfg.classes, cfg.n_images, cfg.size, cfg.seed)
    log.info("scattering %d images (J=%d, L=%d)", len(images), cfg.J, cfg.L)
    features = batch_scatter(images, ScatteringConfig(M=2, J=cfg.J, L=cfg.L), ids, threads=threads)
    sessions = gen_session_labels(cfg.n_images, cfg.n_sessions, cfg.blocks_per_session, ids)
    plant = PlantSpec(kinds={k: cfg.voxels_per_kind for k in PLANT_KINDS}, snr=cfg.snr,
                      seed=cfg.seed)
    responses, gt = gen_voxels(features, plant, sessions)
    return images, features, sessions, labels, responses, gt


def run_study(cfg: StudyConfig, out_dir, threads: int = 1) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, features, sessions, labels, responses, gt = synth_dataset(cfg, threads)
    io.save_features(out / "features.bin", features)
    io.save_features(out / "features.csv", features)
    io.save_responses(out / "responses.bin", responses)
    io.write_sessions(out / "sessions.csv", sessions)
    io.write_labels(out / "labels.csv", features.image_ids, labels)
    io.write_json(out / "ground_truth.json", gt.to_dict())

    log.info("nested CV encoding, %d voxels", len(responses.voxel_ids))
    cv1 = nested_cv_encode(features.select_layers(1), responses, sessions, cfg.lambda_grid)
    cv2 = nested_cv_encode(features, responses, sessions, cfg.lambda_grid)
    io.write_json(out / "cv_m1.json", cv1.to_dict())
    io.write_json(out / "cv_m2.json", cv2.to_dict())

    log.info("decoding texture class (%s folds)", cfg.decode_cv_unit)
    groups = sessions.session if cfg.decode_cv_unit == "session" else sessions.block
    dec = block_cv_decode(LabeledActivity(responses.values, np.array(labels), groups,
                                          responses.image_ids),
                          cfg.decode_lambda_grid, threads=threads)
    io.write_json(out / "decode.json", dec.to_dict())
    return write_report(out, cv1, cv2, dec.to_dict(), gt.to_dict(),
                        threshold=cfg.threshold, top_k=cfg.top_k,
                        extra={"config": {"seed": cfg.seed, "n_images": cfg.n_images,
                                          "size": cfg.size, "J": cfg.J, "L": cfg.L,
                                          "snr": cfg.snr,
                                          "n_voxels": len(responses.voxel_ids),
                                          "decode_cv_unit": cfg.decode_cv_unit}})
