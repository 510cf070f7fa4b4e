"""On-disk formats: raster files, labeled matrices, CSV tables."""
from __future__ import annotations

import csv
import json
import re
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .scattering import FeatureMatrix, Path as ScatPath, ScatteringConfig
from .synth import SessionLabels, VoxelResponses

RASTER_MAGIC = b"SCATRAS1"
MATRIX_MAGIC = b"SCATMAT1"
RASTER_SUFFIXES = (".ras", ".pgm")


class FormatError(ValueError):
    pass


def fmt(x: float) -> str:
    """Locale-free float text with 9 significant digits."""
    return "nan" if not np.isfinite(x) else format(float(x), ".9g")


def write_raster(path, u: np.ndarray):
    u = np.asarray(u)
    if u.ndim != 2:
        raise FormatError(f"raster must be 2D, got shape {u.shape}")
    h, w = u.shape
    with open(path, "wb") as f:
        f.write(RASTER_MAGIC + struct.pack("<II", w, h))
        f.write(np.ascontiguousarray(u, dtype="<f4").tobytes())


def _read_pgm(path, data: bytes) -> np.ndarray:
    # header: P5 <ws> width <ws> height <ws> maxval <single ws>, comments allowed
    tokens, pos = [], 2
    while len(tokens) < 3:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\d+)").match(data, pos)
        if m is None:
            raise FormatError(f"{path}: malformed PGM header")
        tokens.append(int(m.group(2)))
        pos = m.end()
    w, h, maxval = tokens
    pos += 1
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: bad PGM maxval {maxval}")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    n = w * h * np.dtype(dtype).itemsize
    if len(data) - pos < n:
        raise FormatError(f"{path}: truncated PGM payload")
    pix = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return pix.astype(float) / maxval


def read_raster(path) -> np.ndarray:
    """Read a SCATRAS1 raster (float32 as stored) or a binary PGM mapped to [0, 1]."""
    data = Path(path).read_bytes()
    if data[:2] == b"P5":
        return _read_pgm(path, data)
    if data[:8] != RASTER_MAGIC:
        raise FormatError(f"{path}: not a raster file (bad magic)")
    if len(data) < 16:
        raise FormatError(f"{path}: truncated raster header")
    w, h = struct.unpack("<II", data[8:16])
    if len(data) != 16 + 4 * w * h:
        raise FormatError(f"{path}: payload size does not match {w}x{h}")
    return np.frombuffer(data, dtype="<f4", offset=16).reshape(h, w).astype(np.float32)


def write_pgm(path, u: np.ndarray):
    """8-bit PGM of an image already scaled to [0, 1]."""
    u = np.clip(np.round(np.asarray(u) * 255), 0, 255).astype(np.uint8)
    h, w = u.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(u.tobytes())


def list_images(spec: str) -> list[Path]:
    """Directory of rasters, a text file listing paths, or a comma-separated list."""
    p = Path(spec)
    if p.is_dir():
        files = sorted(f for f in p.iterdir() if f.suffix.lower() in RASTER_SUFFIXES)
        if not files:
            raise FormatError(f"{spec}: no .ras or .pgm images in directory")
        return files
    if p.is_file() and p.suffix.lower() not in RASTER_SUFFIXES:
        base = p.parent
        lines = [ln.strip() for ln in p.read_text().splitlines() if ln.strip()]
        return [Path(ln) if Path(ln).is_absolute() else base / ln for ln in lines]
    files = [Path(s) for s in spec.split(",") if s]
    missing = [str(f) for f in files if not f.is_file()]
    if missing:
        raise FormatError(f"image files not found: {', '.join(missing)}")
    return files


def write_matrix(path, values: np.ndarray, row_ids: Sequence[str], col_labels: Sequence[str],
                 meta: dict | None = None):
    """SCATMAT1: magic, u32 header length, JSON header, float64 little-endian payload."""
    values = np.asarray(values, dtype="<f8")
    header = json.dumps({"rows": values.shape[0], "cols": values.shape[1],
                         "row_ids": list(row_ids), "col_labels": list(col_labels),
                         "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MATRIX_MAGIC + struct.pack("<I", len(header)) + header)
        f.write(np.ascontiguousarray(values).tobytes())


def read_matrix(path) -> tuple[np.ndarray, list[str], list[str], dict]:
    data = Path(path).read_bytes()
    if data[:8] != MATRIX_MAGIC:
        raise FormatError(f"{path}: not a matrix file (bad magic)")
    (hlen,) = struct.unpack("<I", data[8:12])
    try:
        head = json.loads(data[12:12 + hlen])
        rows, cols = head["rows"], head["cols"]
    except (ValueError, KeyError) as e:
        raise FormatError(f"{path}: malformed matrix header ({e})") from None
    off = 12 + hlen
    if len(data) - off != 8 * rows * cols:
        raise FormatError(f"{path}: payload size does not match {rows}x{cols}")
    values = np.frombuffer(data, dtype="<f8", offset=off).reshape(rows, cols).copy()
    return values, head["row_ids"], head["col_labels"], head.get("meta", {})


def write_table_csv(path, values: np.ndarray, row_ids: Sequence[str], col_labels: Sequence[str],
                    id_name: str = "image_id"):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow([id_name, *col_labels])
        for rid, row in zip(row_ids, values):
            wr.writerow([rid, *(fmt(x) for x in row)])


def read_table_csv(path) -> tuple[np.ndarray, list[str], list[str]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    head, body = rows[0], rows[1:]
    try:
        values = np.array([[float(x) for x in r[1:]] for r in body], dtype=float)
    except ValueError as e:
        raise FormatError(f"{path}: non-numeric cell ({e})") from None
    if body and values.shape[1] != len(head) - 1:
        raise FormatError(f"{path}: ragged rows")
    return values.reshape(len(body), len(head) - 1), [r[0] for r in body], head[1:]


def save_features(path, fm: FeatureMatrix):
    path = Path(path)
    if path.suffix == ".csv":
        write_table_csv(path, fm.values, fm.image_ids, fm.labels)
    else:
        meta = {"config": fm.config.to_dict()} if fm.config else {}
        write_matrix(path, fm.values, fm.image_ids, fm.labels, meta)


def load_features(path) -> FeatureMatrix:
    path = Path(path)
    if path.suffix == ".csv":
        values, ids, labels = read_table_csv(path)
        config = None
    else:
        values, ids, labels, meta = read_matrix(path)
        config = ScatteringConfig(**meta["config"]) if "config" in meta else None
    paths = [ScatPath.from_label(lb) for lb in labels]
    return FeatureMatrix(values, paths, ids, config)


def save_responses(path, y: VoxelResponses):
    if Path(path).suffix == ".csv":
        write_table_csv(path, y.values, y.image_ids, y.voxel_ids)
    else:
        write_matrix(path, y.values, y.image_ids, y.voxel_ids)


def load_responses(path) -> VoxelResponses:
    if Path(path).suffix == ".csv":
        values, ids, vox = read_table_csv(path)
    else:
        values, ids, vox, _ = read_matrix(path)
    return VoxelResponses(values, ids, vox)


def _read_dicts(path, required: Sequence[str]) -> list[dict]:
    with open(path, newline="") as f:
        rd = csv.DictReader(f)
        missing = set(required) - set(rd.fieldnames or [])
        if missing:
            raise FormatError(f"{path}: missing columns {sorted(missing)}")
        return list(rd)


def write_sessions(path, s: SessionLabels):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["image_id", "session", "block"])
        for row in zip(s.image_ids, s.session, s.block):
            wr.writerow([row[0], int(row[1]), int(row[2])])


def read_sessions(path) -> SessionLabels:
    rows = _read_dicts(path, ["image_id", "session", "block"])
    try:
        return SessionLabels([r["image_id"] for r in rows], [int(r["session"]) for r in rows],
                             [int(r["block"]) for r in rows])
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None


def write_labels(path, image_ids: Sequence[str], labels: Sequence[int]):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["image_id", "label"])
        for iid, lab in zip(image_ids, labels):
            wr.writerow([iid, int(lab)])


def read_labels(path) -> dict[str, int]:
    rows = _read_dicts(path, ["image_id", "label"])
    try:
        return {r["image_id"]: int(r["label"]) for r in rows}
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from None
