"""Adjacency images -> fixed-size feature vectors -> (T x F) sequence tensors."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import LABELS, label_index
from .graph import (DEFAULT_CANVAS, DEFAULT_IMG, DEFAULT_MU_M, build_sequence,
                    render_image, sequence_slots)

GRID = 7
CHANNELS = 3
FEATURE_DIM = GRID * GRID * CHANNELS  # 147
DEFAULT_FRAMES = 50

MAGIC = int.from_bytes(b"TGFT", "little")
VERSION = 1


@dataclass
class FeatureSequence:
    label: str
    region_id: str
    steps: np.ndarray  # (T, F)
    key: str = ""

    @property
    def label_index(self) -> int:
        return label_index(self.label)


def extract_features(img: np.ndarray) -> np.ndarray:
    """Pool an image over a 7x7 grid of equal blocks.

    Per block the mean, max and fraction of nonzero pixels are taken,
    ordered row-major over blocks with the channel varying fastest.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"expected a square image, got shape {img.shape}")
    side = img.shape[0]
    if side == 0 or side % GRID:
        raise ValueError(f"image side {side} is not divisible by {GRID}")
    b = side // GRID
    blocks = img.reshape(GRID, b, GRID, b).transpose(0, 2, 1, 3).reshape(GRID, GRID, b * b)
    feats = np.stack([blocks.mean(axis=2), blocks.max(axis=2),
                      np.count_nonzero(blocks, axis=2) / (b * b)], axis=-1)
    return feats.reshape(-1)


def resample_indices(length: int, T: int) -> np.ndarray:
    """Evenly spaced indices ``floor(i (len-1) / (T-1) + 1/2)`` in exact integer arithmetic."""
    if T == 1:
        return np.zeros(1, dtype=np.int64)
    i = np.arange(T, dtype=np.int64)
    return (2 * i * (length - 1) + (T - 1)) // (2 * (T - 1))


def normalize_length(seq, T: int = DEFAULT_FRAMES) -> np.ndarray:
    """Subsample (keeping both endpoints) or pad by repeating the last vector."""
    seq = np.asarray(seq, dtype=float)
    n = len(seq)
    if n == 0:
        raise ValueError("cannot normalise an empty sequence")
    if T < 1:
        raise ValueError("T must be >= 1")
    if n == T:
        return seq.copy()
    if n > T:
        return seq[resample_indices(n, T)]
    pad = np.repeat(seq[-1:], T - n, axis=0)
    return np.concatenate([seq, pad], axis=0)


@dataclass(frozen=True)
class FeatureConfig:
    mu_m: float = DEFAULT_MU_M
    canvas_n: int = DEFAULT_CANVAS
    img_size: int = DEFAULT_IMG
    frames: int = DEFAULT_FRAMES


def sequence_features(raw, cfg: FeatureConfig = FeatureConfig(),
                      extractor: Callable[[np.ndarray], np.ndarray] = extract_features) -> FeatureSequence:
    """Full per-sequence path: adjacency -> image -> features -> fixed length."""
    adj = build_sequence(raw, cfg.mu_m)
    slots = sequence_slots(adj.mats)
    if len(slots) > cfg.canvas_n:
        raise ValueError(f"sequence {raw.region_id} has {len(slots)} users, "
                         f"canvas holds {cfg.canvas_n}")
    vecs = [extractor(render_image(m, cfg.canvas_n, cfg.img_size, slots)) for m in adj.mats]
    steps = normalize_length(vecs, cfg.frames)
    return FeatureSequence(raw.label, raw.region_id, steps, raw.key)


# ---------------------------------------------------------------------------
# binary tensor file
#
# header: magic, version, count, T, F            (5 x int32 LE)
# sample: label (uint8), name length (uint32 LE) + utf-8 bytes, T*F float64 LE
# The name field carries the sequence key "region_id@start_s".


class TensorFileError(ValueError):
    pass


def write_tensor_file(fh, seqs, T: int | None = None, F: int | None = None) -> None:
    seqs = list(seqs)
    if seqs:
        T, F = seqs[0].steps.shape
    T = DEFAULT_FRAMES if T is None else T
    F = FEATURE_DIM if F is None else F
    fh.write(struct.pack("<5i", MAGIC, VERSION, len(seqs), T, F))
    for s in seqs:
        if s.steps.shape != (T, F):
            raise ValueError(f"inconsistent sample shape {s.steps.shape}, expected {(T, F)}")
        name = (s.key or s.region_id).encode("utf-8")
        fh.write(struct.pack("<BI", s.label_index, len(name)))
        fh.write(name)
        fh.write(np.ascontiguousarray(s.steps, dtype="<f8").tobytes())


def read_tensor_file(fh) -> list[FeatureSequence]:
    data = fh.read()
    if len(data) < 20:
        raise TensorFileError("truncated header")
    magic, version, count, T, F = struct.unpack_from("<5i", data, 0)
    if magic != MAGIC:
        raise TensorFileError("bad magic")
    if version != VERSION:
        raise TensorFileError(f"unsupported version {version}")
    if count < 0 or T <= 0 or F <= 0:
        raise TensorFileError("bad header dimensions")
    off = 20
    out = []
    nbytes = T * F * 8
    for _ in range(count):
        if off + 5 > len(data):
            raise TensorFileError("truncated sample header")
        lab, ln = struct.unpack_from("<BI", data, off)
        off += 5
        if lab >= len(LABELS) or off + ln + nbytes > len(data):
            raise TensorFileError("corrupt sample record")
        name = data[off:off + ln].decode("utf-8")
        off += ln
        steps = np.frombuffer(data, dtype="<f8", count=T * F, offset=off).reshape(T, F).astype(float)
        off += nbytes
        if not np.all(np.isfinite(steps)):
            raise TensorFileError("non-finite feature values")
        region_id = name.split("@", 1)[0]
        out.append(FeatureSequence(LABELS[lab], region_id, steps, name))
    if off != len(data):
        raise TensorFileError("trailing bytes after last sample")
    return out


def read_tensor_header(fh) -> tuple[int, int, int, int, int]:
    return struct.unpack("<5i", fh.read(20))
