"""Synthetic labelled trajectories with clumping / neutral / unclumping dynamics.

Each label maps to simple constant-velocity kinematics that realise the
adjacency-density signature of its state:

* clumping: users spread along an approach contract homothetically toward
  a stop-line point, so every pairwise distance shrinks;
* neutral: a rigid common drift, so pairwise distances are unchanged;
* unclumping: a packed group expands radially, so distances grow.

Positional jitter (``noise_m``) is added per point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import LABELS
from .ingest import (RawSequence, RegionSpec, StateAnnotation, Trajectory)


@dataclass(frozen=True)
class SynthConfig:
    n_users: tuple = (20, 60)
    duration_s: float = 10.0
    rate_hz: float = 5.0
    stop_line: tuple = (30.0, 0.0)
    approach_m: float = 60.0
    road_width_m: float = 10.0
    neutral_extent_m: float = 40.0
    pack_zone_m: float = 15.0
    speed_mps: tuple = (2.0, 6.0)
    noise_m: float = 0.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.n_users
        if not 1 <= lo <= hi:
            raise ValueError("n_users must be a non-empty positive range")
        slo, shi = self.speed_mps
        if not 0 < slo <= shi:
            raise ValueError("speed range must be positive and non-empty")
        if not (self.duration_s > 0 and self.rate_hz > 0):
            raise ValueError("duration and rate must be positive")
        if min(self.approach_m, self.road_width_m, self.pack_zone_m, self.neutral_extent_m) <= 0:
            raise ValueError("extents must be positive")
        if self.noise_m < 0:
            raise ValueError("noise must be non-negative")


def _frame_indices(cfg: SynthConfig, k0: int = 0) -> np.ndarray:
    return np.arange(k0, k0 + int(round(cfg.duration_s * cfg.rate_hz)) + 1)


def _positions(label: str, cfg: SynthConfig, rng, n: int, tau: np.ndarray) -> np.ndarray:
    """Noise-free positions (frames, users, 2) for normalised time ``tau`` in [0, 1]."""
    D = cfg.duration_s
    speed = rng.uniform(*cfg.speed_mps)
    if label == "clumping":
        target = np.asarray(cfg.stop_line, dtype=float)
        back = rng.uniform(0.0, cfg.approach_m, n)
        lateral = rng.uniform(-cfg.road_width_m / 2, cfg.road_width_m / 2, n)
        offsets = np.column_stack([-back, lateral])
        # the rearmost user drives at ``speed``; everyone shares one contraction rate
        reach = np.max(np.hypot(offsets[:, 0], offsets[:, 1]))
        shrink = min(speed * D / reach, 0.9)
        scale = 1.0 - shrink * tau
        return target + scale[:, None, None] * offsets[None]
    if label == "neutral":
        heading = rng.uniform(0.0, 2 * math.pi)
        vel = speed * np.array([math.cos(heading), math.sin(heading)])
        offsets = np.column_stack([
            rng.uniform(-cfg.neutral_extent_m / 2, cfg.neutral_extent_m / 2, n),
            rng.uniform(-cfg.road_width_m / 2, cfg.road_width_m / 2, n)])
        start = -0.5 * vel * D
        return start + offsets[None] + (tau * D)[:, None, None] * vel
    if label == "unclumping":
        radius = cfg.pack_zone_m / 2 * np.sqrt(rng.uniform(0.0, 1.0, n))
        angle = rng.uniform(0.0, 2 * math.pi, n)
        offsets = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
        reach = max(float(np.max(radius)), 1e-6)
        grow = speed * D / reach
        scale = 1.0 + grow * tau
        return scale[:, None, None] * offsets[None]
    raise ValueError(f"unknown label {label!r}")


def generate(label: str, cfg: SynthConfig, rng, region_id: str | None = None,
             first_id: int = 0, k0: int = 0, offset=(0.0, 0.0)) -> RawSequence:
    """One labelled sequence; frame ``j`` sits at time ``(k0 + j) / rate_hz``."""
    if label not in LABELS:
        raise ValueError(f"unknown label {label!r}")
    n = int(rng.integers(cfg.n_users[0], cfg.n_users[1] + 1))
    ks = _frame_indices(cfg, k0)
    tau = (ks - k0) / (len(ks) - 1)
    pos = _positions(label, cfg, rng, n, tau)
    if cfg.noise_m > 0:
        pos = pos + rng.normal(0.0, cfg.noise_m, pos.shape)
    pos = pos + np.asarray(offset, dtype=float)
    ids = list(range(first_id, first_id + n))
    frames = [(float(k / cfg.rate_hz), [(tid, float(x), float(y)) for tid, (x, y) in zip(ids, pos[j])])
              for j, k in enumerate(ks)]
    rid = region_id if region_id is not None else f"synth:{label[0]}"
    return RawSequence(rid, label, frames, n, frames[0][0], frames[-1][0])


def sequence_rng(seed: int, index: int):
    """Independent generator for the ``index``-th sequence of a dataset."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def generate_dataset(counts, cfg: SynthConfig = SynthConfig(), seed: int | None = None):
    """``counts`` per label (N, C, U order or a dict) -> list of RawSequence."""
    return build_scene(counts, cfg, seed).sequences


# ---------------------------------------------------------------------------
# scenes: sequences laid out on disjoint regions / time windows so they can be
# written as trajectory, region and annotation files and re-ingested


REGION_HALF = 100.0
REGION_PITCH = 300.0
GAP_FRAMES = 10


@dataclass
class Scene:
    sequences: list = field(default_factory=list)
    tracks: list = field(default_factory=list)
    regions: list = field(default_factory=list)
    annotations: list = field(default_factory=list)


def _counts_by_label(counts) -> dict:
    if isinstance(counts, dict):
        return {lab: int(counts.get(lab, 0)) for lab in LABELS}
    counts = list(counts)
    if len(counts) != 3:
        raise ValueError("counts must give neutral, clumping, unclumping")
    return dict(zip(LABELS, (int(c) for c in counts)))


def build_scene(counts, cfg: SynthConfig = SynthConfig(), seed: int | None = None,
                intersections=("S",)) -> Scene:
    """Generate ``counts`` sequences per label for every intersection.

    Every intersection gets 12 square regions (4 directions x 3 states);
    sequence ``j`` of a label uses direction ``j % 4 + 1`` and the next free
    time window of that region. Track ids are globally unique.
    """
    seed = cfg.seed if seed is None else seed
    per_label = _counts_by_label(counts)
    scene = Scene()
    next_id = 0
    index = 0
    for ii, inter in enumerate(intersections):
        region_of = {}
        for si, label in enumerate(LABELS):
            code = label[0]
            for d in range(1, 5):
                cx = (si * 4 + d - 1) * REGION_PITCH
                cy = ii * REGION_PITCH
                rid = f"{inter}:{d}{code}"
                poly = ((cx - REGION_HALF, cy - REGION_HALF), (cx + REGION_HALF, cy - REGION_HALF),
                        (cx + REGION_HALF, cy + REGION_HALF), (cx - REGION_HALF, cy + REGION_HALF))
                region = RegionSpec(rid, poly, d, code)
                scene.regions.append(region)
                region_of[(label, d)] = (region, (cx, cy))
        next_k = {key: 0 for key in region_of}
        for label in LABELS:
            for j in range(per_label[label]):
                d = j % 4 + 1
                region, centre = region_of[(label, d)]
                k0 = next_k[(label, d)]
                rng = sequence_rng(seed, index)
                seq = generate(label, cfg, rng, region.region_id, next_id, k0, centre)
                next_k[(label, d)] = k0 + len(seq.frames) + GAP_FRAMES
                next_id += seq.unique_user_count
                index += 1
                scene.sequences.append(seq)
                scene.annotations.append(StateAnnotation(region.region_id, seq.start_s,
                                                         seq.end_s, label))
                scene.tracks.extend(_tracks_of(seq))
    scene.tracks.sort(key=lambda tr: tr.track_id)
    return scene


def _tracks_of(seq: RawSequence) -> list[Trajectory]:
    pts: dict[int, list] = {}
    for t, users in seq.frames:
        for tid, x, y in users:
            pts.setdefault(tid, []).append((t, x, y))
    return [Trajectory(tid, np.array([p[0] for p in v]), np.array([(p[1], p[2]) for p in v]))
            for tid, v in pts.items()]
