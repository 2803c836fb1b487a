"""Trajectory ingestion: parsing, calibration, region membership, resampling
and extraction of labelled per-region sequences."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple, TextIO

import numpy as np

from . import LABEL_CODES, LABELS

DEFAULT_RATE_HZ = 5.0
DEFAULT_MIN_USERS = 20

PIXEL_HEADER = ["frame", "track_id", "x_px", "y_px"]
METER_HEADER = ["t", "track_id", "x_m", "y_m"]

# tolerance for snapping times onto the k / rate grid
_GRID_TOL = 1e-6
# tolerance (meters) for the polygon boundary test
_EDGE_TOL = 1e-9


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class TrackPoint(NamedTuple):
    track_id: int
    t: float
    x: float
    y: float


@dataclass(frozen=True)
class Calibration:
    meters_per_pixel: float

    def __post_init__(self):
        if not (self.meters_per_pixel > 0 and math.isfinite(self.meters_per_pixel)):
            raise DataError(f"meters_per_pixel must be positive, got {self.meters_per_pixel}")


@dataclass
class Trajectory:
    """Time-ordered positions (meters) of a single road user."""

    track_id: int
    t: np.ndarray
    xy: np.ndarray  # (n, 2)

    def __len__(self):
        return len(self.t)

    def points(self) -> list[TrackPoint]:
        return [TrackPoint(self.track_id, float(t), float(x), float(y))
                for t, (x, y) in zip(self.t, self.xy)]


@dataclass(frozen=True)
class RegionSpec:
    region_id: str
    polygon: tuple  # ((x, y), ...) in meters
    direction_code: int
    state_code: str

    def __post_init__(self):
        poly = tuple((float(x), float(y)) for x, y in self.polygon)
        object.__setattr__(self, "polygon", poly)
        if len(poly) < 3:
            raise DataError(f"region {self.region_id}: polygon needs at least 3 vertices")
        if not all(math.isfinite(v) for p in poly for v in p):
            raise DataError(f"region {self.region_id}: non-finite polygon vertex")
        if self.direction_code not in (1, 2, 3, 4):
            raise DataError(f"region {self.region_id}: direction code {self.direction_code} not in 1..4")
        if self.state_code not in LABEL_CODES:
            raise DataError(f"region {self.region_id}: state code {self.state_code!r} not in c/n/u")
        if not _is_simple(poly):
            raise DataError(f"region {self.region_id}: polygon is self-intersecting")


@dataclass(frozen=True)
class StateAnnotation:
    region_id: str
    start_s: float
    end_s: float
    label: str

    def __post_init__(self):
        label = LABEL_CODES.get(self.label, self.label)
        if label not in LABELS:
            raise DataError(f"unknown label {self.label!r}")
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "start_s", float(self.start_s))
        object.__setattr__(self, "end_s", float(self.end_s))
        if not self.start_s < self.end_s:
            raise DataError(f"annotation {self.region_id}: start_s must be < end_s")


@dataclass
class RawSequence:
    """Road users inside one annotated spatio-temporal region.

    ``frames`` is a list of ``(t, [(track_id, x, y), ...])`` on a uniform grid.
    """

    region_id: str
    label: str
    frames: list
    unique_user_count: int
    start_s: float = 0.0
    end_s: float = 0.0

    @property
    def key(self) -> str:
        """Identity of the sequence: region plus window start."""
        return f"{self.region_id}@{float(self.start_s)!r}"


# ---------------------------------------------------------------------------
# trajectory CSV


def parse_trajectories(source: TextIO | str, cal: Calibration | None = None,
                       frame_rate: float | None = None) -> list[Trajectory]:
    """Parse a trajectory CSV into per-track trajectories in meters.

    Two schemas are accepted: ``frame,track_id,x_px,y_px`` (needs a frame
    rate, either as argument or a ``# frame_rate: <hz>`` comment line, and a
    calibration) and ``t,track_id,x_m,y_m``. Duplicate ``(track_id, t)`` rows
    keep the last occurrence.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    header = None
    rows = []
    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\r\n")
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if body.lower().startswith("frame_rate") and frame_rate is None:
                try:
                    frame_rate = float(body.split(":", 1)[1] if ":" in body else body.split("=", 1)[1])
                except (IndexError, ValueError):
                    raise DataError(f"line {lineno}: bad frame_rate directive") from None
            continue
        fields = [f.strip() for f in next(csv.reader([line]))]
        if header is None:
            header = fields
            if header not in (PIXEL_HEADER, METER_HEADER):
                raise DataError(f"line {lineno}: unrecognised header {','.join(fields)}")
            continue
        if len(fields) != 4:
            raise DataError(f"line {lineno}: expected 4 fields, got {len(fields)}")
        try:
            track_id = int(fields[1])
            a, x, y = float(fields[0]), float(fields[2]), float(fields[3])
        except ValueError:
            raise DataError(f"line {lineno}: malformed row {line!r}") from None
        if not (math.isfinite(a) and math.isfinite(x) and math.isfinite(y)):
            raise DataError(f"line {lineno}: non-finite value")
        rows.append((lineno, track_id, a, x, y))

    if header is None:
        raise DataError("missing header")
    pixels = header == PIXEL_HEADER
    if pixels:
        if frame_rate is None or not frame_rate > 0 or not math.isfinite(frame_rate):
            raise DataError(f"pixel schema needs a positive frame rate, got {frame_rate}")
        if cal is None:
            raise DataError("pixel schema needs a calibration")
        scale = cal.meters_per_pixel

    by_track: dict[int, dict[float, tuple[float, float]]] = defaultdict(dict)
    for lineno, track_id, a, x, y in rows:
        if pixels:
            if a < 0 or a != int(a):
                raise DataError(f"line {lineno}: frame must be a non-negative integer")
            t, x, y = a / frame_rate, x * scale, y * scale
        else:
            if a < 0:
                raise DataError(f"line {lineno}: negative time")
            t = a
        by_track[track_id][t] = (x, y)  # last wins

    out = []
    for track_id in sorted(by_track):
        pts = by_track[track_id]
        ts = np.array(sorted(pts), dtype=float)
        xy = np.array([pts[t] for t in ts], dtype=float).reshape(-1, 2)
        out.append(Trajectory(track_id, ts, xy))
    return out


def write_trajectories(fh: TextIO, tracks: Iterable[Trajectory]) -> None:
    """Write tracks in the meter schema; floats use ``repr`` so they round-trip."""
    fh.write(",".join(METER_HEADER) + "\n")
    for tr in tracks:
        for t, (x, y) in zip(tr.t, tr.xy):
            fh.write(f"{float(t)!r},{tr.track_id},{float(x)!r},{float(y)!r}\n")


# ---------------------------------------------------------------------------
# region / annotation files


def read_regions(fh: TextIO) -> dict[str, RegionSpec]:
    """Read a region file: a JSON list of records with ``region_id``,
    ``direction_code``, ``state_code``, ``polygon`` (pixel vertices) and
    ``meters_per_pixel``."""
    try:
        records = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"region file: {exc}") from None
    regions = {}
    for i, rec in enumerate(records):
        try:
            mpp = Calibration(float(rec.get("meters_per_pixel", 1.0))).meters_per_pixel
            poly = [(float(x) * mpp, float(y) * mpp) for x, y in rec["polygon"]]
            region = RegionSpec(str(rec["region_id"]), tuple(poly),
                                int(rec["direction_code"]), str(rec["state_code"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"region record {i}: {exc}") from None
        if region.region_id in regions:
            raise DataError(f"duplicate region id {region.region_id}")
        regions[region.region_id] = region
    return regions


def write_regions(fh: TextIO, regions: Iterable[RegionSpec]) -> None:
    records = [{"region_id": r.region_id, "direction_code": r.direction_code,
                "state_code": r.state_code, "polygon": [list(p) for p in r.polygon],
                "meters_per_pixel": 1.0} for r in regions]
    json.dump(records, fh, indent=1)
    fh.write("\n")


def read_annotations(fh: TextIO) -> list[StateAnnotation]:
    out = []
    header = None
    for lineno, line in enumerate(fh, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = [f.strip() for f in next(csv.reader([line]))]
        if header is None:
            header = fields
            if header != ["region_id", "start_s", "end_s", "label"]:
                raise DataError(f"line {lineno}: unrecognised annotation header")
            continue
        if len(fields) != 4:
            raise DataError(f"line {lineno}: expected 4 fields")
        try:
            out.append(StateAnnotation(fields[0], float(fields[1]), float(fields[2]), fields[3]))
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
    return out


def write_annotations(fh: TextIO, annotations: Iterable[StateAnnotation]) -> None:
    fh.write("region_id,start_s,end_s,label\n")
    for a in annotations:
        fh.write(f"{a.region_id},{a.start_s!r},{a.end_s!r},{a.label}\n")


# ---------------------------------------------------------------------------
# geometry


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(p, a, b, tol=_EDGE_TOL):
    length = math.hypot(b[0] - a[0], b[1] - a[1])
    if abs(_orient(a, b, p)) > tol * max(length, 1.0):
        return False
    return (min(a[0], b[0]) - tol <= p[0] <= max(a[0], b[0]) + tol
            and min(a[1], b[1]) - tol <= p[1] <= max(a[1], b[1]) + tol)


def _segments_cross(p1, p2, q1, q2):
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 and d2 and d3 and d4:
        return True
    return (_on_segment(p1, q1, q2, 0.0) or _on_segment(p2, q1, q2, 0.0)
            or _on_segment(q1, p1, p2, 0.0) or _on_segment(q2, p1, p2, 0.0))


def _is_simple(poly) -> bool:
    n = len(poly)
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent edges share a vertex
            if _segments_cross(*edges[i], *edges[j]):
                return False
    return True


def points_in_region(xy, region: RegionSpec) -> np.ndarray:
    """Vectorised even-odd membership for an (n, 2) array; boundary counts as inside."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    x, y = xy[:, 0], xy[:, 1]
    poly = region.polygon
    n = len(poly)
    inside = np.zeros(len(xy), dtype=bool)
    on_edge = np.zeros(len(xy), dtype=bool)
    tol = _EDGE_TOL
    for i in range(n):
        (ax, ay), (bx, by) = poly[i], poly[(i + 1) % n]
        length = math.hypot(bx - ax, by - ay)
        orient = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
        on_edge |= ((np.abs(orient) <= tol * max(length, 1.0))
                    & (min(ax, bx) - tol <= x) & (x <= max(ax, bx) + tol)
                    & (min(ay, by) - tol <= y) & (y <= max(ay, by) + tol))
        if ay == by:
            continue  # horizontal edges never straddle a horizontal ray
        straddle = (ay > y) != (by > y)
        x_cross = ax + (y - ay) * (bx - ax) / (by - ay)
        inside ^= straddle & (x < x_cross)
    return inside | on_edge


def point_in_region(p, region: RegionSpec) -> bool:
    """Even-odd membership test; points on the boundary count as inside."""
    return bool(points_in_region([(float(p[0]), float(p[1]))], region)[0])


# ---------------------------------------------------------------------------
# resampling and extraction


def resample(track: Trajectory, rate_hz: float = DEFAULT_RATE_HZ,
             method: str = "linear") -> Trajectory:
    """Resample onto the absolute grid ``k / rate_hz`` within the track's time range.

    ``method='linear'`` interpolates positions; ``'nearest'`` takes the raw
    point closest in time. No extrapolation happens outside the raw range.
    """
    if not rate_hz > 0:
        raise ValueError(f"rate_hz must be positive, got {rate_hz}")
    if len(track) == 0:
        raise ValueError("cannot resample an empty track")
    if len(track) == 1:
        return Trajectory(track.track_id, track.t.copy(), track.xy.copy())
    t0, t1 = float(track.t[0]), float(track.t[-1])
    k0 = math.ceil(t0 * rate_hz - _GRID_TOL)
    k1 = math.floor(t1 * rate_hz + _GRID_TOL)
    ks = np.arange(k0, k1 + 1)
    ts = ks / rate_hz
    if method == "linear":
        tq = np.clip(ts, t0, t1)
        xy = np.column_stack([np.interp(tq, track.t, track.xy[:, 0]),
                              np.interp(tq, track.t, track.xy[:, 1])])
    elif method == "nearest":
        idx = np.searchsorted(track.t, ts)
        idx = np.clip(idx, 1, len(track.t) - 1)
        left = track.t[idx - 1]
        right = track.t[idx]
        idx = np.where(ts - left <= right - ts, idx - 1, idx)
        xy = track.xy[idx]
    else:
        raise ValueError(f"unknown resampling method {method!r}")
    return Trajectory(track.track_id, ts, xy.reshape(-1, 2))


def extract_sequences(tracks: Iterable[Trajectory], regions: dict[str, RegionSpec],
                      annotations: Iterable[StateAnnotation],
                      rate_hz: float = DEFAULT_RATE_HZ,
                      min_users: int = DEFAULT_MIN_USERS,
                      method: str = "linear") -> list[RawSequence]:
    """Collect resampled track points per annotated spatio-temporal region.

    Frames run on the ``k / rate_hz`` grid from the first to the last grid
    time holding any point; interior frames without users are kept empty so
    spacing stays uniform. Sequences with fewer than ``min_users`` distinct
    track ids are dropped. Output is ordered by ``(region_id, start_s)``.
    """
    annotations = list(annotations)
    for a in annotations:
        if a.region_id not in regions:
            raise DataError(f"annotation references unknown region {a.region_id!r}")
    sampled = [resample(tr, rate_hz, method) for tr in tracks if len(tr)]
    t_first = np.array([tr.t[0] for tr in sampled])
    t_last = np.array([tr.t[-1] for tr in sampled])

    out = []
    for ann in sorted(annotations, key=lambda a: (a.region_id, a.start_s, a.end_s)):
        region = regions[ann.region_id]
        by_k: dict[int, list] = defaultdict(list)
        live = np.flatnonzero((t_last >= ann.start_s) & (t_first <= ann.end_s)) if sampled else []
        parts_id, parts_t, parts_xy = [], [], []
        for ti in live:
            tr = sampled[ti]
            lo = np.searchsorted(tr.t, ann.start_s, side="left")
            hi = np.searchsorted(tr.t, ann.end_s, side="right")
            parts_id.append(np.full(hi - lo, tr.track_id, dtype=np.int64))
            parts_t.append(tr.t[lo:hi])
            parts_xy.append(tr.xy[lo:hi])
        if parts_t:
            tids, ts, xy = (np.concatenate(parts_id), np.concatenate(parts_t),
                            np.concatenate(parts_xy))
            scaled = ts * rate_hz
            ks = np.round(scaled)
            keep = (np.abs(scaled - ks) <= _GRID_TOL) & points_in_region(xy, region)
            for tid, k, (x, y) in zip(tids[keep].tolist(), ks[keep].astype(np.int64).tolist(),
                                      xy[keep].tolist()):
                by_k[k].append((tid, x, y))
        ids = {u[0] for users in by_k.values() for u in users}
        if len(ids) < min_users or not by_k:
            continue
        k_lo, k_hi = min(by_k), max(by_k)
        frames = [(k / rate_hz, sorted(by_k.get(k, []))) for k in range(k_lo, k_hi + 1)]
        out.append(RawSequence(ann.region_id, ann.label, frames, len(ids),
                               ann.start_s, ann.end_s))
    return out


def load_sequences(traj_path, regions_path, annotations_path, rate_hz=DEFAULT_RATE_HZ,
                   min_users=DEFAULT_MIN_USERS, frame_rate=None, cal=None,
                   method="linear") -> list[RawSequence]:
    """Read the three input files and run ``extract_sequences``."""
    with open(traj_path, encoding="utf-8") as fh:
        tracks = parse_trajectories(fh, cal, frame_rate)
    with open(regions_path, encoding="utf-8") as fh:
        regions = read_regions(fh)
    with open(annotations_path, encoding="utf-8") as fh:
        annotations = read_annotations(fh)
    return extract_sequences(tracks, regions, annotations, rate_hz, min_users, method)


__all__ = [
    "Calibration", "DataError", "RawSequence", "RegionSpec", "StateAnnotation",
    "TrackPoint", "Trajectory", "extract_sequences", "load_sequences",
    "parse_trajectories", "point_in_region", "read_annotations", "read_regions",
    "resample", "write_annotations", "write_regions", "write_trajectories",
]
