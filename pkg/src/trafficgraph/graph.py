"""Per-frame traffic graphs and their weighted adjacency matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_MU_M = 10.0
DEFAULT_CANVAS = 110
DEFAULT_IMG = 56


@dataclass
class AdjacencyMatrix:
    ids: np.ndarray  # ascending track ids
    w: np.ndarray    # (n, n)

    @property
    def n(self) -> int:
        return len(self.ids)


@dataclass
class AdjacencySequence:
    label: str
    region_id: str
    mats: list
    key: str = ""


def build_adjacency(frame, mu_m: float = DEFAULT_MU_M) -> AdjacencyMatrix:
    """Weighted adjacency ``w_ij = exp(-d_ij)`` for pairs closer than ``mu_m``.

    ``frame`` is a sequence of ``(track_id, x, y)``. Rows follow ascending
    track id, so input order does not matter.
    """
    if not mu_m > 0:
        raise ValueError(f"mu_m must be positive, got {mu_m}")
    ids = np.array([int(u[0]) for u in frame], dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValueError("duplicate track_id within a frame")
    order = np.argsort(ids, kind="stable")
    ids = ids[order]
    xy = np.array([(float(u[1]), float(u[2])) for u in frame], dtype=float).reshape(-1, 2)[order]
    n = len(ids)
    w = np.zeros((n, n))
    if n > 1:
        iu, ju = np.triu_indices(n, k=1)
        dx = xy[iu, 0] - xy[ju, 0]
        dy = xy[iu, 1] - xy[ju, 1]
        d = np.sqrt(dx * dx + dy * dy)
        close = d < mu_m
        # math.exp per pair: scalar libm results, independent of array length
        vals = np.zeros(len(d))
        vals[close] = [math.exp(-v) for v in d[close].tolist()]
        w[iu, ju] = vals
        w[ju, iu] = vals
    return AdjacencyMatrix(ids, w)


def density(m: AdjacencyMatrix) -> float:
    """Fraction of strictly positive off-diagonal entries (0 for n <= 1)."""
    n = m.n
    if n <= 1:
        return 0.0
    nnz = np.count_nonzero(m.w > 0) - np.count_nonzero(np.diag(m.w) > 0)
    return nnz / (n * (n - 1))


def sequence_slots(mats) -> dict[int, int]:
    """Assign every track id of a sequence a fixed canvas row.

    Ids present in the first frame come first in ascending order; ids that
    appear later are appended, ascending within the frame they first show up.
    """
    slots: dict[int, int] = {}
    for m in mats:
        for tid in sorted(int(i) for i in m.ids if int(i) not in slots):
            slots[tid] = len(slots)
    return slots


def _area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix averaging ``n_in`` cells into ``n_out`` equal bins."""
    if n_in == n_out:
        return np.eye(n_in)
    edges_out = np.arange(n_out + 1) * (n_in / n_out)
    lo = np.maximum(edges_out[:-1, None], np.arange(n_in)[None, :])
    hi = np.minimum(edges_out[1:, None], np.arange(1, n_in + 1)[None, :])
    r = np.clip(hi - lo, 0.0, None)
    return r / r.sum(axis=1, keepdims=True)


def render_image(m: AdjacencyMatrix, canvas_n: int = DEFAULT_CANVAS,
                 out_size: int = DEFAULT_IMG, slots: dict[int, int] | None = None) -> np.ndarray:
    """Embed ``m.w`` in a ``canvas_n`` square and area-average it to ``out_size``.

    Without ``slots`` the matrix sits in the top-left ``n x n`` block;
    with ``slots`` each id keeps the row given by the sequence-wide map.
    """
    if out_size < 1:
        raise ValueError("out_size must be >= 1")
    if m.n > canvas_n:
        raise ValueError(f"{m.n} users exceed canvas capacity {canvas_n}")
    canvas = np.zeros((canvas_n, canvas_n))
    if m.n:
        if slots is None:
            pos = np.arange(m.n)
        else:
            pos = np.array([slots[int(i)] for i in m.ids])
            if pos.max() >= canvas_n:
                raise ValueError(f"sequence uses {pos.max() + 1} slots, canvas holds {canvas_n}")
        canvas[np.ix_(pos, pos)] = m.w
    r = _area_matrix(canvas_n, out_size)
    img = r @ canvas @ r.T
    return np.clip(img, 0.0, 1.0)


def build_sequence(raw, mu_m: float = DEFAULT_MU_M) -> AdjacencySequence:
    mats = [build_adjacency(users, mu_m) for _, users in raw.frames]
    return AdjacencySequence(raw.label, raw.region_id, mats, getattr(raw, "key", ""))


def write_pgm(fh, img: np.ndarray) -> None:
    """Plain-text graymap, maxval 255, value ``round(255 * v)``."""
    h, w = img.shape
    vals = np.floor(255.0 * np.clip(img, 0.0, 1.0) + 0.5).astype(int)
    fh.write(f"P2\n{w} {h}\n255\n")
    for row in vals:
        fh.write(" ".join(str(v) for v in row) + "\n")


def read_pgm(fh) -> np.ndarray:
    tokens = []
    for line in fh:
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise ValueError("not a plain PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    vals = np.array([int(v) for v in tokens[4:4 + w * h]], dtype=float)
    return vals.reshape(h, w) / maxval
