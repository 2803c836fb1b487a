"""Evaluation protocols: grouped random splits, temporal-network variants,
per-class accuracy and confusion matrices, leave-one-intersection-out."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import LABELS
from .features import FEATURE_DIM
from .graph import write_pgm
from .neural import TemporalModel, TemporalModelConfig, TrainConfig, as_arrays, train

# the seven comparison variants, in report order
VARIANTS = {
    "GRU(100,50)": dict(cell="gru", layer_sizes=(100, 50), attention=False, dense_units=30),
    "GRU(50,25)": dict(cell="gru", layer_sizes=(50, 25), attention=False, dense_units=None),
    "GRU-A(100,50)": dict(cell="gru", layer_sizes=(100, 50), attention=True, dense_units=30),
    "LSTM(100,50)": dict(cell="lstm", layer_sizes=(100, 50), attention=False, dense_units=None),
    "LSTM-A(100,50)": dict(cell="lstm", layer_sizes=(100, 50), attention=True, dense_units=30),
    "RNN(100,50)": dict(cell="rnn", layer_sizes=(100, 50), attention=False, dense_units=None),
    "RNN-A(100,50)": dict(cell="rnn", layer_sizes=(100, 50), attention=True, dense_units=30),
}


class UnknownVariantError(KeyError):
    pass


def canonical_variant(name: str) -> str:
    key = re.sub(r"\s+", "", name).upper()
    for v in VARIANTS:
        if v.upper() == key:
            return v
    raise UnknownVariantError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}")


@dataclass(frozen=True)
class VariantSpec:
    name: str
    config: TemporalModelConfig

    @classmethod
    def from_name(cls, name: str, input_dim: int = FEATURE_DIM) -> "VariantSpec":
        name = canonical_variant(name)
        return cls(name, TemporalModelConfig(input_dim=input_dim, **VARIANTS[name]))


# ---------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.70
    val_frac: float = 0.10
    test_frac: float = 0.20
    seed: int = 0

    def __post_init__(self):
        if min(self.train_frac, self.val_frac, self.test_frac) < 0:
            raise ValueError("fractions must be non-negative")
        if abs(self.train_frac + self.val_frac + self.test_frac - 1.0) > 1e-9:
            raise ValueError("fractions must sum to 1")


def _frac(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10**6)


def split_sizes(n: int, spec: SplitSpec = SplitSpec()) -> tuple[int, int, int]:
    """``val = ceil(n * val_frac)``, ``test = round_half_up(n * test_frac)``,
    the remainder goes to train (exact rational arithmetic)."""
    val = math.ceil(n * _frac(spec.val_frac))
    test = math.floor(n * _frac(spec.test_frac) + Fraction(1, 2))
    val = min(val, n)
    test = min(test, n - val)
    return n - val - test, val, test


def split(dataset, spec: SplitSpec = SplitSpec(), groups=None):
    """Seeded shuffle then contiguous partition into ``(train, val, test)``.

    With ``groups`` (one key per item, e.g. the intersection) every group is
    split separately with ``split_sizes`` and the parts are concatenated in
    first-appearance order of the groups.
    """
    items = list(dataset)
    if groups is None:
        groups = [None] * len(items)
    groups = list(groups)
    if len(groups) != len(items):
        raise ValueError("groups must align with the dataset")
    order = list(dict.fromkeys(groups))
    rng = np.random.default_rng(spec.seed)
    parts = ([], [], [])
    for g in order:
        idx = [i for i, gi in enumerate(groups) if gi == g]
        perm = [idx[j] for j in rng.permutation(len(idx))]
        n_tr, n_va, _ = split_sizes(len(idx), spec)
        for part, chunk in zip(parts, (perm[:n_tr], perm[n_tr:n_tr + n_va], perm[n_tr + n_va:])):
            part.extend(items[i] for i in chunk)
    return parts


def intersection_of(seq) -> str:
    """Intersection key: the region-id prefix before ``:`` (whole id otherwise)."""
    return seq.region_id.split(":", 1)[0]


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class Evaluation:
    per_class: np.ndarray   # accuracy per class, N C U (nan for absent classes)
    total: float
    confusion: np.ndarray   # rows true N C U, columns predicted

    def as_row(self) -> list[float]:
        return [*(100.0 * self.per_class), 100.0 * self.total]


def confusion_matrix(y_true, y_pred, k: int = 3) -> np.ndarray:
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def evaluate_predictions(y_true, y_pred) -> Evaluation:
    cm = confusion_matrix(y_true, y_pred)
    rows = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(rows > 0, np.diag(cm) / np.maximum(rows, 1), np.nan)
    total = float(np.trace(cm) / cm.sum()) if cm.sum() else float("nan")
    return Evaluation(per_class, total, cm)


def evaluate(model: TemporalModel, test) -> Evaluation:
    X, y = as_arrays(test)
    pred = model.predict(X) if len(y) else np.zeros(0, dtype=np.int64)
    return evaluate_predictions(y, pred)


# ---------------------------------------------------------------------------
# protocols


@dataclass
class VariantResult:
    name: str
    evaluation: Evaluation
    history: list


def run_variants(dataset, variants, tc: TrainConfig = TrainConfig(),
                 spec: SplitSpec | None = None, groups=None) -> list[VariantResult]:
    """Train and test every variant on the same split and seeds."""
    dataset = list(dataset)
    spec = spec or SplitSpec(seed=tc.seed)
    if groups is None:
        groups = [intersection_of(s) for s in dataset]
    tr, va, te = split(dataset, spec, groups)
    input_dim = dataset[0].steps.shape[1] if dataset else FEATURE_DIM
    out = []
    for v in variants:
        vs = v if isinstance(v, VariantSpec) else VariantSpec.from_name(v, input_dim)
        model = TemporalModel.initialize(vs.config, tc.seed)
        best, hist = train(model, tr, tc, va)
        out.append(VariantResult(vs.name, evaluate(best, te), hist))
    return out


def write_results_table(fh, results) -> None:
    """Per-class accuracy table as CSV; names such as ``GRU(100,50)`` are quoted."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["temporal_network", "neutral", "clumping", "unclumping", "total"])
    for r in results:
        w.writerow([r.name, *(f"{v:.2f}" for v in r.evaluation.as_row())])


@dataclass
class LeaveOneOutResult:
    names: list              # intersection order
    accuracy: np.ndarray     # [trained_on, tested_on]
    confusion: np.ndarray    # [trained_on, tested_on, 3, 3]
    evaluations: dict


def leave_one_out(datasets: dict, variant="GRU-A(100,50)", tc: TrainConfig = TrainConfig(),
                  spec: SplitSpec | None = None) -> LeaveOneOutResult:
    """Train on one intersection (its own train/val split) and test on each
    intersection's test split."""
    names = list(datasets)
    for name in names:
        if not datasets[name]:
            raise ValueError(f"intersection {name!r} has no sequences")
    spec = spec or SplitSpec(seed=tc.seed)
    parts = {name: split(datasets[name], spec) for name in names}
    input_dim = next(iter(datasets.values()))[0].steps.shape[1]
    vs = variant if isinstance(variant, VariantSpec) else VariantSpec.from_name(variant, input_dim)
    k = len(names)
    acc = np.zeros((k, k))
    cms = np.zeros((k, k, 3, 3), dtype=np.int64)
    evals = {}
    for i, src in enumerate(names):
        tr, va, _ = parts[src]
        train_keys = {s.key for s in tr} | {s.key for s in va}
        for other in names:
            if other != src:
                leaked = train_keys & {s.key for s in datasets[other]}
                assert not leaked, f"sequences of {other} leaked into training: {sorted(leaked)[:3]}"
        model = TemporalModel.initialize(vs.config, tc.seed)
        best, _ = train(model, tr, tc, va)
        for j, dst in enumerate(names):
            test = parts[dst][2]
            assert not train_keys & {s.key for s in test}, "test sequence present in training data"
            ev = evaluate(best, test)
            evals[(src, dst)] = ev
            acc[i, j] = ev.total
            cms[i, j] = ev.confusion
    return LeaveOneOutResult(names, acc, cms, evals)


def group_by_intersection(seqs) -> dict:
    out: dict = {}
    for s in seqs:
        out.setdefault(intersection_of(s), []).append(s)
    return out


def write_confusion_csv(fh, cm, title: str = "") -> None:
    if title:
        fh.write(f"# {title}\n")
    fh.write("true\\pred,N,C,U\n")
    for lab, row in zip("NCU", cm):
        fh.write(lab + "," + ",".join(str(int(v)) for v in row) + "\n")


def confusion_image(cm, cell: int = 16) -> np.ndarray:
    """Row-normalised confusion matrix upscaled to blocks for a PGM heat map."""
    cm = np.asarray(cm, dtype=float)
    rows = cm.sum(axis=1, keepdims=True)
    norm = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    return np.kron(norm, np.ones((cell, cell)))


def write_confusion_pgm(fh, cm) -> None:
    write_pgm(fh, confusion_image(cm))


__all__ = [
    "Evaluation", "LABELS", "UnknownVariantError", "LeaveOneOutResult", "SplitSpec", "VARIANTS", "VariantResult",
    "VariantSpec", "canonical_variant", "confusion_matrix", "evaluate", "evaluate_predictions",
    "group_by_intersection", "intersection_of", "leave_one_out", "run_variants", "split",
    "split_sizes", "write_confusion_csv", "write_confusion_pgm", "write_results_table",
]
