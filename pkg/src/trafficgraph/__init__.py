"""Traffic-state identification from spatio-temporal traffic graphs.

Pipeline: trajectories -> per-region sequences (``ingest``) -> per-frame
adjacency matrices (``graph``) -> fixed-length feature tensors
(``features``) -> recurrent classifiers (``neural``), evaluated by
``harness`` and driven from ``cli``.
"""

__version__ = "0.1.0"

LABELS = ("neutral", "clumping", "unclumping")
LABEL_CODES = {"n": "neutral", "c": "clumping", "u": "unclumping"}
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}


def label_index(label):
    """Map a label name or its one-letter code to its class index (N=0, C=1, U=2)."""
    key = LABEL_CODES.get(label, label)
    try:
        return LABEL_INDEX[key]
    except KeyError:
        raise ValueError(f"unknown traffic state label {label!r}") from None
