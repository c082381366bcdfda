"""Training loss weights and the evaluation metric suite.

The loss reweights squared errors by the true temperature's interval so that
sparse extreme-temperature samples are not drowned out by the mid-range bulk.
Weights default to inverse interval frequency, normalized so the
count-weighted mean weight is 1.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, UndefinedMetric

logger = logging.getLogger(__name__)

DEFAULT_BOUNDARIES = [45.0, 70.0, 100.0]   # loss intervals (Table-style 4 ranges)
DEFAULT_MAE_BOUNDARIES = [45.0, 70.0]      # grouped-MAE buckets


@dataclass
class WeightTable:
    boundaries: list          # ascending interior boundaries; K = len + 1 intervals
    weights: list             # one positive weight per interval

    def interval_index(self, t):
        idx = 0
        for b in self.boundaries:
            if t >= b:
                idx += 1
        return idx

    def weight_for(self, t):
        return self.weights[self.interval_index(t)]

    def labels(self):
        bounds = [-math.inf] + list(self.boundaries) + [math.inf]
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            if lo == -math.inf:
                out.append(f"<{hi:g}")
            elif hi == math.inf:
                out.append(f">={lo:g}")
            else:
                out.append(f"{lo:g}-{hi:g}")
        return out

    def to_dict(self):
        return {"boundaries": list(self.boundaries), "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["boundaries"]), list(d["weights"]))

    @classmethod
    def uniform(cls, boundaries=DEFAULT_BOUNDARIES):
        return cls(list(boundaries), [1.0] * (len(boundaries) + 1))


def build_weight_table(labels, boundaries=DEFAULT_BOUNDARIES) -> WeightTable:
    """Inverse-frequency weights: w_k = N / (K * count_k).

    Empty intervals get the maximum weight over nonempty ones (with a warning)
    so the table stays total over the real line.
    """
    table = WeightTable(list(boundaries), [1.0] * (len(boundaries) + 1))
    k = len(table.weights)
    counts = [0] * k
    for t in labels:
        counts[table.interval_index(t)] += 1
    n = len(labels)
    nonempty = [n / (k * c) for c in counts if c > 0]
    cap = max(nonempty)
    weights = []
    for i, c in enumerate(counts):
        if c == 0:
            logger.warning("interval %s has no samples; weight capped at %.4g",
                           table.labels()[i], cap)
            weights.append(cap)
        else:
            weights.append(n / (k * c))
    table.weights = weights
    return table


# ---------------------------------------------------------------------------
# scalar metrics (plain numpy; the differentiable loss lives in train.py)
# ---------------------------------------------------------------------------

def _check_pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1 or pred.size < 1:
        raise ShapeError(f"metric inputs must be equal-length 1D, got {pred.shape} vs {truth.shape}")
    return pred, truth


def rmse(pred, truth):
    pred, truth = _check_pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mae(pred, truth):
    pred, truth = _check_pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def weighted_rmse(pred, truth, table: WeightTable):
    """sqrt(mean(w(t_i) * (pred_i - truth_i)^2)); w keyed on the TRUE value."""
    pred, truth = _check_pair(pred, truth)
    w = np.array([table.weight_for(t) for t in truth])
    return float(np.sqrt(np.mean(w * (pred - truth) ** 2)))


def pearson(pred, truth):
    pred, truth = _check_pair(pred, truth)
    if pred.size < 2:
        raise UndefinedMetric("pearson needs at least 2 samples")
    dx = pred - pred.mean()
    dy = truth - truth.mean()
    sx = np.sqrt(np.sum(dx * dx))
    sy = np.sqrt(np.sum(dy * dy))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedMetric("pearson undefined for a constant vector")
    return float(np.sum(dx * dy) / (sx * sy))


def _average_ranks(values):
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    srt = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and srt[j + 1] == srt[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average of 1-based ranks
        i = j + 1
    return ranks


def spearman(pred, truth):
    """Pearson on average ranks (ties share the mean of their rank span)."""
    pred, truth = _check_pair(pred, truth)
    if pred.size < 2:
        raise UndefinedMetric("spearman needs at least 2 samples")
    return pearson(_average_ranks(pred), _average_ranks(truth))


def grouped_mae(pred, truth, boundaries=DEFAULT_MAE_BOUNDARIES):
    """MAE per true-temperature bucket; empty buckets are omitted."""
    pred, truth = _check_pair(pred, truth)
    table = WeightTable(list(boundaries), [1.0] * (len(boundaries) + 1))
    out = {}
    for label_idx, label in enumerate(table.labels()):
        sel = np.array([table.interval_index(t) == label_idx for t in truth])
        if sel.any():
            out[label] = {
                "mae": float(np.mean(np.abs(pred[sel] - truth[sel]))),
                "count": int(sel.sum()),
            }
    return out


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    rmse: float
    mae: float
    pearson: float
    spearman: float
    pearson_defined: bool
    spearman_defined: bool
    grouped_mae: dict = field(default_factory=dict)
    count: int = 0

    def to_dict(self):
        return {
            "rmse": self.rmse,
            "mae": self.mae,
            "pearson": self.pearson,
            "spearman": self.spearman,
            "pearson_defined": self.pearson_defined,
            "spearman_defined": self.spearman_defined,
            "grouped_mae": self.grouped_mae,
            "count": self.count,
        }

    def to_table(self):
        lines = [
            f"samples    {self.count}",
            f"RMSE       {self.rmse:.4f}",
            f"MAE        {self.mae:.4f}",
            f"Pearson    {self.pearson:.4f}" + ("" if self.pearson_defined else "  (undefined)"),
            f"Spearman   {self.spearman:.4f}" + ("" if self.spearman_defined else "  (undefined)"),
        ]
        for label, entry in self.grouped_mae.items():
            lines.append(f"MAE[{label}]  {entry['mae']:.4f}  (n={entry['count']})")
        return "\n".join(lines)


def evaluate(pred, truth, boundaries=DEFAULT_MAE_BOUNDARIES) -> EvalReport:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    try:
        r = pearson(pred, truth)
        r_ok = True
    except UndefinedMetric:
        r, r_ok = math.nan, False
    try:
        rho = spearman(pred, truth)
        rho_ok = True
    except UndefinedMetric:
        rho, rho_ok = math.nan, False
    return EvalReport(
        rmse=rmse(pred, truth),
        mae=mae(pred, truth),
        pearson=r,
        spearman=rho,
        pearson_defined=r_ok,
        spearman_defined=rho_ok,
        grouped_mae=grouped_mae(pred, truth, boundaries),
        count=len(pred),
    )
