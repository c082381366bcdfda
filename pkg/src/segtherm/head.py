"""Attention pooling and the multi-scale prediction head.

Each scale is pooled into a single vector by a small tanh scoring network,
read out by a scalar affine layer, and the per-scale outputs are combined
into a point estimate (mean), a fluctuation band (min/max), and a segment
importance profile (cross-scale average of the pooling weights, aligned on
the scale-0 segment grid).
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass
class Prediction:
    accession: str
    y_hat: float
    y_min: float
    y_max: float
    per_scale: list
    importance: list  # [(start_residue, end_residue, weight)]; weights sum to 1

    def to_json_dict(self):
        return {
            "accession": self.accession,
            "y_hat": self.y_hat,
            "y_min": self.y_min,
            "y_max": self.y_max,
            "per_scale": self.per_scale,
            "importance": [
                {"start_residue": s, "end_residue": e, "score": w * 100.0}
                for s, e, w in self.importance
            ],
        }


def attention_pool(y, params, prefix):
    """[B, N, D] -> pooled [B, D] and weights [B, N] (a probability vector)."""
    bsz, n_seg, dim = y.data.shape
    hidden = ad.tanh(ad.linear_nb(y, params[prefix + ".w1"]))
    scores = ad.linear_nb(hidden, params[prefix + ".w2"])
    alpha = ad.softmax(ad.reshape(scores, (bsz, n_seg)), axis=-1)
    pooled = ad.reshape(ad.bmm(ad.reshape(alpha, (bsz, 1, n_seg)), y), (bsz, dim))
    return pooled, alpha


def predict_scale(pooled, params, prefix):
    """Scalar affine readout per sample: [B, D] -> [B, 1]."""
    return ad.linear(pooled, params[prefix + ".wreg"], params[prefix + ".breg"])


def combine_scales(per_scale_preds):
    """Mean of the per-scale outputs (the band is taken from their raw values)."""
    return ad.mul_const(ad.ssum(per_scale_preds), 1.0 / len(per_scale_preds))


def expand_importance(alphas, seg_lens, n_scale0):
    """Average per-scale pooling weights on the scale-0 segment grid.

    A scale-i segment spans seg_lens[i] * 2**i residues; its weight is spread
    over the scale-0 segments it covers, proportional to residue overlap.
    Returns weights of shape [B, n_scale0], renormalized to sum to 1.
    """
    bsz = alphas[0].shape[0]
    l0 = seg_lens[0]
    acc = np.zeros((bsz, n_scale0), dtype=np.float64)
    for i, alpha in enumerate(alphas):
        span = seg_lens[i] * (1 << i)
        expanded = np.zeros((bsz, n_scale0), dtype=np.float64)
        for j in range(alpha.shape[1]):
            lo, hi = j * span, (j + 1) * span
            m_lo = lo // l0
            m_hi = min(n_scale0, -(-hi // l0))
            for m in range(m_lo, m_hi):
                overlap = min(hi, (m + 1) * l0) - max(lo, m * l0)
                if overlap > 0:
                    expanded[:, m] += alpha[:, j] * (overlap / span)
        acc += expanded
    acc /= len(alphas)
    total = acc.sum(axis=1, keepdims=True)
    return acc / np.maximum(total, 1e-30)


def build_prediction(accession, per_scale_values, alphas, seg_lens, n_scale0,
                     target_mean=0.0, target_std=1.0):
    """Assemble a Prediction from raw (normalized-space) per-scale outputs."""
    scaled = [target_mean + target_std * float(v) for v in per_scale_values]
    weights = expand_importance(alphas, seg_lens, n_scale0)[0]
    spans = [(m * seg_lens[0], (m + 1) * seg_lens[0]) for m in range(n_scale0)]
    return Prediction(
        accession=accession,
        y_hat=float(np.mean(scaled)),
        y_min=float(np.min(scaled)),
        y_max=float(np.max(scaled)),
        per_scale=scaled,
        importance=[(s, e, float(w)) for (s, e), w in zip(spans, weights)],
    )
