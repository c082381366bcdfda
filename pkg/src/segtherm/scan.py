"""Single-mutant scan and threshold-based candidate selection.

For every (position, letter) pair the model is run on the variant's embedding
and the change in predicted stability versus the wild type is recorded. A
"temperature score" rescales those deltas to [-100, 100] by the largest
observed magnitude; candidates are positions inside high-importance segments
whose score clears a second threshold.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .embeddings import AA_ALPHABET, ResidueEmbedding, synth_embed
from .errors import MissingVariant


@dataclass
class SelectionCriteria:
    importance_threshold: float = 20.0   # on the 0-100 importance scale
    temperature_score_threshold: float = 50.0

    def __post_init__(self):
        if self.importance_threshold < 0 or self.temperature_score_threshold < 0:
            raise ValueError("thresholds must be >= 0")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ScanResult:
    wild_type: object                  # Prediction for the wild type
    sequence: str
    delta: np.ndarray                  # [L, 20] deg C, columns in AA_ALPHABET order
    importance: list = field(default_factory=list)  # per-segment scores (0-100)

    def temperature_scores(self):
        """Deltas rescaled to [-100, 100] by the max absolute delta."""
        peak = float(np.max(np.abs(self.delta)))
        if peak == 0.0:
            return np.zeros_like(self.delta)
        return self.delta / peak * 100.0

    def to_json_dict(self):
        return {
            "wild_type": self.wild_type.to_json_dict(),
            "sequence": self.sequence,
            "alphabet": AA_ALPHABET,
            "delta": self.delta.tolist(),
            "temperature_scores": self.temperature_scores().tolist(),
            "importance": list(self.importance),
        }

    def write_heatmap_csv(self, path):
        """Temperature-score grid: rows = 1-based positions, cols = amino acids."""
        scores = self.temperature_scores()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["position", "wild_type_aa"] + list(AA_ALPHABET))
            for i, row in enumerate(scores):
                writer.writerow([i + 1, self.sequence[i]] + [f"{v:.4f}" for v in row])


class SynthVariantProvider:
    """Variant embeddings via the synthetic embedder (tests, demos)."""

    def __init__(self, sequence, dim, seed):
        self.sequence = sequence
        self.dim = dim
        self.seed = seed

    def __call__(self, position, letter):
        seq = self.sequence[:position] + letter + self.sequence[position + 1 :]
        return synth_embed(seq, self.dim, self.seed, accession=f"variant_{position + 1}{letter}")


class FileVariantProvider:
    """Variant embeddings from a manifest keyed ``<1-based position><letter>``."""

    def __init__(self, entries, reader):
        self.entries = entries
        self.reader = reader

    def __call__(self, position, letter):
        key = f"{position + 1}{letter}"
        if key not in self.entries:
            raise MissingVariant(position + 1, letter)
        return self.reader(self.entries[key])


def scan(wild_type: ResidueEmbedding, sequence: str, provider, model,
         positions=None) -> ScanResult:
    """Delta matrix over requested positions (default: all) and all 20 letters.

    Identity substitutions are zero by definition and skip the forward pass.
    """
    if len(sequence) != wild_type.length:
        raise ValueError("sequence length does not match the wild-type embedding")
    wt_pred = model.predict(wild_type)
    base = wt_pred.y_hat
    n = wild_type.length
    delta = np.zeros((n, len(AA_ALPHABET)), dtype=np.float64)
    todo = range(n) if positions is None else positions
    for pos in todo:
        for ai, letter in enumerate(AA_ALPHABET):
            if letter == sequence[pos]:
                continue
            var = provider(pos, letter)
            delta[pos, ai] = model.predict_value(var) - base
    importance = [w * 100.0 for _, _, w in wt_pred.importance]
    return ScanResult(wt_pred, sequence, delta, importance)


def select_candidates(result: ScanResult, criteria: SelectionCriteria):
    """(position, letter, delta, segment_importance) sorted by descending score.

    A position qualifies when its segment's importance exceeds the importance
    threshold and its temperature score exceeds the score threshold.
    """
    scores = result.temperature_scores()
    spans = [(s, e) for s, e, _ in result.wild_type.importance]
    out = []
    for pos in range(result.delta.shape[0]):
        seg_idx = next((i for i, (s, e) in enumerate(spans) if s <= pos < e), None)
        if seg_idx is None:
            continue  # residues past the last full segment carry no importance
        seg_imp = result.importance[seg_idx]
        if seg_imp <= criteria.importance_threshold:
            continue
        for ai, letter in enumerate(AA_ALPHABET):
            if scores[pos, ai] > criteria.temperature_score_threshold:
                out.append((pos + 1, letter, float(result.delta[pos, ai]), seg_imp))
    out.sort(key=lambda c: (-c[2], c[0], c[1]))
    return out
