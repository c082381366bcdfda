"""Dataset parsing and the cluster-aware train/validation/test split.

The split mirrors the partitioning strategy of the source dataset: a fixed
random 10% test set drawn first, then the remainder grouped by temperature
interval, clustered by sequence similarity within each group, and whole
clusters dealt 90/10 to train/validation so near-duplicates never straddle
the two.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .embeddings import AA_ALPHABET
from .errors import DuplicateError, ParseError

DATASET_HEADER = ["accession", "sequence", "temperature_c"]
DEFAULT_TEMP_BOUNDARIES = [45.0, 70.0, 100.0]


@dataclass
class DatasetRecord:
    accession: str
    sequence: str
    temperature: float


@dataclass
class SplitAssignment:
    # accession -> "train" | "validation" | "test"
    split: dict
    # accession -> cluster id (non-test records only)
    cluster: dict

    def subset(self, name):
        return sorted(a for a, s in self.split.items() if s == name)

    def to_tsv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("accession\tsplit\tcluster_id\n")
            for acc in sorted(self.split):
                cid = self.cluster.get(acc, "")
                fh.write(f"{acc}\t{self.split[acc]}\t{cid}\n")

    @classmethod
    def from_tsv(cls, path):
        split, cluster = {}, {}
        with open(path, encoding="utf-8") as fh:
            reader = csv.reader(fh, delimiter="\t")
            header = next(reader, None)
            if header != ["accession", "split", "cluster_id"]:
                raise ParseError(f"{path}: unexpected split header {header}", line=1)
            for lineno, row in enumerate(reader, 2):
                if not row:
                    continue
                if len(row) != 3 or row[1] not in ("train", "validation", "test"):
                    raise ParseError(f"{path}: malformed split row", line=lineno)
                split[row[0]] = row[1]
                if row[2]:
                    cluster[row[0]] = row[2]
        return cls(split, cluster)


def parse_dataset(path):
    """Read the curated TSV: accession<TAB>sequence<TAB>temperature_c."""
    records = []
    seen = set()
    alphabet = set(AA_ALPHABET)
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header != DATASET_HEADER:
            raise ParseError(f"{path}: expected header {DATASET_HEADER}, got {header}", line=1)
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 columns", line=lineno)
            acc, seq, temp_s = row
            if acc in seen:
                raise DuplicateError(f"{path}:{lineno}: duplicate accession {acc!r}")
            if not seq or set(seq) - alphabet:
                raise ParseError(
                    f"{path}:{lineno}: sequence has non-canonical letters", line=lineno
                )
            try:
                temp = float(temp_s)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad temperature {temp_s!r}", line=lineno)
            if not math.isfinite(temp):
                raise ParseError(f"{path}:{lineno}: non-finite temperature", line=lineno)
            seen.add(acc)
            records.append(DatasetRecord(acc, seq, temp))
    return records


def write_dataset(records, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(DATASET_HEADER) + "\n")
        for r in records:
            fh.write(f"{r.accession}\t{r.sequence}\t{r.temperature:g}\n")


# ---------------------------------------------------------------------------
# similarity clustering (stand-in for an external sequence clusterer)
# ---------------------------------------------------------------------------

def _kmer_set(seq, k):
    return {seq[i : i + k] for i in range(len(seq) - k + 1)}


def kmer_similarity(a, b, kmer=5):
    """Jaccard index of k-mer sets; k shrinks to the shorter sequence (floor 1)."""
    k = max(1, min(kmer, len(a), len(b)))
    sa, sb = _kmer_set(a, k), _kmer_set(b, k)
    union = len(sa | sb)
    return len(sa & sb) / union if union else 0.0


def greedy_cluster(records, threshold=0.5, kmer=5):
    """Greedy representative clustering; returns accession -> local cluster index.

    Records are visited longest-first (accession breaks ties) so the result is
    deterministic. Each record joins the first cluster whose representative is
    at least ``threshold`` similar, else founds a new cluster.
    """
    ordered = sorted(records, key=lambda r: (-len(r.sequence), r.accession))
    reps = []  # (cluster_id, sequence)
    assignment = {}
    for rec in ordered:
        for cid, rep_seq in reps:
            if kmer_similarity(rec.sequence, rep_seq, kmer) >= threshold:
                assignment[rec.accession] = cid
                break
        else:
            cid = len(reps)
            reps.append((cid, rec.sequence))
            assignment[rec.accession] = cid
    return assignment


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def make_split(records, seed, test_frac=0.10, val_cluster_frac=0.10,
               temp_boundaries=DEFAULT_TEMP_BOUNDARIES,
               cluster_threshold=0.5, kmer=5):
    """Seeded test draw + per-interval clustering + 90/10 cluster assignment."""
    if len(records) < 10:
        raise ParseError("need at least 10 records to split")
    rng = np.random.default_rng(seed)
    ordered = sorted(records, key=lambda r: r.accession)
    n_test = _round_half_up(test_frac * len(ordered))
    test_idx = set(rng.choice(len(ordered), size=n_test, replace=False).tolist())

    split = {}
    cluster = {}
    rest = []
    for i, rec in enumerate(ordered):
        if i in test_idx:
            split[rec.accession] = "test"
        else:
            rest.append(rec)

    bounds = list(temp_boundaries)

    def interval_of(t):
        return sum(t >= b for b in bounds)

    for gi in range(len(bounds) + 1):
        group = [r for r in rest if interval_of(r.temperature) == gi]
        if not group:
            continue
        local = greedy_cluster(group, threshold=cluster_threshold, kmer=kmer)
        n_clusters = len(set(local.values()))
        order = rng.permutation(n_clusters)
        if n_clusters >= 2:
            n_val = min(n_clusters - 1, max(1, _round_half_up(val_cluster_frac * n_clusters)))
        else:
            n_val = 0
        val_clusters = set(order[:n_val].tolist())
        for rec in group:
            cid = local[rec.accession]
            split[rec.accession] = "validation" if cid in val_clusters else "train"
            cluster[rec.accession] = f"g{gi}c{cid}"
    return SplitAssignment(split, cluster)


def split_summary(records, assignment, temp_boundaries=DEFAULT_TEMP_BOUNDARIES):
    """Per-interval table: range, sequences, clusters, train, validation, test."""
    bounds = list(temp_boundaries)
    labels = []
    edges = [-math.inf] + bounds + [math.inf]
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == -math.inf:
            labels.append(f"t < {hi:g}")
        elif hi == math.inf:
            labels.append(f"t >= {lo:g}")
        else:
            labels.append(f"{lo:g} <= t < {hi:g}")

    rows = []
    for gi, label in enumerate(labels):
        recs = [r for r in records if sum(r.temperature >= b for b in bounds) == gi]
        accs = {r.accession for r in recs}
        clusters = {assignment.cluster[a] for a in accs if a in assignment.cluster}
        counts = {"train": 0, "validation": 0, "test": 0}
        for a in accs:
            counts[assignment.split[a]] += 1
        rows.append(
            {
                "range": label,
                "sequences": len(recs),
                "clusters": len(clusters),
                "train": counts["train"],
                "validation": counts["validation"],
                "test": counts["test"],
            }
        )
    return rows
