"""Per-residue embedding records, the SEGT binary format, and a synthetic embedder.

Embeddings are produced externally by a protein language model and consumed
here from files. ``synth_embed`` is a deterministic, hash-based stand-in so
the whole pipeline runs without the external model.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AlphabetError, DuplicateError, FormatError, UnsupportedVersion

AA_ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
AA_INDEX = {aa: i for i, aa in enumerate(AA_ALPHABET)}

MAGIC = b"SEGT"
FORMAT_VERSION = 1


@dataclass
class ResidueEmbedding:
    accession: str
    values: np.ndarray  # [L, D] float32

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise FormatError("embedding must be a non-empty L x D matrix")

    @property
    def length(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]


def write_embedding(emb: ResidueEmbedding, path) -> None:
    acc = emb.accession.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, emb.length, emb.dim))
        fh.write(struct.pack("<H", len(acc)))
        fh.write(acc)
        fh.write(emb.values.astype("<f4").tobytes())


def read_embedding(path) -> ResidueEmbedding:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic")
    if len(raw) < 18:
        raise FormatError(f"{path}: truncated header")
    version, n_res, dim = struct.unpack_from("<III", raw, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: unsupported format version {version}")
    (acc_len,) = struct.unpack_from("<H", raw, 16)
    header_end = 18 + acc_len
    payload = n_res * dim * 4
    if len(raw) != header_end + payload:
        raise FormatError(f"{path}: truncated or oversized payload")
    accession = raw[18:header_end].decode("utf-8")
    values = np.frombuffer(raw[header_end:], dtype="<f4").reshape(n_res, dim)
    return ResidueEmbedding(accession, values.copy())


# ---------------------------------------------------------------------------
# manifest: UTF-8 TSV, accession<TAB>path (relative to the manifest file)
# ---------------------------------------------------------------------------

def read_manifest(path):
    """Returns an ordered dict accession -> absolute Path."""
    base = Path(path).parent
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected accession<TAB>path")
            acc, rel = parts
            if acc in entries:
                raise DuplicateError(f"duplicate accession {acc!r} in manifest")
            entries[acc] = base / rel
    return entries


def write_manifest(entries, path):
    base = Path(path).parent
    with open(path, "w", encoding="utf-8") as fh:
        for acc, p in entries.items():
            rel = Path(p)
            try:
                rel = rel.relative_to(base)
            except ValueError:
                pass
            fh.write(f"{acc}\t{rel}\n")


# ---------------------------------------------------------------------------
# deterministic synthetic embedder
# ---------------------------------------------------------------------------

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def synth_embed(sequence: str, dim: int, seed: int, accession: str = "synthetic") -> ResidueEmbedding:
    """Pure hash-based embedding: same (sequence, dim, seed) -> identical bits.

    Each value depends only on (seed, residue letter, position, feature index),
    so a single-residue edit perturbs exactly one row.
    """
    bad = set(sequence) - set(AA_ALPHABET)
    if bad or not sequence:
        raise AlphabetError(f"non-canonical letters in sequence: {sorted(bad)!r}")
    n = len(sequence)
    letters = np.frombuffer(sequence.encode("ascii"), dtype=np.uint8).astype(np.uint64)
    pos = np.arange(n, dtype=np.uint64)
    feat = np.arange(dim, dtype=np.uint64)
    with np.errstate(over="ignore"):
        row_key = _mix(
            np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
            ^ _mix(letters * np.uint64(0x9E3779B97F4A7C15))
            ^ _mix(pos + np.uint64(0x632BE59BD9B4E019))
        )
        h = _mix(row_key[:, None] ^ _mix(feat + np.uint64(1))[None, :])
    unit = (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
    values = (2.0 * unit - 1.0).astype(np.float32)
    return ResidueEmbedding(accession, values)
