import numpy as np
import pytest

from segtherm.autodiff import Tensor
from segtherm.config import ModelConfig
from segtherm.data import DatasetRecord
from segtherm.embeddings import AA_ALPHABET, synth_embed
from segtherm.model import Model


def toy_config(**overrides):
    base = dict(
        embed_dim=16, model_dim=32, num_down=1, seg_lens=[4, 2],
        group_size=[2, 2], num_blocks=2,
    )
    base.update(overrides)
    return ModelConfig(**base)


def random_sequence(rng, length):
    return "".join(AA_ALPHABET[j] for j in rng.integers(0, 20, length))


def synthetic_dataset(n, seed=42, dim=16, min_len=24, max_len=48, temp_range=(10.0, 110.0)):
    """(records, embeddings-dict) built entirely from the synthetic embedder."""
    rng = np.random.default_rng(seed)
    records, embs = [], {}
    for i in range(n):
        seq = random_sequence(rng, int(rng.integers(min_len, max_len)))
        acc = f"SYN{i:04d}"
        records.append(DatasetRecord(acc, seq, float(rng.uniform(*temp_range))))
        embs[acc] = synth_embed(seq, dim, seed + 1, acc)
    return records, embs


def to_float64(model):
    for p in model.params.values():
        p.data = p.data.astype(np.float64)
    return model


@pytest.fixture
def toy_model():
    return Model.create(toy_config(), seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def rand_tensor(rng, *shape, grad=True, dtype=np.float64):
    return Tensor(rng.standard_normal(shape).astype(dtype), requires_grad=grad)
