"""Training loop, AdamW optimizer, and the SEGC checkpoint format."""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import metrics as m
from .autodiff import Tensor
from .config import ModelConfig
from .errors import ConfigMismatch, FormatError, MissingInput, StepRejected, UnsupportedVersion
from .model import Model

CKPT_MAGIC = b"SEGC"
CKPT_VERSION = 1


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 16
    max_epochs: int = 500
    eval_every: int = 8
    seed: int = 0
    loss_boundaries: list = field(default_factory=lambda: list(m.DEFAULT_BOUNDARIES))

    def __post_init__(self):
        if self.lr <= 0 or not (0 <= self.beta1 < 1) or not (0 <= self.beta2 < 1):
            raise ConfigMismatch("bad optimizer hyperparameters")
        if self.eval_every < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigMismatch("bad loop hyperparameters")

    def to_dict(self):
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "weight_decay": self.weight_decay, "batch_size": self.batch_size,
            "max_epochs": self.max_epochs, "eval_every": self.eval_every,
            "seed": self.seed, "loss_boundaries": list(self.loss_boundaries),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

def init_moments(params):
    return {
        name: (np.zeros_like(p.data), np.zeros_like(p.data)) for name, p in params.items()
    }


def optimizer_step(params, moments, cfg: TrainConfig, t: int):
    """One AdamW update (decoupled weight decay) over every parameter with a grad."""
    if t < 1:
        raise StepRejected("step index must be >= 1")
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if not np.isfinite(g).all():
            raise StepRejected(f"non-finite gradient in {name!r} at step {t}")
        mt, vt = moments[name]
        mt *= cfg.beta1
        mt += (1.0 - cfg.beta1) * g
        vt *= cfg.beta2
        vt += (1.0 - cfg.beta2) * g * g
        mhat = mt / bc1
        vhat = vt / bc2
        p.data = p.data - cfg.lr * (mhat / (np.sqrt(vhat) + cfg.eps) + cfg.weight_decay * p.data)


# ---------------------------------------------------------------------------
# differentiable loss
# ---------------------------------------------------------------------------

def weighted_rmse_loss(preds, truths, weights):
    """Scalar loss tensor sqrt(mean(w_i * (pred_i - y_i)^2)) from [1,1] preds."""
    n = len(preds)
    terms = []
    for p, y, w in zip(preds, truths, weights):
        e = ad.add_const(p, -float(y))
        terms.append(ad.mul_const(ad.mul(e, e), float(w) / n))
    return ad.sqrt(ad.ssum(terms))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    model: Model
    moments: dict
    step: int
    epoch: int
    best_metrics: dict


def save_checkpoint(ckpt: Checkpoint, path):
    tensors = [("param." + n, p.data) for n, p in ckpt.model.params.items()]
    for n, (mt, vt) in ckpt.moments.items():
        tensors.append(("adamw.m." + n, mt))
        tensors.append(("adamw.v." + n, vt))
    directory = []
    offset = 0
    for name, arr in tensors:
        directory.append({"name": name, "dims": list(arr.shape), "offset": offset})
        offset += arr.size * 4
    header = {
        "format_version": CKPT_VERSION,
        "model_config": ckpt.model.cfg.to_dict(),
        "target_mean": ckpt.model.target_mean,
        "target_std": ckpt.model.target_std,
        "step": ckpt.step,
        "epoch": ckpt.epoch,
        "best_metrics": ckpt.best_metrics,
        "tensors": directory,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, expect_config: ModelConfig | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic")
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CKPT_VERSION:
        raise UnsupportedVersion(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    if len(raw) < 16 + hlen:
        raise FormatError(f"{path}: truncated JSON header")
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt JSON header: {exc}") from exc
    blob = raw[16 + hlen :]
    cfg = ModelConfig.from_dict(header["model_config"])
    if expect_config is not None and cfg.to_dict() != expect_config.to_dict():
        raise ConfigMismatch(f"{path}: checkpoint config differs from requested config")

    arrays = {}
    for entry in header["tensors"]:
        size = int(np.prod(entry["dims"], dtype=np.int64)) if entry["dims"] else 1
        start = entry["offset"]
        end = start + size * 4
        if start < 0 or end > len(blob):
            raise FormatError(f"{path}: tensor {entry['name']!r} out of bounds")
        arrays[entry["name"]] = (
            np.frombuffer(blob[start:end], dtype="<f4").reshape(entry["dims"]).copy()
        )

    params = {}
    for name in [e["name"] for e in header["tensors"] if e["name"].startswith("param.")]:
        params[name[len("param."):]] = Tensor(arrays[name], requires_grad=True)
    expected = {n: p.data.shape for n, p in Model.create(cfg, seed=0).params.items()}
    got = {n: p.data.shape for n, p in params.items()}
    if expected != got:
        raise ConfigMismatch(f"{path}: parameter set does not match model config")
    moments = {}
    for n in params:
        mk, vk = "adamw.m." + n, "adamw.v." + n
        if mk in arrays and vk in arrays:
            moments[n] = (arrays[mk], arrays[vk])
        else:
            moments[n] = (np.zeros_like(params[n].data), np.zeros_like(params[n].data))
    model = Model(cfg, params, header.get("target_mean", 0.0), header.get("target_std", 1.0))
    return Checkpoint(model, moments, header.get("step", 0), header.get("epoch", 0),
                      header.get("best_metrics", {}))


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def _snapshot(model: Model):
    return {n: p.data.copy() for n, p in model.params.items()}


def train(train_records, val_records, embeddings, model: Model, cfg: TrainConfig,
          weight_table: m.WeightTable | None = None, log_sink=None):
    """Deterministic mini-batch training; returns the best-validation Checkpoint.

    ``embeddings`` maps accession -> ResidueEmbedding (raises KeyError for
    unknown accessions, surfaced as MissingInput). ``log_sink`` receives one
    dict per epoch.
    """
    if not train_records or not val_records:
        raise ConfigMismatch("train and validation sets must be non-empty")
    for rec in list(train_records) + list(val_records):
        if rec.accession not in embeddings:
            raise MissingInput(rec.accession)

    labels = np.array([r.temperature for r in train_records], dtype=np.float64)
    model.target_mean = float(labels.mean())
    model.target_std = float(max(labels.std(), 1e-6))
    if weight_table is None:
        weight_table = m.build_weight_table(labels, cfg.loss_boundaries)

    params = model.trainable()
    moments = init_moments(params)
    rng = np.random.default_rng(cfg.seed)
    step = 0
    best = None  # (val_rmse, epoch, snapshot, moments copy, step, metrics dict)

    order_base = sorted(range(len(train_records)), key=lambda i: train_records[i].accession)
    for epoch in range(1, cfg.max_epochs + 1):
        order = [order_base[i] for i in rng.permutation(len(order_base))]
        epoch_losses = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            preds, truths, weights = [], [], []
            for idx in batch:
                rec = train_records[idx]
                emb = embeddings[rec.accession]
                x = Tensor(emb.values[None, :, :])
                preds.append(model.forward_value(x))
                truths.append((rec.temperature - model.target_mean) / model.target_std)
                weights.append(weight_table.weight_for(rec.temperature))
            loss = weighted_rmse_loss(preds, truths, weights)
            if not np.isfinite(loss.data).all():
                raise StepRejected(f"non-finite loss at epoch {epoch}")
            for p in params.values():
                p.zero_grad()
            loss.backward()
            step += 1
            optimizer_step(params, moments, cfg, step)
            epoch_losses.append(loss.data.item())

        entry = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if epoch % cfg.eval_every == 0 or epoch == cfg.max_epochs:
            report = evaluate_on(val_records, embeddings, model)
            entry.update(
                val_rmse=report.rmse, val_mae=report.mae,
                val_pearson=report.pearson, val_spearman=report.spearman,
            )
            if best is None or report.rmse < best[0]:
                best = (
                    report.rmse, epoch, _snapshot(model),
                    {n: (mt.copy(), vt.copy()) for n, (mt, vt) in moments.items()},
                    step, report.to_dict(),
                )
        if log_sink is not None:
            log_sink(entry)

    _, best_epoch, snap, best_moments, best_step, best_metrics = best
    best_params = {n: Tensor(arr, requires_grad=True) for n, arr in snap.items()}
    best_model = Model(model.cfg, best_params, model.target_mean, model.target_std)
    return Checkpoint(best_model, best_moments, best_step, best_epoch, best_metrics)


def evaluate_on(records, embeddings, model: Model, boundaries=m.DEFAULT_MAE_BOUNDARIES):
    preds = [model.predict_value(embeddings[r.accession]) for r in records]
    truths = [r.temperature for r in records]
    return m.evaluate(preds, truths, boundaries)
