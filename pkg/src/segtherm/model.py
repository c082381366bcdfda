"""Full model: parameter construction and the end-to-end forward pass."""

import numpy as np

from . import autodiff as ad
from . import conversion, dgsa, head
from .autodiff import Tensor
from .config import ModelConfig
from .errors import ConfigMismatch


def _xavier(rng, fan_out, fan_in, shape, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_params(cfg: ModelConfig, seed: int, dtype=np.float32):
    """Seeded parameter dictionary; insertion order is the checkpoint order."""
    rng = np.random.default_rng(seed)
    dm, de, k = cfg.model_dim, cfg.embed_dim, cfg.seg_kernel
    p = {}

    def w(name, arr):
        p[name] = Tensor(arr, requires_grad=True)

    def zeros(name, *shape):
        p[name] = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)

    w("conv.pre.w", _xavier(rng, dm, de, (dm, de), dtype))
    zeros("conv.pre.b", dm)
    for i in range(1, cfg.num_down + 1):
        din = de if i == 1 else dm
        w(f"conv.down{i}.w", _xavier(rng, dm, din * 2, (dm, din, 2), dtype))
        zeros(f"conv.down{i}.b", dm)
    for i in range(cfg.num_scales):
        fan_in = k * cfg.seg_lens[i] * dm
        w(f"conv.seg{i}.w", _xavier(rng, dm, fan_in, (dm, k, cfg.seg_lens[i], dm), dtype))
        zeros(f"conv.seg{i}.b", dm)
    for i in range(cfg.num_scales):
        for j in range(cfg.num_blocks):
            for branch in ("short", "long"):
                base = f"dgsa.s{i}.b{j}.{branch}"
                for proj in ("q", "k", "v"):
                    w(f"{base}.w{proj}", _xavier(rng, dm, dm, (dm, dm), dtype))
                    zeros(f"{base}.b{proj}", dm)
            p[f"dgsa.s{i}.b{j}.ln.gamma"] = Tensor(np.ones(dm, dtype=dtype), requires_grad=True)
            zeros(f"dgsa.s{i}.b{j}.ln.beta", dm)
    h = cfg.pool_hidden
    for i in range(cfg.num_scales):
        w(f"head.s{i}.w1", _xavier(rng, h, dm, (h, dm), dtype))
        w(f"head.s{i}.w2", _xavier(rng, 1, h, (1, h), dtype))
        w(f"head.s{i}.wreg", _xavier(rng, 1, dm, (1, dm), dtype))
        zeros(f"head.s{i}.breg", 1)
    return p


class Model:
    """Holds config + parameters and exposes forward passes.

    ``target_mean``/``target_std`` map the network's normalized output back to
    degrees Celsius; they are fit by the trainer and stored in checkpoints.
    """

    def __init__(self, cfg: ModelConfig, params, target_mean=0.0, target_std=1.0):
        self.cfg = cfg
        self.params = params
        self.target_mean = float(target_mean)
        self.target_std = float(target_std)

    @classmethod
    def create(cls, cfg: ModelConfig, seed: int = 0):
        return cls(cfg, init_params(cfg, seed))

    def trainable(self):
        return self.params

    # -- forward passes ----------------------------------------------------

    def forward_parts(self, x, pad_fill=0.0):
        """Run the pipeline on a [B, L, D] tensor; returns all intermediates.

        Output dict keys: segments (post-conversion per-scale features), dgsa
        (attended per-scale features), pooled (per-scale pooled vectors),
        per_scale (list of [B,1] normalized outputs), alphas (numpy weights),
        y (the [B,1] normalized point estimate tensor).
        """
        if x.data.shape[2] != self.cfg.embed_dim:
            raise ConfigMismatch(
                f"embedding dim {x.data.shape[2]} != configured {self.cfg.embed_dim}"
            )
        segments = conversion.convert(x, self.cfg, self.params)
        attended = dgsa.apply_dgsa_stack(segments, self.cfg, self.params, pad_fill=pad_fill)
        pooled, alphas, preds = [], [], []
        for i, yi in enumerate(attended):
            z, alpha = head.attention_pool(yi, self.params, f"head.s{i}")
            pooled.append(z)
            alphas.append(alpha)
            preds.append(head.predict_scale(z, self.params, f"head.s{i}"))
        return {
            "segments": segments,
            "dgsa": attended,
            "pooled": pooled,
            "per_scale": preds,
            "alphas": [a.data for a in alphas],
            "y": head.combine_scales(preds),
        }

    def forward_value(self, x):
        """Normalized-space scalar prediction tensor [B, 1] (training path)."""
        return self.forward_parts(x)["y"]

    def predict(self, embedding, pad_fill=0.0):
        """Full inference on one ResidueEmbedding -> Prediction in deg C."""
        conversion.check_length(embedding.length, self.cfg)
        x = Tensor(embedding.values[None, :, :])
        parts = self.forward_parts(x, pad_fill=pad_fill)
        n0 = embedding.length // self.cfg.seg_lens[0]
        return head.build_prediction(
            embedding.accession,
            [p.data[0, 0] for p in parts["per_scale"]],
            parts["alphas"],
            self.cfg.seg_lens,
            n0,
            target_mean=self.target_mean,
            target_std=self.target_std,
        )

    def predict_value(self, embedding):
        """Point estimate in deg C without assembling the full Prediction."""
        x = Tensor(embedding.values[None, :, :])
        raw = float(self.forward_value(x).data[0, 0])
        return self.target_mean + self.target_std * raw
