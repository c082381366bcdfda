"""Residue-level to segment-level feature conversion.

Three steps per scale: stride-2 downsampling of the residue axis, chopping
into fixed-length segments (tail residues beyond the last full segment are
dropped), and a full-width convolution that collapses each segment to one
feature vector while mixing a small odd neighborhood of segments.
"""

from . import autodiff as ad
from .errors import SequenceTooShort


def scale_lengths(seq_len, num_down):
    """Residue counts per scale under repeated floor-halving."""
    out = [seq_len]
    for _ in range(num_down):
        out.append(out[-1] // 2)
    return out


def check_length(seq_len, cfg):
    """Raise SequenceTooShort naming the first scale that yields no segment."""
    for i, cur in enumerate(scale_lengths(seq_len, cfg.num_down)):
        if cur < cfg.seg_lens[i]:
            raise SequenceTooShort(
                f"L={seq_len} leaves {cur} positions at scale {i}, "
                f"need >= {cfg.seg_lens[i]}",
                scale=i,
            )


def segment_counts(seq_len, cfg):
    return [cur // l for cur, l in zip(scale_lengths(seq_len, cfg.num_down), cfg.seg_lens)]


def sample(x, num_down, params):
    """Multi-resolution residue features: [X_0 .. X_S], X_i half the length of X_{i-1}.

    X_0 is the raw input; deeper scales go through learned stride-2 convolutions
    (params["conv.down{i}.w"/".b"]) that also project onto the model dimension.
    """
    seq_len = x.data.shape[1]
    if seq_len < (1 << num_down):
        raise SequenceTooShort(
            f"L={seq_len} cannot be halved {num_down} times", scale=num_down
        )
    scales = [x]
    cur = ad.transpose(x, (0, 2, 1))  # [B, D, L]
    for i in range(1, num_down + 1):
        cur = ad.conv1d_strided(cur, params[f"conv.down{i}.w"], params[f"conv.down{i}.b"])
        scales.append(ad.transpose(cur, (0, 2, 1)))
    return scales


def segment(x, seg_len):
    """[B, L, D] -> [B, floor(L/seg_len), seg_len, D]; trailing residues dropped."""
    bsz, seq_len, dim = x.data.shape
    n_seg = seq_len // seg_len
    if n_seg < 1:
        raise SequenceTooShort(f"L={seq_len} shorter than segment length {seg_len}")
    trimmed = ad.slice_axis(x, 1, 0, n_seg * seg_len) if n_seg * seg_len < seq_len else x
    return ad.reshape(trimmed, (bsz, n_seg, seg_len, dim))


def convert(x, cfg, params):
    """Full conversion: returns per-scale segment features [B, N_i, model_dim].

    Scale 0 is first projected pointwise onto model_dim so every scale shares
    the same feature width.
    """
    check_length(x.data.shape[1], cfg)
    scales = sample(x, cfg.num_down, params)
    scales[0] = ad.linear(scales[0], params["conv.pre.w"], params["conv.pre.b"])
    out = []
    for i, xi in enumerate(scales):
        seg = segment(xi, cfg.seg_lens[i])
        out.append(
            ad.conv2d_segments(seg, params[f"conv.seg{i}.w"], params[f"conv.seg{i}.b"])
        )
    return out
