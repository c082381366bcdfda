"""Dual grouped segment attention.

Segments are laid out row-major on a [G_L x G_S] grid (slots past N are
zero-filled and masked). One branch attends within each short-range group,
the other across long-range groups at a fixed within-group index. Branch
outputs are summed, a residual is added, the result is layer-normalized,
and padded slots are dropped so the block preserves [B, N, D].
"""

import math

import numpy as np

from . import autodiff as ad


def group_shape(n_seg, g_short):
    g_long = math.ceil(n_seg / g_short)
    return g_long, g_long * g_short - n_seg


def group_reshape(y, g_short, pad_fill=0.0):
    """[B, N, D] -> ([B, G_L, G_S, D], pad_mask [G_L, G_S]).

    ``pad_fill`` exists only to let tests prove padded slots cannot leak into
    real outputs; production callers leave it at zero.
    """
    bsz, n_seg, dim = y.data.shape
    g_long, pad = group_shape(n_seg, g_short)
    grid = ad.pad_axis(y, 1, 0, pad, fill=pad_fill) if pad else y
    grid = ad.reshape(grid, (bsz, g_long, g_short, dim))
    mask = np.arange(g_long * g_short).reshape(g_long, g_short) >= n_seg
    return grid, mask


def _project(x, params, prefix):
    q = ad.linear(x, params[prefix + ".wq"], params[prefix + ".bq"])
    k = ad.linear(x, params[prefix + ".wk"], params[prefix + ".bk"])
    v = ad.linear(x, params[prefix + ".wv"], params[prefix + ".bv"])
    return q, k, v


def attend_short(grid, mask, params, prefix):
    """Attention inside each G_S-sized group: [B*G_L, G_S, D]."""
    bsz, g_long, g_short, dim = grid.data.shape
    x = ad.reshape(grid, (bsz * g_long, g_short, dim))
    q, k, v = _project(x, params, prefix)
    key_mask = np.tile(mask, (bsz, 1))
    return ad.scaled_dot_attention(q, k, v, mask=key_mask)


def attend_long(grid, mask, params, prefix):
    """Attention across groups at fixed within-group index: [B*G_S, G_L, D]."""
    bsz, g_long, g_short, dim = grid.data.shape
    x = ad.reshape(ad.transpose(grid, (0, 2, 1, 3)), (bsz * g_short, g_long, dim))
    q, k, v = _project(x, params, prefix)
    key_mask = np.tile(mask.T, (bsz, 1))
    return ad.scaled_dot_attention(q, k, v, mask=key_mask)


def merge_flatten(z_short, z_long, grid, n_seg, params, prefix):
    """Sum branches, add the residual, layer-norm, drop padded slots."""
    bsz, g_long, g_short, dim = grid.data.shape
    zs = ad.reshape(z_short, (bsz, g_long, g_short, dim))
    zl = ad.transpose(
        ad.reshape(z_long, (bsz, g_short, g_long, dim)), (0, 2, 1, 3)
    )
    merged = ad.add(ad.add(zs, zl), grid)
    normed = ad.layer_norm(merged, params[prefix + ".ln.gamma"], params[prefix + ".ln.beta"])
    flat = ad.reshape(normed, (bsz, g_long * g_short, dim))
    if g_long * g_short > n_seg:
        flat = ad.slice_axis(flat, 1, 0, n_seg)
    return flat


def apply_block(y, g_short, params, prefix, pad_fill=0.0):
    n_seg = y.data.shape[1]
    grid, mask = group_reshape(y, g_short, pad_fill=pad_fill)
    z_s = attend_short(grid, mask, params, prefix + ".short")
    z_l = attend_long(grid, mask, params, prefix + ".long")
    return merge_flatten(z_s, z_l, grid, n_seg, params, prefix)


def apply_dgsa_stack(per_scale, cfg, params, pad_fill=0.0):
    """Run num_blocks attention blocks on each scale independently."""
    out = []
    for i, y in enumerate(per_scale):
        for j in range(cfg.num_blocks):
            y = apply_block(y, cfg.group_size[i], params, f"dgsa.s{i}.b{j}", pad_fill=pad_fill)
        out.append(y)
    return out
