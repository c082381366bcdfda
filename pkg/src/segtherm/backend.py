"""Hot convolution kernels with a numba fast path and a pure-numpy fallback.

Backend selection: env var SEGT_BACKEND=numpy forces the numpy path;
SEGT_BACKEND=numba requires numba and fails loudly if it is missing;
unset picks numba when importable, numpy otherwise. All kernels accumulate
in float64 and cast the result back to the input dtype, so both paths agree
to the last bit in practice and exactly in float32 for well-scaled inputs.

SEGT_THREADS caps internal parallelism. The kernels below are deliberately
single-threaded (no prange), so outputs never depend on the thread setting.
"""

import os

import numpy as np

_requested = os.environ.get("SEGT_BACKEND", "").strip().lower()

if _requested == "numpy":
    _use_numba = False
elif _requested == "numba":
    from numba import njit  # noqa: F401  (import error is the intended failure)

    _use_numba = True
else:
    try:
        from numba import njit

        _use_numba = True
    except ImportError:
        _use_numba = False

if _use_numba and "SEGT_THREADS" in os.environ:
    try:
        import numba

        numba.set_num_threads(max(1, int(os.environ["SEGT_THREADS"])))
    except (ValueError, RuntimeError):
        pass


def backend_name():
    return "numba" if _use_numba else "numpy"


# ---------------------------------------------------------------------------
# pure-numpy reference path
# ---------------------------------------------------------------------------

def _conv1d_fwd_np(x, w, b):
    t = x.shape[2] // 2
    x0 = x[:, :, 0 : 2 * t : 2].astype(np.float64)
    x1 = x[:, :, 1 : 2 * t : 2].astype(np.float64)
    w64 = w.astype(np.float64)
    y = np.einsum("oc,bcl->bol", w64[:, :, 0], x0)
    y += np.einsum("oc,bcl->bol", w64[:, :, 1], x1)
    y += b.astype(np.float64)[None, :, None]
    return y


def _conv1d_bwd_np(g, x, w):
    t = g.shape[2]
    g64 = g.astype(np.float64)
    w64 = w.astype(np.float64)
    x0 = x[:, :, 0 : 2 * t : 2].astype(np.float64)
    x1 = x[:, :, 1 : 2 * t : 2].astype(np.float64)
    gx = np.zeros(x.shape, dtype=np.float64)
    gx[:, :, 0 : 2 * t : 2] = np.einsum("oc,bol->bcl", w64[:, :, 0], g64)
    gx[:, :, 1 : 2 * t : 2] = np.einsum("oc,bol->bcl", w64[:, :, 1], g64)
    gw = np.stack(
        [np.einsum("bol,bcl->oc", g64, x0), np.einsum("bol,bcl->oc", g64, x1)], axis=2
    )
    gb = g64.sum(axis=(0, 2))
    return gx, gw, gb


def _segconv_fwd_np(x, w, b):
    n = x.shape[1]
    k = w.shape[1]
    pad = (k - 1) // 2
    x64 = x.astype(np.float64)
    if pad:
        x64 = np.pad(x64, ((0, 0), (pad, pad), (0, 0), (0, 0)))
    windows = np.stack([x64[:, i : i + n] for i in range(k)], axis=2)  # B,N,k,l,C
    y = np.einsum("bnkac,okac->bno", windows, w.astype(np.float64))
    y += b.astype(np.float64)[None, None, :]
    return y


def _segconv_bwd_np(g, x, w):
    n = x.shape[1]
    k = w.shape[1]
    pad = (k - 1) // 2
    g64 = g.astype(np.float64)
    w64 = w.astype(np.float64)
    x64 = x.astype(np.float64)
    if pad:
        x64 = np.pad(x64, ((0, 0), (pad, pad), (0, 0), (0, 0)))
    windows = np.stack([x64[:, i : i + n] for i in range(k)], axis=2)
    gw = np.einsum("bno,bnkac->okac", g64, windows)
    gxp = np.zeros(x64.shape, dtype=np.float64)
    for i in range(k):
        gxp[:, i : i + n] += np.einsum("bno,oac->bnac", g64, w64[:, i])
    gx = gxp[:, pad : pad + n] if pad else gxp
    gb = g64.sum(axis=(0, 1))
    return gx, gw, gb


# ---------------------------------------------------------------------------
# numba fast path
# ---------------------------------------------------------------------------

if _use_numba:

    @njit(cache=True)
    def _conv1d_fwd_nb(x, w, b):
        bsz, cin, ln = x.shape
        cout = w.shape[0]
        t = ln // 2
        y = np.zeros((bsz, cout, t), dtype=np.float64)
        for bi in range(bsz):
            for o in range(cout):
                for j in range(t):
                    acc = b[o]
                    for c in range(cin):
                        acc += w[o, c, 0] * x[bi, c, 2 * j] + w[o, c, 1] * x[bi, c, 2 * j + 1]
                    y[bi, o, j] = acc
        return y

    @njit(cache=True)
    def _conv1d_bwd_nb(g, x, w):
        bsz, cin, ln = x.shape
        cout, _, t = g.shape
        gx = np.zeros((bsz, cin, ln), dtype=np.float64)
        gw = np.zeros(w.shape, dtype=np.float64)
        gb = np.zeros(w.shape[0], dtype=np.float64)
        cout = w.shape[0]
        t = g.shape[2]
        for bi in range(bsz):
            for o in range(cout):
                for j in range(t):
                    gv = g[bi, o, j]
                    gb[o] += gv
                    for c in range(cin):
                        gx[bi, c, 2 * j] += w[o, c, 0] * gv
                        gx[bi, c, 2 * j + 1] += w[o, c, 1] * gv
                        gw[o, c, 0] += x[bi, c, 2 * j] * gv
                        gw[o, c, 1] += x[bi, c, 2 * j + 1] * gv
        return gx, gw, gb

    @njit(cache=True)
    def _segconv_fwd_nb(x, w, b):
        bsz, n, l, cin = x.shape
        cout, k = w.shape[0], w.shape[1]
        pad = (k - 1) // 2
        y = np.zeros((bsz, n, cout), dtype=np.float64)
        for bi in range(bsz):
            for s in range(n):
                for o in range(cout):
                    acc = b[o]
                    for dk in range(k):
                        src = s + dk - pad
                        if src < 0 or src >= n:
                            continue
                        for a in range(l):
                            for c in range(cin):
                                acc += w[o, dk, a, c] * x[bi, src, a, c]
                    y[bi, s, o] = acc
        return y

    @njit(cache=True)
    def _segconv_bwd_nb(g, x, w):
        bsz, n, l, cin = x.shape
        cout, k = w.shape[0], w.shape[1]
        pad = (k - 1) // 2
        gx = np.zeros(x.shape, dtype=np.float64)
        gw = np.zeros(w.shape, dtype=np.float64)
        gb = np.zeros(cout, dtype=np.float64)
        for bi in range(bsz):
            for s in range(n):
                for o in range(cout):
                    gv = g[bi, s, o]
                    gb[o] += gv
                    for dk in range(k):
                        src = s + dk - pad
                        if src < 0 or src >= n:
                            continue
                        for a in range(l):
                            for c in range(cin):
                                gx[bi, src, a, c] += w[o, dk, a, c] * gv
                                gw[o, dk, a, c] += x[bi, src, a, c] * gv
        return gx, gw, gb


# ---------------------------------------------------------------------------
# public wrappers (cast float64 accumulators back to the storage dtype)
# ---------------------------------------------------------------------------

def conv1d_forward(x, w, b):
    """Stride-2, kernel-2 1D convolution over the last axis of [B,C,L]."""
    if _use_numba:
        y = _conv1d_fwd_nb(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(w, dtype=np.float64),
            np.ascontiguousarray(b, dtype=np.float64),
        )
    else:
        y = _conv1d_fwd_np(x, w, b)
    return y.astype(x.dtype)


def conv1d_backward(g, x, w):
    if _use_numba:
        gx, gw, gb = _conv1d_bwd_nb(
            np.ascontiguousarray(g, dtype=np.float64),
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(w, dtype=np.float64),
        )
    else:
        gx, gw, gb = _conv1d_bwd_np(g, x, w)
    return gx.astype(x.dtype), gw.astype(w.dtype), gb.astype(w.dtype)


def segconv_forward(x, w, b):
    """Full-width segment convolution [B,N,l,C] -> [B,N,O], zero-padded on N."""
    if _use_numba:
        y = _segconv_fwd_nb(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(w, dtype=np.float64),
            np.ascontiguousarray(b, dtype=np.float64),
        )
    else:
        y = _segconv_fwd_np(x, w, b)
    return y.astype(x.dtype)


def segconv_backward(g, x, w):
    if _use_numba:
        gx, gw, gb = _segconv_bwd_nb(
            np.ascontiguousarray(g, dtype=np.float64),
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(w, dtype=np.float64),
        )
    else:
        gx, gw, gb = _segconv_bwd_np(g, x, w)
    return gx.astype(x.dtype), gw.astype(w.dtype), gb.astype(w.dtype)
