"""Hot numeric kernels: circular dilated 1D convolution and tanh passes.

Each kernel has a pure-numpy implementation (`*_numpy`) and, when numba is
available, an @njit twin compiled from the same loop nest. The active set is
picked by :mod:`hardcore.backend` and exposed through the module-level
``conv1d_forward`` / ``conv1d_backward_x`` / ``conv1d_backward_w`` /
``tanh_forward`` / ``tanh_backward`` names used by the tensor engine.

Convolution convention (centered taps, circular wrap): with kernel size K,
dilation d and half-reach R = (K-1)//2 * d, inputs arrive pre-padded as

    xpad[b, p, m] = x[b, p, (m - R) mod M],  m in [0, M + 2R)

so that tap t in [0, K) reads xpad[..., k + t*d] for output index k. The
padding is built by :func:`wrap_pad`.
"""

from __future__ import annotations

import ctypes
import sys

import numpy as np

from .backend import select_backend

BACKEND = select_backend()


def _raise_malloc_mmap_threshold() -> None:
    # Training churns ~100 MB activation buffers every epoch. glibc serves
    # allocations this large via mmap and unmaps them on free, so each epoch
    # pays full page-fault cost again; raising the threshold keeps the
    # buffers on the heap for reuse (measured ~40% epoch-time saving).
    if not sys.platform.startswith("linux"):
        return
    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
    except (OSError, AttributeError):
        pass


_raise_malloc_mmap_threshold()


def half_reach(kernel_size: int, dilation: int) -> int:
    return (kernel_size - 1) // 2 * dilation


def wrap_pad(x: np.ndarray, reach: int) -> np.ndarray:
    """Circularly extend the last axis by `reach` samples on both sides."""
    if reach == 0:
        return np.ascontiguousarray(x)
    m = x.shape[-1]
    if reach > m:
        raise ValueError(f"pad reach {reach} exceeds sequence length {m}")
    out = np.empty(x.shape[:-1] + (m + 2 * reach,))
    out[..., :reach] = x[..., m - reach:]
    out[..., reach:reach + m] = x
    out[..., reach + m:] = x[..., :reach]
    return out


# ---------------------------------------------------------------------------
# pure numpy
# ---------------------------------------------------------------------------

def conv1d_forward_numpy(xpad, w, bias, dilation, m_out):
    """out[b,i,k] = bias[i] + sum_{p,t} w[i,p,t] * xpad[b,p,k+t*dilation]."""
    n_out = w.shape[0]
    out = np.empty((xpad.shape[0], n_out, m_out))
    out[:] = bias[None, :, None]
    for t in range(w.shape[2]):
        lo = t * dilation
        out += np.matmul(w[:, :, t], xpad[:, :, lo:lo + m_out])
    return out


def conv1d_backward_x_numpy(dout, w, dilation):
    """Gradient wrt the unpadded input: conv with tap-flipped, transposed w."""
    wt = np.ascontiguousarray(w[::, ::, ::-1].transpose(1, 0, 2))
    dpad = wrap_pad(dout, half_reach(w.shape[2], dilation))
    zeros = np.zeros(wt.shape[0])
    return conv1d_forward_numpy(dpad, wt, zeros, dilation, dout.shape[2])


def conv1d_backward_w_numpy(dout, xpad, kernel_size, dilation):
    """dw[i,p,t] = sum_{b,k} dout[b,i,k] * xpad[b,p,k+t*dilation]."""
    m_out = dout.shape[2]
    n_out, n_in = dout.shape[1], xpad.shape[1]
    dw = np.empty((n_out, n_in, kernel_size))
    for t in range(kernel_size):
        lo = t * dilation
        dw[:, :, t] = np.tensordot(
            dout, xpad[:, :, lo:lo + m_out], axes=([0, 2], [0, 2])
        )
    return dw


def tanh_forward_numpy(x):
    return np.tanh(x)


def tanh_backward_numpy(dout, tanh_out):
    return dout * (1.0 - tanh_out * tanh_out)


# ---------------------------------------------------------------------------
# numba
# ---------------------------------------------------------------------------

if BACKEND == "numba":
    from numba import njit, prange

    # Inner loops accumulate through slice views (xr[off:]) rather than
    # offset indices (xr[k+off]) — LLVM only vectorizes the former.
    @njit(parallel=True, cache=True)
    def _conv1d_forward_numba(xpad, w, bias, dilation, out):  # pragma: no cover
        n_batch, n_in, _ = xpad.shape
        n_out, _, k_size = w.shape
        m_out = out.shape[2]
        for b in prange(n_batch):
            xb = xpad[b]
            for i in range(n_out):
                oi = out[b, i]
                bi = bias[i]
                for k in range(m_out):
                    oi[k] = bi
                for p in range(n_in):
                    xr = xb[p]
                    wr = w[i, p]
                    t = 0
                    while t + 3 <= k_size:
                        w0 = wr[t]
                        w1 = wr[t + 1]
                        w2 = wr[t + 2]
                        x0 = xr[t * dilation:]
                        x1 = xr[(t + 1) * dilation:]
                        x2 = xr[(t + 2) * dilation:]
                        for k in range(m_out):
                            oi[k] += w0 * x0[k] + w1 * x1[k] + w2 * x2[k]
                        t += 3
                    while t < k_size:
                        wv = wr[t]
                        x0 = xr[t * dilation:]
                        for k in range(m_out):
                            oi[k] += wv * x0[k]
                        t += 1

    # Batch-outer loop order keeps one record's rows L1/L2-resident while all
    # (i,p,t) dots consume them; fastmath licenses the vectorized reduction.
    @njit(cache=True, fastmath=True)
    def _conv1d_backward_w_numba(dout, xpad, k_size, dilation, dw):  # pragma: no cover
        n_batch, n_out, m_out = dout.shape
        n_in = xpad.shape[1]
        dw[:, :, :] = 0.0
        for b in range(n_batch):
            for i in range(n_out):
                da = dout[b, i]
                for p in range(n_in):
                    xr = xpad[b, p]
                    for t in range(k_size):
                        xro = xr[t * dilation:]
                        acc = 0.0
                        for k in range(m_out):
                            acc += da[k] * xro[k]
                        dw[i, p, t] += acc

    @njit(parallel=True, cache=True)
    def _tanh_forward_numba(x, out):  # pragma: no cover
        for i in prange(x.size):
            out[i] = np.tanh(x[i])

    @njit(parallel=True, cache=True)
    def _tanh_backward_numba(dout, tanh_out, dx):  # pragma: no cover
        for i in prange(dout.size):
            t = tanh_out[i]
            dx[i] = dout[i] * (1.0 - t * t)

    def conv1d_forward_numba(xpad, w, bias, dilation, m_out):
        out = np.empty((xpad.shape[0], w.shape[0], m_out))
        _conv1d_forward_numba(
            np.ascontiguousarray(xpad), np.ascontiguousarray(w),
            np.ascontiguousarray(bias), dilation, out,
        )
        return out

    def conv1d_backward_x_numba(dout, w, dilation):
        wt = np.ascontiguousarray(w[::, ::, ::-1].transpose(1, 0, 2))
        dpad = wrap_pad(dout, half_reach(w.shape[2], dilation))
        return conv1d_forward_numba(
            dpad, wt, np.zeros(wt.shape[0]), dilation, dout.shape[2]
        )

    def conv1d_backward_w_numba(dout, xpad, kernel_size, dilation):
        dw = np.empty((dout.shape[1], xpad.shape[1], kernel_size))
        _conv1d_backward_w_numba(
            np.ascontiguousarray(dout), np.ascontiguousarray(xpad),
            kernel_size, dilation, dw,
        )
        return dw

    def tanh_forward_numba(x):
        xc = np.ascontiguousarray(x)
        out = np.empty_like(xc)
        _tanh_forward_numba(xc.ravel(), out.ravel())
        return out

    def tanh_backward_numba(dout, tanh_out):
        dc = np.ascontiguousarray(dout)
        dx = np.empty_like(dc)
        _tanh_backward_numba(
            dc.ravel(), np.ascontiguousarray(tanh_out).ravel(), dx.ravel()
        )
        return dx

    conv1d_forward = conv1d_forward_numba
    conv1d_backward_x = conv1d_backward_x_numba
    conv1d_backward_w = conv1d_backward_w_numba
    tanh_forward = tanh_forward_numba
    tanh_backward = tanh_backward_numba
else:
    conv1d_forward = conv1d_forward_numpy
    conv1d_backward_x = conv1d_backward_x_numpy
    conv1d_backward_w = conv1d_backward_w_numpy
    tanh_forward = tanh_forward_numpy
    tanh_backward = tanh_backward_numpy
