"""im2col / col2im kernels for channels-last 1-D convolution with reflect padding.

Activations are stored as ``(batch, length, channels)``. ``im2col`` builds
the ``(batch * length, kernel * channels)`` patch matrix (tap-major: column
``k * channels + c``) with reflect padding fused in; ``col2im`` is its adjoint, scattering patch gradients
back and folding the padded positions onto their reflected sources. The
dense products around them are BLAS matrix multiplies in both backends.
"""
import numpy as np

from .._accel import USE_NUMBA, njit


def reflect_index(j, length):
    """Source index of padded position ``j`` (numpy ``mode="reflect"``)."""
    if length == 1:
        return 0
    period = 2 * (length - 1)
    j = abs(j) % period
    return period - j if j >= length else j


@njit
def _reflect(j, length):
    if length == 1:
        return 0
    period = 2 * (length - 1)
    if j < 0:
        j = -j
    j = j % period
    if j >= length:
        return period - j
    return j


@njit
def _im2col_numba(x, ksize):
    b, n, c = x.shape
    pad = ksize // 2
    out = np.empty((b * n, ksize * c), dtype=x.dtype)
    for bi in range(b):
        for t in range(n):
            row = bi * n + t
            for k in range(ksize):
                src = _reflect(t + k - pad, n)
                base = k * c
                for ci in range(c):
                    out[row, base + ci] = x[bi, src, ci]
    return out


@njit
def _col2im_numba(cols, b, n, c, ksize):
    pad = ksize // 2
    dx = np.zeros((b, n, c), dtype=cols.dtype)
    for bi in range(b):
        for t in range(n):
            row = bi * n + t
            for k in range(ksize):
                src = _reflect(t + k - pad, n)
                base = k * c
                for ci in range(c):
                    dx[bi, src, ci] += cols[row, base + ci]
    return dx


def _pad_reflect(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (0, 0)), mode="reflect")


def _im2col_numpy(x, ksize):
    b, n, c = x.shape
    xp = _pad_reflect(x, ksize // 2)
    win = np.lib.stride_tricks.sliding_window_view(xp, ksize, axis=1)  # (b, n, c, k)
    return win.transpose(0, 1, 3, 2).reshape(b * n, ksize * c)


def _col2im_numpy(cols, b, n, c, ksize):
    pad = ksize // 2
    g = cols.reshape(b, n, ksize, c)
    dxp = np.zeros((b, n + 2 * pad, c), dtype=cols.dtype)
    for k in range(ksize):
        dxp[:, k:k + n, :] += g[:, :, k, :]
    dx = dxp[:, pad:pad + n, :].copy()
    for j in range(pad):
        dx[:, reflect_index(j - pad, n), :] += dxp[:, j, :]
        dx[:, reflect_index(n + j, n), :] += dxp[:, pad + n + j, :]
    return dx


im2col_numba = _im2col_numba
col2im_numba = _col2im_numba
im2col_numpy = _im2col_numpy
col2im_numpy = _col2im_numpy

if USE_NUMBA:
    im2col = _im2col_numba
    col2im = _col2im_numba
else:
    im2col = _im2col_numpy
    col2im = _col2im_numpy


def check_length(n, ksize):
    if ksize // 2 >= n:
        raise ValueError(f"reflect padding of {ksize // 2} needs length > {ksize // 2}, got {n}")
