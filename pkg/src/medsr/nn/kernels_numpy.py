"""Pure-numpy 3x3 same-padding convolution kernels.

Fallback path for machines without a working numba install. The 3x3
window is unrolled into 9 shifted views so each term is one BLAS matmul
over the channel axis; no im2col buffer is materialized.
"""

from __future__ import annotations

import numpy as np


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Correlate ``x`` (N,C,H,W) with ``w`` (O,C,3,3), zero pad 1, add ``b`` (O,)."""
    n, c, h, wd = x.shape
    xp = np.zeros((n, c, h + 2, wd + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    out = np.empty((n, h, wd, w.shape[0]), dtype=x.dtype)
    out[:] = b
    for dy in range(3):
        for dx in range(3):
            out += np.tensordot(
                xp[:, :, dy : dy + h, dx : dx + wd], w[:, :, dy, dx], axes=([1], [1])
            )
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv3x3_backward(
    x: np.ndarray, w: np.ndarray, g: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d_input, d_weights, d_bias) of conv3x3_forward.

    ``x`` is the forward input (N,C,H,W), ``g`` the upstream gradient
    shaped like the forward output (N,O,H,W).
    """
    n, c, h, wd = x.shape
    xp = np.zeros((n, c, h + 2, wd + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    gb = g.sum(axis=(0, 2, 3))
    gw = np.empty_like(w)
    gxp = np.zeros_like(xp)
    for dy in range(3):
        for dx in range(3):
            patch = xp[:, :, dy : dy + h, dx : dx + wd]
            gw[:, :, dy, dx] = np.tensordot(g, patch, axes=([0, 2, 3], [0, 2, 3]))
            gxp[:, :, dy : dy + h, dx : dx + wd] += np.tensordot(
                g, w[:, :, dy, dx], axes=([1], [0])
            ).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(gxp[:, :, 1:-1, 1:-1]), gw, gb
