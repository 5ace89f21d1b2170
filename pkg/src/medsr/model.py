"""The super-resolution network.

Two convolutional blocks around a sub-pixel upscaling (pixel shuffle)
layer. Block 1 is conv1..conv6 with a short skip (conv1 -> conv3) and a
long skip (conv1 -> conv5); conv6 emits r^2 maps (two-axis upscaling)
or r maps (one-axis). The shuffle assembles those maps into the
intermediate high-resolution image, which block 2 (conv7..conv10, short
skip conv7 -> conv9) refines into the final output. The training
objective is mean-L1 on the final output plus a weighted mean-L1 on the
intermediate image against the same target.

Default activation placement: ReLU after every convolution except conv6
(pre-shuffle) and conv10 (output), so both emitted images are
unconstrained reals; ``relu_on_outputs`` switches ReLU on for those two
layers as well. Skip tensors are post-ReLU activations added into the
destination convolution's pre-activation output.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .nn import (
    ConvLayer,
    add,
    conv2d_backward,
    conv2d_forward,
    l1_loss,
    l1_loss_grad,
    relu,
    relu_backward,
)


class AxisMode(Enum):
    TWO_AXES = "two_axes"
    ONE_AXIS = "one_axis"


ACCEPTED_SCALES = (1, 2, 4)


@dataclass(frozen=True)
class SRNetConfig:
    scale_factor: int = 2
    axis_mode: AxisMode = AxisMode.TWO_AXES
    base_filters: int = 32
    enable_second_block: bool = True
    enable_intermediate_loss: bool = True
    enable_short_skips: bool = True
    enable_long_skip: bool = True
    lambda_: float = 1.0
    relu_on_outputs: bool = False
    shuffle_axis: str = "rows"  # one-axis mode only: "rows" or "cols"

    def __post_init__(self):
        if self.scale_factor not in ACCEPTED_SCALES:
            raise ValueError(f"scale_factor must be one of {ACCEPTED_SCALES}, got {self.scale_factor}")
        if self.base_filters < 1:
            raise ValueError(f"base_filters must be >= 1, got {self.base_filters}")
        if self.lambda_ < 0:
            raise ValueError(f"lambda_ must be non-negative, got {self.lambda_}")
        if self.shuffle_axis not in ("rows", "cols"):
            raise ValueError(f"shuffle_axis must be 'rows' or 'cols', got {self.shuffle_axis!r}")

    @property
    def shuffle_channels(self) -> int:
        r = self.scale_factor
        return r * r if self.axis_mode is AxisMode.TWO_AXES else r


@dataclass
class SRNet:
    layers: list[ConvLayer]
    config: SRNetConfig

    def parameters(self) -> list[np.ndarray]:
        """Flat view [w1, b1, w2, b2, ...]; arrays are shared, not copied."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out


@dataclass
class ForwardTrace:
    """Outputs of one forward pass plus the activations backprop needs."""

    intermediate_hr: np.ndarray
    final_hr: np.ndarray
    _net: SRNet
    _input: np.ndarray
    _pre: list[np.ndarray]  # pre-activation of every conv, in layer order
    _post: list[np.ndarray]  # post-activation of every conv, in layer order
    _shuffled: np.ndarray
    _squeeze: bool  # True when the caller passed a bare (H,W) image


def _layer_channel_plan(config: SRNetConfig) -> list[tuple[int, int]]:
    f = config.base_filters
    plan = [(1, f), (f, f), (f, f), (f, f), (f, f), (f, config.shuffle_channels)]
    if config.enable_second_block:
        plan += [(1, f), (f, f), (f, f), (f, 1)]
    return plan


def build_network(config: SRNetConfig, seed: int, dtype=np.float32) -> SRNet:
    """Initialize all layers: He-normal weights (std sqrt(2/fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for in_ch, out_ch in _layer_channel_plan(config):
        std = np.sqrt(2.0 / (in_ch * 9))
        w = rng.normal(0.0, std, size=(out_ch, in_ch, 3, 3)).astype(dtype)
        b = np.zeros(out_ch, dtype=dtype)
        layers.append(ConvLayer(w, b))
    return SRNet(layers=layers, config=config)


# ---------------------------------------------------------------------------
# Sub-pixel (pixel shuffle) rearrangements
# ---------------------------------------------------------------------------


def pixel_shuffle_2d(maps: np.ndarray, r: int) -> np.ndarray:
    """(h, w, r^2) channel stack -> (h*r, w*r) image.

    out(y, x) = maps(y//r, x//r, (y%r)*r + (x%r)).
    """
    if maps.ndim != 3 or maps.shape[2] != r * r:
        raise ValueError(f"need (h, w, {r * r}) maps for r={r}, got shape {maps.shape}")
    h, w = maps.shape[:2]
    return maps.reshape(h, w, r, r).transpose(0, 2, 1, 3).reshape(h * r, w * r)


def pixel_shuffle_1d(maps: np.ndarray, r: int, axis: str = "rows") -> np.ndarray:
    """(h, w, r) channel stack -> (h*r, w) for axis="rows", (h, w*r) for "cols"."""
    if maps.ndim != 3 or maps.shape[2] != r:
        raise ValueError(f"need (h, w, {r}) maps for r={r}, got shape {maps.shape}")
    h, w = maps.shape[:2]
    if axis == "rows":
        return maps.transpose(0, 2, 1).reshape(h * r, w)
    if axis == "cols":
        return maps.reshape(h, w * r)
    raise ValueError(f"axis must be 'rows' or 'cols', got {axis!r}")


def _shuffle_nchw(x: np.ndarray, config: SRNetConfig) -> np.ndarray:
    """Batched shuffle: (N, shuffle_channels, H, W) -> (N, 1, H', W')."""
    n, c, h, w = x.shape
    r = config.scale_factor
    if config.axis_mode is AxisMode.TWO_AXES:
        return x.reshape(n, r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(n, 1, h * r, w * r)
    if config.shuffle_axis == "rows":
        return x.reshape(n, r, h, w).transpose(0, 2, 1, 3).reshape(n, 1, h * r, w)
    return x.reshape(n, r, h, w).transpose(0, 2, 3, 1).reshape(n, 1, h, w * r)


def _unshuffle_nchw(y: np.ndarray, config: SRNetConfig, h: int, w: int) -> np.ndarray:
    """Exact inverse of _shuffle_nchw (used to route gradients)."""
    n = y.shape[0]
    r = config.scale_factor
    if config.axis_mode is AxisMode.TWO_AXES:
        return y.reshape(n, h, r, w, r).transpose(0, 2, 4, 1, 3).reshape(n, r * r, h, w)
    if config.shuffle_axis == "rows":
        return y.reshape(n, h, r, w).transpose(0, 2, 1, 3).reshape(n, r, h, w)
    return y.reshape(n, h, w, r).transpose(0, 3, 1, 2).reshape(n, r, h, w)


# ---------------------------------------------------------------------------
# Forward / loss / backward over the fixed graph
# ---------------------------------------------------------------------------


def _lift(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 2:
        return x[None, None], True
    if x.ndim == 4 and x.shape[1] == 1:
        return x, False
    raise ValueError(f"input must be (H,W) or (N,1,H,W), got shape {x.shape}")


def forward(net: SRNet, x: np.ndarray) -> ForwardTrace:
    """Run the network; returns both emitted images plus cached activations."""
    cfg = net.config
    xb, squeeze = _lift(x)
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = []

    h = xb
    skip_src = None
    for idx in range(6):
        z = conv2d_forward(h, net.layers[idx])
        if idx == 2 and cfg.enable_short_skips:
            z = add(z, skip_src)
        if idx == 4 and cfg.enable_long_skip:
            z = add(z, skip_src)
        pre.append(z)
        if idx < 5:
            h = relu(z)
        else:
            h = relu(z) if cfg.relu_on_outputs else z
        post.append(h)
        if idx == 0:
            skip_src = h

    shuffled = _shuffle_nchw(post[5], cfg)
    out = shuffled

    if cfg.enable_second_block:
        h = shuffled
        skip_src = None
        for idx in range(6, 10):
            z = conv2d_forward(h, net.layers[idx])
            if idx == 8 and cfg.enable_short_skips:
                z = add(z, skip_src)
            pre.append(z)
            if idx < 9:
                h = relu(z)
            else:
                h = relu(z) if cfg.relu_on_outputs else z
            post.append(h)
            if idx == 6:
                skip_src = h
        out = post[-1]

    inter = shuffled[0, 0] if squeeze else shuffled
    final = out[0, 0] if squeeze else out
    return ForwardTrace(
        intermediate_hr=inter,
        final_hr=final,
        _net=net,
        _input=xb,
        _pre=pre,
        _post=post,
        _shuffled=shuffled,
        _squeeze=squeeze,
    )


def loss_full(trace: ForwardTrace, target: np.ndarray, lambda_: float) -> float:
    """L1(final, target) + lambda * L1(intermediate, target)."""
    loss = l1_loss(trace.final_hr, target)
    if lambda_ != 0.0:
        loss += lambda_ * l1_loss(trace.intermediate_hr, target)
    return loss


def backward(
    net: SRNet, trace: ForwardTrace, target: np.ndarray, lambda_: float
) -> list[np.ndarray]:
    """Gradients of loss_full for every parameter, ordered like net.parameters()."""
    if trace._net is not net:
        raise ValueError("trace was produced by a different network")
    cfg = net.config
    target_b, _ = _lift(target) if target.ndim == 2 else (target, False)
    if target_b.shape != trace._shuffled.shape:
        raise ValueError(
            f"target shape {target.shape} does not match output {trace._shuffled.shape}"
        )
    pre, post = trace._pre, trace._post
    grads: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    final_b = post[-1] if cfg.enable_second_block else trace._shuffled
    d_final = l1_loss_grad(final_b, target_b)

    if cfg.enable_second_block:
        dz = d_final if not cfg.relu_on_outputs else relu_backward(d_final, pre[9])
        dh9, gw, gb = conv2d_backward(post[8], net.layers[9], dz)
        grads[9] = (gw, gb)

        dz9 = relu_backward(dh9, pre[8])
        dh8, gw, gb = conv2d_backward(post[7], net.layers[8], dz9)
        grads[8] = (gw, gb)
        dh7_skip = dz9 if cfg.enable_short_skips else None

        dz8 = relu_backward(dh8, pre[7])
        dh7, gw, gb = conv2d_backward(post[6], net.layers[7], dz8)
        grads[7] = (gw, gb)
        if dh7_skip is not None:
            dh7 = dh7 + dh7_skip

        dz7 = relu_backward(dh7, pre[6])
        d_shuffled, gw, gb = conv2d_backward(trace._shuffled, net.layers[6], dz7)
        grads[6] = (gw, gb)
    else:
        d_shuffled = d_final

    if lambda_ != 0.0:
        d_shuffled = d_shuffled + lambda_ * l1_loss_grad(trace._shuffled, target_b)

    h_lr, w_lr = pre[5].shape[2], pre[5].shape[3]
    dy6 = _unshuffle_nchw(d_shuffled, cfg, h_lr, w_lr)
    dz6 = relu_backward(dy6, pre[5]) if cfg.relu_on_outputs else dy6
    dh5, gw, gb = conv2d_backward(post[4], net.layers[5], dz6)
    grads[5] = (gw, gb)

    dh1_acc = None

    dz5 = relu_backward(dh5, pre[4])
    dh4, gw, gb = conv2d_backward(post[3], net.layers[4], dz5)
    grads[4] = (gw, gb)
    if cfg.enable_long_skip:
        dh1_acc = dz5

    dz4 = relu_backward(dh4, pre[3])
    dh3, gw, gb = conv2d_backward(post[2], net.layers[3], dz4)
    grads[3] = (gw, gb)

    dz3 = relu_backward(dh3, pre[2])
    dh2, gw, gb = conv2d_backward(post[1], net.layers[2], dz3)
    grads[2] = (gw, gb)
    if cfg.enable_short_skips:
        dh1_acc = dz3 if dh1_acc is None else dh1_acc + dz3

    dz2 = relu_backward(dh2, pre[1])
    dh1, gw, gb = conv2d_backward(post[0], net.layers[1], dz2)
    grads[1] = (gw, gb)
    if dh1_acc is not None:
        dh1 = dh1 + dh1_acc

    dz1 = relu_backward(dh1, pre[0])
    _, gw, gb = conv2d_backward(trace._input, net.layers[0], dz1)
    grads[0] = (gw, gb)

    flat: list[np.ndarray] = []
    for idx in range(len(net.layers)):
        gw, gb = grads[idx]
        flat.append(gw)
        flat.append(gb)
    return flat
