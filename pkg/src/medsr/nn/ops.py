"""Numeric primitives for the super-resolution network.

Everything the model needs and nothing more: 3x3 same-padding
convolution with backprop, ReLU, elementwise add, mean-L1 loss, a 3x3
Gaussian blur, and Adam. Tensors are plain numpy arrays; float32 is the
working precision, float64 is used by the gradient-check tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import conv3x3_forward, conv3x3_backward


@dataclass
class ConvLayer:
    """One 3x3 convolution: weights (out_ch, in_ch, 3, 3) and bias (out_ch,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 4 or self.weights.shape[2:] != (3, 3):
            raise ValueError(f"weights must be (out, in, 3, 3), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} filters"
            )

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]


def count_parameters(layer: ConvLayer) -> int:
    """Learnable scalar count: out_ch * (in_ch * 9 + 1)."""
    return layer.out_channels * (layer.in_channels * 9 + 1)


def conv2d_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Same-padding 3x3 convolution of x (N,C,H,W) -> (N,out_ch,H,W)."""
    if x.ndim != 4:
        raise ValueError(f"input must be (N,C,H,W), got shape {x.shape}")
    if x.shape[1] != layer.in_channels:
        raise ValueError(
            f"input has {x.shape[1]} channels (shape {x.shape}) but layer expects "
            f"{layer.in_channels} (weights {layer.weights.shape})"
        )
    return conv3x3_forward(x, layer.weights, layer.bias)


def conv2d_backward(
    x: np.ndarray, layer: ConvLayer, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d_input, d_weights, d_bias) given the forward input and upstream grad."""
    expected = (x.shape[0], layer.out_channels, x.shape[2], x.shape[3])
    if upstream.shape != expected:
        raise ValueError(
            f"upstream gradient shape {upstream.shape} does not match forward output {expected}"
        )
    if x.shape[1] != layer.in_channels:
        raise ValueError(
            f"input has {x.shape[1]} channels but layer expects {layer.in_channels}"
        )
    return conv3x3_backward(x, layer.weights, upstream)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(upstream: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Pass upstream where x > 0; ties at 0 get zero gradient."""
    return np.where(x > 0, upstream, 0).astype(upstream.dtype, copy=False)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise sum of identically shaped tensors (skip connections)."""
    if a.shape != b.shape:
        raise ValueError(f"cannot add shapes {a.shape} and {b.shape}")
    return a + b


def l1_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute difference over all elements."""
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def l1_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Subgradient of the mean L1 loss: sign(pred - target)/count, sign(0) = 0."""
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return np.sign(pred - target) / pred.size


def gaussian_kernel_3x3(sigma: float) -> np.ndarray:
    """2D Gaussian sampled at offsets {-1,0,1}^2, normalized to sum 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d = np.array([-1.0, 0.0, 1.0])
    sq = d[:, None] ** 2 + d[None, :] ** 2
    k = np.exp(-sq / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur_3x3(image: np.ndarray, sigma: float) -> np.ndarray:
    """Blur an (H,W) image with the sampled 3x3 Gaussian; replicate-pad borders."""
    if image.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {image.shape}")
    k = gaussian_kernel_3x3(sigma).astype(image.dtype)
    p = np.pad(image, 1, mode="edge")
    h, w = image.shape
    out = np.zeros_like(image)
    for dy in range(3):
        for dx in range(3):
            out += k[dy, dx] * p[dy : dy + h, dx : dx + w]
    return out


@dataclass
class AdamState:
    """Adam moments for one list of parameter arrays."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(cls, params: list[np.ndarray], learning_rate: float, **kw) -> "AdamState":
        return cls(
            learning_rate=learning_rate,
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            **kw,
        )


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> AdamState:
    """One bias-corrected Adam update. Mutates params and state in place."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError(
            f"got {len(params)} params, {len(grads)} grads, "
            f"{len(state.first_moment)} moment arrays"
        )
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ValueError(f"grad {i} shape {g.shape} != param shape {params[i].shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient in parameter {i}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state
