"""Dataset preparation, training, and volume inference.

Low-resolution data is produced by box-average downsampling (the
degradation operator is recorded in every metric report since scores
depend on it). Training follows the published recipe: 7x7 patches,
batches of 128, Adam at 1e-3 dropping to 1e-4 at the configured epoch,
Gaussian-blur augmentation of half the input patches with a random
sigma in (0, 0.5]. 3D inference runs in two stages: the two-axis net
on every axial slice, then the one-axis net on every plane containing
the depth axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .model import AxisMode, SRNet, backward, forward, loss_full
from .nn import AdamState, adam_step, gaussian_blur_3x3
from .volio import Volume

DEGRADATION = "box-average"
_INFER_CHUNK = 8  # slices/planes per batched forward during volume inference


@dataclass
class TrainConfig:
    patch_size: int = 7
    batch_size: int = 128
    epochs: int = 40
    lr_initial: float = 1e-3
    lr_after_drop: float = 1e-4
    lr_drop_epoch: int = 20
    lambda_: float = 1.0
    blur_probability: float = 0.5
    sigma_max: float = 0.5
    fixed_sigma: float | None = None
    stride: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("patch_size", "batch_size", "epochs", "stride"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr_initial <= 0 or self.lr_after_drop <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.blur_probability <= 1.0:
            raise ValueError(f"blur_probability must be in [0,1], got {self.blur_probability}")
        if self.sigma_max <= 0:
            raise ValueError(f"sigma_max must be positive, got {self.sigma_max}")
        if self.lambda_ < 0:
            raise ValueError(f"lambda_ must be non-negative, got {self.lambda_}")


@dataclass
class PatchPair:
    lr_patch: np.ndarray
    hr_patch: np.ndarray


# ---------------------------------------------------------------------------
# Degradation and patch extraction
# ---------------------------------------------------------------------------


def degrade_volume(hr: Volume, r: int, axes: str) -> Volume:
    """Box-average downsample by r along the selected axes ("xy", "z", "xyz")."""
    if r == 1:
        return Volume(hr.voxels.copy(), hr.spacing_mm, dict(hr.meta))
    v = hr.voxels
    h, w, d = v.shape
    down_y = axes in ("xy", "xyz")
    down_z = axes in ("z", "xyz")
    if down_y and (h % r or w % r):
        raise ValueError(f"extents ({h},{w}) not divisible by r={r}; crop first")
    if down_z and d % r:
        raise ValueError(f"depth {d} not divisible by r={r}; crop first")
    sy, sx, sz = hr.spacing_mm
    if down_y:
        v = v.reshape(h // r, r, w // r, r, d).mean(axis=(1, 3))
        sy, sx = sy * r, sx * r
    if down_z:
        v = v.reshape(v.shape[0], v.shape[1], d // r, r).mean(axis=3)
        sz = sz * r
    return Volume(v.astype(np.float32), (sy, sx, sz), dict(hr.meta))


def _slide(extent: int, patch: int, stride: int) -> range:
    if patch > extent:
        raise ValueError(f"patch size {patch} exceeds extent {extent}")
    return range(0, extent - patch + 1, stride)


def _plane_pairs(lr: Volume, hr: Volume) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Depth-as-rows reslices (sagittal then coronal) of an xy-matched pair."""
    for j in range(lr.width):
        yield lr.voxels[:, j, :].T, hr.voxels[:, j, :].T
    for i in range(lr.height):
        yield lr.voxels[i, :, :].T, hr.voxels[i, :, :].T


def extract_patches(
    lr: Volume, hr: Volume, cfg: TrainConfig, axis_mode: AxisMode
) -> Iterator[PatchPair]:
    """Slide p x p windows over the LR volume, paired with the matching HR crop.

    Two-axis mode walks every axial slice; one-axis mode walks the
    sagittal and coronal reslices so the upscaled axis is depth.
    """
    p = cfg.patch_size
    if axis_mode is AxisMode.TWO_AXES:
        if lr.depth != hr.depth:
            raise ValueError(f"depth mismatch: lr {lr.depth} vs hr {hr.depth}")
        r = hr.height // lr.height
        if (lr.height * r, lr.width * r) != (hr.height, hr.width):
            raise ValueError(
                f"lr {lr.voxels.shape} and hr {hr.voxels.shape} are not an integer factor apart"
            )
        for z in range(lr.depth):
            lr_slice = lr.voxels[:, :, z]
            hr_slice = hr.voxels[:, :, z]
            for y in _slide(lr.height, p, cfg.stride):
                for x in _slide(lr.width, p, cfg.stride):
                    yield PatchPair(
                        lr_slice[y : y + p, x : x + p],
                        hr_slice[y * r : (y + p) * r, x * r : (x + p) * r],
                    )
    else:
        if (lr.height, lr.width) != (hr.height, hr.width):
            raise ValueError(
                f"xy extents must match for one-axis pairs: {lr.voxels.shape} vs {hr.voxels.shape}"
            )
        r = hr.depth // lr.depth
        if lr.depth * r != hr.depth:
            raise ValueError(f"depths {lr.depth} and {hr.depth} are not an integer factor apart")
        for lr_plane, hr_plane in _plane_pairs(lr, hr):
            for zy in _slide(lr_plane.shape[0], p, cfg.stride):
                for x in _slide(lr_plane.shape[1], p, cfg.stride):
                    yield PatchPair(
                        lr_plane[zy : zy + p, x : x + p],
                        hr_plane[zy * r : (zy + p) * r, x : x + p],
                    )


def stack_pairs(pairs: Iterable[PatchPair]) -> tuple[np.ndarray, np.ndarray]:
    """Collect a patch stream into (P,1,h,w) float32 arrays."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty patch stream")
    lr = np.stack([p.lr_patch for p in pairs]).astype(np.float32)[:, None]
    hr = np.stack([p.hr_patch for p in pairs]).astype(np.float32)[:, None]
    return lr, hr


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


def augment(patch: np.ndarray, cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    """Blur the LR patch with probability blur_probability; HR targets are never touched.

    Sigma is uniform in (0, sigma_max], or fixed_sigma when the ablation
    pins it. Consumes one rng draw for the gate and one for the sigma.
    """
    if rng.random() >= cfg.blur_probability:
        return patch
    if cfg.fixed_sigma is not None:
        sigma = cfg.fixed_sigma
    else:
        sigma = cfg.sigma_max * (1.0 - rng.random())  # in (0, sigma_max]
    return gaussian_blur_3x3(patch, sigma)


def _augment_batch(lr_b: np.ndarray, cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.blur_probability == 0.0:
        return lr_b
    out = lr_b.copy()
    for i in range(out.shape[0]):
        out[i, 0] = augment(out[i, 0], cfg, rng)
    return out


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _as_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], np.ndarray):
        return pairs
    return stack_pairs(pairs)


def train_stage(
    pairs, net: SRNet, cfg: TrainConfig, on_epoch_end=None
) -> tuple[SRNet, list[tuple[int, float, float]]]:
    """Minimize the full loss over the patch stream; returns (net, epoch history).

    History rows are (epoch, mean_loss, learning_rate). Deterministic in
    cfg.seed: shuffling and augmentation restart from a per-epoch stream.
    ``on_epoch_end(epoch, net, stats)`` runs at every epoch boundary.
    """
    lr_stack, hr_stack = _as_arrays(pairs)
    n = lr_stack.shape[0]
    if n == 0:
        raise ValueError("empty patch stream")
    _check_pair_shapes(lr_stack, hr_stack, net)
    eff_lambda = cfg.lambda_ if net.config.enable_intermediate_loss else 0.0
    params = net.parameters()
    state = AdamState.init(params, cfg.lr_initial)
    history = []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        state.learning_rate = cfg.lr_initial if epoch < cfg.lr_drop_epoch else cfg.lr_after_drop
        perm = rng.permutation(n)
        losses = []
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            lr_b = _augment_batch(lr_stack[idx], cfg, rng)
            hr_b = hr_stack[idx]
            trace = forward(net, lr_b)
            loss = loss_full(trace, hr_b, eff_lambda)
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = backward(net, trace, hr_b, eff_lambda)
            adam_step(params, grads, state)
            losses.append(loss)
        stats = (epoch, float(np.mean(losses)), state.learning_rate)
        history.append(stats)
        if on_epoch_end is not None:
            on_epoch_end(epoch, net, stats)
    return net, history


def _check_pair_shapes(lr_stack: np.ndarray, hr_stack: np.ndarray, net: SRNet) -> None:
    r = net.config.scale_factor
    p_h, p_w = lr_stack.shape[2], lr_stack.shape[3]
    if net.config.axis_mode is AxisMode.TWO_AXES:
        expected = (p_h * r, p_w * r)
    elif net.config.shuffle_axis == "rows":
        expected = (p_h * r, p_w)
    else:
        expected = (p_h, p_w * r)
    if hr_stack.shape[2:] != expected:
        raise ValueError(
            f"HR patches {hr_stack.shape[2:]} do not match net axis mode "
            f"(expected {expected} for LR {lr_stack.shape[2:]})"
        )


def write_loss_csv(history: list[tuple[int, float, float]], path) -> None:
    with open(path, "w") as f:
        f.write("epoch,mean_loss,learning_rate\n")
        for epoch, loss, lr in history:
            f.write(f"{epoch},{loss:.8g},{lr:.8g}\n")


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


def super_resolve_2d(net: SRNet, image: np.ndarray) -> np.ndarray:
    """Whole-slice forward pass; final output clamped to [0,1]."""
    if net.config.axis_mode is not AxisMode.TWO_AXES:
        raise ValueError("super_resolve_2d needs a two-axis network")
    trace = forward(net, image.astype(np.float32, copy=False))
    return np.clip(trace.final_hr, 0.0, 1.0)


def _forward_batched(net: SRNet, stack: np.ndarray) -> np.ndarray:
    """Clamped final outputs for a (N,1,H,W) stack, in chunks."""
    outs = []
    for start in range(0, stack.shape[0], _INFER_CHUNK):
        trace = forward(net, stack[start : start + _INFER_CHUNK])
        outs.append(np.clip(trace.final_hr, 0.0, 1.0))
    return np.concatenate(outs, axis=0)


def super_resolve_volume_2d(net: SRNet, vol: Volume) -> Volume:
    """Stage 1 only: upscale width/height of every axial slice."""
    r = net.config.scale_factor
    stack = np.ascontiguousarray(vol.voxels.transpose(2, 0, 1))[:, None].astype(np.float32)
    hr = _forward_batched(net, stack)  # (D,1,H*r,W*r)
    out = np.ascontiguousarray(hr[:, 0].transpose(1, 2, 0))
    sy, sx, sz = vol.spacing_mm
    return Volume(out, (sy / r, sx / r, sz), dict(vol.meta))


def super_resolve_depth(net_z: SRNet, vol: Volume) -> Volume:
    """Stage 2: upscale depth on every plane containing the depth axis."""
    if net_z.config.axis_mode is not AxisMode.ONE_AXIS:
        raise ValueError("depth stage needs a one-axis network")
    if net_z.config.shuffle_axis != "rows":
        raise ValueError("depth stage expects a rows-shuffle network")
    r = net_z.config.scale_factor
    # sagittal planes, depth as rows: (W) planes of (D, H)
    stack = np.ascontiguousarray(vol.voxels.transpose(1, 2, 0))[:, None].astype(np.float32)
    hr = _forward_batched(net_z, stack)  # (W,1,D*r,H)
    out = np.ascontiguousarray(hr[:, 0].transpose(2, 0, 1))
    sy, sx, sz = vol.spacing_mm
    return Volume(out, (sy, sx, sz / r), dict(vol.meta))


def super_resolve_3d(net_xy: SRNet, net_z: SRNet, vol: Volume, r: int) -> Volume:
    """Two-stage 3D upscaling: axial slices first, then depth."""
    if net_xy.config.axis_mode is not AxisMode.TWO_AXES:
        raise ValueError("stage-1 network must be two-axis")
    if net_xy.config.scale_factor != r or net_z.config.scale_factor != r:
        raise ValueError(
            f"network factors ({net_xy.config.scale_factor}, {net_z.config.scale_factor}) "
            f"do not match requested r={r}"
        )
    return super_resolve_depth(net_z, super_resolve_volume_2d(net_xy, vol))


# ---------------------------------------------------------------------------
# Self-ensemble
# ---------------------------------------------------------------------------

_DIHEDRAL = [(k, f) for f in (False, True) for k in range(4)]


def self_ensemble_apply(upscale, image: np.ndarray) -> np.ndarray:
    """Median over the 8 dihedral transforms of ``image`` under ``upscale``."""
    aligned = []
    for k, flip in _DIHEDRAL:
        t = np.fliplr(image) if flip else image
        t = np.rot90(t, k)
        out = upscale(t)
        out = np.rot90(out, -k)
        if flip:
            out = np.fliplr(out)
        aligned.append(out)
    return np.median(np.stack(aligned), axis=0)


def self_ensemble(net: SRNet, image: np.ndarray) -> np.ndarray:
    """Self-ensembled super-resolution of one slice (8 forward passes)."""
    return self_ensemble_apply(lambda img: super_resolve_2d(net, img), image)
