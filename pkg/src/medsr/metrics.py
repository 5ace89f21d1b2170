"""Image quality metrics: PSNR, SSIM, and an information-fidelity score.

SSIM follows the standard windowed definition: 11x11 Gaussian window
with sigma 1.5, K1=0.01, K2=0.03, stats over valid windows only,
dynamic range 1.0 for [0,1] images unless overridden.

The information fidelity criterion here uses a 3-scale smooth/residual
pyramid with scalar Gaussian-scale-mixture statistics estimated over
3x3 neighborhoods. Scores are deterministic and comparable across
methods evaluated by this module, but not interchangeable with
steerable-pyramid implementations.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_IFC_SCALES = 3
_IFC_EPS = 1e-10


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE); +inf when the images are identical."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(n: int, sigma: float) -> np.ndarray:
    d = np.arange(n) - (n - 1) / 2.0
    w = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Separable valid-mode filtering of a 2D array with a 1D window."""
    n = len(w)
    h, wd = x.shape
    t = np.zeros((h - n + 1, wd), dtype=np.float64)
    for k in range(n):
        t += w[k] * x[k : k + h - n + 1, :]
    out = np.zeros((h - n + 1, wd - n + 1), dtype=np.float64)
    for k in range(n):
        out += w[k] * t[:, k : k + wd - n + 1]
    return out


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Mean local structural similarity; result is in [-1, 1]."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError(f"ssim expects 2D images, got shape {a.shape}")
    if min(a.shape) < _SSIM_WINDOW:
        raise ValueError(
            f"image {a.shape} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window"
        )
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    w = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mx = _filter_valid(x, w)
    my = _filter_valid(y, w)
    vx = _filter_valid(x * x, w) - mx * mx
    vy = _filter_valid(y * y, w) - my * my
    vxy = _filter_valid(x * y, w) - mx * my
    num = (2 * mx * my + c1) * (2 * vxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def _smooth5(x: np.ndarray) -> np.ndarray:
    """Same-size separable 5-tap Gaussian (sigma 1), replicate borders."""
    w = _gaussian_window(5, 1.0)
    p = np.pad(x, 2, mode="edge")
    h, wd = x.shape
    t = np.zeros((h, wd + 4), dtype=np.float64)
    for k in range(5):
        t += w[k] * p[k : k + h, :]
    out = np.zeros((h, wd), dtype=np.float64)
    for k in range(5):
        out += w[k] * t[:, k : k + wd]
    return out


def _half(x: np.ndarray) -> np.ndarray:
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    c = x[:h, :w]
    return 0.25 * (c[0::2, 0::2] + c[0::2, 1::2] + c[1::2, 0::2] + c[1::2, 1::2])


def _local_moments_3x3(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = np.ones(3) / 3.0
    mu = _filter_valid(x, w)
    ex2 = _filter_valid(x * x, w)
    return mu, ex2


def _subband_information(c: np.ndarray, d: np.ndarray) -> float:
    mu_c, e_cc = _local_moments_3x3(c)
    mu_d, e_dd = _local_moments_3x3(d)
    e_cd = _filter_valid(c * d, np.ones(3) / 3.0)
    var_c = np.maximum(e_cc - mu_c * mu_c, 0.0)
    var_d = np.maximum(e_dd - mu_d * mu_d, 0.0)
    cov = e_cd - mu_c * mu_d
    g = np.maximum(cov / (var_c + _IFC_EPS), 0.0)
    sigma_v = np.maximum(var_d - g * cov, _IFC_EPS)
    return float(np.sum(0.5 * np.log2(1.0 + g * g * var_c / sigma_v)))


def ifc(reference: np.ndarray, distorted: np.ndarray) -> float:
    """Non-negative information fidelity of ``distorted`` w.r.t. ``reference``."""
    if reference.shape != distorted.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {distorted.shape}")
    if reference.ndim != 2:
        raise ValueError(f"ifc expects 2D images, got shape {reference.shape}")
    if min(reference.shape) < 32:
        raise ValueError(f"image {reference.shape} too small; extents must be >= 32")
    ref = reference.astype(np.float64)
    dis = distorted.astype(np.float64)
    total = 0.0
    for _ in range(_IFC_SCALES):
        ref_low = _smooth5(ref)
        dis_low = _smooth5(dis)
        total += _subband_information(ref - ref_low, dis - dis_low)
        ref = _half(ref_low)
        dis = _half(dis_low)
    return total


# ---------------------------------------------------------------------------
# Dataset-level evaluation
# ---------------------------------------------------------------------------


@dataclass
class MetricRow:
    image_id: str
    psnr_db: float
    ssim: float
    ifc: float


@dataclass
class MetricReport:
    per_image: list[MetricRow]
    comments: list[str]

    @property
    def aggregate(self) -> MetricRow:
        return MetricRow(
            image_id="mean",
            psnr_db=float(np.mean([r.psnr_db for r in self.per_image])),
            ssim=float(np.mean([r.ssim for r in self.per_image])),
            ifc=float(np.mean([r.ifc for r in self.per_image])),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        for c in self.comments:
            buf.write(f"# {c}\n")
        buf.write("image_id,psnr_db,ssim,ifc\n")
        for r in self.per_image + [self.aggregate]:
            buf.write(f"{r.image_id},{r.psnr_db:.6g},{r.ssim:.6g},{r.ifc:.6g}\n")
        return buf.getvalue()

    def format_table(self) -> str:
        rows = self.per_image + [self.aggregate]
        lines = [f"{'image_id':<20} {'psnr_db':>10} {'ssim':>8} {'ifc':>8}"]
        for r in rows:
            lines.append(f"{r.image_id:<20} {r.psnr_db:>10.4f} {r.ssim:>8.4f} {r.ifc:>8.4f}")
        return "\n".join(lines)


def volume_metrics(
    truth: np.ndarray, candidate: np.ndarray, quantize_8bit: bool = False
) -> tuple[float, float, float]:
    """PSNR over all voxels; SSIM and IFC averaged over axial slices."""
    if truth.shape != candidate.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {candidate.shape}")
    a, b = truth, np.clip(candidate, 0.0, 1.0)
    if quantize_8bit:
        a = np.round(a * 255.0) / 255.0
        b = np.round(b * 255.0) / 255.0
    p = psnr(a, b, peak=1.0)
    if a.ndim == 2:
        return p, ssim(a, b), ifc(a, b)
    s_vals = [ssim(a[:, :, z], b[:, :, z]) for z in range(a.shape[2])]
    i_vals = [ifc(a[:, :, z], b[:, :, z]) for z in range(a.shape[2])]
    return p, float(np.mean(s_vals)), float(np.mean(i_vals))


def evaluate(
    method,
    dataset: list[tuple[str, "np.ndarray"]],
    degrade,
    comments: list[str] | None = None,
    quantize_8bit: bool = False,
) -> MetricReport:
    """Degrade each ground-truth array, reconstruct with ``method``, score.

    ``method(lr_array) -> hr_array`` and ``degrade(hr_array) -> lr_array``
    are plain array transforms; rows are sorted by image id.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    rows = []
    for image_id, truth in sorted(dataset, key=lambda t: t[0]):
        recon = method(degrade(truth))
        p, s, i = volume_metrics(truth, recon, quantize_8bit=quantize_8bit)
        rows.append(MetricRow(image_id=image_id, psnr_db=p, ssim=s, ifc=i))
    return MetricReport(per_image=rows, comments=list(comments or []))
