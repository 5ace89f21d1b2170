"""Volume storage, synthetic phantoms, and figure export.

Native format: a flat little-endian float32 voxel file plus a JSON
sidecar (``<file>.json``) holding format version, shape, spacing and
the intensity mapping back to the source units. Voxels are indexed
(y, x, z), i.e. array shape (height, width, depth), row-major.

Interchange format: a directory of 8- or 16-bit grayscale PNGs named
``slice_0000.png`` ascending in z, with a ``volume.json`` sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

RAW_FORMAT_VERSION = 1
VALID_AXES = ("xy", "z", "xyz")
VALID_SPLITS = ("train", "test")


@dataclass
class Volume:
    """3D grayscale image, intensities in [0,1], voxel spacing in mm."""

    voxels: np.ndarray  # (H, W, D) float32
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.voxels.ndim != 3:
            raise ValueError(f"voxels must be 3D (H, W, D), got shape {self.voxels.shape}")
        if any(s <= 0 for s in self.spacing_mm):
            raise ValueError(f"spacing must be positive, got {self.spacing_mm}")

    @property
    def height(self) -> int:
        return self.voxels.shape[0]

    @property
    def width(self) -> int:
        return self.voxels.shape[1]

    @property
    def depth(self) -> int:
        return self.voxels.shape[2]


def normalize_to_unit(raw: np.ndarray, spacing_mm=(1.0, 1.0, 1.0)) -> Volume:
    """Min-max normalize arbitrary intensities to [0,1], keeping the inverse map."""
    lo, hi = float(raw.min()), float(raw.max())
    scale = hi - lo if hi > lo else 1.0
    vox = ((raw - lo) / scale).astype(np.float32)
    return Volume(vox, tuple(spacing_mm), meta={"intensity_offset": lo, "intensity_scale": scale})


# ---------------------------------------------------------------------------
# Raw float32 + sidecar
# ---------------------------------------------------------------------------


def save_volume(vol: Volume, path: str | Path) -> None:
    """Write voxels as flat little-endian float32 plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(vol.voxels, dtype="<f4").tofile(path)
    sidecar = {
        "format_version": RAW_FORMAT_VERSION,
        "shape": list(vol.voxels.shape),
        "axes": "y,x,z",
        "dtype": "<f4",
        "spacing_mm": list(vol.spacing_mm),
        "meta": vol.meta,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True))


def _load_raw(path: Path) -> Volume:
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.exists():
        raise ValueError(f"{path}: missing sidecar {sidecar_path.name}")
    try:
        sidecar = json.loads(sidecar_path.read_text())
        shape = tuple(int(s) for s in sidecar["shape"])
        spacing = tuple(float(s) for s in sidecar["spacing_mm"])
        version = int(sidecar["format_version"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ValueError(f"{sidecar_path}: malformed sidecar ({e})") from e
    if version != RAW_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported raw format version {version}")
    if len(shape) != 3:
        raise ValueError(f"{path}: sidecar shape {shape} is not 3D")
    data = np.fromfile(path, dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise ValueError(
            f"{path}: file holds {data.size} voxels but sidecar shape {shape} "
            f"needs {int(np.prod(shape))}"
        )
    return Volume(data.reshape(shape), spacing, meta=dict(sidecar.get("meta", {})))


# ---------------------------------------------------------------------------
# PNG slice stacks
# ---------------------------------------------------------------------------


def save_volume_png(vol: Volume, directory: str | Path, bit_depth: int = 16) -> None:
    """Write axial slices as ``slice_%04d.png`` plus a volume.json sidecar."""
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    peak = 2**bit_depth - 1
    for z in range(vol.depth):
        q = np.round(np.clip(vol.voxels[:, :, z], 0.0, 1.0) * peak)
        if bit_depth == 8:
            img = Image.fromarray(q.astype(np.uint8), mode="L")
        else:
            img = Image.fromarray(q.astype(np.uint16))
        img.save(directory / f"slice_{z:04d}.png")
    sidecar = {
        "format_version": RAW_FORMAT_VERSION,
        "shape": list(vol.voxels.shape),
        "bit_depth": bit_depth,
        "spacing_mm": list(vol.spacing_mm),
        "meta": vol.meta,
    }
    (directory / "volume.json").write_text(json.dumps(sidecar, indent=1, sort_keys=True))


def _load_png_stack(directory: Path) -> Volume:
    sidecar_path = directory / "volume.json"
    if not sidecar_path.exists():
        raise ValueError(f"{directory}: missing volume.json sidecar")
    sidecar = json.loads(sidecar_path.read_text())
    shape = tuple(int(s) for s in sidecar["shape"])
    bit_depth = int(sidecar["bit_depth"])
    if bit_depth not in (8, 16):
        raise ValueError(f"{directory}: unsupported bit depth {bit_depth}")
    files = sorted(directory.glob("slice_*.png"))
    if len(files) != shape[2]:
        raise ValueError(
            f"{directory}: found {len(files)} slices but sidecar declares {shape[2]}"
        )
    peak = 2**bit_depth - 1
    vox = np.empty(shape, dtype=np.float32)
    for z, f in enumerate(files):
        sl = np.asarray(Image.open(f))
        if sl.shape != shape[:2]:
            raise ValueError(f"{f}: slice shape {sl.shape} != sidecar {shape[:2]}")
        vox[:, :, z] = sl.astype(np.float32) / peak
    return Volume(
        vox, tuple(float(s) for s in sidecar["spacing_mm"]), meta=dict(sidecar.get("meta", {}))
    )


def load_volume(path: str | Path) -> Volume:
    """Load a raw volume file or a PNG slice directory."""
    path = Path(path)
    if path.is_dir():
        return _load_png_stack(path)
    if not path.exists():
        raise ValueError(f"{path}: no such volume")
    return _load_raw(path)


# ---------------------------------------------------------------------------
# Synthetic phantoms
# ---------------------------------------------------------------------------

PHANTOM_KINDS = ("spheres", "ramps", "shepp_like")


def _coordinate_grids(shape):
    return np.meshgrid(
        np.linspace(-1, 1, shape[0]),
        np.linspace(-1, 1, shape[1]),
        np.linspace(-1, 1, shape[2]),
        indexing="ij",
    )


def _smooth_background(shape, rng) -> np.ndarray:
    yy, xx, zz = _coordinate_grids(shape)
    out = np.zeros(shape)
    for _ in range(3):
        fy, fx, fz = rng.uniform(0.5, 2.0, size=3)
        py, px, pz = rng.uniform(0, 2 * np.pi, size=3)
        out += rng.uniform(0.1, 0.35) * (
            np.cos(fy * np.pi * yy + py) + np.cos(fx * np.pi * xx + px) + np.cos(fz * np.pi * zz + pz)
        )
    return out


def _soft_step(signed_dist: np.ndarray, width: float) -> np.ndarray:
    """Sigmoid edge: 1 inside (negative distance), 0 outside."""
    return 1.0 / (1.0 + np.exp(np.clip(signed_dist / width, -60.0, 60.0)))


def _fine_texture(shape, rng, sigma_voxels: float = 1.2) -> np.ndarray:
    """Unit-std Gaussian-correlated random field (tissue-like fine detail)."""
    noise = rng.standard_normal(shape)
    spectrum = np.fft.fftn(noise)
    ky, kx, kz = np.meshgrid(*(np.fft.fftfreq(n) for n in shape), indexing="ij")
    spectrum *= np.exp(-2.0 * (np.pi * sigma_voxels) ** 2 * (ky**2 + kx**2 + kz**2))
    field = np.real(np.fft.ifftn(spectrum))
    return field / field.std()


def generate_phantom(kind: str, extents, seed: int) -> Volume:
    """Deterministic test volume spanning [0,1].

    All kinds mix a smooth background with sharp (sub-voxel) boundaries
    and a fine correlated texture, so interpolation lands in a realistic
    PSNR regime instead of reconstructing nearly perfectly.
    """
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}; choose from {PHANTOM_KINDS}")
    if isinstance(extents, int):
        extents = (extents, extents, extents)
    shape = tuple(int(e) for e in extents)
    if any(e < 32 for e in shape):
        raise ValueError(f"phantom extents must be >= 32 per axis, got {shape}")
    rng = np.random.default_rng(seed)
    yy, xx, zz = _coordinate_grids(shape)
    voxel = 2.0 / min(shape)  # one voxel in normalized coordinates
    vol = _smooth_background(shape, rng)

    if kind == "spheres":
        edge = 0.3 * voxel
        for _ in range(12):
            cy, cx, cz = rng.uniform(-0.7, 0.7, size=3)
            radius = rng.uniform(0.08, 0.32)
            amp = rng.uniform(0.4, 1.0) * rng.choice([-1.0, 1.0])
            dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2 + (zz - cz) ** 2)
            vol += amp * _soft_step(dist - radius, edge)
        vol += 0.35 * _fine_texture(shape, rng)
    elif kind == "ramps":
        # the mostly-smooth family: gradients plus one sharp tilted step
        gy, gx, gz = rng.uniform(-1.0, 1.0, size=3)
        vol += 1.5 * (gy * yy + gx * xx + gz * zz)
        ny, nx, nz = rng.normal(size=3)
        norm = np.sqrt(ny * ny + nx * nx + nz * nz)
        plane = (ny * yy + nx * xx + nz * zz) / norm - rng.uniform(-0.3, 0.3)
        vol += 0.6 * _soft_step(plane, 0.3 * voxel)
        vol += 0.15 * _fine_texture(shape, rng)
    else:  # shepp_like: nested sharp ellipsoids with bright thin shells
        edge = 0.3 * voxel
        for k in range(6):
            cy, cx, cz = rng.uniform(-0.45, 0.45, size=3)
            ay, ax, az = rng.uniform(0.15, 0.8 - 0.1 * k, size=3)
            amp = rng.uniform(0.25, 0.8) * rng.choice([-1.0, 1.0])
            dist = np.sqrt(((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2 + ((zz - cz) / az) ** 2)
            vol += amp * _soft_step(dist - 1.0, edge)
            if k < 3:
                vol += 0.4 * np.exp(-((dist - 1.0) ** 2) / (2 * (0.75 * voxel) ** 2))
        vol += 0.3 * _fine_texture(shape, rng)

    lo, hi = vol.min(), vol.max()
    vox = ((vol - lo) / (hi - lo)).astype(np.float32)
    return Volume(vox, (1.0, 1.0, 1.0), meta={"phantom": kind, "seed": int(seed)})


# ---------------------------------------------------------------------------
# Comparison figure export
# ---------------------------------------------------------------------------

_LABEL_STRIP = 14


def export_comparison(
    original: np.ndarray, candidates: list[tuple[str, np.ndarray]], path: str | Path
) -> None:
    """Tile the original and candidate slices side by side into one labeled PNG."""
    panels = [("original", original)] + list(candidates)
    h, w = original.shape
    for name, img in panels:
        if img.shape != (h, w):
            raise ValueError(f"candidate {name!r} shape {img.shape} != original {(h, w)}")
    canvas = Image.new("L", (w * len(panels), h + _LABEL_STRIP), color=0)
    draw = ImageDraw.Draw(canvas)
    for i, (name, img) in enumerate(panels):
        q = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
        canvas.paste(Image.fromarray(q, mode="L"), (i * w, _LABEL_STRIP))
        draw.text((i * w + 2, 1), name, fill=255)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    canvas.save(path)


# ---------------------------------------------------------------------------
# Dataset manifests
# ---------------------------------------------------------------------------


@dataclass
class DatasetManifest:
    entries: list[tuple[str, str]]  # (volume path, split)
    r: int
    axes: str
    seed: int = 0

    def __post_init__(self):
        if self.axes not in VALID_AXES:
            raise ValueError(f"axes must be one of {VALID_AXES}, got {self.axes!r}")
        paths = [p for p, _ in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("manifest paths must be unique")
        for p, split in self.entries:
            if split not in VALID_SPLITS:
                raise ValueError(f"entry {p}: split must be one of {VALID_SPLITS}")

    def paths(self, split: str) -> list[str]:
        return [p for p, s in self.entries if s == split]

    def require_both_splits(self) -> None:
        for split in VALID_SPLITS:
            if not self.paths(split):
                raise ValueError(f"manifest has no {split!r} volumes")


def load_manifest(path: str | Path) -> DatasetManifest:
    d = json.loads(Path(path).read_text())
    return DatasetManifest(
        entries=[(e["path"], e["split"]) for e in d["entries"]],
        r=int(d["r"]),
        axes=d["axes"],
        seed=int(d.get("seed", 0)),
    )


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    d = {
        "entries": [{"path": p, "split": s} for p, s in manifest.entries],
        "r": manifest.r,
        "axes": manifest.axes,
        "seed": manifest.seed,
    }
    Path(path).write_text(json.dumps(d, indent=1, sort_keys=True))
