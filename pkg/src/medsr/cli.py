"""Command-line entry point: prepare, train, infer, evaluate, study-serve, study-report."""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from . import metrics as M
from .checkpoint import load_checkpoint, save_checkpoint
from .model import AxisMode, SRNetConfig, build_network
from .pipeline import (
    DEGRADATION,
    TrainConfig,
    degrade_volume,
    extract_patches,
    self_ensemble,
    stack_pairs,
    super_resolve_2d,
    super_resolve_3d,
    super_resolve_depth,
    super_resolve_volume_2d,
    train_stage,
    write_loss_csv,
)
from .resize import resize
from .study import VoteLog, aggregate_report, format_report
from .volio import Volume, load_manifest, load_volume, save_volume

INTERP_METHODS = ("nearest", "bilinear", "bicubic", "lanczos")


@click.group()
def main():
    """Super-resolution toolkit for 3D CT/MRI volumes."""


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------


def _crop_to_multiple(vol: Volume, r: int, axes: str) -> Volume:
    """Center-crop the degraded axes to multiples of r."""
    v = vol.voxels
    h, w, d = v.shape
    if axes in ("xy", "xyz"):
        nh, nw = (h // r) * r, (w // r) * r
        oy, ox = (h - nh) // 2, (w - nw) // 2
        v = v[oy : oy + nh, ox : ox + nw, :]
    if axes in ("z", "xyz"):
        nd = (d // r) * r
        oz = (d - nd) // 2
        v = v[:, :, oz : oz + nd]
    return Volume(np.ascontiguousarray(v), vol.spacing_mm, dict(vol.meta))


@main.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--force", is_flag=True, help="overwrite an existing output directory")
def prepare(manifest_path, out_dir, force):
    """Crop, degrade and lay out LR/HR volume pairs for a manifest."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise click.ClickException(f"{out} already exists; pass --force to overwrite")
    manifest = load_manifest(manifest_path)
    entries = []
    for path, split in manifest.entries:
        vol = load_volume(path)
        hr = _crop_to_multiple(vol, manifest.r, manifest.axes)
        lr = degrade_volume(hr, manifest.r, manifest.axes)
        name = Path(path).name.split(".")[0]
        hr_path = out / split / f"{name}_hr.raw"
        lr_path = out / split / f"{name}_lr.raw"
        save_volume(hr, hr_path)
        save_volume(lr, lr_path)
        entries.append({"name": name, "split": split, "hr": str(hr_path), "lr": str(lr_path)})
        click.echo(f"prepared {name} [{split}]: hr {hr.voxels.shape} -> lr {lr.voxels.shape}")
    (out / "dataset.json").write_text(
        json.dumps(
            {
                "r": manifest.r,
                "axes": manifest.axes,
                "seed": manifest.seed,
                "degradation": DEGRADATION,
                "volumes": entries,
            },
            indent=1,
            sort_keys=True,
        )
    )
    click.echo(f"wrote {out / 'dataset.json'}")


def _load_dataset(dataset_dir) -> dict:
    path = Path(dataset_dir) / "dataset.json"
    if not path.exists():
        raise click.ClickException(f"{dataset_dir}: not a prepared dataset (missing dataset.json)")
    return json.loads(path.read_text())


def _volumes(dataset: dict, split: str) -> list[tuple[str, Volume]]:
    return [(e["name"], load_volume(e["hr"])) for e in dataset["volumes"] if e["split"] == split]


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _training_pairs(stage: str, hr_vols, r: int, cfg: TrainConfig, net_xy=None):
    """LR/HR patch arrays for one stage, per the two-stage training recipe."""
    all_lr, all_hr = [], []
    for _, hr in hr_vols:
        if stage == "xy":
            lr = degrade_volume(hr, r, "xy")
            pairs = extract_patches(lr, hr, cfg, AxisMode.TWO_AXES)
        else:
            lr3d = degrade_volume(hr, r, "xyz")
            stage1 = super_resolve_volume_2d(net_xy, lr3d)
            pairs = extract_patches(stage1, hr, cfg, AxisMode.ONE_AXIS)
        lr_stack, hr_stack = stack_pairs(pairs)
        all_lr.append(lr_stack)
        all_hr.append(hr_stack)
    return np.concatenate(all_lr), np.concatenate(all_hr)


@main.command()
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--stage", type=click.Choice(["xy", "z"]), required=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--checkpoint-xy", type=click.Path(exists=True), help="stage-1 model (required for --stage z)")
@click.option("--patch-size", default=7, show_default=True)
@click.option("--batch-size", default=128, show_default=True)
@click.option("--epochs", default=40, show_default=True)
@click.option("--lr-initial", default=1e-3, show_default=True)
@click.option("--lr-after-drop", default=1e-4, show_default=True)
@click.option("--lr-drop-epoch", default=20, show_default=True)
@click.option("--lambda", "lambda_", default=1.0, show_default=True)
@click.option("--blur-probability", default=0.5, show_default=True)
@click.option("--sigma-max", default=0.5, show_default=True)
@click.option("--fixed-sigma", default=None, type=float)
@click.option("--stride", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--base-filters", default=32, show_default=True)
@click.option("--no-second-block", is_flag=True)
@click.option("--no-intermediate-loss", is_flag=True)
@click.option("--no-short-skips", is_flag=True)
@click.option("--no-long-skip", is_flag=True)
@click.option("--relu-on-outputs", is_flag=True)
def train(
    dataset_dir,
    stage,
    out_dir,
    checkpoint_xy,
    patch_size,
    batch_size,
    epochs,
    lr_initial,
    lr_after_drop,
    lr_drop_epoch,
    lambda_,
    blur_probability,
    sigma_max,
    fixed_sigma,
    stride,
    seed,
    base_filters,
    no_second_block,
    no_intermediate_loss,
    no_short_skips,
    no_long_skip,
    relu_on_outputs,
):
    """Train one stage on the prepared dataset's training split."""
    dataset = _load_dataset(dataset_dir)
    r = int(dataset["r"])
    cfg = TrainConfig(
        patch_size=patch_size,
        batch_size=batch_size,
        epochs=epochs,
        lr_initial=lr_initial,
        lr_after_drop=lr_after_drop,
        lr_drop_epoch=lr_drop_epoch,
        lambda_=lambda_,
        blur_probability=blur_probability,
        sigma_max=sigma_max,
        fixed_sigma=fixed_sigma,
        stride=stride,
        seed=seed,
    )
    net_cfg = SRNetConfig(
        scale_factor=r,
        axis_mode=AxisMode.TWO_AXES if stage == "xy" else AxisMode.ONE_AXIS,
        base_filters=base_filters,
        enable_second_block=not no_second_block,
        enable_intermediate_loss=not no_intermediate_loss,
        enable_short_skips=not no_short_skips,
        enable_long_skip=not no_long_skip,
        lambda_=lambda_,
        relu_on_outputs=relu_on_outputs,
    )
    click.echo(
        f"config: stage={stage} r={r} patch={cfg.patch_size} filters={net_cfg.base_filters} "
        f"batch={cfg.batch_size} epochs={cfg.epochs} lr={cfg.lr_initial:g}->"
        f"{cfg.lr_after_drop:g}@{cfg.lr_drop_epoch} lambda={cfg.lambda_:g} "
        f"blur_p={cfg.blur_probability:g} sigma_max={cfg.sigma_max:g} "
        f"fixed_sigma={cfg.fixed_sigma} stride={cfg.stride} seed={cfg.seed} "
        f"second_block={net_cfg.enable_second_block} "
        f"intermediate_loss={net_cfg.enable_intermediate_loss} "
        f"short_skips={net_cfg.enable_short_skips} long_skip={net_cfg.enable_long_skip}"
    )
    net_xy = None
    if stage == "z":
        if not checkpoint_xy:
            raise click.ClickException("--stage z needs --checkpoint-xy (stage-2 trains on stage-1 outputs)")
        net_xy = load_checkpoint(checkpoint_xy)
    hr_vols = _volumes(dataset, "train")
    if not hr_vols:
        raise click.ClickException("dataset has no training volumes")
    lr_stack, hr_stack = _training_pairs(stage, hr_vols, r, cfg, net_xy)
    click.echo(f"extracted {lr_stack.shape[0]} patch pairs")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    net = build_network(net_cfg, seed=cfg.seed)

    def checkpoint_epoch(epoch, current, stats):
        save_checkpoint(current, out / f"epoch_{epoch:03d}.ckpt")
        click.echo(f"epoch {epoch}: mean_loss={stats[1]:.6f} lr={stats[2]:g}")

    net, history = train_stage((lr_stack, hr_stack), net, cfg, on_epoch_end=checkpoint_epoch)
    write_loss_csv(history, out / "loss.csv")
    save_checkpoint(net, out / "checkpoint.ckpt")
    click.echo(f"wrote {out / 'checkpoint.ckpt'}")


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------


@main.command()
@click.argument("checkpoint_xy", type=click.Path(exists=True, dir_okay=False))
@click.argument("input_volume", type=click.Path(exists=True))
@click.argument("output_volume", type=click.Path())
@click.option("--checkpoint-z", type=click.Path(exists=True, dir_okay=False))
@click.option("--axes", type=click.Choice(["xy", "xyz"]), default=None, help="default: xyz when --checkpoint-z is given")
@click.option("--ensemble", is_flag=True, help="8-transform median self-ensemble per axial slice")
def infer(checkpoint_xy, input_volume, output_volume, checkpoint_z, axes, ensemble):
    """Super-resolve a volume with trained checkpoints."""
    net_xy = load_checkpoint(checkpoint_xy)
    r = net_xy.config.scale_factor
    if axes is None:
        axes = "xyz" if checkpoint_z else "xy"
    if axes == "xyz" and not checkpoint_z:
        raise click.ClickException("--axes xyz needs --checkpoint-z")
    vol = load_volume(input_volume)

    if ensemble:
        slices = [self_ensemble(net_xy, vol.voxels[:, :, z]) for z in range(vol.depth)]
        sy, sx, sz = vol.spacing_mm
        stage1 = Volume(
            np.stack(slices, axis=2).astype(np.float32), (sy / r, sx / r, sz), dict(vol.meta)
        )
    else:
        stage1 = super_resolve_volume_2d(net_xy, vol)

    if axes == "xy":
        result = stage1
    else:
        net_z = load_checkpoint(checkpoint_z)
        if net_z.config.scale_factor != r:
            raise click.ClickException(
                f"checkpoint factors differ: xy={r}, z={net_z.config.scale_factor}"
            )
        result = super_resolve_depth(net_z, stage1)
    save_volume(result, output_volume)
    click.echo(f"{vol.voxels.shape} -> {result.voxels.shape} written to {output_volume}")


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _box_down_2d(img: np.ndarray, r: int) -> np.ndarray:
    h, w = img.shape
    return img.reshape(h // r, r, w // r, r).mean(axis=(1, 3)).astype(np.float32)


def _method_2d(name: str, r: int, net, ensemble: bool):
    if name in INTERP_METHODS:
        return lambda lr: resize(lr, r, name)
    if name == "cnn":
        if net is None:
            raise click.ClickException("method 'cnn' needs --checkpoint-xy")
        if ensemble:
            return lambda lr: self_ensemble(net, lr)
        return lambda lr: super_resolve_2d(net, lr)
    if name == "identity":
        return lambda lr: lr
    raise click.ClickException(f"unknown method {name!r}")


def _method_3d(name: str, r: int, net_xy, net_z, ensemble: bool):
    if name in INTERP_METHODS:
        return lambda lr: resize(lr, r, name)
    if name == "cnn":
        if net_xy is None or net_z is None:
            raise click.ClickException("3D method 'cnn' needs --checkpoint-xy and --checkpoint-z")

        def run(lr: np.ndarray) -> np.ndarray:
            vol = Volume(lr.astype(np.float32))
            return super_resolve_3d(net_xy, net_z, vol, r).voxels

        return run
    if name == "identity":
        return lambda lr: lr
    raise click.ClickException(f"unknown method {name!r}")


@main.command()
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--methods", default="nearest,bilinear,bicubic,lanczos", show_default=True)
@click.option("--mode", type=click.Choice(["2d", "3d"]), default="2d", show_default=True)
@click.option("--checkpoint-xy", type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint-z", type=click.Path(exists=True, dir_okay=False))
@click.option("--ensemble", is_flag=True)
@click.option("--quantize-8bit", is_flag=True, help="score on 8-bit quantized intensities")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def evaluate(dataset_dir, methods, mode, checkpoint_xy, checkpoint_z, ensemble, quantize_8bit, out_dir):
    """Score reconstruction methods on the test split; one CSV per method."""
    dataset = _load_dataset(dataset_dir)
    r = int(dataset["r"])
    vols = _volumes(dataset, "test")
    if not vols:
        raise click.ClickException("dataset has no test volumes")
    net_xy = load_checkpoint(checkpoint_xy) if checkpoint_xy else None
    net_z = load_checkpoint(checkpoint_z) if checkpoint_z else None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if mode == "2d":
        items = [
            (f"{name}/slice_{z:04d}", hr.voxels[:, :, z])
            for name, hr in vols
            for z in range(hr.depth)
        ]
        degrade = (lambda img: img) if r == 1 else (lambda img: _box_down_2d(img, r))
    else:
        items = [(name, hr.voxels) for name, hr in vols]
        degrade = (
            (lambda v: v)
            if r == 1
            else (lambda v: degrade_volume(Volume(v), r, "xyz").voxels)
        )

    comments = [
        f"degradation: {DEGRADATION}",
        f"mode: {mode}, r: {r}",
        f"intensities: {'8-bit quantized' if quantize_8bit else '[0,1] float'}",
    ]
    for name in [m.strip() for m in methods.split(",") if m.strip()]:
        if mode == "2d":
            fn = _method_2d(name, r, net_xy, ensemble)
        else:
            fn = _method_3d(name, r, net_xy, net_z, ensemble)
        report = M.evaluate(fn, items, degrade, comments=comments + [f"method: {name}"],
                            quantize_8bit=quantize_8bit)
        (out / f"{name}.csv").write_text(report.to_csv())
        click.echo(f"== {name} ==")
        click.echo(report.format_table())
    click.echo(f"reports written to {out}")


# ---------------------------------------------------------------------------
# study service
# ---------------------------------------------------------------------------


@main.command("study-serve")
@click.argument("results_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--port", default=8008, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--study-seed", default=0, show_default=True)
@click.option("--votes", "votes_path", type=click.Path(dir_okay=False), default=None)
@click.option("--frontend", "frontend_dir", type=click.Path(file_okay=False), default=None)
def study_serve(results_dir, port, host, study_seed, votes_path, frontend_dir):
    """Serve the pairwise-assessment API (and optionally the browser UI)."""
    import uvicorn

    from .study import create_app

    app = create_app(results_dir, study_seed=study_seed, votes_path=votes_path,
                     frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port)


@main.command("study-report")
@click.argument("votes_file", type=click.Path(dir_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
def study_report(votes_file, csv_path):
    """Aggregate a votes file into per-annotator counts and overall percentages."""
    records, skipped = VoteLog(votes_file).read()
    if skipped:
        click.echo(f"warning: skipped {skipped} corrupt line(s)", err=True)
    report = aggregate_report(records)
    click.echo(format_report(report))
    if csv_path:
        lines = ["annotator_id,factor,method,votes"]
        for row in report["annotators"]:
            for f in report["factors"]:
                for m in report["methods"]:
                    lines.append(f"{row['annotator_id']},{f},{m},{row['counts'][str(f)][m]}")
        for f in report["factors"]:
            for m in report["methods"]:
                lines.append(f"overall_percent,{f},{m},{report['overall_percent'][str(f)][m]:.2f}")
        Path(csv_path).write_text("\n".join(lines) + "\n")
        click.echo(f"wrote {csv_path}")


if __name__ == "__main__":
    main()
