"""Command-line entry point: ``twogrid <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import data as ds
from . import freq1d
from . import metrics as qm
from . import spectral, tokenizer
from .config import MANIFEST_NAME, default_run_dir, finish_manifest, parse_config, read_config, write_manifest
from .errors import ArgumentError, BoundsError, ShapeError, TwoGridError
from .hilbert import build_hilbert, dump_csv
from .model import build_model, load_checkpoint, ModelConfig
from .training import (METRIC_NAMES, VARIANT_LABELS, VARIANTS, ModelReconstructor, TrainConfig,
                       evaluate, train)

log = logging.getLogger("twogrid")

USAGE_ERRORS = (ArgumentError, BoundsError, ShapeError)


# ---------------------------------------------------------------- presets

@dataclass(frozen=True)
class ComparePreset:
    train_count: int
    test_count: int
    side: int
    k0: int
    n1: int
    n2: int
    epochs: int
    batch_size: int
    lr: float
    model_preset: str = "desk"


PRESETS = {
    "desk": ComparePreset(200, 50, 64, 4, 2, 3, 150, 20, 4e-3),
    "smoke": ComparePreset(12, 4, 32, 2, 1, 2, 2, 6, 2e-3),
    "paper": ComparePreset(200, 50, 256, 16, 3, 4, 1600, 336, 1.5e-5, "paper"),
}


# ---------------------------------------------------------------- helpers

def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _read_mask(path) -> list[int]:
    cells = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            cells.append(int(line))
        except ValueError:
            raise ArgumentError(f"{path}:{lineno}: mask cell index must be an integer, got {line!r}") from None
    return cells


def _sidecar_manifest(path: Path, argv, config: dict, seed) -> None:
    """Manifest for a command whose output is a single file: ``<file>.manifest.json``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.parent / f".{path.name}.manifest"
    write_manifest(tmp, argv, config, seed)
    (tmp / MANIFEST_NAME).replace(path.parent / f"{path.name}.manifest.json")
    tmp.rmdir()


def _images_from(path) -> tuple[list[str], np.ndarray]:
    p = Path(path)
    if p.is_dir():
        names = [q.name for q in sorted(p.glob("*.tgi"))]
        return names, ds.load_dataset(p).images
    return [p.name], ds.read_image(p)[None]


def _dataset_for(args_or_cfg: dict) -> np.ndarray:
    if args_or_cfg.get("data_dir"):
        return ds.load_dataset(args_or_cfg["data_dir"]).images
    return ds.generate_synthetic(args_or_cfg["count"], args_or_cfg["side"], args_or_cfg["data_seed"]).images


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return repr(float(v))


# ---------------------------------------------------------------- commands

def cmd_data_gen(args, argv) -> int:
    out = Path(args.out) if args.out else default_run_dir("data")
    config = {"count": args.count, "side": args.side, "seed": args.seed, "noise": args.noise,
              "test_fraction": args.test_fraction}
    write_manifest(out, argv, config, args.seed)
    data = ds.generate_synthetic(args.count, args.side, args.seed, noise_level=args.noise)
    rows = []
    if args.test_fraction > 0:
        for tag in ("train", "test"):
            sel = [i for i in range(len(data)) if ds.split_of(args.seed, i, args.test_fraction) == tag]
            (out / tag).mkdir(exist_ok=True)
            for j, i in enumerate(sel):
                ds.write_image(out / tag / f"img_{j:06d}.tgi", data.images[i])
                rows.append([i, tag, f"{tag}/img_{j:06d}.tgi", int(data.degenerate[i])])
    else:
        for i, p in enumerate(ds.save_dataset(data, out)):
            rows.append([i, "train", p.name, int(data.degenerate[i])])
    _write_csv(out / "index.csv", ["index", "split", "file", "degenerate"], sorted(rows))
    finish_manifest(out)
    print(f"wrote {len(data)} images of {args.side}x{args.side} to {out}")
    return 0


def cmd_spectral_split(args, argv) -> int:
    image = ds.read_image(args.input)
    pair = spectral.split_bands(image, args.k0, args.geometry)
    for target in (args.out_low, args.out_high):
        _sidecar_manifest(Path(target), argv, {"input": args.input, "k0": args.k0, "geometry": args.geometry}, None)
    ds.write_image(args.out_low, pair.low)
    ds.write_image(args.out_high, pair.high)
    low, high = spectral.band_energy(pair)
    print(f"k0={args.k0} low_l2={low:.6g} high_l2={high:.6g}")
    return 0


def cmd_spectral_energy(args, argv) -> int:
    names, images = _images_from(args.input)
    header = ["image", "k0", "low_l2", "high_l2", "total_l2", "low_fraction"]
    rows = []
    for name, img in zip(names, images):
        for k0, low, high, total in spectral.energy_sweep(img, args.k0_sweep, args.geometry):
            frac = low ** 2 / total ** 2 if total > 0 else float("nan")
            rows.append([name, k0, _fmt(low), _fmt(high), _fmt(total), _fmt(frac)])
    if args.csv:
        path = Path(args.csv)
        _sidecar_manifest(path, argv, {"input": args.input, "k0_sweep": args.k0_sweep,
                                       "geometry": args.geometry}, None)
        _write_csv(path, header, rows)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(header)
        w.writerows(rows)
    return 0


def cmd_hilbert_dump(args, argv) -> int:
    hmap = build_hilbert(args.order)
    if args.out:
        path = Path(args.out)
        _sidecar_manifest(path, argv, {"order": args.order}, None)
        with open(path, "w", newline="") as f:
            dump_csv(hmap, f)
    else:
        dump_csv(hmap, sys.stdout)
    return 0


def _layout_arrays(prefix: str, seq) -> dict:
    lay = seq.layout
    return {f"{prefix}tokens": seq.tokens, f"{prefix}index_map": lay.index_map, f"{prefix}cells": lay.cells,
            f"{prefix}permutation": lay.permutation, f"{prefix}order_tag": np.array(lay.order_tag)}


def cmd_tokenize(args, argv) -> int:
    image = ds.read_image(args.input)
    v = args.variant
    if v in ("raster", "hilbert"):
        if args.patch is None:
            raise ArgumentError(f"--patch is required for the {v} variant")
        fn = tokenizer.tokenize_raster if v == "raster" else tokenizer.tokenize_hilbert
        arrays = _layout_arrays("", fn(image, args.patch))
    elif v in ("fixed-tg", "ran-tg"):
        if args.order is None:
            raise ArgumentError(f"--order is required for the {v} variant")
        if v == "fixed-tg":
            mask = _read_mask(args.mask) if args.mask else None
            seq = tokenizer.tokenize_fixed_tg(image, args.order, mask)
        else:
            seq = tokenizer.tokenize_ran_tg(image, args.order, args.p, args.seed)
        arrays = _layout_arrays("", seq)
    else:
        if args.order is None or args.k0 is None:
            raise ArgumentError("--order and --k0 are required for the twogrid variant")
        fine = args.fine_order if args.fine_order is not None else args.order + 1
        pair = spectral.split_bands(image, args.k0)
        low, high = tokenizer.tokenize_twogrid(pair, args.order, fine)
        arrays = {**_layout_arrays("low_", low), **_layout_arrays("high_", high)}
    out = Path(args.out)
    _sidecar_manifest(out, argv, {k: getattr(args, k) for k in
                                  ("input", "variant", "patch", "order", "fine_order", "k0", "p", "seed", "mask")},
                      args.seed)
    with open(out, "wb") as f:
        np.savez(f, **arrays)
    counts = {k: len(a) for k, a in arrays.items() if k.endswith("tokens")}
    print(" ".join(f"{k}={n}" for k, n in counts.items()))
    return 0


TRAIN_DATA_KEYS = {"data_dir": None, "count": 200, "side": 64, "data_seed": None}
TRAIN_FLAGS = ("variant", "epochs", "batch_size", "lr", "k0", "n1", "n2", "seed", "alpha", "schedule")


def _train_options(args) -> tuple[TrainConfig, dict]:
    raw = read_config(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise ArgumentError(f"--set expects key=value, got {item!r}")
        raw.update(parse_config(item))
    for name in TRAIN_FLAGS + ("data_dir", "count", "side", "data_seed"):
        value = getattr(args, name, None)
        if value is not None:
            raw[name] = value
    data_opts = {k: raw.pop(k, d) for k, d in TRAIN_DATA_KEYS.items()}
    if isinstance(raw.get("refine_mask"), int):
        raw["refine_mask"] = (raw["refine_mask"],)
    cfg = TrainConfig.from_dict(raw)
    if data_opts["data_seed"] is None:
        data_opts["data_seed"] = cfg.seed
    return cfg, data_opts


def cmd_train(args, argv) -> int:
    cfg, data_opts = _train_options(args)
    out = Path(args.out) if args.out else default_run_dir("train")
    write_manifest(out, argv, {"train": asdict(cfg), "data": data_opts}, cfg.seed)
    images = _dataset_for(data_opts)
    result = train(images, cfg, out_dir=out)
    first, last = result.records[0], result.records[-1]
    print(f"{cfg.variant}: {result.total_steps} steps, combined loss {first.loss_combined:.4f} -> "
          f"{last.loss_combined:.4f}; outputs in {out}")
    finish_manifest(out)
    return 0


def _config_from_meta(meta: dict) -> tuple[TrainConfig, ModelConfig]:
    train_raw = {k: tuple(v) if isinstance(v, list) else v for k, v in meta["train"].items()}
    return TrainConfig.from_dict(train_raw), ModelConfig.from_dict(meta["model"])


def load_trained(path):
    meta, state = load_checkpoint(path)
    cfg, mcfg = _config_from_meta(meta)
    model = build_model(mcfg, cfg.seed)
    model.load_state_dict(state)
    return model, cfg, meta


def _metric_table(stats: dict) -> list[list]:
    return [[name, _fmt(stats[name][0]), _fmt(stats[name][1])] for name in METRIC_NAMES]


def cmd_evaluate(args, argv) -> int:
    model, cfg, meta = load_trained(args.checkpoint)
    data_opts = {"data_dir": args.data_dir, "count": args.count, "side": args.side or meta.get("image_side", 64),
                 "data_seed": args.data_seed}
    out = Path(args.out) if args.out else default_run_dir("evaluate")
    write_manifest(out, argv, {"checkpoint": str(args.checkpoint), "data": data_opts, "peak": args.peak},
                   cfg.eval_seed)
    images = _dataset_for(data_opts)
    stats = evaluate(ModelReconstructor(model, cfg), images, peak=args.peak)
    _write_csv(out / "metrics.csv", ["metric", "mean", "std"], _metric_table(stats))
    for name in METRIC_NAMES:
        print(f"{name}: {stats[name][0]:.6g} +/- {stats[name][1]:.6g}")
    finish_manifest(out)
    return 0


def cmd_metrics(args, argv) -> int:
    a, b = ds.read_image(args.a), ds.read_image(args.b)
    rep = qm.report(a, b, peak=args.peak)
    w = csv.writer(sys.stdout)
    if args.header:
        w.writerow(["mse", "psnr", "ssim", "ms_ssim"])
    w.writerow([_fmt(rep.mse), _fmt(rep.psnr), _fmt(rep.ssim), _fmt(rep.ms_ssim)])
    return 0


def cmd_freq1d(args, argv) -> int:
    config = freq1d.FreqExperimentConfig(layers=args.layers, width=args.width, lr=args.lr,
                                         epochs=args.epochs, seed=args.seed)
    out = Path(args.out) if args.out else default_run_dir("freq1d")
    write_manifest(out, argv, asdict(config), args.seed)
    result = freq1d.run_freq_experiment(config, progress=lambda e, v: log.info("epoch %d loss %.6g", e, v))
    freq1d.write_outputs(result, out)
    lo = freq1d.crossing_epoch(result.low_band, 0.1)
    hi = freq1d.crossing_epoch(result.high_band, 0.1)
    print(f"10% crossing epochs: low={lo} high={hi}; outputs in {out}")
    finish_manifest(out)
    return 0


def compare_configs(preset: ComparePreset, seed: int, variants) -> dict:
    return {v: TrainConfig(variant=v, k0=preset.k0, n1=preset.n1, n2=preset.n2, epochs=preset.epochs,
                           batch_size=preset.batch_size, lr=preset.lr, seed=seed,
                           model_preset=preset.model_preset)
            for v in variants}


def cmd_compare(args, argv) -> int:
    preset = PRESETS[args.preset]
    for name in ("epochs", "lr", "batch_size"):
        if getattr(args, name) is not None:
            preset = replace(preset, **{name: getattr(args, name)})
    variants = args.variants or list(VARIANTS)
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ArgumentError(f"unknown variant(s) {unknown}; expected a subset of {list(VARIANTS)}")
    configs = compare_configs(preset, args.seed, variants)
    out = Path(args.out) if args.out else default_run_dir("compare")
    write_manifest(out, argv, {"preset": asdict(preset), "variants": variants}, args.seed)

    data = ds.generate_synthetic(preset.train_count + preset.test_count, preset.side, args.seed).images
    train_images, test_images = data[:preset.train_count], data[preset.train_count:]
    metric_rows, std_rows, loss_rows = [], [], []
    for v in variants:
        cfg = configs[v]
        sub = out / v
        write_manifest(sub, argv, {"train": asdict(cfg), "preset": args.preset}, args.seed)
        log.info("training %s", v)
        result = train(train_images, cfg, out_dir=sub)
        stats = evaluate(ModelReconstructor(result.model, cfg), test_images)
        _write_csv(sub / "metrics.csv", ["metric", "mean", "std"], _metric_table(stats))
        finish_manifest(sub)
        last_epoch = [r.loss_combined for r in result.records if r.epoch == cfg.epochs - 1]
        initial, final = result.records[0].loss_combined, float(np.mean(last_epoch))
        metric_rows.append([v] + [_fmt(stats[m][0]) for m in METRIC_NAMES])
        std_rows.append([v] + [_fmt(stats[m][1]) for m in METRIC_NAMES])
        loss_rows.append([v, VARIANT_LABELS[v], _fmt(initial), _fmt(final), _fmt(final / initial)])
        print(f"{VARIANT_LABELS[v]:>13}: loss {initial:.4f} -> {final:.4f}, "
              f"psnr {stats['psnr'][0]:.3f}, ssim {stats['ssim'][0]:.4f}")
    _write_csv(out / "compare.csv", ["variant"] + list(METRIC_NAMES), metric_rows)
    _write_csv(out / "compare_std.csv", ["variant"] + list(METRIC_NAMES), std_rows)
    _write_csv(out / "training_summary.csv", ["variant", "label", "initial_loss", "final_loss", "final_over_initial"],
               loss_rows)
    finish_manifest(out)
    print(f"comparison written to {out / 'compare.csv'}")
    return 0


def replay_manifest(manifest_path, out_dir) -> int:
    """Re-run the command recorded in a manifest, writing into ``out_dir`` instead."""
    manifest = json.loads(Path(manifest_path).read_text())
    argv = list(manifest["argv"][1:])   # drop the program name
    if "--out" in argv:
        argv[argv.index("--out") + 1] = str(out_dir)
    else:
        argv += ["--out", str(out_dir)]
    return dispatch(argv)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twogrid", description=(
        "Hilbert curves, spectral band splitting, two-grid tokenization and masked autoencoder "
        "training. Set TWOGRID_OUT to choose the default output root (default ./runs)."))
    p.add_argument("--version", action="version", version=f"twogrid {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)

    data = sub.add_parser("data", help="synthetic dataset tools").add_subparsers(dest="action", required=True)
    g = data.add_parser("gen", help="generate synthetic seismograms")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--side", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out")
    g.add_argument("--noise", type=float, default=ds.DEFAULT_NOISE)
    g.add_argument("--test-fraction", type=float, default=0.0,
                   help="write train/ and test/ subdirectories using a hash split")
    g.set_defaults(func=cmd_data_gen)

    spec = sub.add_parser("spectral", help="low/high band decomposition").add_subparsers(dest="action", required=True)
    s = spec.add_parser("split", help="split one image into bands")
    s.add_argument("--input", required=True)
    s.add_argument("--k0", type=int, required=True)
    s.add_argument("--out-low", required=True)
    s.add_argument("--out-high", required=True)
    s.add_argument("--geometry", choices=("square", "radial"), default="square")
    s.set_defaults(func=cmd_spectral_split)
    e = spec.add_parser("energy", help="band energy over a k0 sweep")
    e.add_argument("--input", required=True, help="image file or directory of .tgi images")
    e.add_argument("--k0-sweep", type=_int_list, default=[4, 8, 16, 32, 64])
    e.add_argument("--csv")
    e.add_argument("--geometry", choices=("square", "radial"), default="square")
    e.set_defaults(func=cmd_spectral_energy)

    hil = sub.add_parser("hilbert", help="Hilbert curve tables").add_subparsers(dest="action", required=True)
    h = hil.add_parser("dump", help="CSV of index,row,col")
    h.add_argument("--order", type=int, required=True)
    h.add_argument("--out")
    h.set_defaults(func=cmd_hilbert_dump)

    t = sub.add_parser("tokenize", help="tokenize one image into an .npz file")
    t.add_argument("--variant", choices=("raster", "hilbert", "fixed-tg", "ran-tg", "twogrid"), required=True)
    t.add_argument("--patch", type=int)
    t.add_argument("--order", type=int, help="coarse Hilbert order (two-grid variants)")
    t.add_argument("--fine-order", type=int, help="fine order for twogrid (default order+1)")
    t.add_argument("--k0", type=int, help="band threshold for twogrid")
    t.add_argument("--p", type=float, default=0.05)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--mask", help="file of newline-separated coarse cell indices (fixed-tg)")
    t.add_argument("--input", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_tokenize)

    tr = sub.add_parser("train", help="train one variant")
    tr.add_argument("--config", help="key=value file; flags below override it")
    tr.add_argument("--out")
    tr.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    tr.add_argument("--variant", choices=sorted(VARIANTS))
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--batch-size", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--k0", type=int)
    tr.add_argument("--n1", type=int)
    tr.add_argument("--n2", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--alpha", type=float)
    tr.add_argument("--schedule", choices=("fixed", "ada_low_high", "ada_high_low"))
    tr.add_argument("--data-dir")
    tr.add_argument("--count", type=int)
    tr.add_argument("--side", type=int)
    tr.add_argument("--data-seed", type=int)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="metrics of a checkpoint on a test set")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data-dir")
    ev.add_argument("--count", type=int, default=50)
    ev.add_argument("--side", type=int)
    ev.add_argument("--data-seed", type=int, default=10_000)
    ev.add_argument("--peak", type=float)
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_evaluate)

    m = sub.add_parser("metrics", help="MSE, PSNR, SSIM and MS-SSIM of two images as one CSV row")
    m.add_argument("--a", required=True)
    m.add_argument("--b", required=True)
    m.add_argument("--peak", type=float)
    m.add_argument("--header", action="store_true", help="print the column names first")
    m.set_defaults(func=cmd_metrics)

    fq = sub.add_parser("freq1d", help="1-D frequency-principle experiment").add_subparsers(
        dest="action", required=True)
    f = fq.add_parser("run")
    f.add_argument("--epochs", type=int, default=10001)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out")
    f.add_argument("--layers", type=int, default=6)
    f.add_argument("--width", type=int, default=200)
    f.add_argument("--lr", type=float, default=1e-3)
    f.set_defaults(func=cmd_freq1d)

    c = sub.add_parser("compare", help="train and evaluate the full variant matrix")
    c.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--epochs", type=int, help="override the preset epoch count")
    c.add_argument("--lr", type=float, help="override the preset learning rate")
    c.add_argument("--batch-size", type=int, help="override the preset batch size")
    c.add_argument("--variants", type=lambda s: [v for v in s.split(",") if v], help="comma-separated subset")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)
    return p


def dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:       # --help, --version and usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, ["twogrid"] + argv)
    except USAGE_ERRORS as exc:
        print(f"twogrid: error: {exc}", file=sys.stderr)
        return 2
    except (TwoGridError, OSError) as exc:
        print(f"twogrid: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())
