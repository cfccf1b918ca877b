"""Batch command-line front end.

Subcommands wire the library into reproducible pipelines: reflectance
correction, reference-spectra extraction, pre-processing, training, tiled
inference, evaluation, complexity reporting, synthetic dataset generation
and a self-check suite. Every run prints its resolved options (seed
included) and exits 0 only on success.

Dataset manifests are plain text, one ``cube_path,mask_path,split`` line per
scene (split: train/val/test), with paths resolved relative to the manifest
file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cube import (
    ClassCatalog,
    HSCube,
    LabelMask,
    ReferenceProfile,
    default_catalog,
    read_envi,
    read_mask,
    reflectance_correct,
    write_envi,
    write_mask,
)
from .metrics import evaluate
from .models import (
    MODEL_KINDS,
    Model,
    build_mlpnet,
    build_plasticnet,
    build_samnet,
    compute_reference_spectra,
    count_complexity,
    load_reference_spectra,
    load_weights,
    save_reference_spectra,
    save_weights,
)
from .pipeline import Dataset, TrainConfig, infer_tiled, receptive_field_radius, train
from .preprocess import Preproc, apply as apply_preproc, output_channels
from .synth import SynthConfig, generate_scene, signature_library

# BG black, then PE red, PP green, PS blue, PET yellow; extras cycle.
_PALETTE = (
    (0, 0, 0), (255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0),
    (255, 0, 255), (0, 255, 255), (255, 128, 0), (255, 255, 255),
)


def _echo(command: str, args: argparse.Namespace) -> None:
    pairs = {k: v for k, v in sorted(vars(args).items()) if k != "handler"}
    rendered = " ".join(f"{k}={v}" for k, v in pairs.items())
    print(f"[spectraflake {command}] {rendered}")


def _catalog(n_classes: int) -> ClassCatalog:
    if n_classes == 5:
        return default_catalog()
    return ClassCatalog(("BG",) + tuple(f"C{k}" for k in range(1, n_classes)))


def write_preview(mask: LabelMask, path) -> None:
    """False-color PPM (P6): background black, flake classes one color each."""
    palette = np.zeros((256, 3), dtype=np.uint8)
    for k in range(256):
        if k == 0:
            continue
        palette[k] = _PALETTE[1 + (k - 1) % (len(_PALETTE) - 1)]
    rgb = palette[mask.labels]
    header = f"P6\n{mask.width} {mask.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + rgb.tobytes())


def read_manifest(path) -> list[tuple[Path, Path, str]]:
    manifest = Path(path)
    if not manifest.exists():
        raise FileNotFoundError(f"manifest not found: {manifest}")
    base = manifest.parent
    entries = []
    for lineno, raw in enumerate(manifest.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ValueError(
                f"{manifest}:{lineno}: expected 'cube_path,mask_path,split'; got {raw!r}"
            )
        cube_path, mask_path, split = parts
        if split not in ("train", "val", "test"):
            raise ValueError(
                f"{manifest}:{lineno}: split must be train/val/test; got {split!r}"
            )
        entries.append((base / cube_path, base / mask_path, split))
    if not entries:
        raise ValueError(f"{manifest}: no scene entries found")
    return entries


def _load_split(entries, split: str, n_classes: int) -> list[tuple[HSCube, LabelMask]]:
    scenes = []
    for cube_path, mask_path, entry_split in entries:
        if entry_split != split:
            continue
        scenes.append((read_envi(cube_path), read_mask(mask_path, n_classes)))
    return scenes


def _build_model(kind: str, channels: int, n_classes: int, seed: int,
                 train_scenes=None, spectra_path=None) -> Model:
    if kind == "mlpnet":
        return build_mlpnet(channels, n_classes, seed)
    if kind == "plasticnet":
        return build_plasticnet(channels, n_classes, seed=seed)
    if kind == "plasticnetxl":
        return build_plasticnet(channels, n_classes, xl=True, seed=seed)
    if kind in ("samnet", "samnet3"):
        footprint = 3 if kind == "samnet3" else 1
        if spectra_path is not None:
            refs = load_reference_spectra(spectra_path)
        elif train_scenes:
            refs = compute_reference_spectra(train_scenes, _catalog(n_classes))
        else:
            raise ValueError(f"{kind} needs --spectra or a manifest with a train split")
        return build_samnet(refs, footprint)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


# --------------------------------------------------------------------------
# Subcommand handlers
# --------------------------------------------------------------------------

def _cmd_correct(args) -> int:
    _echo("correct", args)
    raw = read_envi(args.raw)
    refs = ReferenceProfile.from_cubes(read_envi(args.bright), read_envi(args.dark))
    corrected, clamped = reflectance_correct(raw, refs, args.eps)
    write_envi(corrected, args.out, args.interleave)
    if clamped:
        print(f"warning: clamped {clamped} reference position(s) with bright <= dark + eps")
    print(f"wrote {args.out}.hdr / {args.out}.raw "
          f"({corrected.height}x{corrected.width}x{corrected.channels})")
    return 0


def _cmd_spectra(args) -> int:
    _echo("spectra", args)
    entries = read_manifest(args.manifest)
    scenes = _load_split(entries, args.split, args.classes)
    if not scenes:
        raise ValueError(f"manifest has no '{args.split}' scenes")
    kind = Preproc(args.preproc)
    processed = [(apply_preproc(kind, cube), mask) for cube, mask in scenes]
    refs = compute_reference_spectra(
        processed, _catalog(args.classes), include_background=not args.no_background
    )
    out = Path(args.out)
    save_reference_spectra(refs, f"{out}.csv")
    header = "channel,wavelength," + ",".join(refs.names)
    wl = processed[0][0].wavelengths
    lines = [header]
    for c in range(refs.channels):
        wl_cell = repr(float(wl[c])) if wl is not None else ""
        lines.append(f"{c},{wl_cell}," + ",".join(repr(float(refs.spectra[k, c]))
                                                  for k in range(len(refs))))
    Path(f"{out}_curves.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out}.csv and {out}_curves.csv "
          f"({len(refs)} classes x {refs.channels} channels)")
    return 0


def _cmd_preprocess(args) -> int:
    _echo("preprocess", args)
    cube = read_envi(args.cube)
    out_cube = apply_preproc(Preproc(args.preproc), cube)
    write_envi(out_cube, args.out, args.interleave)
    print(f"wrote {args.out}.hdr / {args.out}.raw "
          f"({out_cube.channels} channels from {cube.channels})")
    return 0


def _parse_config_file(path) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key=value'; got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


_CONFIG_KEYS = {
    "epochs": int, "tiles_per_epoch": int, "tile_size": int, "lr": float,
    "beta1": float, "beta2": float, "adam_eps": float, "seed": int,
    "preproc": str, "train_frozen": lambda v: v.lower() in ("1", "true", "yes"),
}


def _resolve_train_config(args) -> TrainConfig:
    # Precedence: command-line flag, then config file, then defaults.
    from_file = _parse_config_file(args.config) if args.config else {}
    unknown = set(from_file) - set(_CONFIG_KEYS)
    if unknown:
        raise ValueError(f"{args.config}: unknown config key(s) {sorted(unknown)}")
    merged = {}
    flags = {
        "epochs": args.epochs, "tiles_per_epoch": args.tiles, "tile_size": args.tile,
        "lr": args.lr, "seed": args.seed, "preproc": args.preproc,
        "train_frozen": args.train_frozen or None,
    }
    for key, parse in _CONFIG_KEYS.items():
        if flags.get(key) is not None:
            merged[key] = flags[key]
        elif key in from_file:
            merged[key] = parse(from_file[key])
    merged.setdefault("epochs", 20)
    if "preproc" in merged:
        merged["preproc"] = Preproc(merged["preproc"])
    return TrainConfig(**merged)


def _cmd_train(args) -> int:
    _echo("train", args)
    config = _resolve_train_config(args)
    print(f"resolved config: {dataclasses.asdict(config)}")
    entries = read_manifest(args.manifest)
    train_scenes = _load_split(entries, "train", args.classes)
    val_scenes = _load_split(entries, "val", args.classes)
    if not train_scenes:
        raise ValueError("manifest has no train scenes")
    channels = output_channels(config.preproc, train_scenes[0][0].channels)
    if args.model in ("samnet", "samnet3"):
        processed = [(apply_preproc(config.preproc, cube), mask) for cube, mask in train_scenes]
        model = _build_model(args.model, channels, args.classes, config.seed,
                             train_scenes=processed, spectra_path=args.spectra)
    else:
        model = _build_model(args.model, channels, args.classes, config.seed)
    model, curve = train(model, Dataset(train=train_scenes, val=val_scenes), config)
    save_weights(model, args.out)
    if args.curve:
        lines = ["epoch,loss,val_iou"]
        for epoch, loss, val_iou in curve:
            iou_cell = "" if np.isnan(val_iou) else f"{val_iou:.4f}"
            lines.append(f"{epoch},{loss:.6f},{iou_cell}")
        Path(args.curve).write_text("\n".join(lines) + "\n")
    if curve:
        last = curve[-1]
        print(f"trained {len(curve)} epoch(s); final loss {last[1]:.4f}, "
              f"best val IoU {max((c[2] for c in curve), default=float('nan')):.2f}")
    print(f"wrote {args.out}")
    return 0


def _cmd_infer(args) -> int:
    _echo("infer", args)
    cube = read_envi(args.cube)
    kind = Preproc(args.preproc)
    data = apply_preproc(kind, cube)
    if args.weights:
        model = load_weights(args.weights)
    else:
        if not args.model:
            raise ValueError("provide --weights, or --model samnet/samnet3 with --spectra")
        model = _build_model(args.model, data.channels, args.classes, args.seed,
                             spectra_path=args.spectra)
    margin = receptive_field_radius(model) if args.margin is None else args.margin
    mask = infer_tiled(model, data, args.tile, margin)
    write_mask(mask, args.out)
    preview = args.preview or str(Path(args.out).with_suffix(".ppm"))
    write_preview(mask, preview)
    print(f"wrote {args.out} and {preview}")
    return 0


def _cmd_eval(args) -> int:
    _echo("eval", args)
    pred = read_mask(args.pred, args.classes)
    target = read_mask(args.target, args.classes)
    report = evaluate(pred, target, args.classes, _catalog(args.classes).names)
    if args.csv:
        print(report.csv_row())
    else:
        print(report.format_table())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
        print(f"wrote {args.out}")
    return 0


def _cmd_complexity(args) -> int:
    _echo("complexity", args)
    refs_dummy = None
    rows = []
    kinds = [args.model] if args.model else list(MODEL_KINDS)
    for kind in kinds:
        if kind in ("samnet", "samnet3"):
            if refs_dummy is None:
                from .models import ReferenceSpectra

                refs_dummy = ReferenceSpectra(
                    tuple(range(args.classes)),
                    _catalog(args.classes).names,
                    np.ones((args.classes, args.channels), dtype=np.float32),
                )
            model = build_samnet(refs_dummy, 3 if kind == "samnet3" else 1)
        else:
            model = _build_model(kind, args.channels, args.classes, seed=0)
        report = count_complexity(model)
        rows.append((kind, report.ops_per_pixel, report.parameters))
    width = max(len(k) for k, _, _ in rows)
    print(f"{'model':<{width}}  {'ops/pixel':>12}  {'parameters':>12}")
    for kind, ops, params in rows:
        print(f"{kind:<{width}}  {ops:>12,}  {params:>12,}")
    return 0


def _cmd_synth(args) -> int:
    _echo("synth", args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config_base = SynthConfig(
        seed=0,
        height=args.height,
        width=args.width,
        channels=args.channels,
        n_classes=args.classes,
        flakes_per_class=args.flakes,
        flake_size=(args.size_min, args.size_max),
        noise_sigma=args.sigma,
        specular_prob=args.specular,
        exposure=args.exposure,
    )
    signatures = signature_library(args.seed, args.classes, args.channels)
    save_reference_spectra(signatures, out / "signatures.csv")
    manifest_lines = []
    total_dropped = 0
    index = 0
    for split, count in (("train", args.train), ("val", args.val), ("test", args.test)):
        for _ in range(count):
            config = dataclasses.replace(config_base, seed=args.seed * 1000 + index)
            cube, mask, record = generate_scene(config, signatures)
            stem = f"scene_{index:04d}"
            write_envi(cube, out / stem, "bil")
            write_mask(mask, out / f"{stem}.pgm")
            payload = {"seed": config.seed, "config": dataclasses.asdict(config)}
            payload.update(record.to_dict())
            (out / f"{stem}.json").write_text(json.dumps(payload, indent=2) + "\n")
            manifest_lines.append(f"{stem}.hdr,{stem}.pgm,{split}")
            total_dropped += record.dropped
            index += 1
    if index == 0:
        raise ValueError("nothing to generate: --train/--val/--test are all zero")
    (out / "manifest.txt").write_text("\n".join(manifest_lines) + "\n")
    print(f"wrote {index} scene(s) to {out} (dropped {total_dropped} flake(s) "
          f"to the occupancy cap)")
    return 0


# --------------------------------------------------------------------------
# selfcheck
# --------------------------------------------------------------------------

def _fd_gradient_check(rng) -> float:
    from .nn import ConvLayer, conv2d_backward, conv2d_forward, softmax_xent

    worst = 0.0
    delta = 1e-3
    for _ in range(3):
        h, w = int(rng.integers(3, 6)), int(rng.integers(3, 6))
        cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        k = int(rng.choice([1, 3]))
        x = rng.standard_normal((h, w, cin))  # float64: clean FD path
        layer = ConvLayer(
            rng.standard_normal((cout, k, k, cin)).astype(np.float32),
            rng.standard_normal(cout).astype(np.float32),
            "linear",
        )
        up = rng.standard_normal((h, w, cout))
        _, gw, _ = conv2d_backward(x, layer, up)
        weights = layer.weights
        for _ in range(10):
            idx = tuple(int(rng.integers(s)) for s in weights.shape)
            base = weights[idx]
            weights[idx] = base + delta
            hi = float((conv2d_forward(x, layer) * up).sum())
            w_hi = float(weights[idx])
            weights[idx] = base - delta
            lo = float((conv2d_forward(x, layer) * up).sum())
            w_lo = float(weights[idx])
            weights[idx] = base
            fd = (hi - lo) / (w_hi - w_lo)  # actual float32 step, not nominal
            err = abs(fd - float(gw[idx])) / max(abs(fd), 1e-3)
            worst = max(worst, err)
        logits = rng.standard_normal((h, w, 4))
        labels = rng.integers(0, 4, size=(h, w)).astype(np.uint8)
        _, grad = softmax_xent(logits, labels)
        idx = (int(rng.integers(h)), int(rng.integers(w)), int(rng.integers(4)))
        pert = logits.copy()
        pert[idx] += delta
        hi, _ = softmax_xent(pert, labels)
        pert[idx] -= 2 * delta
        lo, _ = softmax_xent(pert, labels)
        fd = (hi - lo) / (2 * delta)
        err = abs(fd - float(grad[idx])) / max(abs(fd), 1e-3)
        worst = max(worst, err)
    return worst


def _cmd_selfcheck(args) -> int:
    _echo("selfcheck", args)
    from .models import ReferenceSpectra, predict, sam_classify_oracle
    from .preprocess import (
        first_derivative_data,
        hyper_hue_data,
        hyper_hsv_data,
        hyper_hsv_inverse_data,
        log_derivative_data,
        spectral_norm_data,
    )

    rng = np.random.default_rng(args.seed)
    failures = 0

    def report(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        if not ok:
            failures += 1

    worst = _fd_gradient_check(rng)
    report("gradients", worst <= 1e-4, f"max finite-difference error {worst:.2e}")

    mismatches = 0
    for i in range(10):
        data = rng.random((12, 12, 16), dtype=np.float32) + 0.05
        cube = HSCube(data)
        refs = ReferenceSpectra(
            tuple(range(4)), tuple(f"C{i}" for i in range(4)),
            (rng.random((4, 16)) + 0.1).astype(np.float32),
        )
        oracle = sam_classify_oracle(cube, refs)
        net = predict(build_samnet(refs, 1), cube.data)
        mismatches += int(np.count_nonzero(oracle.labels != net))
    report("sam-equivalence", mismatches == 0, f"{mismatches} label mismatch(es)")

    cube = HSCube(rng.random((60, 74, 10), dtype=np.float32))
    bad = 0
    for xl, margin in ((False, 6), (True, 10)):
        model = build_plasticnet(10, 5, xl=xl, seed=1)
        whole = predict(model, cube.data)
        tiled = infer_tiled(model, cube, tile_size=2 * margin + 16, margin=margin)
        bad += int(np.count_nonzero(whole != tiled.labels))
    report("tiling-equivalence", bad == 0, f"{bad} pixel(s) differ from whole-image")

    spectra = rng.random((200, 12)) + 0.05  # float64: the transforms' math,
    scaled = spectra * 3.7                  # free of container quantization
    offset = spectra + 0.9
    errs = [
        np.abs(log_derivative_data(scaled)[0] - log_derivative_data(spectra)[0]).max(),
        np.abs(spectral_norm_data(scaled) - spectral_norm_data(spectra)).max(),
        np.abs(hyper_hue_data(scaled) - hyper_hue_data(spectra)).max(),
        np.abs(hyper_hue_data(offset) - hyper_hue_data(spectra)).max(),
        np.abs(first_derivative_data(offset) - first_derivative_data(spectra)).max(),
        np.abs(
            np.linalg.norm(spectral_norm_data(spectra).astype(np.float64), axis=-1) - 1.0
        ).max(),
    ]
    roundtrip = np.abs(hyper_hsv_inverse_data(hyper_hsv_data(spectra)) - spectra).max()
    ok = max(errs) <= 1e-5 and roundtrip <= 1e-5
    report("preproc-invariances", ok,
           f"max invariance error {max(errs):.2e}, hue round-trip {roundtrip:.2e}")

    return 1 if failures else 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectraflake",
        description="SWIR hyper-spectral polymer flake segmentation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"spectraflake {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    preproc_names = [p.value for p in Preproc]

    p = sub.add_parser("correct", help="bright/dark reflectance correction")
    p.add_argument("--raw", required=True, help="raw cube header (.hdr)")
    p.add_argument("--bright", required=True, help="bright reference cube header")
    p.add_argument("--dark", required=True, help="dark reference cube header")
    p.add_argument("--out", required=True, help="output base path (writes .hdr/.raw)")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--interleave", choices=("bil", "bip", "bsq"), default="bil")
    p.set_defaults(handler=_cmd_correct)

    p = sub.add_parser("spectra", help="per-class mean spectra from labeled cubes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="train")
    p.add_argument("--preproc", choices=preproc_names, default="none")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--no-background", action="store_true",
                   help="exclude the background class")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(handler=_cmd_spectra)

    p = sub.add_parser("preprocess", help="apply a spectral transform to a cube")
    p.add_argument("--cube", required=True)
    p.add_argument("--preproc", choices=preproc_names, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--interleave", choices=("bil", "bip", "bsq"), default="bil")
    p.set_defaults(handler=_cmd_preprocess)

    p = sub.add_parser("train", help="train a model on a scene manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", choices=MODEL_KINDS, required=True)
    p.add_argument("--preproc", choices=preproc_names, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--tiles", type=int, default=None, help="tiles per epoch")
    p.add_argument("--tile", type=int, default=None, help="training tile size")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--spectra", default=None,
                   help="reference spectra CSV (samnet kinds only)")
    p.add_argument("--train-frozen", action="store_true",
                   help="optimize weights even for frozen model kinds")
    p.add_argument("--curve", default=None, help="write epoch,loss,val_iou CSV here")
    p.add_argument("--out", required=True, help="output weights file")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("infer", help="tiled inference to a PGM mask + PPM preview")
    p.add_argument("--cube", required=True)
    p.add_argument("--weights", default=None)
    p.add_argument("--model", choices=("samnet", "samnet3"), default=None,
                   help="build from --spectra instead of --weights")
    p.add_argument("--spectra", default=None)
    p.add_argument("--preproc", choices=preproc_names, default="none")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tile", type=int, default=256)
    p.add_argument("--margin", type=int, default=None,
                   help="overlap margin (default: the model's receptive-field radius)")
    p.add_argument("--out", required=True, help="output mask (.pgm)")
    p.add_argument("--preview", default=None, help="output preview (.ppm)")
    p.set_defaults(handler=_cmd_infer)

    p = sub.add_parser("eval", help="compare predicted and target masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--out", default=None, help="write the report as JSON here")
    p.add_argument("--csv", action="store_true", help="print one CSV row instead of a table")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("complexity", help="ops/pixel and parameter counts")
    p.add_argument("--model", choices=MODEL_KINDS, default=None)
    p.add_argument("--channels", type=int, default=224)
    p.add_argument("--classes", type=int, default=5)
    p.set_defaults(handler=_cmd_complexity)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", type=int, default=0, help="number of train scenes")
    p.add_argument("--val", type=int, default=0)
    p.add_argument("--test", type=int, default=0)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--flakes", type=int, default=3, help="flakes per class")
    p.add_argument("--size-min", type=float, default=14.0)
    p.add_argument("--size-max", type=float, default=34.0)
    p.add_argument("--sigma", type=float, default=0.01, help="spectral noise sigma")
    p.add_argument("--specular", type=float, default=0.15,
                   help="per-flake specular patch probability")
    p.add_argument("--exposure", type=float, default=1.0)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("selfcheck", help="gradient, oracle and tiling test suites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_selfcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
