"""``roibackdoor`` command line: encode, decode, mask, poison, analyze.

Exit status is 0 when all requested work completed, 1 on partial failure or a
stage error, and 2 for usage errors such as a missing input or a bad config.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from . import analysis as an
from . import masks as mk
from . import pipeline as pl
from . import triggers as tg
from .imagecore import read_image, write_image
from .roicodec import JpegError, RoiCodecConfig, decode, encode_roi, stream_stats


class UsageError(Exception):
    pass


def _need_file(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"input not found: {path}")
    return p


# ---------------------------------------------------------------- codec


def cmd_encode(args) -> int:
    img = read_image(_need_file(args.input))
    kind = mk.parse_mask_spec(args.mask)
    if isinstance(kind, (mk.Residual, mk.Frequency)):
        if isinstance(kind, mk.Residual):
            if not args.clean:
                raise UsageError("residual masks need --clean (the untriggered image)")
            mask = mk.build_mask(kind, x=read_image(_need_file(args.clean)), x_p=img)
        else:
            mask = mk.build_mask(kind, x_p=img)
    else:
        mask = mk.build_mask(kind, shape=img.shape[:2])
    cfg = RoiCodecConfig(args.quality, args.k_max, args.hf_zero, not args.no_rate_match)
    stream = encode_roi(img, mask, cfg)
    Path(args.output).write_bytes(stream.data)
    st = stream_stats(stream)
    print(f"bytes={st['bytes']} bpp={st['bits_per_pixel']:.4f} quality={stream.quality}")
    return 0


def cmd_decode(args) -> int:
    data = _need_file(args.input).read_bytes()
    write_image(args.output, decode(data))
    return 0


def cmd_mask(args) -> int:
    kind = mk.parse_mask_spec(args.kind)
    if isinstance(kind, mk.Residual):
        if not (args.image and args.clean):
            raise UsageError("residual masks need --image (triggered) and --clean")
        mask = mk.build_mask(kind, x=read_image(_need_file(args.clean)), x_p=read_image(_need_file(args.image)))
    elif isinstance(kind, mk.Frequency):
        if not args.image:
            raise UsageError("frequency masks need --image")
        mask = mk.build_mask(kind, x_p=read_image(_need_file(args.image)))
    else:
        h, w = (int(v) for v in args.size.lower().split("x"))
        mask = mk.build_mask(kind, shape=(h, w))
    mk.write_pgm(args.output, mask)
    return 0


# ---------------------------------------------------------------- poison

CONFIG_KEYS = {
    "dataset",
    "output",
    "format",
    "size",
    "route",
    "poison_rate",
    "label_mode",
    "target",
    "exclude_target",
    "codec",
    "trigger",
    "mask",
}
CODEC_KEYS = {"quality", "k_max", "hf_zero_fraction", "rate_match"}


def load_run_config(path) -> dict:
    """Parse and validate a YAML run config; every problem is reported at once."""
    doc = yaml.safe_load(_need_file(path).read_text()) or {}
    if not isinstance(doc, dict):
        raise UsageError("config must be a mapping")
    problems = []
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        problems.append(f"unknown keys: {', '.join(sorted(unknown))}")
    for key in ("dataset", "output"):
        if key not in doc:
            problems.append(f"missing key: {key}")
    codec = doc.get("codec") or {}
    if not isinstance(codec, dict) or set(codec) - CODEC_KEYS:
        problems.append(f"codec accepts only: {', '.join(sorted(CODEC_KEYS))}")
    ds = str(doc.get("dataset", ""))
    if ds and not ds.startswith("desk:") and not Path(ds).exists():
        problems.append(f"input not found: {ds}")
    if doc.get("format", "png") not in ("png", "jpg"):
        problems.append("format must be png or jpg")
    if doc.get("route", "caa") == "reactivation" and doc.get("poison_rate", 0.1) == 0:
        problems.append("empty poisoned pool: reactivation with poison_rate 0 leaves benign samples no mask to borrow")
    if problems:
        raise UsageError("invalid config:\n  " + "\n  ".join(problems))
    return doc


def attack_config(doc: dict, seed: int) -> pl.AttackConfig:
    mask = doc.get("mask")
    if isinstance(mask, str):
        mask = mk.parse_mask_spec(mask)
    elif isinstance(mask, dict):
        mask = mk.mask_kind_from_dict(mask)
    trig = doc.get("trigger")
    if isinstance(trig, dict):
        trig = tg.trigger_from_dict(trig)
    return pl.AttackConfig(
        route=doc.get("route", "caa"),
        poison_rate=float(doc.get("poison_rate", 0.1)),
        label_mode=doc.get("label_mode", "all_to_one"),
        target=int(doc.get("target", 0)),
        codec=RoiCodecConfig(**(doc.get("codec") or {})),
        trigger=trig,
        mask=mask,
        seed=seed,
        exclude_target=bool(doc.get("exclude_target", False)),
    )


def cmd_poison(args) -> int:
    doc = load_run_config(args.config)
    try:
        cfg = attack_config(doc, args.seed)
        ds = pl.load_dataset(doc["dataset"], size=doc.get("size", 64))
    except (ValueError, TypeError, KeyError) as e:
        raise UsageError(f"invalid config: {e}") from None
    if cfg.label_mode == "all_to_one" and not 0 <= cfg.target < ds.class_count:
        raise UsageError(f"invalid config: target {cfg.target} outside {ds.class_count} classes")
    result = pl.run(ds, cfg, workers=args.workers)
    result.manifest.config["dataset"] = str(doc["dataset"])
    result.manifest.config["size"] = doc.get("size", 64)
    pl.export(result, doc["output"], doc.get("format", "png"))
    s = result.manifest.summary()
    ok = [st for st in result.streams if st is not None]
    bpp = an.mean_bpp(ok) if ok else 0.0
    print(f"route={s['route']} N={s['n']} poisoned={s['poisoned']} mean_bpp={bpp:.4f}")
    if s["failures"]:
        print(f"failed samples: {', '.join(map(str, s['failures']))}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------- analyze


def _family(manifest: pl.PoisonManifest) -> mk.MaskKind:
    kind = mk.mask_kind_from_dict(manifest.config["mask"])
    if not isinstance(kind, (mk.Checkerboard, mk.ConcentricSquares)):
        raise UsageError("the detector needs a CAA manifest with a checkerboard or concentric mask")
    return kind


def cmd_analyze(args) -> int:
    ds = pl.load_dataset(_need_file(args.dataset), size=None)
    manifest = pl.read_manifest(_need_file(args.manifest or Path(args.dataset) / "manifest.json"))
    out = Path(args.out or args.dataset)
    out.mkdir(parents=True, exist_ok=True)
    poisoned = np.array(manifest.poisoned, dtype=np.int64)
    clean = np.setdiff1d(np.arange(len(ds)), poisoned)
    summary: dict = {"route": manifest.config.get("route"), "n": manifest.n, "poisoned": len(poisoned)}
    rows = [{"index": r.index, "route": r.route, "label": r.assigned_label, "stream_bytes": r.stream_bytes} for r in manifest.records]
    summary["mean_bpp"] = float(np.mean([8.0 * r.stream_bytes for r in manifest.records]) / (ds.images.shape[1] * ds.images.shape[2]))

    metrics = [m for m in (args.metrics or "").split(",") if m]
    if metrics:
        if set(metrics) - {"psnr", "ssim"}:
            raise UsageError("--metrics accepts psnr and ssim")
        src = manifest.config.get("dataset")
        if not src:
            raise UsageError("manifest does not name its source dataset")
        orig = pl.load_dataset(src, size=manifest.config.get("size", 64))
        quality = manifest.config["codec"]["quality"]
        refs = pl.compress_uniform(orig.subset(poisoned), quality).images
        both = an.stealth_both(ds.images[poisoned], orig.images[poisoned], refs)
        for ref, rep in both.items():
            if "psnr" in metrics:
                summary[f"psnr_{ref}"] = rep.psnr_mean
            if "ssim" in metrics:
                summary[f"ssim_{ref}"] = rep.ssim_mean
        for j, i in enumerate(poisoned):
            rows[i]["psnr_vs_compressed"] = both["vs_compressed"].psnr[j]
            rows[i]["ssim_vs_compressed"] = both["vs_compressed"].ssim[j]

    if args.detector or args.recompress:
        fam = _family(manifest)
        if len(poisoned) == 0 or len(clean) == 0:
            raise UsageError("the detector needs both poisoned and clean samples")
        stats = an.statistics(ds.images, fam)
        for i, v in enumerate(stats):
            rows[i]["caa_statistic"] = float(v)
        summary["auc"] = an.mann_whitney_auc(stats[poisoned], stats[clean])
        if args.recompress:
            qs = [int(q) for q in args.recompress.split(",")]
            surv = an.recompress_survival(ds.images[poisoned], ds.images[clean], qs, fam)
            summary["recompress_auc"] = {str(q): surv[q] for q in qs}

    an.write_csv(out / "per_sample.csv", rows)
    an.write_summary(out / "summary.json", summary)
    for key, val in summary.items():
        if isinstance(val, dict):
            for q, v in val.items():
                print(f"{key}[q{q}]={v:.4f}")
        elif isinstance(val, float):
            print(f"{key}={val:.4f}")
        else:
            print(f"{key}={val}")
    return 0


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roibackdoor", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("encode", help="ROI-guided JPEG encode")
    e.add_argument("input")
    e.add_argument("output")
    e.add_argument("--quality", type=int, default=75)
    e.add_argument("--mask", default="uniform:1", help="uniform:L, checker:CxR[:phase], concentric:N[:phase], freq:T, residual")
    e.add_argument("--clean", help="untriggered image for residual masks")
    e.add_argument("--k-max", type=int, default=4)
    e.add_argument("--hf-zero", type=float, default=0.5)
    e.add_argument("--no-rate-match", action="store_true")
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help="decode a baseline JPEG to PNG/PPM")
    d.add_argument("input")
    d.add_argument("output")
    d.set_defaults(func=cmd_decode)

    m = sub.add_parser("mask", help="write a mask as 8-bit PGM")
    m.add_argument("kind")
    m.add_argument("output")
    m.add_argument("--size", default="64x64", help="HxW for pattern masks")
    m.add_argument("--image", help="triggered image (freq, residual)")
    m.add_argument("--clean", help="clean image (residual)")
    m.set_defaults(func=cmd_mask)

    po = sub.add_parser("poison", help="run a poisoning route from a YAML config")
    po.add_argument("config")
    po.add_argument("--seed", type=int, required=True)
    po.add_argument("--workers", type=int, default=1)
    po.set_defaults(func=cmd_poison)

    a = sub.add_parser("analyze", help="measure a poisoned dataset")
    a.add_argument("dataset")
    a.add_argument("--manifest")
    a.add_argument("--metrics", help="comma list: psnr,ssim")
    a.add_argument("--detector", action="store_true")
    a.add_argument("--recompress", help="comma list of qualities")
    a.add_argument("--out", help="report directory (default: the dataset directory)")
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (JpegError, pl.DatasetError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
