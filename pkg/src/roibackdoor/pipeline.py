"""Poisoning pipelines: dataset ingestion, poison selection, ROI compression routes, export.

Two routes are supported:

``reactivation``
    Poisoned samples carry a pixel-domain trigger and are compressed with a
    sample-specific residual or high-frequency mask; each benign sample borrows
    the mask of a randomly chosen poisoned sample.
``caa``
    Poisoned samples carry no pixel trigger at all.  They are compressed with a
    fixed pattern mask (checkerboard by default) while benign samples use the
    all-ones mask, i.e. ordinary compression.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import masks as mk
from . import triggers as tg
from .desk import PHOTO_NAMES, desk_dataset
from .imagecore import as_image, quantize8, read_image, resize_bilinear, write_image
from .roicodec import JpegError, JpegStream, RoiCodecConfig, decode, encode_roi

CIFAR_RECORD = 3073


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, H, W, C) float64 in [0, 1]
    labels: np.ndarray  # (N,) int
    class_count: int
    source: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DatasetError("images and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DatasetError("label outside [0, class_count)")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.class_count, self.source)


def read_cifar_batch(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse a CIFAR-10 binary batch into ``(uint8 images (N, 32, 32, 3), labels)``."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR_RECORD:
        raise DatasetError(f"{path}: size {raw.size} is not a multiple of the {CIFAR_RECORD}-byte record")
    rec = raw.reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise DatasetError(f"{path}: label byte {labels.max()} out of range")
    images = rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return images, labels


def write_cifar_batch(path, images_u8: np.ndarray, labels) -> None:
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    n = len(images_u8)
    rec = np.empty((n, CIFAR_RECORD), dtype=np.uint8)
    rec[:, 0] = np.asarray(labels, dtype=np.uint8)
    rec[:, 1:] = images_u8.transpose(0, 3, 1, 2).reshape(n, -1)
    rec.tofile(path)


def _resize_all(images: np.ndarray, size: int | None) -> np.ndarray:
    if size is None or images.shape[1:3] == (size, size):
        return images
    return np.stack([quantize8(resize_bilinear(im, (size, size))) for im in images])


def load_dataset(descriptor, size: int | None = 64, class_count: int | None = None) -> Dataset:
    """Load a CIFAR-10 batch file, a directory of batch files, or an image directory.

    Image directories need a ``labels.csv`` with ``filename,label`` rows.  Images
    are resized to ``size`` x ``size`` bilinearly (``size=None`` keeps them).
    ``desk:N`` or ``desk:N:SEED`` builds the bundled photographic corpus.
    """
    if isinstance(descriptor, str) and descriptor.startswith("desk:"):
        parts = descriptor.split(":")
        try:
            n = int(parts[1])
            seed = int(parts[2]) if len(parts) > 2 else 0
        except (IndexError, ValueError):
            raise DatasetError(f"bad desk descriptor {descriptor!r}; expected desk:N[:SEED]") from None
        if n < 1:
            raise DatasetError("desk corpus needs N >= 1")
        images, labels = desk_dataset(n, seed, size or 64)
        return Dataset(images, labels, len(PHOTO_NAMES), descriptor)
    path = Path(descriptor)
    if path.is_file() and path.suffix == ".bin":
        batches = [path]
    elif path.is_dir():
        batches = sorted(path.glob("*.bin"))
    else:
        raise DatasetError(f"{descriptor}: not a CIFAR batch or directory")

    if batches:
        parts = [read_cifar_batch(b) for b in batches]
        images = np.concatenate([p[0] for p in parts]).astype(np.float64) / 255.0
        labels = np.concatenate([p[1] for p in parts])
        return Dataset(_resize_all(images, size), labels, class_count or 10, str(descriptor))

    if not any(path.iterdir()):
        raise DatasetError(f"{descriptor}: empty dataset directory")
    labels_file = path / "labels.csv"
    if not labels_file.exists():
        raise DatasetError(f"{descriptor}: missing labels.csv")
    names, labels, declared = [], [], None
    with open(labels_file, newline="") as f:
        for row in csv.reader(f):
            if not row:
                continue
            if row[0].startswith("#"):
                key, _, val = row[0].lstrip("# ").partition("=")
                if key == "class_count":
                    declared = int(val)
                continue
            if row[0] == "filename":
                continue
            names.append(row[0])
            labels.append(int(row[1]))
    if not names:
        raise DatasetError(f"{descriptor}: labels.csv lists no samples")
    images = []
    for n in names:
        p = path / n
        if not p.exists():
            raise DatasetError(f"{descriptor}: missing image {n}")
        images.append(decode(p.read_bytes()) if p.suffix.lower() in (".jpg", ".jpeg") else read_image(p))
    images = _resize_all(np.stack(images), size)
    cc = class_count or declared or (max(labels) + 1)
    return Dataset(images, np.array(labels), cc, str(descriptor))


@dataclass
class AttackConfig:
    route: str = "caa"  # "caa" | "reactivation"
    poison_rate: float = 0.1
    label_mode: str = "all_to_one"  # "all_to_one" | "all_to_all"
    target: int = 0
    codec: RoiCodecConfig = field(default_factory=RoiCodecConfig)
    trigger: tg.TriggerKind | None = None
    mask: mk.MaskKind | None = None
    seed: int = 0
    exclude_target: bool = False

    def __post_init__(self):
        if self.route not in ("caa", "reactivation"):
            raise ValueError(f"unknown route {self.route!r}")
        if not 0.0 <= self.poison_rate <= 1.0:
            raise ValueError("poison_rate must lie in [0, 1]")
        if self.label_mode not in ("all_to_one", "all_to_all"):
            raise ValueError(f"unknown label_mode {self.label_mode!r}")
        if self.mask is None:
            self.mask = mk.Checkerboard() if self.route == "caa" else mk.Frequency()
        if self.route == "reactivation":
            if self.trigger is None:
                self.trigger = tg.FreqAdditive()
            if not isinstance(self.mask, (mk.Residual, mk.Frequency)):
                raise ValueError("reactivation needs a residual or frequency mask")

    def to_dict(self) -> dict:
        d = {
            "route": self.route,
            "poison_rate": self.poison_rate,
            "label_mode": self.label_mode,
            "target": self.target,
            "codec": asdict(self.codec),
            "trigger": tg.trigger_to_dict(self.trigger) if self.trigger is not None else None,
            "mask": mk.mask_kind_to_dict(self.mask),
            "seed": self.seed,
            "exclude_target": self.exclude_target,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> AttackConfig:
        d = dict(d)
        d["codec"] = RoiCodecConfig(**d.get("codec", {}))
        if d.get("trigger") is not None:
            d["trigger"] = tg.trigger_from_dict(d["trigger"])
        if d.get("mask") is not None:
            d["mask"] = mk.mask_kind_from_dict(d["mask"])
        return cls(**d)


def sample_seed(master: int, index: int) -> int:
    """Per-sample seed from ``(master, index)``, independent of processing order."""
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


def select_poison(ds: Dataset, cfg: AttackConfig) -> np.ndarray:
    n = len(ds)
    count = int(np.floor(cfg.poison_rate * n))
    if count < 1:
        raise ValueError(f"poison_rate * N = {cfg.poison_rate * n:g} selects no samples")
    eligible = np.arange(n)
    if cfg.exclude_target and cfg.label_mode == "all_to_one":
        eligible = eligible[ds.labels != cfg.target]
    if count > len(eligible):
        raise ValueError(f"need {count} poison samples but only {len(eligible)} are eligible")
    rng = np.random.default_rng([cfg.seed, 0x5E1EC7])
    return np.sort(rng.choice(eligible, size=count, replace=False))


def assign_label(label: int, cfg: AttackConfig, class_count: int) -> int:
    if cfg.label_mode == "all_to_one":
        return cfg.target
    return (label + 1) % class_count


@dataclass
class SampleRecord:
    index: int
    route: str  # "reactivation" | "caa" | "clean"
    trigger: dict | None
    mask: dict
    mask_source: int | None
    original_label: int
    assigned_label: int
    stream_bytes: int
    stream_quality: int
    seed: int
    low_signal: bool = False
    error: str | None = None


@dataclass
class PoisonManifest:
    config: dict
    n: int
    class_count: int
    records: list = field(default_factory=list)

    @property
    def poisoned(self) -> list[int]:
        return [r.index for r in self.records if r.route != "clean"]

    @property
    def failures(self) -> list[int]:
        return [r.index for r in self.records if r.error]

    def summary(self) -> dict:
        bits = [8.0 * r.stream_bytes for r in self.records if not r.error]
        return {
            "route": self.config.get("route"),
            "n": self.n,
            "poisoned": len(self.poisoned),
            "mean_stream_bytes": float(np.mean([r.stream_bytes for r in self.records])) if self.records else 0.0,
            "total_bits": float(np.sum(bits)),
            "failures": self.failures,
        }

    def to_json(self) -> str:
        d = {"config": self.config, "n": self.n, "class_count": self.class_count, "records": [asdict(r) for r in self.records]}
        return json.dumps(d, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> PoisonManifest:
        d = json.loads(text)
        return cls(d["config"], d["n"], d["class_count"], [SampleRecord(**r) for r in d["records"]])


def is_low_signal(img, rel: float = 1e-6) -> bool:
    """True when the image's AC energy is below ``rel`` of its total energy."""
    img = as_image(img)
    total = float(np.sum(img**2))
    if total == 0.0:
        return True
    ac = float(np.sum((img - img.mean(axis=(0, 1))) ** 2))
    return ac < rel * total


@dataclass
class RunResult:
    dataset: Dataset
    manifest: PoisonManifest
    streams: list  # JpegStream per sample (None on failure)

    def __iter__(self):
        # unpacks as (dataset, manifest)
        return iter((self.dataset, self.manifest))


def _compress(img, mask, codec) -> tuple[np.ndarray, JpegStream]:
    stream = encode_roi(img, mask, codec)
    return decode(stream), stream


def _job(args):
    """One sample of either route; module-level so process pools can pickle it."""
    kind, img, mask, codec = args
    try:
        out, stream = _compress(img, mask, codec)
        return out, stream, None
    except (JpegError, ValueError) as e:
        return as_image(img).copy(), None, f"{kind}: {e}"


def _run_jobs(jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_job, jobs, chunksize=16))
    return [_job(j) for j in jobs]


def _finish(ds, cfg, jobs, meta, workers) -> RunResult:
    results = _run_jobs(jobs, workers)
    out_images = np.empty_like(ds.images)
    labels = ds.labels.copy()
    manifest = PoisonManifest(cfg.to_dict(), len(ds), ds.class_count)
    streams = []
    for i, ((img, stream, err), m) in enumerate(zip(results, meta)):
        out_images[i] = img
        labels[i] = m["assigned_label"]
        streams.append(stream)
        manifest.records.append(
            SampleRecord(
                index=i,
                stream_bytes=stream.nbytes if stream else 0,
                stream_quality=stream.quality if stream else 0,
                error=err,
                **m,
            )
        )
    return RunResult(Dataset(out_images, labels, ds.class_count, ds.source), manifest, streams)


def run_reactivation(ds: Dataset, cfg: AttackConfig, workers: int = 1) -> RunResult:
    if cfg.route != "reactivation":
        raise ValueError("config route is not 'reactivation'")
    n = len(ds)
    count = int(np.floor(cfg.poison_rate * n))
    if count < 1:
        raise ValueError("empty poisoned pool: poison_rate selects no samples, so benign samples have no mask to borrow")
    poison = select_poison(ds, cfg)
    poison_set = set(poison.tolist())
    trig = tg.trigger_to_dict(cfg.trigger)
    mdict = mk.mask_kind_to_dict(cfg.mask)

    masks, triggered = {}, {}
    for i in poison:
        x = ds.images[i]
        xp = tg.apply_trigger(x, cfg.trigger, sample_seed(cfg.seed, int(i)))
        triggered[int(i)] = xp
        masks[int(i)] = mk.build_mask(cfg.mask, x=x, x_p=xp)

    jobs, meta = [], []
    for i in range(n):
        label = int(ds.labels[i])
        seed = sample_seed(cfg.seed, i)
        if i in poison_set:
            jobs.append(("poisoned", triggered[i], masks[i], cfg.codec))
            meta.append(dict(route="reactivation", trigger=trig, mask=mdict, mask_source=i,
                             original_label=label, assigned_label=assign_label(label, cfg, ds.class_count), seed=seed))
        else:
            src = mk.pair_benign_mask(i, poison, cfg.seed)
            jobs.append(("benign", ds.images[i], masks[src], cfg.codec))
            meta.append(dict(route="clean", trigger=None, mask=mdict, mask_source=int(src),
                             original_label=label, assigned_label=label, seed=seed))
    return _finish(ds, cfg, jobs, meta, workers)


def run_caa(ds: Dataset, cfg: AttackConfig, workers: int = 1) -> RunResult:
    if cfg.route != "caa":
        raise ValueError("config route is not 'caa'")
    poison_set = set(select_poison(ds, cfg).tolist())
    h, w = ds.images.shape[1:3]
    pattern = mk.build_mask(cfg.mask, shape=(h, w))
    uniform = mk.mask_uniform(h, w, 1.0)
    mdict = mk.mask_kind_to_dict(cfg.mask)
    udict = mk.mask_kind_to_dict(mk.Uniform(1.0))
    jobs, meta = [], []
    for i in range(len(ds)):
        label = int(ds.labels[i])
        seed = sample_seed(cfg.seed, i)
        low = is_low_signal(ds.images[i])
        if i in poison_set:
            jobs.append(("poisoned", ds.images[i], pattern, cfg.codec))
            meta.append(dict(route="caa", trigger=None, mask=mdict, mask_source=None, original_label=label,
                             assigned_label=assign_label(label, cfg, ds.class_count), seed=seed, low_signal=low))
        else:
            jobs.append(("benign", ds.images[i], uniform, cfg.codec))
            meta.append(dict(route="clean", trigger=None, mask=udict, mask_source=None, original_label=label,
                             assigned_label=label, seed=seed, low_signal=low))
    return _finish(ds, cfg, jobs, meta, workers)


def run(ds: Dataset, cfg: AttackConfig, workers: int = 1) -> RunResult:
    return (run_caa if cfg.route == "caa" else run_reactivation)(ds, cfg, workers)


def poison_test_set(ds: Dataset, cfg: AttackConfig, exclude_target: bool = True) -> Dataset:
    """Triggered copies of test samples for ASR measurement, target-class samples dropped."""
    keep = np.arange(len(ds))
    if exclude_target and cfg.label_mode == "all_to_one":
        keep = keep[ds.labels != cfg.target]
    sub = ds.subset(keep)
    h, w = sub.images.shape[1:3]
    out = np.empty_like(sub.images)
    for j, i in enumerate(keep):
        x = ds.images[i]
        if cfg.route == "caa":
            mask = mk.build_mask(cfg.mask, shape=(h, w))
            out[j] = decode(encode_roi(x, mask, cfg.codec))
        else:
            xp = tg.apply_trigger(x, cfg.trigger, sample_seed(cfg.seed, int(i)))
            out[j] = decode(encode_roi(xp, mk.build_mask(cfg.mask, x=x, x_p=xp), cfg.codec))
    labels = np.array([assign_label(int(c), cfg, ds.class_count) for c in sub.labels])
    return Dataset(out, labels, ds.class_count, ds.source)


def compress_uniform(ds: Dataset, quality: int = 75) -> Dataset:
    """Standard compression of every sample (the victim's view of clean data)."""
    codec = RoiCodecConfig(quality=quality)
    h, w = ds.images.shape[1:3]
    ones = mk.mask_uniform(h, w, 1.0)
    out = np.stack([decode(encode_roi(x, ones, codec)) for x in ds.images])
    return Dataset(out, ds.labels.copy(), ds.class_count, ds.source)


def export(result: RunResult, out_dir, fmt: str = "png") -> list[Path]:
    """Write one image per sample, ``labels.csv`` and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = result.dataset
    written = []
    names = []
    for i in range(len(ds)):
        if fmt == "jpg" and result.streams[i] is not None:
            name = f"{i:05d}.jpg"
            (out / name).write_bytes(result.streams[i].data)
        elif fmt in ("png", "jpg"):
            name = f"{i:05d}.png"
            write_image(out / name, ds.images[i])
        else:
            raise ValueError(f"unknown export format {fmt!r}")
        names.append(name)
        written.append(out / name)
    with open(out / "labels.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow([f"# class_count={ds.class_count}"])
        wr.writerow(["filename", "label"])
        for name, lab in zip(names, ds.labels):
            wr.writerow([name, int(lab)])
    (out / "manifest.json").write_text(result.manifest.to_json())
    written += [out / "labels.csv", out / "manifest.json"]
    return written


def read_manifest(path) -> PoisonManifest:
    return PoisonManifest.from_json(Path(path).read_text())


def with_codec(cfg: AttackConfig, **codec_changes) -> AttackConfig:
    return replace(cfg, codec=replace(cfg.codec, **codec_changes))


__all__ = [
    "AttackConfig",
    "Dataset",
    "DatasetError",
    "PoisonManifest",
    "RunResult",
    "SampleRecord",
    "assign_label",
    "compress_uniform",
    "export",
    "is_low_signal",
    "load_dataset",
    "poison_test_set",
    "read_cifar_batch",
    "read_manifest",
    "run",
    "run_caa",
    "run_reactivation",
    "sample_seed",
    "select_poison",
    "write_cifar_batch",
]
