"""ROI masks: residual, high-frequency, CAA patterns, uniform, and benign pairing."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .imagecore import as_image, to_uint8
from .spectral import HighPassSpec, fft2, high_pass, ifft2, zero_pad_pow2


@dataclass(frozen=True)
class Residual:
    kind: str = "residual"


@dataclass(frozen=True)
class Frequency:
    t: float = 0.25
    kind: str = "frequency"

    def __post_init__(self):
        HighPassSpec(self.t)


@dataclass(frozen=True)
class Checkerboard:
    cells_x: int = 8
    cells_y: int = 8
    phase: int = 0
    kind: str = "checkerboard"

    def __post_init__(self):
        if self.cells_x < 1 or self.cells_y < 1:
            raise ValueError("cell counts must be >= 1")
        if self.phase not in (0, 1):
            raise ValueError("phase must be 0 or 1")


@dataclass(frozen=True)
class ConcentricSquares:
    rings: int = 4
    phase: int = 0
    kind: str = "concentric"

    def __post_init__(self):
        if self.rings < 1:
            raise ValueError("rings must be >= 1")
        if self.phase not in (0, 1):
            raise ValueError("phase must be 0 or 1")


@dataclass(frozen=True)
class Uniform:
    level: float = 1.0
    kind: str = "uniform"

    def __post_init__(self):
        if not 0.0 <= self.level <= 1.0:
            raise ValueError("uniform level must lie in [0, 1]")


MaskKind = Residual | Frequency | Checkerboard | ConcentricSquares | Uniform

_KINDS = {cls().kind: cls for cls in (Residual, Frequency, Checkerboard, ConcentricSquares, Uniform)}


def mask_kind_to_dict(kind: MaskKind) -> dict:
    return asdict(kind)


def mask_kind_from_dict(d: dict) -> MaskKind:
    d = dict(d)
    cls = _KINDS[d.pop("kind")]
    return cls(**d)


def parse_mask_spec(text: str) -> MaskKind:
    """Parse compact specs: ``uniform:1``, ``checker:8x8``, ``checker:2x2:1``,
    ``concentric:4``, ``freq:0.25``, ``residual``."""
    name, _, rest = text.partition(":")
    args = rest.split(":") if rest else []
    if name == "uniform":
        return Uniform(float(args[0]) if args else 1.0)
    if name in ("checker", "checkerboard"):
        cx, cy = (int(v) for v in (args[0] if args else "8x8").lower().split("x"))
        return Checkerboard(cx, cy, int(args[1]) if len(args) > 1 else 0)
    if name == "concentric":
        return ConcentricSquares(int(args[0]) if args else 4, int(args[1]) if len(args) > 1 else 0)
    if name in ("freq", "frequency"):
        return Frequency(float(args[0]) if args else 0.25)
    if name in ("res", "residual"):
        return Residual()
    raise ValueError(f"unknown mask spec {text!r}")


def norm(z) -> np.ndarray:
    """Affine rescale to [0, 1]; a constant map becomes the neutral 0.5 mask."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("norm needs finite entries")
    lo = z.min()
    hi = z.max()
    if hi == lo:
        return np.full(z.shape, 0.5)
    out = (z - lo) / (hi - lo)
    # pin the extremes exactly; the division can land one ulp off
    out[z == lo] = 0.0
    out[z == hi] = 1.0
    return out


def mask_res(x, x_p) -> np.ndarray:
    x = as_image(x)
    x_p = as_image(x_p)
    if x.shape != x_p.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_p.shape}")
    return norm(np.abs(x - x_p).mean(axis=2))


def mask_freq(x_p, spec: HighPassSpec | float = HighPassSpec()) -> np.ndarray:
    """Normalized channel mean of |high-passed image|.

    Non power-of-two inputs are zero-padded after removing each channel's mean,
    so the padding adds no edge of its own; the high-pass discards the mean
    anyway.  Responses at floating-point noise level count as zero.
    """
    if not isinstance(spec, HighPassSpec):
        spec = HighPassSpec(float(spec))
    x_p = as_image(x_p)
    h, w = x_p.shape[:2]
    centered = x_p - x_p.mean(axis=(0, 1))
    hp = np.abs(ifft2(high_pass(fft2(zero_pad_pow2(centered)), spec)))[:h, :w]
    hp[hp <= 1e-12 * max(1.0, float(np.abs(x_p).max()))] = 0.0
    return norm(hp.mean(axis=2))


def mask_checkerboard(h: int, w: int, cells_x: int = 8, cells_y: int = 8, phase: int = 0) -> np.ndarray:
    """Alternating 1/0 cells; at phase 0 the top-left cell is 1.

    Cells are ``ceil(dim / cells)`` pixels wide, so the last row/column of cells
    is truncated when the counts do not divide the image.
    """
    if cells_x < 1 or cells_y < 1:
        raise ValueError("cell counts must be >= 1")
    ch = math.ceil(h / cells_y)
    cw = math.ceil(w / cells_x)
    yy = (np.arange(h) // ch)[:, None]
    xx = (np.arange(w) // cw)[None, :]
    m = ((yy + xx) % 2 == 0).astype(np.float64)
    return 1.0 - m if phase else m


def mask_concentric(h: int, w: int, rings: int = 4, phase: int = 0) -> np.ndarray:
    """Square rings of equal width around the image center, alternating 1/0.

    ``phase`` is the value of the outermost ring.
    """
    if rings < 1:
        raise ValueError("rings must be >= 1")
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    dy = np.abs(np.arange(h) - cy)[:, None] / (h / 2.0)
    dx = np.abs(np.arange(w) - cx)[None, :] / (w / 2.0)
    d = np.maximum(dy, dx)  # in (0, 1)
    band = np.minimum((d * rings).astype(int), rings - 1)  # 0 = innermost
    from_outside = rings - 1 - band
    val = np.where(from_outside % 2 == 0, phase, 1 - phase)
    return val.astype(np.float64)


def mask_uniform(h: int, w: int, level: float = 1.0) -> np.ndarray:
    return np.full((h, w), float(level))


def build_mask(kind: MaskKind, x=None, x_p=None, shape=None) -> np.ndarray:
    """Materialize ``kind`` for an image. Data-dependent kinds need ``x``/``x_p``."""
    if shape is None:
        ref = x_p if x_p is not None else x
        if ref is None:
            raise ValueError("need an image or an explicit shape")
        shape = as_image(ref).shape[:2]
    h, w = shape
    if isinstance(kind, Residual):
        return mask_res(x, x_p)
    if isinstance(kind, Frequency):
        return mask_freq(x_p, HighPassSpec(kind.t))
    if isinstance(kind, Checkerboard):
        return mask_checkerboard(h, w, kind.cells_x, kind.cells_y, kind.phase)
    if isinstance(kind, ConcentricSquares):
        return mask_concentric(h, w, kind.rings, kind.phase)
    if isinstance(kind, Uniform):
        return mask_uniform(h, w, kind.level)
    raise TypeError(f"unknown mask kind {kind!r}")


def pair_benign_mask(benign_index: int, poisoned_pool, seed: int) -> int:
    """Pick the poisoned sample whose mask the benign sample ``benign_index`` borrows.

    The draw is uniform over ``poisoned_pool`` and depends only on
    ``(seed, benign_index)``, so batches can be processed in any order.
    """
    pool = list(poisoned_pool)
    if not pool:
        raise ValueError("empty poisoned pool: benign masks are borrowed from poisoned samples")
    rng = np.random.default_rng([seed, 0x9A1E, benign_index])
    return pool[int(rng.integers(len(pool)))]


def write_pgm(path, mask) -> None:
    """8-bit binary PGM, value = round(255 * w)."""
    from .imagecore import write_pnm

    write_pnm(path, to_uint8(np.asarray(mask, dtype=np.float64))[:, :, 0])
