"""Invisible and visible trigger generators that the attacks reactivate or compare against.

* :class:`FreqAdditive` adds energy at fixed full-image DCT positions (FTrojan-style).
* :class:`Warp` applies a smooth random displacement field (WaNet-style).
* :class:`Patch` stamps a small constant square (BadNets-style).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .imagecore import as_image
from .spectral import dct2_full, idct2_full


@dataclass(frozen=True)
class FreqAdditive:
    positions: tuple | None = None  # ((u, v), ...); None -> defaults for the image size
    magnitude: float = 30 / 255
    channels: str | tuple = "luma"
    kind: str = "freq"


@dataclass(frozen=True)
class Warp:
    grid_k: int = 4
    strength: float = 0.5
    kind: str = "warp"

    def __post_init__(self):
        if self.grid_k < 2:
            raise ValueError("grid_k must be >= 2")
        if self.strength < 0:
            raise ValueError("strength must be >= 0")


@dataclass(frozen=True)
class Patch:
    size: int = 3
    value: float = 1.0
    corner: str = "bottom-right"
    kind: str = "patch"


TriggerKind = FreqAdditive | Warp | Patch

_KINDS = {"freq": FreqAdditive, "warp": Warp, "patch": Patch}


def trigger_to_dict(kind: TriggerKind) -> dict:
    d = asdict(kind)
    if isinstance(kind, FreqAdditive) and kind.positions is not None:
        d["positions"] = [list(p) for p in kind.positions]
    return d


def trigger_from_dict(d: dict) -> TriggerKind:
    d = dict(d)
    cls = _KINDS[d.pop("kind")]
    if cls is FreqAdditive:
        if d.get("positions") is not None:
            d["positions"] = tuple(tuple(p) for p in d["positions"])
        if isinstance(d.get("channels"), list):
            d["channels"] = tuple(d["channels"])
    return cls(**d)


def default_freq_positions(h: int, w: int) -> tuple:
    return ((2 * h // 3, 2 * w // 3), (5 * h // 6, 5 * w // 6))


def freq_delta(h: int, w: int, cfg: FreqAdditive = FreqAdditive()) -> np.ndarray:
    """The additive pixel-domain pattern of a frequency trigger, shape ``(H, W)``."""
    positions = cfg.positions if cfg.positions is not None else default_freq_positions(h, w)
    coeffs = np.zeros((h, w))
    for u, v in positions:
        if not (0 <= u < h and 0 <= v < w):
            raise ValueError(f"trigger position {(u, v)} outside a {h}x{w} spectrum")
        coeffs[u, v] += cfg.magnitude
    return idct2_full(coeffs)


def apply_freq_trigger(x, cfg: FreqAdditive = FreqAdditive(), clamp: bool = True) -> np.ndarray:
    """Add ``magnitude`` at each DCT position of the selected channels.

    ``channels="luma"`` adds the same pattern to R, G and B, which moves luma
    only and leaves both chroma planes untouched.
    """
    x = as_image(x)
    h, w, c = x.shape
    if cfg.magnitude == 0:
        return x.copy()
    out = x.copy()
    if cfg.channels == "luma":
        out += freq_delta(h, w, cfg)[:, :, None]
    else:
        for ch in cfg.channels:
            spec = dct2_full(out[:, :, ch])
            positions = cfg.positions if cfg.positions is not None else default_freq_positions(h, w)
            for u, v in positions:
                if not (0 <= u < h and 0 <= v < w):
                    raise ValueError(f"trigger position {(u, v)} outside a {h}x{w} spectrum")
                spec[u, v] += cfg.magnitude
            out[:, :, ch] = idct2_full(spec)
    return np.clip(out, 0.0, 1.0) if clamp else out


def warp_field(h: int, w: int, cfg: Warp, seed: int) -> np.ndarray:
    """Displacement field ``(2, H, W)`` in pixels (dy, dx)."""
    rng = np.random.default_rng(seed)
    ctrl = rng.uniform(-1.0, 1.0, size=(2, cfg.grid_k, cfg.grid_k))
    ctrl /= np.mean(np.abs(ctrl))
    field = np.stack(
        [ndimage.zoom(ctrl[i], (h / cfg.grid_k, w / cfg.grid_k), order=3, grid_mode=False, mode="nearest") for i in range(2)]
    )
    return cfg.strength * field


def apply_warp_trigger(x, cfg: Warp = Warp(), seed: int = 0) -> np.ndarray:
    x = as_image(x)
    if cfg.strength == 0:
        return x.copy()
    h, w, c = x.shape
    dy, dx = warp_field(h, w, cfg, seed)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    coords = [np.clip(yy + dy, 0, h - 1), np.clip(xx + dx, 0, w - 1)]
    out = np.empty_like(x)
    for ch in range(c):
        out[:, :, ch] = ndimage.map_coordinates(x[:, :, ch], coords, order=1, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def patch_slices(h: int, w: int, cfg: Patch) -> tuple[slice, slice]:
    s = cfg.size
    if s < 1 or s > h or s > w:
        raise ValueError(f"patch of size {s} does not fit a {h}x{w} image")
    vert, _, horiz = cfg.corner.partition("-")
    rows = slice(h - s, h) if vert == "bottom" else slice(0, s)
    cols = slice(w - s, w) if horiz == "right" else slice(0, s)
    return rows, cols


def apply_patch_trigger(x, cfg: Patch = Patch()) -> np.ndarray:
    x = as_image(x)
    rows, cols = patch_slices(x.shape[0], x.shape[1], cfg)
    out = x.copy()
    out[rows, cols, :] = cfg.value
    return out


def apply_trigger(x, cfg: TriggerKind, seed: int = 0) -> np.ndarray:
    if isinstance(cfg, FreqAdditive):
        return apply_freq_trigger(x, cfg)
    if isinstance(cfg, Warp):
        return apply_warp_trigger(x, cfg, seed)
    if isinstance(cfg, Patch):
        return apply_patch_trigger(x, cfg)
    raise TypeError(f"unknown trigger {cfg!r}")
