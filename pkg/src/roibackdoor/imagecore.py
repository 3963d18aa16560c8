"""Image representation, color transforms, padding and pixel-domain metrics.

Images are plain numpy arrays of shape ``(H, W, C)`` with ``float64`` samples
in ``[0, 1]`` and ``C`` equal to 1 or 3.  Two-dimensional ``(H, W)`` arrays are
accepted wherever a single-channel image is expected.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import convolve1d

# Full-range BT.601 as used by JFIF.
_RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ]
)
_YCC_TO_RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136286, -0.714136286],
        [1.0, 1.772, 0.0],
    ]
)


def as_image(img) -> np.ndarray:
    """Return ``img`` as a float64 ``(H, W, C)`` array without copying when possible."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W), (H, W, 1) or (H, W, 3) image, got shape {arr.shape}")
    return arr


def round_half_away(x):
    """Round to nearest integer, ties away from zero (the rounding rule used everywhere)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_uint8(img) -> np.ndarray:
    return np.clip(round_half_away(as_image(img) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(arr) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise TypeError(f"expected uint8 array, got {arr.dtype}")
    return as_image(arr.astype(np.float64) / 255.0)


def quantize8(img) -> np.ndarray:
    """Snap an image onto the 8-bit grid, staying in float form."""
    return from_uint8(to_uint8(img))


def rgb_to_ycbcr(img) -> np.ndarray:
    img = as_image(img)
    if img.shape[2] != 3:
        raise ValueError(f"rgb_to_ycbcr needs 3 channels, got {img.shape[2]}")
    ycc = img @ _RGB_TO_YCC.T
    ycc[..., 1:] += 0.5
    return np.clip(ycc, 0.0, 1.0)


def ycbcr_to_rgb(img) -> np.ndarray:
    img = as_image(img)
    if img.shape[2] != 3:
        raise ValueError(f"ycbcr_to_rgb needs 3 channels, got {img.shape[2]}")
    centered = img.copy()
    centered[..., 1:] -= 0.5
    return np.clip(centered @ _YCC_TO_RGB.T, 0.0, 1.0)


def luma(img) -> np.ndarray:
    """Y plane (H, W) of an RGB or grayscale image."""
    img = as_image(img)
    if img.shape[2] == 1:
        return img[:, :, 0]
    return img @ _RGB_TO_YCC[0]


def pad_to_block(img, block: int = 8) -> tuple[np.ndarray, tuple[int, int]]:
    """Edge-replicate ``img`` up to the next multiple of ``block`` in both dimensions.

    Returns the padded image and the original ``(height, width)`` so callers can
    crop after decoding.
    """
    img = as_image(img)
    h, w = img.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("image must be at least 1x1")
    ph = -h % block
    pw = -w % block
    if ph == 0 and pw == 0:
        return img, (h, w)
    return np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="edge"), (h, w)


def crop(img, dims: tuple[int, int]) -> np.ndarray:
    h, w = dims
    return as_image(img)[:h, :w]


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images; ``inf`` when identical."""
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _ssim_plane(x: np.ndarray, y: np.ndarray, k1: float, k2: float) -> float:
    g = _gaussian_window()

    def blur(p):
        # separable 'valid' filtering
        p = convolve1d(p, g, axis=0, mode="constant")[5:-5]
        return convolve1d(p, g, axis=1, mode="constant")[:, 5:-5]

    c1 = k1**2
    c2 = k2**2
    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(a, b, channels: str = "luma", k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), dynamic range 1.

    ``channels="luma"`` compares the Y planes; ``channels="mean"`` averages the
    per-channel scores.
    """
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape[:2]) < 11:
        raise ValueError("image smaller than the 11x11 SSIM window")
    if channels == "luma":
        return _ssim_plane(luma(a), luma(b), k1, k2)
    if channels == "mean":
        return float(np.mean([_ssim_plane(a[..., c], b[..., c], k1, k2) for c in range(a.shape[2])]))
    raise ValueError(f"unknown channels mode {channels!r}")


def resize_bilinear(img, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resample to ``(height, width)`` with half-pixel centers."""
    img = as_image(img)
    h, w = img.shape[:2]
    oh, ow = size
    if (oh, ow) == (h, w):
        return img.copy()

    def coords(n_out, n_in):
        c = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        c = np.clip(c, 0, n_in - 1)
        i0 = np.floor(c).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, c - i0

    y0, y1, fy = coords(oh, h)
    x0, x1, fx = coords(ow, w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Read a PNG/PPM/PGM (anything Pillow reads) into unit-range float form."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return from_uint8(np.asarray(im))


def write_image(path: str | os.PathLike, img) -> None:
    """Write PNG, or binary PPM/PGM when the suffix is ``.ppm``/``.pgm``."""
    arr = to_uint8(img)
    suffix = Path(path).suffix.lower()
    if suffix in (".ppm", ".pgm"):
        write_pnm(path, arr)
        return
    Image.fromarray(arr[:, :, 0] if arr.shape[2] == 1 else arr).save(path)


def write_pnm(path: str | os.PathLike, arr: np.ndarray) -> None:
    """Binary P6 (3 channels) or P5 (1 channel) with maxval 255."""
    arr = np.asarray(arr, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    magic = {1: b"P5", 3: b"P6"}[c]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(arr.tobytes())
