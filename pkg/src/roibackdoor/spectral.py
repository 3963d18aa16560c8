"""Spectral transforms: 8x8 orthonormal DCT, radix-2 FFT and radial truncation.

Spectra produced by :func:`fft2` use the centered layout (DC at index
``(H // 2, W // 2)``) and carry a trailing channel axis, like images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .imagecore import as_image


def dct_matrix(n: int = 8) -> np.ndarray:
    """Orthonormal DCT-II matrix ``C`` so that ``C @ x`` transforms a length-n vector."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    c[0] /= np.sqrt(2.0)
    return c


DCT8 = dct_matrix(8)


def dct2_8x8(blocks) -> np.ndarray:
    """2-D orthonormal DCT-II of one block ``(8, 8)`` or a stack ``(..., 8, 8)``."""
    b = np.asarray(blocks, dtype=np.float64)
    if b.shape[-2:] != (8, 8):
        raise ValueError(f"expected trailing (8, 8) block axes, got {b.shape}")
    return DCT8 @ b @ DCT8.T


def idct2_8x8(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=np.float64)
    if c.shape[-2:] != (8, 8):
        raise ValueError(f"expected trailing (8, 8) block axes, got {c.shape}")
    return DCT8.T @ c @ DCT8


def blockify(plane: np.ndarray) -> np.ndarray:
    """``(H, W)`` plane with H, W multiples of 8 -> ``(H/8, W/8, 8, 8)`` block view copy."""
    h, w = plane.shape
    if h % 8 or w % 8:
        raise ValueError(f"plane dims {plane.shape} are not multiples of 8")
    return plane.reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2).copy()


def unblockify(blocks: np.ndarray) -> np.ndarray:
    by, bx = blocks.shape[:2]
    return blocks.swapaxes(1, 2).reshape(by * 8, bx * 8)


def dct2_full(plane) -> np.ndarray:
    """Orthonormal 2-D DCT-II over a whole plane."""
    return sfft.dctn(np.asarray(plane, dtype=np.float64), type=2, norm="ortho")


def idct2_full(coeffs) -> np.ndarray:
    return sfft.idctn(np.asarray(coeffs, dtype=np.float64), type=2, norm="ortho")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _fft_last_axis(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis (unnormalized)."""
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ValueError(f"FFT length {n} is not a power of two")
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=int)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    a = x[..., rev].astype(np.complex128)
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        a = a.reshape(*a.shape[:-1], n // size, size)
        even = a[..., :half]
        odd = a[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1)
        a = a.reshape(*a.shape[:-2], n)
        size *= 2
    return a


def _fft2_planes(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    # x: (C, H, W)
    y = _fft_last_axis(x, inverse)
    y = _fft_last_axis(y.swapaxes(-1, -2), inverse).swapaxes(-1, -2)
    return y


def fft2(img) -> np.ndarray:
    """Per-channel 2-D DFT in centered layout, shape ``(H, W, C)`` complex.

    Both dimensions must be powers of two; zero-pad beforehand otherwise.
    """
    img = as_image(img)
    h, w = img.shape[:2]
    if not (_is_pow2(h) and _is_pow2(w)):
        raise ValueError(f"fft2 needs power-of-two dims, got {h}x{w}")
    planes = np.moveaxis(img, -1, 0)
    spec = _fft2_planes(planes)
    spec = np.fft.fftshift(spec, axes=(-2, -1))
    return np.moveaxis(spec, 0, -1)


def ifft2(spec) -> np.ndarray:
    """Real part of the inverse of :func:`fft2`. No clamping."""
    spec = np.asarray(spec, dtype=np.complex128)
    if spec.ndim == 2:
        spec = spec[:, :, None]
    h, w = spec.shape[:2]
    planes = np.fft.ifftshift(np.moveaxis(spec, -1, 0), axes=(-2, -1))
    out = _fft2_planes(planes, inverse=True) / (h * w)
    return np.moveaxis(out.real, 0, -1)


@dataclass(frozen=True)
class HighPassSpec:
    """Radial cutoff ``t`` as a fraction of the corner radius of the centered spectrum."""

    t: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.t < 1.0:
            raise ValueError(f"cutoff t must lie in (0, 1), got {self.t}")


def normalized_radius(h: int, w: int) -> np.ndarray:
    """Distance of each centered-layout bin from DC, divided by the corner distance."""
    yy = np.arange(h)[:, None] - h // 2
    xx = np.arange(w)[None, :] - w // 2
    rmax = np.hypot(h / 2.0, w / 2.0)
    return np.hypot(yy, xx) / rmax


def _as_spec(t) -> HighPassSpec:
    return t if isinstance(t, HighPassSpec) else HighPassSpec(float(t))


def high_pass(spec, t=HighPassSpec()) -> np.ndarray:
    """Zero every coefficient whose normalized radius is ``<= t``."""
    t = _as_spec(t)
    spec = np.asarray(spec, dtype=np.complex128)
    keep = normalized_radius(*spec.shape[:2]) > t.t
    return spec * keep[:, :, None] if spec.ndim == 3 else spec * keep


def low_pass(spec, t=HighPassSpec()) -> np.ndarray:
    """Complement of :func:`high_pass`: zero coefficients with normalized radius ``> t``."""
    t = _as_spec(t)
    spec = np.asarray(spec, dtype=np.complex128)
    keep = normalized_radius(*spec.shape[:2]) <= t.t
    return spec * keep[:, :, None] if spec.ndim == 3 else spec * keep


def naive_dft2(plane) -> np.ndarray:
    """O(N^2)-per-axis DFT of a 2-D plane by explicit matrix products (uncentered)."""
    x = np.asarray(plane, dtype=np.complex128)
    h, w = x.shape

    def mat(n):
        k = np.arange(n)
        return np.exp(-2j * np.pi * np.outer(k, k) / n)

    return mat(h) @ x @ mat(w).T


def zero_pad_pow2(img) -> np.ndarray:
    """Zero-pad bottom/right up to the next power of two in each dimension."""
    img = as_image(img)
    h, w = img.shape[:2]
    th = 1 << max(0, (h - 1).bit_length())
    tw = 1 << max(0, (w - 1).bit_length())
    return np.pad(img, ((0, th - h), (0, tw - w), (0, 0)))
