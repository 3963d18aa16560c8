"""Desk-scale photographic corpus built from images bundled with scikit-image.

Each sample is a seeded random square crop of one bundled photograph.  The
crop is downscaled with an antialiasing filter to a random native resolution
between 40 and 96 pixels, then resampled bilinearly to the working size, the
same path :func:`roibackdoor.pipeline.load_dataset` applies to small datasets.
The label of a sample is the index of its source photograph.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from PIL import Image

from .imagecore import from_uint8, quantize8, resize_bilinear

PHOTO_NAMES = (
    "astronaut",
    "coffee",
    "chelsea",
    "rocket",
    "immunohistochemistry",
    "hubble_deep_field",
    "retina",
)

NATIVE_RANGE = (40, 96)


@lru_cache(maxsize=None)
def _photo(name: str) -> np.ndarray:
    import skimage.data

    arr = getattr(skimage.data, name)()
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    return np.ascontiguousarray(arr[..., :3])


def photo_sources() -> list[np.ndarray]:
    return [_photo(n) for n in PHOTO_NAMES]


def random_crop(rng: np.random.Generator, size: int = 64, min_side: int = 96, max_side: int = 256) -> tuple[np.ndarray, int]:
    """One sample and its source index."""
    sources = photo_sources()
    label = int(rng.integers(len(sources)))
    src = sources[label]
    h, w = src.shape[:2]
    side = int(rng.integers(min_side, min(max_side, h, w) + 1))
    y = int(rng.integers(0, h - side + 1))
    x = int(rng.integers(0, w - side + 1))
    patch = src[y : y + side, x : x + side]
    if rng.random() < 0.5:
        patch = patch[:, ::-1]
    native = int(rng.integers(NATIVE_RANGE[0], NATIVE_RANGE[1] + 1))
    small = Image.fromarray(np.ascontiguousarray(patch)).resize((native, native), Image.LANCZOS)
    img = from_uint8(np.asarray(small))
    if native != size:
        img = quantize8(resize_bilinear(img, (size, size)))
    return img, label


def desk_dataset(n: int, seed: int = 0, size: int = 64):
    """Labeled corpus (images ``(n, size, size, 3)``, labels) reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    pairs = [random_crop(rng, size) for _ in range(n)]
    return np.stack([p[0] for p in pairs]), np.array([p[1] for p in pairs], dtype=np.int64)


def desk_corpus(n: int, seed: int = 0, size: int = 64) -> list[np.ndarray]:
    """``n`` photographic ``size`` x ``size`` RGB images."""
    return list(desk_dataset(n, seed, size)[0])


def fixture_images(n: int = 10, size: int = 64) -> list[np.ndarray]:
    """Fixed photographic fixtures (seed 1234)."""
    return desk_corpus(n, seed=1234, size=size)
