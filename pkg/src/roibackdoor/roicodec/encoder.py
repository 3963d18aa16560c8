"""Baseline JFIF encoder with encoder-side ROI bit allocation.

The ROI mask never reaches the bitstream.  Low-weight blocks are re-quantized
by storing AC levels that are multiples of ``k`` under the global table, which
any baseline decoder dequantizes with the ordinary step.  With ``rate_match``
the table quality is raised until the ROI stream spends about as many bytes as
the plain encode would, so the mask moves bits between regions instead of
just removing them.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ..imagecore import as_image, pad_to_block, rgb_to_ycbcr, round_half_away
from ..spectral import blockify, dct2_8x8
from .tables import AC_CHROMA, AC_LUMA, DC_CHROMA, DC_LUMA, ZIGZAG, huffman_codes, quant_table


@dataclass(frozen=True)
class RoiCodecConfig:
    quality: int = 75
    k_max: int = 4
    hf_zero_fraction: float = 0.5
    rate_match: bool = True

    def __post_init__(self):
        if not 1 <= self.quality <= 100:
            raise ValueError(f"quality must be in 1..100, got {self.quality}")
        if self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")
        if not 0.0 <= self.hf_zero_fraction <= 1.0:
            raise ValueError(f"hf_zero_fraction must be in [0, 1], got {self.hf_zero_fraction}")


@dataclass(frozen=True)
class JpegStream:
    """An encoded JFIF file.

    ``quality`` is the quality whose tables were written to the stream; with
    rate matching it can exceed the requested quality.
    """

    data: bytes = field(repr=False)
    quality: int
    height: int
    width: int

    @property
    def nbytes(self) -> int:
        return len(self.data)

    @property
    def nbits(self) -> int:
        return 8 * len(self.data)

    @property
    def bpp(self) -> float:
        return 8.0 * len(self.data) / (self.height * self.width)


def stream_stats(stream: JpegStream) -> dict:
    return {"bytes": stream.nbytes, "bits_per_pixel": stream.bpp}


_HUFF = {
    "dc": [huffman_codes(*DC_LUMA), huffman_codes(*DC_CHROMA)],
    "ac": [huffman_codes(*AC_LUMA), huffman_codes(*AC_CHROMA)],
}


def _component_planes(img: np.ndarray) -> list[np.ndarray]:
    """Level-shifted sample planes (values in [-128, 127]) per JPEG component."""
    if img.shape[2] == 3:
        ycc = rgb_to_ycbcr(img)
    else:
        ycc = img
    return [ycc[:, :, c] * 255.0 - 128.0 for c in range(ycc.shape[2])]


def block_weights(mask, padded_dims: tuple[int, int]) -> np.ndarray:
    """Mean of each 8x8 mask tile after edge-replicating the mask to ``padded_dims``."""
    m = np.asarray(mask, dtype=np.float64)
    ph, pw = padded_dims
    h, w = m.shape
    if (h, w) != (ph, pw):
        m = np.pad(m, ((0, ph - h), (0, pw - w)), mode="edge")
    return m.reshape(ph // 8, 8, pw // 8, 8).mean(axis=(1, 3))


def multipliers(weights: np.ndarray, k_max: int) -> np.ndarray:
    """Re-quantization multiplier per block: 1 at weight 1, ``k_max`` at weight 0."""
    return (1 + round_half_away((1.0 - weights) * (k_max - 1))).astype(np.int64)


@dataclass
class _Prepared:
    coeffs: list  # per component (by, bx, 64) DCT coefficients in zigzag order
    k: np.ndarray  # (by, bx) multipliers
    zero_hf: np.ndarray  # (by, bx) bool
    height: int
    width: int


def _prepare(img, mask, cfg: RoiCodecConfig) -> _Prepared:
    img = as_image(img)
    h, w = img.shape[:2]
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != (h, w):
            raise ValueError(f"mask shape {mask.shape} does not match image {(h, w)}")
        if not np.all(np.isfinite(mask)) or mask.min() < 0.0 or mask.max() > 1.0:
            raise ValueError("mask entries must lie in [0, 1]")
    padded, _ = pad_to_block(img)
    ph, pw = padded.shape[:2]
    coeffs = []
    for plane in _component_planes(padded):
        c = dct2_8x8(blockify(plane))
        coeffs.append(c.reshape(*c.shape[:2], 64)[..., ZIGZAG])
    if mask is None:
        weights = np.ones((ph // 8, pw // 8))
    else:
        weights = block_weights(mask, (ph, pw))
    return _Prepared(coeffs, multipliers(weights, cfg.k_max), weights == 0.0, h, w)


def quantize_levels(prep: _Prepared, quality: int, hf_zero_fraction: float) -> list[np.ndarray]:
    """Integer levels (zigzag order) per component under the tables of ``quality``."""
    tables = quant_table(quality)
    n_zero = math.ceil(hf_zero_fraction * 63)
    k = prep.k[..., None].astype(np.float64)
    out = []
    for ci, coef in enumerate(prep.coeffs):
        step = tables[min(ci, 1)].reshape(64)[ZIGZAG].astype(np.float64)
        levels = np.empty(coef.shape, dtype=np.int64)
        levels[..., 0] = round_half_away(coef[..., 0] / step[0])
        ac = k * round_half_away(coef[..., 1:] / (k * step[1:]))
        levels[..., 1:] = ac
        if n_zero:
            levels[prep.zero_hf, 64 - n_zero :] = 0
        np.clip(levels[..., 0], -1023, 1023, out=levels[..., 0])
        np.clip(levels[..., 1:], -1023, 1023, out=levels[..., 1:])
        out.append(levels)
    return out


def _entropy_code(levels: list[np.ndarray]) -> bytes:
    """Single interleaved scan, 4:4:4 (one block per component per MCU)."""
    ncomp = len(levels)
    by, bx = levels[0].shape[:2]
    per_comp = [lv.reshape(by * bx, 64).tolist() for lv in levels]
    dc_tabs = [_HUFF["dc"][min(c, 1)] for c in range(ncomp)]
    ac_tabs = [_HUFF["ac"][min(c, 1)] for c in range(ncomp)]
    pred = [0] * ncomp
    out = bytearray()
    acc = 0
    nacc = 0

    def put(code, length):
        nonlocal acc, nacc
        acc = (acc << length) | code
        nacc += length
        while nacc >= 8:
            nacc -= 8
            byte = (acc >> nacc) & 0xFF
            out.append(byte)
            if byte == 0xFF:
                out.append(0)
        acc &= (1 << nacc) - 1

    for b in range(by * bx):
        for c in range(ncomp):
            blk = per_comp[c][b]
            diff = blk[0] - pred[c]
            pred[c] = blk[0]
            size = abs(diff).bit_length()
            put(*dc_tabs[c][size])
            if size:
                put(diff if diff > 0 else diff + (1 << size) - 1, size)
            ac = ac_tabs[c]
            run = 0
            for v in blk[1:]:
                if v == 0:
                    run += 1
                    continue
                while run > 15:
                    put(*ac[0xF0])
                    run -= 16
                size = abs(v).bit_length()
                put(*ac[(run << 4) | size])
                put(v if v > 0 else v + (1 << size) - 1, size)
                run = 0
            if run:
                put(*ac[0x00])
    if nacc:
        put((1 << (8 - nacc)) - 1, 8 - nacc)
    return bytes(out)


def _segment(marker: int, payload: bytes) -> bytes:
    return struct.pack(">BBH", 0xFF, marker, len(payload) + 2) + payload


def _headers(quality: int, height: int, width: int, ncomp: int) -> bytes:
    out = bytearray(b"\xff\xd8")
    out += _segment(0xE0, b"JFIF\x00" + struct.pack(">BBBHHBB", 1, 1, 0, 1, 1, 0, 0))
    tables = quant_table(quality)
    dqt = bytearray()
    for tq in range(min(ncomp, 2)):
        dqt.append(tq)
        dqt += bytes(tables[tq].reshape(64)[ZIGZAG].astype(np.uint8).tolist())
    out += _segment(0xDB, bytes(dqt))
    sof = struct.pack(">BHHB", 8, height, width, ncomp)
    for c in range(ncomp):
        sof += struct.pack(">BBB", c + 1, 0x11, min(c, 1))
    out += _segment(0xC0, sof)
    dht = bytearray()
    specs = [(0x00, DC_LUMA), (0x10, AC_LUMA)]
    if ncomp > 1:
        specs += [(0x01, DC_CHROMA), (0x11, AC_CHROMA)]
    for tc_th, (bits, vals) in specs:
        dht.append(tc_th)
        dht += bytes(bits) + bytes(vals)
    out += _segment(0xC4, bytes(dht))
    sos = struct.pack(">B", ncomp)
    for c in range(ncomp):
        t = min(c, 1)
        sos += struct.pack(">BB", c + 1, (t << 4) | t)
    sos += struct.pack(">BBB", 0, 63, 0)
    out += _segment(0xDA, sos)
    return bytes(out)


def _assemble(prep: _Prepared, quality: int, hf_zero_fraction: float) -> bytes:
    levels = quantize_levels(prep, quality, hf_zero_fraction)
    head = _headers(quality, prep.height, prep.width, len(levels))
    return head + _entropy_code(levels) + b"\xff\xd9"


def encode(img, quality: int = 75) -> JpegStream:
    """Plain baseline encode (no ROI)."""
    cfg = RoiCodecConfig(quality=quality)
    prep = _prepare(img, None, cfg)
    return JpegStream(_assemble(prep, quality, 0.0), quality, prep.height, prep.width)


def encode_roi(img, mask, cfg: RoiCodecConfig = RoiCodecConfig()) -> JpegStream:
    """ROI-guided baseline encode; the output decodes with any baseline decoder.

    Blocks are weighted by the mean of their 8x8 mask tile.  A mask of all
    ones reproduces :func:`encode` byte for byte.
    """
    prep = _prepare(img, mask, cfg)
    noop = bool(np.all(prep.k == 1)) and not (cfg.hf_zero_fraction > 0 and prep.zero_hf.any())
    if noop or not cfg.rate_match:
        data = _assemble(prep, cfg.quality, cfg.hf_zero_fraction)
        return JpegStream(data, cfg.quality, prep.height, prep.width)

    plain = _plain_bytes(prep, cfg.quality)
    target = len(plain)
    cache: dict[int, bytes] = {cfg.quality: _assemble(prep, cfg.quality, cfg.hf_zero_fraction)}
    if cache[cfg.quality] == plain:
        # the mask alters no level (flat content): nothing to rebalance
        return JpegStream(plain, cfg.quality, prep.height, prep.width)

    def at(q):
        if q not in cache:
            cache[q] = _assemble(prep, q, cfg.hf_zero_fraction)
        return cache[q]

    # largest quality whose ROI stream still fits the plain budget
    lo, hi = cfg.quality, 100
    if len(at(lo)) > target:
        hi = lo
    else:
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if len(at(mid)) <= target:
                lo = mid
            else:
                hi = mid - 1
    best = lo
    if best < 100 and abs(len(at(best + 1)) - target) < abs(len(at(best)) - target):
        best += 1
    return JpegStream(at(best), best, prep.height, prep.width)


def _plain_bytes(prep: _Prepared, quality: int) -> bytes:
    plain = _Prepared(prep.coeffs, np.ones_like(prep.k), np.zeros_like(prep.zero_hf), prep.height, prep.width)
    return _assemble(plain, quality, 0.0)
