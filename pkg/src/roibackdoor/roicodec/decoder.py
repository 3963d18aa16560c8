"""Stock baseline JPEG decoder.

Knows nothing about ROI masks: it reads the bytes, dequantizes with the
tables in the stream and reconstructs 8-bit samples.  Handles baseline and
extended-sequential Huffman frames with 8-bit precision, interleaved and
non-interleaved scans, arbitrary sampling factors and restart intervals.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ..imagecore import from_uint8, round_half_away
from ..spectral import idct2_8x8, unblockify
from .tables import ZIGZAG


class JpegError(ValueError):
    pass


class TruncatedStreamError(JpegError):
    pass


class UnsupportedFeatureError(JpegError):
    pass


_BYTE_BITS = [format(b, "08b") for b in range(256)]

_UNSUPPORTED_SOF = {
    0xC2: "progressive DCT",
    0xC3: "lossless",
    0xC5: "differential sequential",
    0xC6: "differential progressive",
    0xC7: "differential lossless",
    0xC9: "arithmetic coding",
    0xCA: "arithmetic coding",
    0xCB: "arithmetic coding",
    0xCD: "arithmetic coding",
    0xCE: "arithmetic coding",
    0xCF: "arithmetic coding",
}


@dataclass
class _Component:
    cid: int
    h: int
    v: int
    tq: int
    blocks_y: int = 0
    blocks_x: int = 0
    coeffs: np.ndarray | None = None  # (by, bx, 64) zigzag levels


@dataclass
class _Frame:
    height: int
    width: int
    comps: list
    hmax: int = 1
    vmax: int = 1
    mcux: int = 0
    mcuy: int = 0
    by_id: dict = field(default_factory=dict)


class _Bits:
    def __init__(self, segment: bytes):
        self.bits = "".join(_BYTE_BITS[b] for b in segment)
        self.pos = 0

    def take(self, n: int) -> int:
        if n == 0:
            return 0
        end = self.pos + n
        if end > len(self.bits):
            raise TruncatedStreamError("entropy-coded data ended early")
        v = int(self.bits[self.pos : end], 2)
        self.pos = end
        return v

    def symbol(self, table: dict) -> int:
        bits = self.bits
        pos = self.pos
        for length in range(1, 17):
            sym = table.get(bits[pos : pos + length])
            if sym is not None:
                if pos + length > len(bits):
                    break
                self.pos = pos + length
                return sym
        if pos + 16 > len(bits):
            raise TruncatedStreamError("entropy-coded data ended early")
        raise JpegError("invalid Huffman code")


def _extend(v: int, size: int) -> int:
    return v - (1 << size) + 1 if v < (1 << (size - 1)) else v


def _huffman_lookup(bits, vals) -> dict:
    table = {}
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            table[format(code, f"0{length}b")] = vals[k]
            code += 1
            k += 1
        code <<= 1
    return table


class _Parser:
    def __init__(self, data: bytes):
        self.data = bytes(data)
        self.pos = 0
        self.qt: dict[int, np.ndarray] = {}
        self.dc: dict[int, dict] = {}
        self.ac: dict[int, dict] = {}
        self.frame: _Frame | None = None
        self.restart = 0

    def u8(self) -> int:
        if self.pos >= len(self.data):
            raise TruncatedStreamError("stream ended inside a header")
        v = self.data[self.pos]
        self.pos += 1
        return v

    def u16(self) -> int:
        return (self.u8() << 8) | self.u8()

    def segment(self) -> bytes:
        length = self.u16()
        end = self.pos + length - 2
        if length < 2 or end > len(self.data):
            raise TruncatedStreamError("marker segment runs past end of stream")
        payload = self.data[self.pos : end]
        self.pos = end
        return payload

    def next_marker(self) -> int:
        if self.u8() != 0xFF:
            raise JpegError(f"expected marker at offset {self.pos - 1}")
        m = self.u8()
        while m == 0xFF:
            m = self.u8()
        return m

    def run(self) -> _Frame:
        if self.data[:2] != b"\xff\xd8":
            raise JpegError("missing SOI marker")
        self.pos = 2
        while True:
            if self.pos >= len(self.data):
                raise TruncatedStreamError("stream ended before EOI")
            m = self.next_marker()
            if m == 0xD9:
                break
            if m in _UNSUPPORTED_SOF:
                raise UnsupportedFeatureError(f"unsupported frame type: {_UNSUPPORTED_SOF[m]}")
            if m == 0xCC:
                raise UnsupportedFeatureError("unsupported: arithmetic conditioning (DAC)")
            if m == 0xDC:
                raise UnsupportedFeatureError("unsupported: DNL marker")
            if m in (0xC0, 0xC1):
                self.sof(self.segment())
            elif m == 0xDB:
                self.dqt(self.segment())
            elif m == 0xC4:
                self.dht(self.segment())
            elif m == 0xDD:
                self.restart = struct.unpack(">H", self.segment())[0]
            elif m == 0xDA:
                self.sos(self.segment())
            elif 0xD0 <= m <= 0xD7:
                raise JpegError("restart marker outside entropy-coded data")
            else:
                self.segment()  # APPn, COM and friends
        if self.frame is None:
            raise JpegError("no frame header")
        if any(c.coeffs is None for c in self.frame.comps):
            raise JpegError("component never appeared in a scan")
        return self.frame

    def dqt(self, p: bytes):
        i = 0
        while i < len(p):
            pq, tq = p[i] >> 4, p[i] & 15
            if pq != 0:
                raise UnsupportedFeatureError("unsupported: 16-bit quantization table")
            if i + 65 > len(p):
                raise TruncatedStreamError("short DQT segment")
            zz = np.frombuffer(p[i + 1 : i + 65], dtype=np.uint8).astype(np.int64)
            table = np.empty(64, dtype=np.int64)
            table[ZIGZAG] = zz
            self.qt[tq] = table.reshape(8, 8)
            i += 65

    def dht(self, p: bytes):
        i = 0
        while i < len(p):
            tc, th = p[i] >> 4, p[i] & 15
            bits = list(p[i + 1 : i + 17])
            n = sum(bits)
            vals = list(p[i + 17 : i + 17 + n])
            if len(bits) < 16 or len(vals) < n:
                raise TruncatedStreamError("short DHT segment")
            (self.ac if tc else self.dc)[th] = _huffman_lookup(bits, vals)
            i += 17 + n

    def sof(self, p: bytes):
        precision, height, width, nc = struct.unpack(">BHHB", p[:6])
        if precision != 8:
            raise UnsupportedFeatureError(f"unsupported: {precision}-bit sample precision")
        if height == 0:
            raise UnsupportedFeatureError("unsupported: height defined by DNL")
        comps = []
        for k in range(nc):
            cid, hv, tq = p[6 + 3 * k : 9 + 3 * k]
            comps.append(_Component(cid, hv >> 4, hv & 15, tq))
        f = _Frame(height, width, comps)
        f.hmax = max(c.h for c in comps)
        f.vmax = max(c.v for c in comps)
        f.mcux = -(-width // (8 * f.hmax))
        f.mcuy = -(-height // (8 * f.vmax))
        for c in comps:
            c.blocks_x = f.mcux * c.h
            c.blocks_y = f.mcuy * c.v
            f.by_id[c.cid] = c
        self.frame = f

    def _entropy_segments(self) -> list[bytes]:
        """Unstuffed entropy-coded segments split at RST markers."""
        data = self.data
        segs = []
        cur = bytearray()
        i = self.pos
        n = len(data)
        while True:
            j = data.find(b"\xff", i)
            if j < 0 or j + 1 >= n:
                raise TruncatedStreamError("entropy-coded data not terminated by a marker")
            cur += data[i:j]
            nxt = data[j + 1]
            if nxt == 0x00:
                cur.append(0xFF)
                i = j + 2
            elif 0xD0 <= nxt <= 0xD7:
                segs.append(bytes(cur))
                cur = bytearray()
                i = j + 2
            elif nxt == 0xFF:
                i = j + 1
            else:
                segs.append(bytes(cur))
                self.pos = j
                return segs

    def sos(self, p: bytes):
        f = self.frame
        if f is None:
            raise JpegError("SOS before SOF")
        ns = p[0]
        scomps = []
        for k in range(ns):
            cid, t = p[1 + 2 * k], p[2 + 2 * k]
            if cid not in f.by_id:
                raise JpegError(f"scan references unknown component {cid}")
            scomps.append((f.by_id[cid], t >> 4, t & 15))
        ss, se, a = p[1 + 2 * ns], p[2 + 2 * ns], p[3 + 2 * ns]
        if (ss, se, a) != (0, 63, 0):
            raise UnsupportedFeatureError("unsupported: spectral selection / successive approximation")
        for c, td, ta in scomps:
            if td not in self.dc or ta not in self.ac:
                raise JpegError("scan references an undefined Huffman table")
            if c.coeffs is None:
                c.coeffs = np.zeros((c.blocks_y, c.blocks_x, 64), dtype=np.int64)
        segs = self._entropy_segments()

        if ns == 1:
            # non-interleaved: the component's own block grid, not padded to whole MCUs
            c, td, ta = scomps[0]
            bw = math.ceil(math.ceil(f.width * c.h / f.hmax) / 8)
            bh = math.ceil(math.ceil(f.height * c.v / f.vmax) / 8)
            units = [[(c, td, ta, y, x)] for y in range(bh) for x in range(bw)]
        else:
            units = []
            for my in range(f.mcuy):
                for mx in range(f.mcux):
                    mcu = []
                    for c, td, ta in scomps:
                        for v in range(c.v):
                            for h in range(c.h):
                                mcu.append((c, td, ta, my * c.v + v, mx * c.h + h))
                    units.append(mcu)

        interval = self.restart or len(units)
        seg_i = 0
        reader = None
        pred = {}
        for u, mcu in enumerate(units):
            if u % interval == 0:
                if seg_i >= len(segs):
                    raise TruncatedStreamError("missing restart segment")
                reader = _Bits(segs[seg_i])
                seg_i += 1
                pred = {id(c): 0 for c, _, _ in scomps}
            for c, td, ta, y, x in mcu:
                blk = c.coeffs[y, x]
                s = reader.symbol(self.dc[td])
                diff = _extend(reader.take(s), s) if s else 0
                pred[id(c)] += diff
                blk[0] = pred[id(c)]
                act = self.ac[ta]
                k = 1
                while k < 64:
                    rs = reader.symbol(act)
                    r, s = rs >> 4, rs & 15
                    if s == 0:
                        if r == 15:
                            k += 16
                            continue
                        break
                    k += r
                    if k > 63:
                        raise JpegError("AC run exceeds block")
                    blk[k] = _extend(reader.take(s), s)
                    k += 1


def decode_levels(data: bytes) -> list[np.ndarray]:
    """Entropy-decoded quantized levels per component, shape ``(by, bx, 64)`` in zigzag order."""
    frame = _Parser(_as_bytes(data)).run()
    return [c.coeffs for c in frame.comps]


def _as_bytes(stream) -> bytes:
    return stream.data if hasattr(stream, "data") else bytes(stream)


def decode(stream) -> np.ndarray:
    """Decode a baseline JPEG (bytes or :class:`JpegStream`) to a unit-range float image.

    Only the bytes are consulted.  Output samples lie on the 8-bit grid.
    """
    parser = _Parser(_as_bytes(stream))
    f = parser.run()
    planes = []
    for c in f.comps:
        if c.tq not in parser.qt:
            raise JpegError(f"quantization table {c.tq} undefined")
        q = parser.qt[c.tq].reshape(64)
        coef = np.empty(c.coeffs.shape, dtype=np.float64)
        coef[..., ZIGZAG] = c.coeffs * q[ZIGZAG]
        spatial = idct2_8x8(coef.reshape(*coef.shape[:2], 8, 8))
        plane = np.clip(round_half_away(unblockify(spatial) + 128.0), 0, 255)
        sy, sx = f.vmax // c.v, f.hmax // c.h
        if sy > 1 or sx > 1:
            plane = np.repeat(np.repeat(plane, sy, axis=0), sx, axis=1)
        planes.append(plane[: f.height, : f.width])
    if len(planes) == 3:
        y, cb, cr = planes
        cb = cb - 128.0
        cr = cr - 128.0
        rgb = np.stack([y + 1.402 * cr, y - 0.344136286 * cb - 0.714136286 * cr, y + 1.772 * cb], axis=-1)
    elif len(planes) == 1:
        rgb = planes[0][:, :, None]
    else:
        raise UnsupportedFeatureError(f"unsupported: {len(planes)}-component image")
    return from_uint8(np.clip(round_half_away(rgb), 0, 255).astype(np.uint8))
