import io
import math

import numpy as np
import pytest
from PIL import Image

from roibackdoor.imagecore import from_uint8, psnr, read_image
from roibackdoor.masks import mask_checkerboard, mask_uniform
from roibackdoor.roicodec import (
    JpegStream,
    RoiCodecConfig,
    TruncatedStreamError,
    UnsupportedFeatureError,
    block_weights,
    decode,
    decode_levels,
    encode,
    encode_roi,
    multipliers,
    quant_table,
    stream_stats,
)
from roibackdoor.roicodec.encoder import _prepare, quantize_levels
from roibackdoor.roicodec.tables import LUMA_BASE, ZIGZAG

from .conftest import GOLDEN

FIXED = RoiCodecConfig(rate_match=False)


def texture(seed=0, shape=(64, 64, 3)):
    return np.random.default_rng(seed).random(shape)


# ---- tables


def test_quant_table_anchors():
    luma50, chroma50 = quant_table(50)
    assert np.array_equal(luma50, LUMA_BASE)
    assert np.all(quant_table(100)[0] == 1) and np.all(quant_table(100)[1] == 1)
    assert quant_table(75)[0][0, 0] == 8
    with pytest.raises(ValueError):
        quant_table(0)
    with pytest.raises(ValueError):
        quant_table(101)


def test_zigzag_is_a_permutation_with_standard_start():
    assert sorted(ZIGZAG.tolist()) == list(range(64))
    assert ZIGZAG[:6].tolist() == [0, 1, 8, 16, 9, 2]
    assert ZIGZAG[-1] == 63


# ---- config and block reduction


@pytest.mark.parametrize(
    "kw", [dict(quality=0), dict(quality=101), dict(k_max=0), dict(hf_zero_fraction=-0.1), dict(hf_zero_fraction=1.1)]
)
def test_config_ranges(kw):
    with pytest.raises(ValueError):
        RoiCodecConfig(**kw)


def test_block_weights_are_tile_means():
    m = np.random.default_rng(3).random((64, 64))
    wb = block_weights(m, (64, 64))
    assert wb.shape == (8, 8)
    assert wb[2, 5] == pytest.approx(m[16:24, 40:48].mean())


def test_multiplier_law():
    assert multipliers(np.array([1.0, 0.0, 0.5]), 4).tolist() == [1, 4, 3]
    assert multipliers(np.array([0.0]), 1).tolist() == [1]


def test_mask_validation():
    x = texture()
    with pytest.raises(ValueError):
        encode_roi(x, np.ones((32, 64)))
    with pytest.raises(ValueError):
        encode_roi(x, np.full((64, 64), 1.5))


# ---- encoder contract


def test_uniform_mask_is_byte_identical(photos):
    for q in (30, 75, 95):
        for x in photos[:3]:
            assert encode_roi(x, mask_uniform(64, 64), RoiCodecConfig(quality=q)).data == encode(x, q).data


def test_stream_structure():
    s = encode(texture(), 75)
    assert s.data[:2] == b"\xff\xd8" and s.data[-2:] == b"\xff\xd9"
    assert b"JFIF\x00\x01\x01" in s.data[:20]
    assert s.data.count(b"\xff\xdb") == 1 and s.data.count(b"\xff\xc4") == 1


def test_zero_image_any_mask():
    z = np.zeros((64, 64, 3))
    plain = encode(z, 75)
    roi = encode_roi(z, mask_checkerboard(64, 64), FIXED)
    for lv in decode_levels(roi.data)[:1]:
        assert np.all(lv[..., 1:] == 0)
    assert abs(roi.nbytes - plain.nbytes) <= 0.1 * plain.nbytes


def test_light_blocks_keep_more_ac_levels():
    x = texture(1)
    m = mask_checkerboard(64, 64)
    luma_levels = decode_levels(encode_roi(x, m, FIXED).data)[0]
    light = block_weights(m, (64, 64)) == 1
    nz = (luma_levels[..., 1:] != 0).sum(axis=-1)
    assert nz[light].mean() > nz[~light].mean()


def test_effective_step_bound():
    x = texture(2)
    m = np.random.default_rng(4).random((64, 64))
    cfg = RoiCodecConfig(quality=60, hf_zero_fraction=0.0, rate_match=False)
    prep = _prepare(x, m, cfg)
    levels = quantize_levels(prep, 60, 0.0)
    tables = quant_table(60)
    for ci, (lv, coef) in enumerate(zip(levels, prep.coeffs)):
        step = tables[min(ci, 1)].reshape(64)[ZIGZAG]
        k = np.ones(lv.shape)
        k[..., 1:] = prep.k[..., None]
        assert np.all(np.abs(lv * step - coef) <= k * step / 2 + 1e-9)


def test_hf_zeroing_only_in_zero_weight_blocks():
    x = texture(5)
    m = np.zeros((64, 64))
    m[:, :32] = 1.0
    lv = decode_levels(encode_roi(x, m, FIXED).data)[0]
    assert np.all(lv[:, 4:, 64 - 32 :] == 0)
    assert np.any(lv[:, :4, 64 - 32 :] != 0)


def test_monotone_rate_at_fixed_quality():
    rng = np.random.default_rng(6)
    x = texture(6)
    for _ in range(10):
        m = rng.random((64, 64))
        by, bx = rng.integers(8, size=2)
        before = decode_levels(encode_roi(x, m, FIXED).data)[0][by, bx, 1:]
        m2 = m.copy()
        m2[by * 8 : by * 8 + 8, bx * 8 : bx * 8 + 8] = np.minimum(1, m2[by * 8 : by * 8 + 8, bx * 8 : bx * 8 + 8] + rng.random())
        after = decode_levels(encode_roi(x, m2, FIXED).data)[0][by, bx, 1:]
        assert (after != 0).sum() >= (before != 0).sum()


def test_rate_matching_keeps_size_close(photos):
    m = mask_checkerboard(64, 64)
    for x in photos[:4]:
        plain = encode(x, 75)
        roi = encode_roi(x, m)
        assert roi.quality >= 75
        assert abs(roi.nbytes - plain.nbytes) <= 0.05 * plain.nbytes


def test_odd_sizes_and_grayscale():
    x = texture(7, (37, 53, 3))
    y = decode(encode_roi(x, np.ones((37, 53))))
    assert y.shape == x.shape
    g = texture(8, (40, 24, 1))
    assert decode(encode(g, 90)).shape == (40, 24, 1)


# ---- decoder


def test_self_decode_quality(photos):
    vals = [psnr(decode(encode_roi(x, mask_uniform(64, 64), RoiCodecConfig(quality=95))), x) for x in photos]
    assert min(vals) >= 30


def test_decoder_matches_pillow_on_our_streams(photos):
    for x in photos[:3]:
        data = encode(x, 85).data
        ours = decode(data)
        theirs = from_uint8(np.asarray(Image.open(io.BytesIO(data)).convert("RGB")))
        assert np.abs(ours - theirs).max() <= 3 / 255


def test_decoder_reads_pillow_streams(photos):
    x = photos[0]
    buf = io.BytesIO()
    Image.fromarray((x * 255).round().astype(np.uint8)).save(buf, "JPEG", quality=90, subsampling=0)
    ref = from_uint8(np.asarray(Image.open(io.BytesIO(buf.getvalue())).convert("RGB")))
    assert psnr(decode(buf.getvalue()), ref) > 45
    buf = io.BytesIO()
    Image.fromarray((x * 255).round().astype(np.uint8)).save(buf, "JPEG", quality=90, subsampling=2)
    assert psnr(decode(buf.getvalue()), ref) > 30


def test_truncated_and_unsupported():
    data = encode(texture(), 75).data
    with pytest.raises(TruncatedStreamError):
        decode(data[:-2])
    with pytest.raises(TruncatedStreamError):
        decode(data[: len(data) // 2])
    buf = io.BytesIO()
    Image.fromarray(np.zeros((16, 16, 3), np.uint8)).save(buf, "JPEG", progressive=True)
    with pytest.raises(UnsupportedFeatureError):
        decode(buf.getvalue())


def test_decode_is_deterministic_and_mask_free():
    s = encode_roi(texture(9), mask_checkerboard(64, 64))
    assert np.array_equal(decode(s), decode(bytes(s.data)))


# ---- stats


def test_stream_stats_arithmetic():
    s = JpegStream(b"\x00" * 981, 75, 64, 64)
    assert stream_stats(s)["bits_per_pixel"] == pytest.approx(1.916, abs=1e-3)
    flat = encode(np.zeros((64, 64, 3)), 75)
    assert stream_stats(flat)["bits_per_pixel"] == pytest.approx(8 * flat.nbytes / 4096)
    x = texture(10)
    assert encode_roi(x, np.ones((64, 64))).bpp == encode(x, 75).bpp


# ---- golden fixtures


@pytest.mark.parametrize("i", range(3))
@pytest.mark.parametrize("q", [50, 75, 90])
def test_golden_bytes(i, q):
    x = read_image(GOLDEN / f"img{i}.png")
    assert encode(x, q).data == (GOLDEN / f"img{i}_q{q}.jpg").read_bytes()


def test_golden_fixtures_decode_with_pillow():
    for q in (50, 75, 90):
        data = (GOLDEN / f"img0_q{q}.jpg").read_bytes()
        img = Image.open(io.BytesIO(data))
        assert img.size == (64, 64) and img.mode == "RGB"
        assert math.isfinite(psnr(from_uint8(np.asarray(img)), decode(data)))
