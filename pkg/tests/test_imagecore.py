import math

import numpy as np
import pytest

from roibackdoor.imagecore import (
    crop,
    from_uint8,
    pad_to_block,
    psnr,
    read_image,
    resize_bilinear,
    rgb_to_ycbcr,
    round_half_away,
    ssim,
    to_uint8,
    write_image,
    ycbcr_to_rgb,
)


def test_black_and_white_map_to_neutral_chroma():
    black = np.zeros((1, 1, 3))
    white = np.ones((1, 1, 3))
    assert np.allclose(rgb_to_ycbcr(black)[0, 0], [0, 0.5, 0.5])
    assert np.allclose(rgb_to_ycbcr(white)[0, 0], [1, 0.5, 0.5])
    assert np.allclose(ycbcr_to_rgb(np.array([[[0, 0.5, 0.5]]])), 0)
    assert np.allclose(ycbcr_to_rgb(np.array([[[1, 0.5, 0.5]]])), 1)


def test_color_roundtrip_exhaustive():
    # every 8-bit RGB triple, in slabs to bound memory
    worst = 0
    for r in range(0, 256, 32):
        g, b, rr = np.meshgrid(np.arange(256), np.arange(256), np.arange(r, r + 32), indexing="ij")
        rgb = np.stack([rr, g, b], axis=-1).reshape(-1, 1, 3).astype(np.uint8)
        back = to_uint8(ycbcr_to_rgb(rgb_to_ycbcr(from_uint8(rgb))))
        worst = max(worst, int(np.abs(back.astype(int) - rgb.astype(int)).max()))
    assert worst <= 2


def test_ycbcr_needs_three_channels():
    with pytest.raises(ValueError):
        rgb_to_ycbcr(np.zeros((4, 4, 1)))


def test_round_half_away_from_zero():
    assert np.array_equal(round_half_away(np.array([0.5, 1.5, 2.5, -0.5, -2.5])), [1, 2, 3, -1, -3])


def test_pad_to_block():
    x = np.random.default_rng(0).random((63, 65, 3))
    p, dims = pad_to_block(x)
    assert p.shape == (64, 72, 3) and dims == (63, 65)
    assert np.array_equal(p[:, 65:], np.repeat(p[:, 64:65], 7, axis=1))
    assert np.array_equal(crop(p, dims), x)
    aligned = np.zeros((64, 64, 3))
    assert np.array_equal(pad_to_block(aligned)[0], aligned)
    assert np.array_equal(pad_to_block(pad_to_block(x)[0])[0], pad_to_block(x)[0])


def test_psnr_closed_forms():
    a = np.zeros((8, 8, 3))
    assert psnr(a, a) == math.inf
    assert psnr(a, np.ones_like(a)) == pytest.approx(0.0)
    assert psnr(a, a + 1 / 255) == pytest.approx(20 * math.log10(255))
    with pytest.raises(ValueError):
        psnr(a, np.zeros((8, 9, 3)))


def test_psnr_symmetric(rng):
    a, b = rng.random((2, 16, 16, 3))
    assert psnr(a, b) == psnr(b, a)


def test_ssim_properties(rng):
    a = rng.random((32, 32, 3))
    b = rng.random((32, 32, 3))
    assert ssim(a, a) == pytest.approx(1.0)
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-12
    c = np.full((16, 16, 3), 0.3)
    assert ssim(c, c.copy()) == pytest.approx(1.0)
    assert ssim(a, 1 - a) < 0
    assert -1 <= ssim(a, b, channels="mean") <= 1
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 20, 3)), np.zeros((10, 20, 3)))


def test_resize_identity_and_constant():
    x = np.random.default_rng(1).random((32, 32, 3))
    assert np.array_equal(resize_bilinear(x, (32, 32)), x)
    c = np.full((32, 32, 3), 0.25)
    assert np.allclose(resize_bilinear(c, (64, 64)), 0.25)


@pytest.mark.parametrize("suffix", [".png", ".ppm"])
def test_image_io_roundtrip(tmp_path, suffix):
    x = from_uint8(np.random.default_rng(2).integers(0, 256, (9, 11, 3), dtype=np.uint8))
    write_image(tmp_path / f"a{suffix}", x)
    assert np.array_equal(read_image(tmp_path / f"a{suffix}"), x)
