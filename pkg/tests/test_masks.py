import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roibackdoor import masks as mk
from roibackdoor.spectral import HighPassSpec
from roibackdoor.triggers import apply_freq_trigger

PROPERTY = settings(max_examples=1000, deadline=None, derandomize=True)

dims = st.integers(1, 48)
cells = st.integers(1, 12)
phases = st.sampled_from([0, 1])
seeds = st.integers(0, 2**32 - 1)
small = st.integers(1, 24)


def rand_image(seed, h, w, c=3):
    return np.random.default_rng(seed).random((h, w, c))


# ---- invariants over random inputs


@PROPERTY
@given(h=dims, w=dims, cx=cells, cy=cells, phase=phases, rings=st.integers(1, 8), level=st.floats(0, 1))
def test_pattern_masks_binary_in_range(h, w, cx, cy, phase, rings, level):
    for m in (mk.mask_checkerboard(h, w, cx, cy, phase), mk.mask_concentric(h, w, rings, phase)):
        assert m.shape == (h, w)
        assert set(np.unique(m)) <= {0.0, 1.0}
    u = mk.mask_uniform(h, w, level)
    assert np.all(u == level) and 0 <= u.min() <= u.max() <= 1


@PROPERTY
@given(seed=seeds, h=small, w=small, t=st.floats(0.01, 0.99))
def test_data_masks_in_range_and_reproducible(seed, h, w, t):
    x = rand_image(seed, h, w)
    xp = np.clip(x + np.random.default_rng(seed + 1).normal(0, 0.05, x.shape), 0, 1)
    r1, r2 = mk.mask_res(x, xp), mk.mask_res(x.copy(), xp.copy())
    f1, f2 = mk.mask_freq(xp, HighPassSpec(t)), mk.mask_freq(xp.copy(), HighPassSpec(t))
    for a, b in ((r1, r2), (f1, f2)):
        assert a.shape == (h, w)
        assert np.all((a >= 0) & (a <= 1))
        assert np.array_equal(a, b)


@PROPERTY
@given(h=dims, w=dims, cx=cells, cy=cells)
def test_checkerboard_phases_partition(h, w, cx, cy):
    total = mk.mask_checkerboard(h, w, cx, cy, 0) + mk.mask_checkerboard(h, w, cx, cy, 1)
    assert np.array_equal(total, np.ones((h, w)))


@PROPERTY
@given(seed=seeds, h=small, w=small, value=st.floats(0, 1))
def test_shared_degenerate_rule(seed, h, w, value):
    x = rand_image(seed, h, w)
    assert np.array_equal(mk.mask_res(x, x), np.full((h, w), 0.5))
    assert np.array_equal(mk.mask_freq(np.full((h, w, 3), value)), np.full((h, w), 0.5))


@PROPERTY
@given(seed=seeds, h=small, w=small)
def test_norm_pins_extremes(seed, h, w):
    z = np.random.default_rng(seed).normal(size=(h, w)) * 10 ** np.random.default_rng(seed).uniform(-6, 6)
    n = mk.norm(z)
    if z.max() == z.min():
        assert np.all(n == 0.5)
    else:
        assert n.min() == 0.0 and n.max() == 1.0


INVARIANTS = [
    test_pattern_masks_binary_in_range,
    test_data_masks_in_range_and_reproducible,
    test_checkerboard_phases_partition,
    test_shared_degenerate_rule,
    test_norm_pins_extremes,
]


# ---- worked examples


def test_norm_examples():
    assert np.allclose(mk.norm(np.array([0.0, 1, 2, 3])), [0, 1 / 3, 2 / 3, 1])
    assert np.all(mk.norm(np.full((3, 3), 7.0)) == 0.5)
    with pytest.raises(ValueError):
        mk.norm(np.array([0.0, np.nan]))


def test_mask_res_single_pixel():
    x = np.full((8, 8, 3), 0.4)
    xp = x.copy()
    xp[3, 7, 1] += 0.2
    m = mk.mask_res(x, xp)
    assert m[3, 7] == 1.0 and m.sum() == 1.0
    with pytest.raises(ValueError):
        mk.mask_res(x, x[:4])


def test_mask_res_tracks_freq_trigger_residual(photos):
    x = photos[0]
    xp = apply_freq_trigger(x)
    direct = np.abs(x - xp).mean(axis=2)
    m = mk.mask_res(x, xp)
    assert np.allclose(m, (direct - direct.min()) / (direct.max() - direct.min()))
    assert np.unravel_index(np.argmax(m), m.shape) == np.unravel_index(np.argmax(direct), direct.shape)


def test_mask_freq_finds_texture_patch():
    x = np.full((64, 64, 3), 0.5)
    yy, xx = np.mgrid[:16, :16]
    x[24:40, 24:40] = ((yy + xx) % 2)[:, :, None] * 1.0
    m = mk.mask_freq(x, 0.25)
    assert m[28:36, 28:36].mean() > 0.5
    assert m[:8, :8].mean() < 0.05
    assert np.allclose(mk.mask_freq(np.clip(x * 0.8 + 0.1, 0, 1), 0.25), mk.mask_freq(x * 0.8, 0.25))


def test_checkerboard_examples():
    m = mk.mask_checkerboard(64, 64, 2, 2, 0)
    assert m[0, 0] == 1 and m[0, 63] == 0 and m[63, 0] == 0 and m[63, 63] == 1
    assert np.all(m[:32, :32] == 1)
    m8 = mk.mask_checkerboard(64, 64)
    assert m8.sum() == 2048 and m8[0, 7] == 1 and m8[0, 8] == 0
    assert np.array_equal(mk.mask_checkerboard(64, 64, 8, 8, 1), 1 - m8)
    with pytest.raises(ValueError):
        mk.mask_checkerboard(8, 8, 0, 2)


def test_concentric_examples():
    assert np.all(mk.mask_concentric(20, 30, 1, 1) == 1)
    assert np.all(mk.mask_concentric(20, 30, 1, 0) == 0)
    m = mk.mask_concentric(64, 64, 4, 0)
    row = m[32]
    # Chebyshev radius from center 31.5: bands flip at radii 8, 16, 24
    assert row[0] == 0 and row[7] == 0 and row[8] == 1 and row[15] == 1 and row[16] == 0 and row[24] == 1 and row[31] == 1
    assert np.array_equal(m, m[::-1]) and np.array_equal(m, m[:, ::-1])


def test_pairing():
    assert {mk.pair_benign_mask(i, [42], 3) for i in range(50)} == {42}
    a = [mk.pair_benign_mask(i, range(10), 7) for i in range(100)]
    assert a == [mk.pair_benign_mask(i, range(10), 7) for i in range(100)]
    counts = np.bincount([mk.pair_benign_mask(i, range(10), 11) for i in range(10_000)], minlength=10) / 10_000
    assert np.all(np.abs(counts - 0.1) <= 0.02)
    with pytest.raises(ValueError):
        mk.pair_benign_mask(0, [], 0)


@pytest.mark.parametrize(
    "text,kind",
    [
        ("uniform:1", mk.Uniform(1.0)),
        ("checker:8x8", mk.Checkerboard(8, 8, 0)),
        ("checker:2x2:1", mk.Checkerboard(2, 2, 1)),
        ("concentric:4", mk.ConcentricSquares(4)),
        ("freq:0.5", mk.Frequency(0.5)),
        ("residual", mk.Residual()),
    ],
)
def test_parse_and_serialize(text, kind):
    assert mk.parse_mask_spec(text) == kind
    assert mk.mask_kind_from_dict(mk.mask_kind_to_dict(kind)) == kind


def test_bad_kinds():
    for bad in ("nope", "checker:0x2"):
        with pytest.raises(ValueError):
            mk.parse_mask_spec(bad)
    with pytest.raises(ValueError):
        mk.Uniform(2.0)
    with pytest.raises(ValueError):
        mk.Frequency(1.0)


def test_write_pgm(tmp_path):
    m = np.array([[0.0, 0.5], [1.0, 0.25]])
    mk.write_pgm(tmp_path / "m.pgm", m)
    data = (tmp_path / "m.pgm").read_bytes()
    assert data.startswith(b"P5")
    assert list(data[-4:]) == [0, 128, 255, 64]
