import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pansharp.errors import (BadMagic, DegenerateBand, FactorTooSmall, IoFailure, NotDivisible,
                             TruncatedPayload, UnrepresentableSample, UnsupportedVersion)
from pansharp.raster import (MultiBandImage, ResampleFilter, band_stats, decode_msrf, denormalize,
                             downsample, encode_msrf, histogram_match, load_msrf, normalize,
                             save_msrf, upsample)
from tests.conftest import img


# container ------------------------------------------------------------------

def test_image_dims_and_immutability():
    im = MultiBandImage(np.zeros((4, 3, 5)))
    assert (im.bands, im.height, im.width) == (4, 3, 5)
    with pytest.raises(ValueError):
        im.data[0, 0, 0] = 1.0


def test_image_rejects_non_finite():
    with pytest.raises(ValueError):
        MultiBandImage(np.array([[[np.nan]]]))


# MSRF ------------------------------------------------------------------------

@pytest.mark.parametrize("dtype", ["u8", "u16", "f32"])
def test_msrf_round_trip_0_to_15(tmp_path, dtype):
    im = MultiBandImage(np.arange(16.0).reshape(4, 2, 2), dtype=dtype)
    save_msrf(im, tmp_path / "a.msrf")
    back = load_msrf(tmp_path / "a.msrf")
    assert back.dtype == dtype
    assert np.array_equal(back.data, im.data)


def test_msrf_header_layout():
    im = MultiBandImage(np.zeros((1, 1, 1)))
    buf = encode_msrf(im)
    assert len(buf) == 20 + 4
    assert struct.unpack("<4sBBHIII", buf[:20]) == (b"MSRF", 1, 2, 0, 1, 1, 1)


def test_msrf_band_sequential_row_major():
    data = np.arange(2 * 2 * 3, dtype=np.float64).reshape(2, 2, 3)
    buf = encode_msrf(MultiBandImage(data, dtype="u8"))
    assert list(buf[20:]) == list(range(12))


def test_msrf_256_square_float32_payload():
    buf = encode_msrf(MultiBandImage(np.zeros((1, 256, 256))))
    assert len(buf) - 20 == 262_144
    im = decode_msrf(buf)
    assert (im.width, im.height, im.bands) == (256, 256, 1)


def test_msrf_bad_magic():
    buf = bytearray(encode_msrf(MultiBandImage(np.zeros((1, 2, 2)))))
    buf[:4] = b"XXXX"
    with pytest.raises(BadMagic) as exc:
        decode_msrf(bytes(buf))
    assert exc.value.offset == 0


def test_msrf_unsupported_version():
    buf = bytearray(encode_msrf(MultiBandImage(np.zeros((1, 2, 2)))))
    buf[4] = 9
    with pytest.raises(UnsupportedVersion) as exc:
        decode_msrf(bytes(buf))
    assert exc.value.offset == 4


def test_msrf_truncated_and_trailing():
    buf = encode_msrf(MultiBandImage(np.zeros((1, 2, 2))))
    with pytest.raises(TruncatedPayload) as exc:
        decode_msrf(buf[:-1])
    assert exc.value.offset == len(buf) - 1
    with pytest.raises(TruncatedPayload):
        decode_msrf(buf + b"\0")
    with pytest.raises(TruncatedPayload):
        decode_msrf(buf[:10])


def test_msrf_integer_dtype_rejects_fractions():
    with pytest.raises(UnrepresentableSample):
        encode_msrf(MultiBandImage(np.full((1, 1, 1), 0.5), dtype="u8"))
    with pytest.raises(UnrepresentableSample):
        encode_msrf(MultiBandImage(np.full((1, 1, 1), 256.0), dtype="u8"))


def test_msrf_save_deterministic_and_idempotent(tmp_path, rng):
    im = MultiBandImage(rng.random((3, 5, 4)).astype(np.float32))
    save_msrf(im, tmp_path / "a.msrf")
    save_msrf(im, tmp_path / "b.msrf")
    save_msrf(load_msrf(tmp_path / "a.msrf"), tmp_path / "c.msrf")
    a, b, c = ((tmp_path / n).read_bytes() for n in ("a.msrf", "b.msrf", "c.msrf"))
    assert a == b == c


def test_msrf_io_failure(tmp_path):
    with pytest.raises(IoFailure):
        save_msrf(MultiBandImage(np.zeros((1, 1, 1))), tmp_path / "missing" / "x.msrf")
    with pytest.raises(IoFailure):
        load_msrf(tmp_path / "nope.msrf")


@given(st.sampled_from(["u8", "u16", "f32"]), st.integers(1, 5), st.integers(1, 5),
       st.integers(1, 3), st.integers(0, 2**31))
def test_msrf_round_trip_property(dtype, h, w, b, seed):
    r = np.random.default_rng(seed)
    if dtype == "f32":
        data = r.standard_normal((b, h, w)).astype(np.float32).astype(np.float64)
    else:
        data = r.integers(0, 256 if dtype == "u8" else 65536, (b, h, w)).astype(np.float64)
    im = MultiBandImage(data, dtype=dtype)
    assert np.array_equal(decode_msrf(encode_msrf(im)).data, data)


def test_normalize_denormalize():
    im = MultiBandImage(np.array([[[0.0, 255.0, 128.0]]]), dtype="u8")
    n = normalize(im)
    assert n.data.max() == 1.0
    assert np.array_equal(denormalize(n).data, im.data)


# resampling -------------------------------------------------------------------

def test_upsample_constant():
    out = upsample(img(np.full((4, 8, 8), 0.5)), 4)
    assert out.shape == (4, 32, 32)
    assert np.allclose(out.data, 0.5, rtol=0, atol=1e-15)


def test_upsample_patch_geometry():
    assert upsample(img(np.zeros((4, 64, 64))), 4).shape == (4, 256, 256)


def _keys(x, a=-0.5):
    x = abs(x)
    if x <= 1:
        return (a + 2) * x**3 - (a + 3) * x**2 + 1
    if x < 2:
        return a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a
    return 0.0


def _mirror(i, n):
    # reflect-101 by repeated folding
    while i < 0 or i >= n:
        i = -i if i < 0 else 2 * (n - 1) - i
    return i


def _bicubic_oracle(a, k):
    h, w = a.shape
    out = np.zeros((h * k, w * k))
    for oy in range(h * k):
        for ox in range(w * k):
            sy, sx = (oy + 0.5) / k - 0.5, (ox + 0.5) / k - 0.5
            acc = 0.0
            for jy in range(int(np.floor(sy)) - 1, int(np.floor(sy)) + 3):
                for jx in range(int(np.floor(sx)) - 1, int(np.floor(sx)) + 3):
                    acc += _keys(sy - jy) * _keys(sx - jx) * a[_mirror(jy, h), _mirror(jx, w)]
            out[oy, ox] = acc
    return out


def test_upsample_checkerboard_matches_kernel_oracle():
    board = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = upsample(img(board), 2).data[0]
    assert np.allclose(out, _bicubic_oracle(board, 2), rtol=0, atol=1e-12)


def test_upsample_random_matches_kernel_oracle(rng):
    a = rng.random((5, 6))
    assert np.allclose(upsample(img(a), 3).data[0], _bicubic_oracle(a, 3), rtol=0, atol=1e-12)


def test_upsample_factor_too_small():
    with pytest.raises(FactorTooSmall):
        upsample(img(np.zeros((2, 2))), 1)


def test_downsample_constant():
    out = downsample(img(np.full((32, 32), 7.0)), 4)
    assert out.shape == (1, 8, 8)
    assert np.allclose(out.data, 7.0, rtol=0, atol=1e-13)


def test_downsample_box_block_mean(rng):
    a = rng.random((4, 4))
    out = downsample(img(a), 4, ResampleFilter.box())
    assert out.shape == (1, 1, 1)
    assert out.data[0, 0, 0] == pytest.approx(a.mean(), abs=1e-15)


def test_downsample_pan_geometry():
    assert downsample(img(np.zeros((256, 256))), 4).shape == (1, 64, 64)


def test_downsample_not_divisible():
    with pytest.raises(NotDivisible):
        downsample(img(np.zeros((10, 10))), 4)


@pytest.mark.parametrize("kind", ["bicubic", "gaussian"])
def test_downsample_constant_other_filters(kind):
    out = downsample(img(np.full((16, 16), 3.0)), 2, ResampleFilter(kind))
    assert np.allclose(out.data, 3.0, rtol=0, atol=1e-13)


@pytest.mark.parametrize("k", [2, 3, 4, 5, 8])
def test_box_partition_of_unity_exact(rng, k):
    a = rng.random((3, 6, 5))
    back = downsample(upsample(img(a), k, ResampleFilter.box()), k, ResampleFilter.box())
    assert np.array_equal(back.data, a)


def test_box_round_trip_constant_exact():
    a = np.full((2, 4, 4), 0.3)
    back = downsample(upsample(img(a), 4, ResampleFilter.box()), 4, ResampleFilter.box())
    assert np.array_equal(back.data, a)


def test_filter_parse():
    assert ResampleFilter.parse("gaussian:2").sigma == 2.0
    assert ResampleFilter.parse("box").kind == "box"
    with pytest.raises(ValueError):
        ResampleFilter.gaussian(0.0)


def test_resampling_pure(rng):
    a = img(rng.random((2, 8, 8)))
    assert np.array_equal(upsample(a, 2).data, upsample(a, 2).data)
    assert np.array_equal(downsample(a, 2).data, downsample(a, 2).data)


# histogram / stats -------------------------------------------------------------

def test_histogram_match_closed_form():
    out = histogram_match(img([[0.0, 1.0, 2.0, 3.0]]), img([[0.0, 2.0, 4.0, 6.0]]))
    assert np.allclose(out.data, [[[0, 2, 4, 6]]], rtol=0, atol=1e-12)


def test_histogram_match_moments(rng):
    ref = img(rng.normal(10, 2, (16, 16)))
    ref = img((ref.data - ref.data.mean()) / ref.data.std() * 2 + 10)
    out = histogram_match(img(rng.random((16, 16))), ref)
    assert out.data.mean() == pytest.approx(10, abs=1e-9)
    assert out.data.std() == pytest.approx(2, abs=1e-9)


def test_histogram_match_identity_and_idempotence(rng):
    a = img(rng.random((8, 8)))
    assert np.array_equal(histogram_match(a, a).data, a.data)
    ref = img(rng.random((8, 8)) * 3)
    once = histogram_match(a, ref)
    assert np.allclose(histogram_match(once, ref).data, once.data, rtol=0, atol=1e-12)


def test_histogram_match_degenerate():
    with pytest.raises(DegenerateBand):
        histogram_match(img(np.ones((3, 3))), img(np.arange(9.0).reshape(3, 3)))


def test_band_stats_examples():
    s = band_stats(img(np.array([[[3.0, 3.0]], [[0.0, 0.0]], [[4.0, 4.0]], [[1.0, 2.0]]]).reshape(4, 1, 2)))
    assert s[0]["mean"] == 3.0 and s[0]["std"] == 0.0
    s = band_stats(img([[0.0, 0.0, 4.0, 4.0]]))[0]
    assert (s["mean"], s["std"]) == (2.0, 2.0)
    s = band_stats(img([[1.0, 2.0, 3.0, 4.0]]))[0]
    assert s["mean"] == 2.5 and s["std"] == pytest.approx(np.sqrt(1.25), abs=1e-15)
