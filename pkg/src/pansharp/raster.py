"""Multiband raster container, resampling, moment matching and MSRF file I/O.

Samples are held band-sequential as a ``(bands, height, width)`` float64
array. All resampling is separable and uses reflect-101 border extension
(``d c b | a b c d | c b a``).
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DegenerateBand,
    FactorTooSmall,
    IoFailure,
    NotDivisible,
    TruncatedPayload,
    UnrepresentableSample,
    UnsupportedVersion,
)

MAGIC = b"MSRF"
VERSION = 1
HEADER = struct.Struct("<4sBBHIII")  # 20 bytes

DTYPE_CODES = {"u8": 0, "u16": 1, "f32": 2}
_CODE_TO_DTYPE = {v: k for k, v in DTYPE_CODES.items()}
_NUMPY_DTYPES = {"u8": np.dtype("<u1"), "u16": np.dtype("<u2"), "f32": np.dtype("<f4")}
NOMINAL_MAX = {"u8": 255.0, "u16": 65535.0, "f32": 1.0}

BICUBIC_A = -0.5


@dataclass(frozen=True, eq=False)
class MultiBandImage:
    """A ``width x height x bands`` raster.

    ``dtype`` records the MSRF sample type the image came from (or should be
    written as); samples are always float64 in memory.
    """

    data: np.ndarray
    value_range: tuple[float, float] = (0.0, 1.0)
    dtype: str = "f32"

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise ValueError(f"expected (bands, height, width) samples, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"image dimensions must be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image samples must be finite")
        if self.dtype not in DTYPE_CODES:
            raise ValueError(f"unknown dtype {self.dtype!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "value_range", tuple(float(v) for v in self.value_range))

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def band(self, i: int) -> MultiBandImage:
        return self.with_data(self.data[i : i + 1])

    def with_data(self, data: np.ndarray) -> MultiBandImage:
        return MultiBandImage(data, value_range=self.value_range, dtype=self.dtype)

    def __eq__(self, other):
        if not isinstance(other, MultiBandImage):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    __hash__ = None


def as_array(img) -> np.ndarray:
    """Samples of a MultiBandImage (or array) as a float64 ``(b, h, w)`` array."""
    if isinstance(img, MultiBandImage):
        return img.data
    arr = np.asarray(img, dtype=np.float64)
    return arr[None] if arr.ndim == 2 else arr


@dataclass(frozen=True)
class ResampleFilter:
    kind: str = "bicubic"
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in ("bicubic", "box", "gaussian"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.kind == "gaussian" and self.sigma is not None and not self.sigma > 0:
            raise ValueError("gaussian sigma must be > 0")

    @classmethod
    def bicubic(cls) -> ResampleFilter:
        return cls("bicubic")

    @classmethod
    def box(cls) -> ResampleFilter:
        return cls("box")

    @classmethod
    def gaussian(cls, sigma: float | None = None) -> ResampleFilter:
        """Gaussian low-pass; ``sigma=None`` means ``factor / 2`` at use time."""
        return cls("gaussian", sigma)

    @classmethod
    def parse(cls, text: str) -> ResampleFilter:
        """Parse ``bicubic``, ``box``, ``gaussian`` or ``gaussian:<sigma>``."""
        name, _, arg = text.partition(":")
        if name == "gaussian":
            return cls.gaussian(float(arg) if arg else None)
        return cls(name)

    def sigma_for(self, factor: int) -> float:
        return self.sigma if self.sigma is not None else factor / 2.0


def wald_filter() -> ResampleFilter:
    """Default low-pass used for degradation: gaussian with sigma = factor / 2."""
    return ResampleFilter.gaussian()


def reflect101(idx: np.ndarray, n: int) -> np.ndarray:
    idx = np.asarray(idx)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


def keys_kernel(x, a: float = BICUBIC_A):
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def _matrix_from_taps(n_out: int, n_in: int, rows, taps, weights, normalize: bool) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    np.add.at(m, (rows, reflect101(taps, n_in)), weights)
    if normalize:
        m /= m.sum(axis=1, keepdims=True)
    return m


def _gaussian_smoother(n: int, sigma: float) -> np.ndarray:
    radius = int(np.ceil(4 * sigma))
    offsets = np.arange(-radius, radius + 1)
    rows = np.repeat(np.arange(n), offsets.size)
    taps = rows + np.tile(offsets, n)
    weights = np.tile(np.exp(-0.5 * (offsets / sigma) ** 2), n)
    return _matrix_from_taps(n, n, rows, taps, weights, normalize=True)


def upsample_matrix(n_in: int, factor: int, filt: ResampleFilter) -> np.ndarray:
    n_out = n_in * factor
    out_idx = np.arange(n_out)
    if filt.kind == "box" or filt.kind == "gaussian":
        m = np.zeros((n_out, n_in))
        m[out_idx, out_idx // factor] = 1.0
        if filt.kind == "gaussian":
            m = _gaussian_smoother(n_out, filt.sigma_for(factor)) @ m
        return m
    # bicubic on pixel centres: output o samples source coordinate (o + 0.5) / k - 0.5
    src = (out_idx + 0.5) / factor - 0.5
    base = np.floor(src).astype(int)
    offsets = np.arange(-1, 3)
    taps = base[:, None] + offsets[None, :]
    weights = keys_kernel(src[:, None] - taps)
    rows = np.repeat(out_idx, offsets.size)
    return _matrix_from_taps(n_out, n_in, rows, taps.ravel(), weights.ravel(), normalize=True)


def downsample_matrix(n_in: int, factor: int, filt: ResampleFilter) -> np.ndarray:
    n_out = n_in // factor
    out_idx = np.arange(n_out)
    if filt.kind == "box":
        m = np.zeros((n_out, n_in))
        for r in range(factor):
            m[out_idx, out_idx * factor + r] = 1.0 / factor
        return m
    centres = out_idx * factor + (factor - 1) / 2.0
    if filt.kind == "gaussian":
        sigma = filt.sigma_for(factor)
        radius = int(np.ceil(4 * sigma + factor / 2.0))
    else:
        radius = 2 * factor + 1
    offsets = np.arange(-radius, radius + 1)
    taps = np.round(centres).astype(int)[:, None] + offsets[None, :]
    dist = taps - centres[:, None]
    if filt.kind == "gaussian":
        weights = np.exp(-0.5 * (dist / sigma) ** 2)
    else:
        weights = keys_kernel(dist / factor)
    rows = np.repeat(out_idx, offsets.size)
    return _matrix_from_taps(n_out, n_in, rows, taps.ravel(), weights.ravel(), normalize=True)


def _apply_separable(data: np.ndarray, my: np.ndarray, mx: np.ndarray) -> np.ndarray:
    return np.matmul(np.matmul(my, data), mx.T)


def _block_mean(data: np.ndarray, k: int) -> np.ndarray:
    """Mean over non-overlapping k x k blocks, taken relative to each block's
    first sample so constant blocks come back bit-exactly."""
    b, h, w = data.shape
    blocks = data.reshape(b, h // k, k, w // k, k)
    anchor = blocks[:, :, :1, :, :1]
    return (anchor + (blocks - anchor).mean(axis=(2, 4), keepdims=True))[:, :, 0, :, 0]


def upsample(img: MultiBandImage, factor: int, filt: ResampleFilter | None = None) -> MultiBandImage:
    """Enlarge by an integer factor (bicubic by default)."""
    if factor < 2:
        raise FactorTooSmall(f"upsampling factor must be >= 2, got {factor}")
    filt = filt or ResampleFilter.bicubic()
    my = upsample_matrix(img.height, factor, filt)
    mx = upsample_matrix(img.width, factor, filt)
    return img.with_data(_apply_separable(img.data, my, mx))


def downsample(img: MultiBandImage, factor: int, filt: ResampleFilter | None = None) -> MultiBandImage:
    """Low-pass filter then decimate by an integer factor (gaussian sigma=factor/2 by default)."""
    if factor < 2:
        raise FactorTooSmall(f"downsampling factor must be >= 2, got {factor}")
    if img.width % factor or img.height % factor:
        raise NotDivisible(
            f"image {img.width}x{img.height} is not divisible by factor {factor}"
        )
    filt = filt or wald_filter()
    if filt.kind == "box":
        return img.with_data(_block_mean(img.data, factor))
    my = downsample_matrix(img.height, factor, filt)
    mx = downsample_matrix(img.width, factor, filt)
    return img.with_data(_apply_separable(img.data, my, mx))


def moment_match(src: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Affine map of ``src`` so its mean and population std equal ``ref``'s."""
    mu_s, sd_s = float(src.mean()), float(src.std())
    mu_r, sd_r = float(ref.mean()), float(ref.std())
    if mu_s == mu_r and sd_s == sd_r:
        return np.array(src, dtype=np.float64)
    if sd_s == 0.0:
        raise DegenerateBand("source band has zero variance")
    return (src - mu_s) * (sd_r / sd_s) + mu_r


def histogram_match(src: MultiBandImage, ref: MultiBandImage) -> MultiBandImage:
    if src.bands != 1 or ref.bands != 1:
        raise ValueError("histogram_match expects single-band images")
    return src.with_data(moment_match(src.data, ref.data))


def band_stats(img: MultiBandImage) -> list[dict[str, float]]:
    """Per-band mean, population std, min and max in double precision."""
    return [
        {
            "mean": float(b.mean()),
            "std": float(b.std()),
            "min": float(b.min()),
            "max": float(b.max()),
        }
        for b in img.data
    ]


def normalize(img: MultiBandImage) -> MultiBandImage:
    """Scale samples to [0, 1] by the file dtype's nominal maximum."""
    scale = NOMINAL_MAX[img.dtype]
    return MultiBandImage(img.data / scale, value_range=(0.0, 1.0), dtype=img.dtype)


def denormalize(img: MultiBandImage, dtype: str | None = None) -> MultiBandImage:
    """Inverse of :func:`normalize`; integer dtypes are rounded and clipped."""
    dtype = dtype or img.dtype
    scale = NOMINAL_MAX[dtype]
    data = img.data * scale
    if dtype != "f32":
        data = np.clip(np.rint(data), 0, scale)
    return MultiBandImage(data, value_range=(0.0, scale), dtype=dtype)


def encode_msrf(img: MultiBandImage, dtype: str | None = None) -> bytes:
    dtype = dtype or img.dtype
    np_dtype = _NUMPY_DTYPES[dtype]
    data = img.data
    if dtype == "f32":
        payload = data.astype(np_dtype)
    else:
        info = np.iinfo(np_dtype)
        if np.any(data != np.rint(data)) or data.min() < info.min or data.max() > info.max:
            raise UnrepresentableSample(f"samples are not exact {dtype} integers")
        payload = data.astype(np_dtype)
    header = HEADER.pack(MAGIC, VERSION, DTYPE_CODES[dtype], 0, img.width, img.height, img.bands)
    return header + payload.tobytes(order="C")


def decode_msrf(buf: bytes) -> MultiBandImage:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, found {bytes(buf[:4])!r}", 0)
    if len(buf) < HEADER.size:
        raise TruncatedPayload(f"header needs {HEADER.size} bytes, file has {len(buf)}", len(buf))
    _, version, code, _, width, height, bands = HEADER.unpack_from(buf)
    if version != VERSION:
        raise UnsupportedVersion(f"MSRF version {version} is not supported", 4)
    if code not in _CODE_TO_DTYPE:
        raise UnsupportedVersion(f"unknown dtype code {code}", 5)
    if width < 1 or height < 1 or bands < 1:
        raise TruncatedPayload("image dimensions must be >= 1", 8)
    dtype = _CODE_TO_DTYPE[code]
    np_dtype = _NUMPY_DTYPES[dtype]
    need = width * height * bands * np_dtype.itemsize
    have = len(buf) - HEADER.size
    if have < need:
        raise TruncatedPayload(f"payload needs {need} bytes, found {have}", len(buf))
    if have > need:
        raise TruncatedPayload(f"{have - need} trailing byte(s) after payload", HEADER.size + need)
    samples = np.frombuffer(buf, dtype=np_dtype, count=width * height * bands, offset=HEADER.size)
    data = samples.astype(np.float64).reshape(bands, height, width)
    return MultiBandImage(data, value_range=(0.0, NOMINAL_MAX[dtype]), dtype=dtype)


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def save_msrf(img: MultiBandImage, path, dtype: str | None = None) -> None:
    atomic_write_bytes(path, encode_msrf(img, dtype))


def load_msrf(path) -> MultiBandImage:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return decode_msrf(buf)
