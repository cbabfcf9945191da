"""Classical pan-sharpening baselines.

Every method maps an up-sampled MS image and a PAN at the same spatial size
to a fused image with the MS band count. Component-substitution methods
(IHS, Brovey, GS) use the unweighted band mean as intensity and a
moment-matched PAN; MRA methods (HPF, SFIM) inject PAN high frequencies.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateDenominatorWarning, DimensionMismatch
from .raster import MultiBandImage, ResampleFilter, upsample

EPS = 1e-8

METHODS = ("ihs", "brovey", "hpf", "sfim", "gs", "lmvm", "lmm")
CLI_METHODS = METHODS + ("naive",)


@dataclass(frozen=True)
class FusionMethod:
    kind: str
    window: int = 7
    hp_kernel: int = 5

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in METHODS:
            raise ValueError(f"unknown fusion method {self.kind!r}; expected one of {METHODS}")
        object.__setattr__(self, "kind", kind)
        for name in ("window", "hp_kernel"):
            size = getattr(self, name)
            if size < 3 or size % 2 == 0:
                raise ValueError(f"{name} must be odd and >= 3, got {size}")


def boxcar(a: np.ndarray, size: int) -> np.ndarray:
    """Mean over a ``size x size`` window with reflect-101 borders (2-D input)."""
    return ndimage.uniform_filter(a, size=size, mode="mirror")


def _floor(den: np.ndarray, method: str) -> np.ndarray:
    small = np.abs(den) < EPS
    count = int(small.sum())
    if count:
        warnings.warn(DegenerateDenominatorWarning(method, count), stacklevel=3)
        den = np.where(small, np.where(den < 0, -EPS, EPS), den)
    return den


def intensity(ms: np.ndarray) -> np.ndarray:
    return ms.mean(axis=0)


def matched_pan(pan: np.ndarray, target: np.ndarray) -> np.ndarray:
    """PAN moment-matched to ``target``; falls back to mean matching for a flat PAN."""
    mu_p, sd_p = float(pan.mean()), float(pan.std())
    mu_t, sd_t = float(target.mean()), float(target.std())
    if mu_p == mu_t and sd_p == sd_t:
        return pan.copy()
    if sd_p < EPS:
        return pan - mu_p + mu_t
    return (pan - mu_p) * (sd_t / sd_p) + mu_t


def gs_forward(vectors: np.ndarray):
    """Gram-Schmidt orthogonalisation of centred ``(n, h, w)`` component images.

    Returns ``(components, coeffs, means)`` with
    ``vectors[k] = means[k] + components[k] + sum_{l<k} coeffs[k, l] * components[l]``.
    """
    n = vectors.shape[0]
    means = vectors.reshape(n, -1).mean(axis=1)
    centred = vectors - means[:, None, None]
    comps = np.empty_like(centred)
    coeffs = np.zeros((n, n))
    for k in range(n):
        resid = centred[k].copy()
        for l in range(k):
            var = float(np.mean(comps[l] * comps[l]))
            if var > EPS * EPS:
                coeffs[k, l] = float(np.mean(centred[k] * comps[l])) / var
                resid -= coeffs[k, l] * comps[l]
        comps[k] = resid
    return comps, coeffs, means


def gs_inverse(comps: np.ndarray, coeffs: np.ndarray, means: np.ndarray) -> np.ndarray:
    out = comps.copy()
    n = comps.shape[0]
    for k in range(n):
        for l in range(k):
            if coeffs[k, l] != 0.0:
                out[k] += coeffs[k, l] * comps[l]
        out[k] += means[k]
    return out


def _ihs(m, p):
    i = intensity(m)
    return m + (matched_pan(p, i) - i)[None]


def _brovey(m, p):
    i = intensity(m)
    return m * (matched_pan(p, i) / _floor(i, "brovey"))[None]


def _hpf(m, p, method):
    return m + (p - boxcar(p, method.hp_kernel))[None]


def _sfim(m, p, method):
    return m * (p / _floor(boxcar(p, method.hp_kernel), "sfim"))[None]


def _gs(m, p):
    i = intensity(m)
    comps, coeffs, means = gs_forward(np.concatenate([i[None], m]))
    comps[0] = matched_pan(p, i) - means[0]
    return gs_inverse(comps, coeffs, means)[1:]


def _local_stats(a: np.ndarray, w: int):
    mu = boxcar(a, w)
    var = np.maximum(boxcar(a * a, w) - mu * mu, 0.0)
    return mu, np.sqrt(var)


def _lmvm(m, p, method):
    mu_p, sd_p = _local_stats(p, method.window)
    sd_p = _floor(sd_p, "lmvm")
    out = np.empty_like(m)
    for b in range(m.shape[0]):
        mu_m, sd_m = _local_stats(m[b], method.window)
        out[b] = (p - mu_p) * (sd_m / sd_p) + mu_m
    return out


def _lmm(m, p, method):
    mu_p = _floor(boxcar(p, method.window), "lmm")
    return np.stack([p * (boxcar(band, method.window) / mu_p) for band in m])


def fuse(method: FusionMethod | str, ms_up: MultiBandImage, pan: MultiBandImage) -> MultiBandImage:
    """Fuse an up-sampled MS image with a same-size PAN."""
    if isinstance(method, str):
        method = FusionMethod(method)
    if pan.bands != 1:
        raise DimensionMismatch(f"PAN must have 1 band, got {pan.bands}")
    if (pan.height, pan.width) != (ms_up.height, ms_up.width):
        raise DimensionMismatch(
            f"PAN {pan.width}x{pan.height} and MS {ms_up.width}x{ms_up.height} differ in size"
        )
    m, p = ms_up.data, pan.data[0]
    kind = method.kind
    if kind == "ihs":
        out = _ihs(m, p)
    elif kind == "brovey":
        out = _brovey(m, p)
    elif kind == "hpf":
        out = _hpf(m, p, method)
    elif kind == "sfim":
        out = _sfim(m, p, method)
    elif kind == "gs":
        out = _gs(m, p)
    elif kind == "lmvm":
        out = _lmvm(m, p, method)
    else:
        out = _lmm(m, p, method)
    return ms_up.with_data(out)


def fuse_naive(ms: MultiBandImage, ratio: int) -> MultiBandImage:
    """Bicubic interpolation only; the floor every fusion method should beat."""
    return upsample(ms, ratio, ResampleFilter.bicubic())
