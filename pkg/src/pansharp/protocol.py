"""Wald's-protocol dataset construction, patch sampling and synthetic scenes."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, PatchTooLarge
from .raster import (
    MultiBandImage,
    ResampleFilter,
    downsample,
    load_msrf,
    save_msrf,
    wald_filter,
)

DEFAULT_RATIO = 4
DETAIL_STD = 0.05
OBJECT_SPREAD = 0.3


@dataclass(frozen=True, eq=False)
class TrainingSample:
    """Aligned (low-res MS, PAN, reference MS) triple."""

    ms: MultiBandImage
    pan: MultiBandImage
    reference: MultiBandImage
    ratio: int = DEFAULT_RATIO

    def __post_init__(self):
        r = self.ratio
        if self.pan.bands != 1:
            raise DimensionMismatch(f"PAN must have 1 band, got {self.pan.bands}")
        if (self.pan.width, self.pan.height) != (self.ms.width * r, self.ms.height * r):
            raise DimensionMismatch(
                f"PAN {self.pan.width}x{self.pan.height} is not MS "
                f"{self.ms.width}x{self.ms.height} scaled by {r}"
            )
        if self.reference.shape != (self.ms.bands, self.pan.height, self.pan.width):
            raise DimensionMismatch(
                f"reference shape {self.reference.shape} does not match "
                f"({self.ms.bands}, {self.pan.height}, {self.pan.width})"
            )


@dataclass(frozen=True)
class SamplerConfig:
    ms_patch: int = 64
    count: int = 1
    seed: int = 0


def wald_degrade(
    ms: MultiBandImage,
    pan: MultiBandImage,
    ratio: int = DEFAULT_RATIO,
    filt: ResampleFilter | None = None,
) -> TrainingSample:
    """Degrade both sensor images by ``ratio``; the original MS becomes the reference."""
    if pan.bands != 1:
        raise DimensionMismatch(f"PAN must have 1 band, got {pan.bands}")
    if (pan.width, pan.height) != (ms.width * ratio, ms.height * ratio):
        raise DimensionMismatch(
            f"PAN {pan.width}x{pan.height} must be MS {ms.width}x{ms.height} times {ratio}"
        )
    filt = filt or wald_filter()
    return TrainingSample(
        ms=downsample(ms, ratio, filt),
        pan=downsample(pan, ratio, filt),
        reference=ms,
        ratio=ratio,
    )


def patch_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, index); stable when ``count`` changes."""
    key = [seed & 0xFFFFFFFFFFFFFFFF, index & 0xFFFFFFFFFFFFFFFF]
    return np.random.Generator(np.random.Philox(key=key))


def patch_corners(sample: TrainingSample, cfg: SamplerConfig) -> list[tuple[int, int]]:
    """Top-left MS-grid corners ``(x, y)`` of the patches drawn for ``cfg``."""
    p = cfg.ms_patch
    if p < 1 or p > sample.ms.width or p > sample.ms.height:
        raise PatchTooLarge(
            f"patch {p} does not fit MS {sample.ms.width}x{sample.ms.height}"
        )
    corners = []
    for i in range(cfg.count):
        rng = patch_rng(cfg.seed, i)
        x = int(rng.integers(0, sample.ms.width - p + 1))
        y = int(rng.integers(0, sample.ms.height - p + 1))
        corners.append((x, y))
    return corners


def crop(sample: TrainingSample, x: int, y: int, ms_patch: int) -> TrainingSample:
    r, p = sample.ratio, ms_patch
    ms = sample.ms.with_data(sample.ms.data[:, y : y + p, x : x + p])
    pan = sample.pan.with_data(sample.pan.data[:, y * r : (y + p) * r, x * r : (x + p) * r])
    ref = sample.reference.with_data(
        sample.reference.data[:, y * r : (y + p) * r, x * r : (x + p) * r]
    )
    return TrainingSample(ms, pan, ref, r)


def extract_patches(sample: TrainingSample, cfg: SamplerConfig) -> list[TrainingSample]:
    return [crop(sample, x, y, cfg.ms_patch) for x, y in patch_corners(sample, cfg)]


def _smooth_field(rng: np.random.Generator, size: int, sigma: float) -> np.ndarray:
    field = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    lo, hi = field.min(), field.max()
    return (field - lo) / (hi - lo) if hi > lo else np.zeros_like(field)


def synth_scene(size: int, bands: int = 4, seed: int = 0, return_weights: bool = False):
    """Random multiband scene and its PAN, both ``size x size`` with samples in [0, 1].

    Each band is a smooth random field plus shared rectangles and disks. An
    object has one brightness common to all bands, offset per band by up to
    ``OBJECT_SPREAD / 2``, so the bands stay correlated as in real imagery.
    A zero-mean high-frequency detail texture of std 0.05 is laid over every
    band, and the PAN is a random convex combination of the bands. The
    detail is therefore scene content the MS loses on degradation and the
    PAN keeps. With ``return_weights`` the band weights are returned as a
    third item.
    """
    if size % 4:
        raise ValueError(f"scene size must be divisible by 4, got {size}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5CE4E]))
    yy, xx = np.mgrid[0:size, 0:size]

    hr = np.empty((bands, size, size))
    for b in range(bands):
        hr[b] = 0.25 + 0.3 * _smooth_field(rng, size, max(size / 8.0, 1.0))

    n_objects = int(rng.integers(3, 7)) + size // 16
    for _ in range(n_objects):
        level = rng.uniform(0.25, 0.75) + OBJECT_SPREAD * rng.uniform(-0.5, 0.5, size=bands)
        cx, cy = rng.uniform(0, size, size=2)
        extent = rng.uniform(size / 16.0, size / 4.0)
        if rng.random() < 0.5:
            mask = (np.abs(xx - cx) <= extent) & (np.abs(yy - cy) <= extent * rng.uniform(0.4, 1.0))
        else:
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= extent**2
        hr[:, mask] = level[:, None]
    hr = np.clip(hr, 0.15, 0.85)

    weights = rng.dirichlet(np.ones(bands))
    detail = ndimage.gaussian_filter(rng.standard_normal((size, size)), 0.7, mode="wrap")
    detail -= detail.mean()
    detail *= DETAIL_STD / detail.std()
    hr = np.clip(hr + detail, 0.0, 1.0)
    pan = np.clip(np.tensordot(weights, hr, axes=1), 0.0, 1.0)
    if return_weights:
        return MultiBandImage(hr), MultiBandImage(pan[None]), weights
    return MultiBandImage(hr), MultiBandImage(pan[None])


def synth_sample(
    size: int,
    bands: int = 4,
    seed: int = 0,
    ratio: int = DEFAULT_RATIO,
    filt: ResampleFilter | None = None,
) -> TrainingSample:
    """Simulated Wald pair: the synthetic scene is the reference, its PAN stays at
    reference resolution and the MS input is the scene degraded by ``ratio``."""
    hr, pan = synth_scene(size, bands, seed)
    ms = downsample(hr, ratio, filt or wald_filter())
    return TrainingSample(ms=ms, pan=pan, reference=hr, ratio=ratio)


def synth_patches(
    count: int,
    ms_patch: int,
    bands: int = 4,
    seed: int = 0,
    ratio: int = DEFAULT_RATIO,
    scene_size: int | None = None,
) -> list[TrainingSample]:
    """``count`` random patches cut from one synthetic Wald scene."""
    scene_size = scene_size or max(4 * ms_patch * ratio, 64)
    scene = synth_sample(scene_size, bands, seed, ratio)
    return extract_patches(scene, SamplerConfig(ms_patch=ms_patch, count=count, seed=seed))


MANIFEST = "manifest.tsv"


def write_dataset(
    out_dir,
    samples: list[TrainingSample],
    seeds: list[int] | None = None,
    corners: list[tuple[int, int]] | None = None,
) -> None:
    """Write ``sample_%06d/{ms,pan,ref}.msrf`` plus ``manifest.tsv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = seeds if seeds is not None else [0] * len(samples)
    corners = corners if corners is not None else [(0, 0)] * len(samples)
    rows = []
    for i, sample in enumerate(samples):
        d = out / f"sample_{i:06d}"
        d.mkdir(exist_ok=True)
        save_msrf(sample.ms, d / "ms.msrf")
        save_msrf(sample.pan, d / "pan.msrf")
        save_msrf(sample.reference, d / "ref.msrf")
        rows.append((i, seeds[i], corners[i][0], corners[i][1]))
    tmp = out / (MANIFEST + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["index", "seed", "corner_x", "corner_y"])
        writer.writerows(rows)
    os.replace(tmp, out / MANIFEST)


def read_dataset(data_dir) -> list[TrainingSample]:
    root = Path(data_dir)
    with open(root / MANIFEST, newline="") as fh:
        indices = [int(row["index"]) for row in csv.DictReader(fh, delimiter="\t")]
    samples = []
    for i in indices:
        d = root / f"sample_{i:06d}"
        ms, pan, ref = (load_msrf(d / f"{n}.msrf") for n in ("ms", "pan", "ref"))
        samples.append(TrainingSample(ms, pan, ref, ratio=pan.width // ms.width))
    return samples
