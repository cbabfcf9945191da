"""Apply a trained generator to a full scene, tiling large inputs."""
from __future__ import annotations

from math import lcm

import numpy as np

from ..errors import DimensionMismatch, VariantMismatch, WeightShapeMismatch
from ..nn.graph import ComputeGraph, ParameterStore
from ..raster import MultiBandImage, upsample
from .networks import build_generator, canonical_variant, generator_inputs

TILE = 256
OVERLAP = 32
NET_STRIDE = 4  # total down-sampling inside the generator


def tile_starts(n: int, tile: int, overlap: int, align: int) -> list[tuple[int, int]]:
    """``(start, stop)`` spans covering ``[0, n)``.

    Consecutive tiles overlap by at least ``overlap``; every start is a
    multiple of ``align`` so each tile sees the same down-sampling grid as the
    whole scene.
    """
    if n <= tile:
        return [(0, n)]
    step = ((tile - overlap) // align) * align
    if step <= 0:
        raise ValueError(f"tile {tile} leaves no aligned step after overlap {overlap}")
    spans = []
    start = 0
    while start + tile < n:
        spans.append((start, start + tile))
        start += step
    last = ((n - tile) // align) * align
    spans.append((last, n))
    return spans


def feather(start: int, stop: int, n: int, overlap: int) -> np.ndarray:
    """Blend weights along one axis: linear ramps at edges shared with a neighbour tile."""
    d = np.arange(stop - start, dtype=np.float64)
    w = np.ones_like(d)
    if start > 0:
        w = np.minimum(w, (d + 1) / (overlap + 1))
    if stop < n:
        w = np.minimum(w, (d[::-1] + 1) / (overlap + 1))
    return w


def _infer_shape(weights: ParameterStore) -> tuple[int, int, bool]:
    try:
        width = weights["d4.weight"].shape[0]
        bands = weights["d5.weight"].shape[0]
    except KeyError as exc:
        raise WeightShapeMismatch(f"weights lack generator parameter {exc}") from None
    return width, bands, "d4_bn.gamma" in weights


def generator_from_weights(weights: ParameterStore, variant: str | None = None) -> ComputeGraph:
    """Rebuild the generator graph that ``weights`` belong to and load them."""
    if variant is None:
        if weights.variant is None:
            raise VariantMismatch("weights carry no variant tag and none was given")
        variant = weights.variant
    variant = canonical_variant(variant)
    if weights.variant is not None and canonical_variant(weights.variant) != variant:
        raise VariantMismatch(f"weights are for {weights.variant}, requested {variant}")
    width, bands, use_bn = _infer_shape(weights)
    graph = build_generator(variant, bands, use_bn, width)
    graph.load(weights)
    graph.params.variant = variant
    return graph


def pansharpen_nn(ms: MultiBandImage, pan: MultiBandImage, weights: ParameterStore,
                  variant: str | None = None, tile: int = TILE,
                  overlap: int = OVERLAP) -> MultiBandImage:
    """Fuse ``ms`` and ``pan`` with a trained generator.

    Scenes larger than ``tile`` are processed as overlapping tiles blended
    with linear feathering. Set ``tile`` to ``None`` for a single pass.
    """
    graph = generator_from_weights(weights, variant)
    variant = graph.params.variant
    if pan.bands != 1:
        raise DimensionMismatch(f"PAN must have one band, got {pan.bands}")
    expected = graph.inputs[generator_inputs(variant)[0]]
    if ms.bands != expected:
        raise WeightShapeMismatch(f"weights expect {expected} bands, MS has {ms.bands}")
    ratio = pan.width // ms.width
    if ratio < 1 or (ms.height * ratio, ms.width * ratio) != (pan.height, pan.width):
        raise DimensionMismatch(f"PAN {pan.height}x{pan.width} is not an integer multiple of MS {ms.height}x{ms.width}")
    if pan.height % NET_STRIDE or pan.width % NET_STRIDE:
        raise DimensionMismatch(f"PAN dims must be multiples of {NET_STRIDE}")

    ms_key, pan_key = generator_inputs(variant)
    ms_full = ms.data if ms_key == "ms" else upsample(ms, ratio).data
    ms_scale = ratio if ms_key == "ms" else 1
    H, W = pan.height, pan.width
    if tile is None:
        tile = max(H, W)
    align = lcm(NET_STRIDE, ratio)
    if tile < max(H, W) and tile % align:
        raise ValueError(f"tile {tile} must be a multiple of {align}")
    rows, cols = tile_starts(H, tile, overlap, align), tile_starts(W, tile, overlap, align)

    acc = np.zeros((ms.bands, H, W))
    norm = np.zeros((H, W))
    for r0, r1 in rows:
        wr = feather(r0, r1, H, overlap)
        for c0, c1 in cols:
            wc = feather(c0, c1, W, overlap)
            feed = {
                ms_key: ms_full[None, :, r0 // ms_scale:r1 // ms_scale, c0 // ms_scale:c1 // ms_scale],
                pan_key: pan.data[None, :, r0:r1, c0:c1],
            }
            out = graph.forward(feed, training=False, record=False)[graph.outputs[0]][0]
            w = wr[:, None] * wc[None, :]
            acc[:, r0:r1, c0:c1] += out * w
            norm[r0:r1, c0:c1] += w
    return MultiBandImage(acc / norm, value_range=ms.value_range, dtype=ms.dtype)
