"""Generator and discriminator builders.

Channel widths are multiples of ``width`` (32 by default): the feature
streams use ``w`` and ``2w`` channels, the trunk ``4w`` and ``8w``. The
two-stream PSGAN generator is

* per stream: conv3 w, conv3 w, conv3/s2 2w (each + LeakyReLU)
* trunk: concat(4w), conv3 4w, conv3/s2 8w, conv3 8w
* decoder: tconv4/s2 4w, concat with trunk entry, conv3 4w, tconv4/s2 2w,
  concat with both full-resolution stream features, conv3 w, conv3 b + ReLU

FU-PSGAN feeds the raw MS through conv3 w, tconv4/s2 w, conv3 2w so the MS
features meet the PAN features at half PAN resolution. ST-PSGAN stacks PAN
and up-sampled MS into one input and keeps a single stream and its skips.
"""
from __future__ import annotations

from ..nn.graph import BatchNorm, ComputeGraph, Concat, Conv, LeakyReLU, ReLU, Sigmoid, TConv

VARIANTS = ("psgan", "fu_psgan", "st_psgan")
VARIANT_CODES = {"psgan": 0, "fu_psgan": 1, "st_psgan": 2}
DEFAULT_WIDTH = 32
SLOPE = 0.2


def canonical_variant(name: str) -> str:
    key = name.lower().replace("-", "_")
    if key not in VARIANTS:
        raise ValueError(f"unknown generator variant {name!r}; expected one of {VARIANTS}")
    return key


class _Builder:
    def __init__(self, graph: ComputeGraph, use_bn: bool):
        self.g = graph
        self.use_bn = use_bn

    def block(self, name: str, spec, src: str, act=None, bn: bool = True) -> str:
        """Conv-like layer, optional batch norm, then activation (LeakyReLU default)."""
        out = self.g.add(name, spec, src)
        if self.use_bn and bn:
            out = self.g.add(f"{name}_bn", BatchNorm(spec.out_c), out)
        act = LeakyReLU(SLOPE) if act is None else act
        return self.g.add(f"{name}_act", act, out)

    def conv(self, name, src, out_c, stride=1, **kw):
        return self.block(name, Conv(self.g.channels(src), out_c, 3, stride, 1), src, **kw)

    def tconv(self, name, src, out_c, **kw):
        return self.block(name, TConv(self.g.channels(src), out_c, 4, 2, 1), src, **kw)

    def concat(self, name, *srcs):
        return self.g.add(name, Concat(), *srcs)


def generator_inputs(variant: str) -> tuple[str, str]:
    """Entry tensor names: (MS entry, PAN entry)."""
    return ("ms", "pan") if canonical_variant(variant) == "fu_psgan" else ("ms_up", "pan")


def build_generator(variant: str, bands: int = 4, use_bn: bool = False,
                    width: int = DEFAULT_WIDTH) -> ComputeGraph:
    variant = canonical_variant(variant)
    w = width
    ms_name, pan_name = generator_inputs(variant)
    g = ComputeGraph({ms_name: bands, pan_name: 1}, name=f"G[{variant}]")
    b = _Builder(g, use_bn)

    if variant == "st_psgan":
        stack = b.concat("stack", pan_name, ms_name)
        s1 = b.conv("s1", stack, w)
        s2 = b.conv("s2", s1, w)
        s3 = b.conv("s3", s2, 2 * w, stride=2)
        entry = s3
        full_res_skips = (s2,)
    else:
        p1 = b.conv("p1", pan_name, w)
        p2 = b.conv("p2", p1, w)
        p3 = b.conv("p3", p2, 2 * w, stride=2)
        if variant == "psgan":
            m1 = b.conv("m1", ms_name, w)
            m2 = b.conv("m2", m1, w)
            m3 = b.conv("m3", m2, 2 * w, stride=2)
            full_res_skips = (p2, m2)
        else:
            m1 = b.conv("m1", ms_name, w)
            m2 = b.tconv("m2", m1, w)
            m3 = b.conv("m3", m2, 2 * w)
            full_res_skips = (p2,)
        entry = b.concat("fuse", p3, m3)

    t1 = b.conv("t1", entry, 4 * w)
    t2 = b.conv("t2", t1, 8 * w, stride=2)
    t3 = b.conv("t3", t2, 8 * w)
    d1 = b.tconv("d1", t3, 4 * w)
    c2 = b.concat("skip1", d1, entry)
    d2 = b.conv("d2", c2, 4 * w)
    d3 = b.tconv("d3", d2, 2 * w)
    c3 = b.concat("skip2", d3, *full_res_skips)
    d4 = b.conv("d4", c3, w)
    out = b.conv("d5", d4, bands, act=ReLU(), bn=False)
    g.outputs = [out]
    g.params.variant = variant
    g.params.bands = bands
    return g


def build_discriminator(bands: int = 4, use_bn: bool = False,
                        width: int = DEFAULT_WIDTH) -> ComputeGraph:
    """Fully convolutional patch discriminator on concat(condition, candidate)."""
    w = width
    g = ComputeGraph({"condition": bands, "candidate": bands}, name="D")
    b = _Builder(g, use_bn)
    x = b.concat("pair", "condition", "candidate")
    x = b.conv("c1", x, 2 * w, stride=2)
    x = b.conv("c2", x, 4 * w, stride=2)
    x = b.conv("c3", x, 8 * w, stride=2)
    x = b.conv("c4", x, 8 * w)
    x = b.conv("c5", x, 1, act=Sigmoid(), bn=False)
    g.outputs = [x]
    g.params.bands = bands
    return g
