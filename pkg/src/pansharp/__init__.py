"""Pan-sharpening toolkit: raster I/O, Wald degradation, classical and GAN fusion, quality metrics."""
from .fusion import FusionMethod, fuse, fuse_naive
from .metrics import MetricReport, QConfig, evaluate
from .protocol import TrainingSample, synth_sample, wald_degrade
from .raster import MultiBandImage, ResampleFilter, downsample, load_msrf, save_msrf, upsample

__all__ = [
    "FusionMethod", "MetricReport", "MultiBandImage", "QConfig", "ResampleFilter", "TrainingSample",
    "downsample", "evaluate", "fuse", "fuse_naive", "load_msrf", "save_msrf", "synth_sample",
    "upsample", "wald_degrade",
]
__version__ = "0.1.0"
