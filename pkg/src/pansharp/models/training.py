"""Alternating adversarial training of a generator against the patch discriminator."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import DimensionMismatch, NonFiniteLoss
from ..nn.graph import ComputeGraph, ParameterStore
from ..nn.optim import AdamConfig, adam_step
from ..protocol import TrainingSample
from ..raster import upsample
from .losses import discriminator_loss, generator_loss
from .networks import DEFAULT_WIDTH, build_discriminator, build_generator, canonical_variant, generator_inputs

PROFILES = {
    "desk": {"ms_patch": 16, "batch": 4},
    "paper": {"ms_patch": 64, "batch": 8},
}


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0
    beta: float = 100.0
    batch: int = 4
    adam: AdamConfig = field(default_factory=AdamConfig)
    steps: int = 300
    seed: int = 0
    use_bn: bool = False
    ms_patch: int = 16
    ratio: int = 4
    width: int = DEFAULT_WIDTH

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be > 0")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")

    @classmethod
    def profile(cls, name: str, **overrides) -> TrainConfig:
        """Preset geometry: ``desk`` (MS 16 / PAN 64, batch 4) or ``paper`` (MS 64 / PAN 256, batch 8)."""
        if name not in PROFILES:
            raise ValueError(f"unknown profile {name!r}; expected one of {tuple(PROFILES)}")
        return replace(cls(), **{**PROFILES[name], **overrides})


@dataclass
class TrainHistory:
    g_loss: list[float] = field(default_factory=list)
    g_adv: list[float] = field(default_factory=list)
    g_l1: list[float] = field(default_factory=list)
    d_loss: list[float] = field(default_factory=list)
    d_real_mean: list[float] = field(default_factory=list)
    d_fake_mean: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.g_loss)

    def append(self, **row: float) -> None:
        for k, v in row.items():
            getattr(self, k).append(float(v))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, k))) for k in self.__dataclass_fields__)


def _stack(dataset: list[TrainingSample], ratio: int) -> dict[str, np.ndarray]:
    first = dataset[0]
    for s in dataset:
        if s.ms.shape != first.ms.shape or s.pan.shape != first.pan.shape:
            raise DimensionMismatch("all training samples must share one patch geometry")
    return {
        "ms": np.stack([s.ms.data for s in dataset]),
        "ms_up": np.stack([upsample(s.ms, ratio).data for s in dataset]),
        "pan": np.stack([s.pan.data for s in dataset]),
        "ref": np.stack([s.reference.data for s in dataset]),
    }


class _BatchOrder:
    """Seeded epoch permutations, consumed ``batch`` indices at a time."""

    def __init__(self, n: int, batch: int, seed: int):
        self.n, self.batch = n, batch
        self.rng = np.random.default_rng([seed, 1])
        self.queue: list[int] = []

    def next(self) -> np.ndarray:
        while len(self.queue) < self.batch:
            self.queue.extend(self.rng.permutation(self.n).tolist())
        out, self.queue = self.queue[: self.batch], self.queue[self.batch:]
        return np.asarray(out)


def build_pair(variant: str, bands: int, cfg: TrainConfig) -> tuple[ComputeGraph, ComputeGraph]:
    """Freshly initialised generator and discriminator for ``cfg.seed``."""
    gen = build_generator(variant, bands, cfg.use_bn, cfg.width)
    disc = build_discriminator(bands, cfg.use_bn, cfg.width)
    gen.init_params(np.random.default_rng([cfg.seed, 2]), std=None)
    disc.init_params(np.random.default_rng([cfg.seed, 3]), std=None)
    return gen, disc


def discriminator_step(gen_out, cond, ref, disc: ComputeGraph, cfg: TrainConfig):
    """One D update on real and fake pairs evaluated as a single batch."""
    n = ref.shape[0]
    out = disc.forward({"condition": np.concatenate([cond, cond]),
                        "candidate": np.concatenate([ref, gen_out])})[disc.outputs[0]]
    d_real, d_fake = out[:n], out[n:]
    loss, g_real, g_fake = discriminator_loss(d_real, d_fake)
    grads = disc.backward({disc.outputs[0]: np.concatenate([g_real, g_fake])})
    adam_step(disc.params, grads, cfg.adam)
    return loss, float(d_real.mean()), float(d_fake.mean())


def generator_step(gen: ComputeGraph, disc: ComputeGraph, fake, cond, ref, cfg: TrainConfig):
    """One G update through the current (frozen) discriminator.

    ``fake`` must be the output of the forward pass whose tape ``gen`` holds.
    """
    d_fake = disc.forward({"condition": cond, "candidate": fake},
                          update_stats=False)[disc.outputs[0]]
    loss, parts, g_d, g_fused = generator_loss(d_fake, fake, ref, cfg.alpha, cfg.beta)
    _, igrads = disc.backward({disc.outputs[0]: g_d}, input_grads=True)
    grads = gen.backward({gen.outputs[0]: igrads["candidate"] + g_fused})
    adam_step(gen.params, grads, cfg.adam)
    return loss, parts


def train(dataset: list[TrainingSample], variant: str, cfg: TrainConfig | None = None,
          log=None) -> tuple[tuple[ParameterStore, ParameterStore], TrainHistory]:
    """Train ``variant`` on ``dataset`` and return ``((G weights, D weights), history)``.

    Each step updates D once on (reference, current G output), both
    conditioned on the bicubic up-sampled MS, then updates G once through
    the updated D. Batches come from seeded epoch permutations so a run is
    fully determined by ``cfg.seed``.
    """
    cfg = cfg or TrainConfig()
    variant = canonical_variant(variant)
    if not dataset:
        raise ValueError("dataset is empty")
    bands = dataset[0].ms.bands
    arrays = _stack(dataset, cfg.ratio)
    gen, disc = build_pair(variant, bands, cfg)
    ms_key, pan_key = generator_inputs(variant)
    order = _BatchOrder(len(dataset), cfg.batch, cfg.seed)
    hist = TrainHistory()

    for step in range(cfg.steps):
        idx = order.next()
        cond, ref = arrays["ms_up"][idx], arrays["ref"][idx]
        gen_in = {ms_key: arrays[ms_key][idx], pan_key: arrays["pan"][idx]}
        try:
            fake = gen.forward(gen_in)[gen.outputs[0]]
            d_loss, d_real_mean, d_fake_mean = discriminator_step(fake, cond, ref, disc, cfg)
            g_loss, parts = generator_step(gen, disc, fake, cond, ref, cfg)
        except NonFiniteLoss as exc:
            raise NonFiniteLoss(str(exc), step=step) from exc
        hist.append(g_loss=g_loss, g_adv=parts["adv"], g_l1=parts["l1"], d_loss=d_loss,
                    d_real_mean=d_real_mean, d_fake_mean=d_fake_mean)
        if not all(np.isfinite([g_loss, d_loss])):
            raise NonFiniteLoss("non-finite loss", step=step)
        if log is not None and (step + 1) % 50 == 0:
            log(f"step {step + 1}/{cfg.steps} g={g_loss:.4f} l1={parts['l1']:.5f} d={d_loss:.4f}")
    return (gen.params, disc.params), hist
