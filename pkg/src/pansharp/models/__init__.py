from .inference import generator_from_weights, pansharpen_nn
from .losses import discriminator_loss, discriminator_loss_as_printed, generator_loss
from .networks import VARIANTS, build_discriminator, build_generator, canonical_variant
from .training import TrainConfig, TrainHistory, train
from .weights import load_weights, save_weights

__all__ = [
    "VARIANTS", "TrainConfig", "TrainHistory",
    "build_discriminator", "build_generator", "canonical_variant",
    "discriminator_loss", "discriminator_loss_as_printed", "generator_loss",
    "generator_from_weights", "load_weights", "pansharpen_nn", "save_weights", "train",
]
