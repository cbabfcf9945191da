from .gradcheck import grad_check
from .graph import (BatchNorm, ComputeGraph, Concat, Conv, LeakyReLU, ParameterStore, ReLU,
                    Sigmoid, TConv, backward, forward)
from .optim import AdamConfig, adam_step

__all__ = [
    "AdamConfig", "BatchNorm", "ComputeGraph", "Concat", "Conv", "LeakyReLU", "ParameterStore",
    "ReLU", "Sigmoid", "TConv", "adam_step", "backward", "forward", "grad_check",
]
