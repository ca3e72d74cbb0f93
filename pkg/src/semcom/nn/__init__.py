from . import backend
from .layers import (
    GDN,
    Conv2D,
    ConvTranspose2D,
    Dense,
    Layer,
    Param,
    PReLU,
    Reshape,
    Sequential,
    Sigmoid,
    gdn,
    igdn,
)
from .optim import Adam

__all__ = [
    "Adam",
    "Conv2D",
    "ConvTranspose2D",
    "Dense",
    "GDN",
    "Layer",
    "Param",
    "PReLU",
    "Reshape",
    "Sequential",
    "Sigmoid",
    "backend",
    "gdn",
    "igdn",
]
