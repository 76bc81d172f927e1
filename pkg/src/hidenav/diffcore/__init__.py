from .params import (Entry, ParameterSet, ShapeError, adam_step, check_finite,
                     he_uniform, soft_update)
from .tape import (Node, Tape, add, backward, concat_cols, conv2d_same,
                   flatten, gather_maps, linear, maximum, maxpool2x2, mean,
                   mse_loss, mul, mvprop, neighborhood_max3, relu,
                   select_column, select_pixel, sigmoid, softplus, sub, tanh)

__all__ = [
    "Entry", "ParameterSet", "ShapeError", "adam_step", "check_finite",
    "he_uniform", "soft_update", "Node", "Tape", "add", "backward",
    "concat_cols", "conv2d_same", "flatten", "gather_maps", "linear",
    "maximum", "maxpool2x2", "mean", "mse_loss", "mul", "mvprop",
    "neighborhood_max3", "relu", "select_column", "select_pixel", "sigmoid",
    "softplus", "sub", "tanh",
]
