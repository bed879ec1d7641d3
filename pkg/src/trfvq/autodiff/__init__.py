"""A minimal reverse-mode autodiff core with the primitives the models need."""
from .functional import (
    concat,
    conv1d,
    exp,
    feed_forward,
    head_dim,
    l2_norm,
    layer_norm,
    linear,
    log,
    multi_head_attention,
    relu,
    scaled_dot_attention,
    sinusoidal_positional_encoding,
    softmax,
    softplus,
    sqrt,
    square_sum,
    stop_gradient,
    straight_through,
    transformer_block,
    upsample_repeat,
)
from .optim import AdamState, adam_step, finite_difference_check
from .params import ParameterTree
from .tensor import NonFiniteError, Tensor, ensure_tensor

__all__ = [
    "AdamState", "NonFiniteError", "ParameterTree", "Tensor",
    "adam_step", "concat", "conv1d", "ensure_tensor", "exp", "feed_forward",
    "finite_difference_check", "head_dim", "l2_norm", "layer_norm", "linear", "log",
    "multi_head_attention", "relu", "scaled_dot_attention",
    "sinusoidal_positional_encoding", "softmax", "softplus", "sqrt", "square_sum",
    "stop_gradient", "straight_through", "transformer_block", "upsample_repeat",
]
