from . import ops
from .conv import ConvConfigError, conv1d_depthwise_separable, depthwise_correlate
from .fft import ComplexPair, irfft, phase_ramp, rfft
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    as_tensor,
    default_dtype,
    float64,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
    nonfinite_events,
    reset_nonfinite_events,
    set_debug,
    set_default_dtype,
)

__all__ = [
    "ComplexPair",
    "ConvConfigError",
    "NonFiniteError",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "conv1d_depthwise_separable",
    "default_dtype",
    "depthwise_correlate",
    "float64",
    "get_default_dtype",
    "irfft",
    "is_grad_enabled",
    "no_grad",
    "nonfinite_events",
    "ops",
    "phase_ramp",
    "reset_nonfinite_events",
    "rfft",
    "set_debug",
    "set_default_dtype",
]
