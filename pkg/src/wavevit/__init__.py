"""Wavelet-downsampled attention backbone on a minimal rank-4 autograd engine."""

from . import kernels
from .accounting import attention_score_macs, count_macs
from .backbone import PRESETS, build_model, count_params, forward, preset_spec
from .errors import ConfigError, ContractError, FormatError, NumericsError, ShapeError
from .gradcheck import GradCheckReport, grad_check
from .harness import TrainConfig, evaluate, gen_dataset, train
from .tensor import Tensor4, backward, from_matrix, no_grad, set_debug_checks, tensor, zero_grad
from .wavelet import Subbands, dwt2d_haar, idwt2d_haar, subbands_pack, subbands_unpack

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "FormatError",
    "GradCheckReport",
    "NumericsError",
    "PRESETS",
    "ShapeError",
    "Subbands",
    "Tensor4",
    "TrainConfig",
    "attention_score_macs",
    "backward",
    "build_model",
    "count_macs",
    "count_params",
    "dwt2d_haar",
    "evaluate",
    "forward",
    "from_matrix",
    "gen_dataset",
    "grad_check",
    "idwt2d_haar",
    "kernels",
    "no_grad",
    "preset_spec",
    "set_debug_checks",
    "subbands_pack",
    "subbands_unpack",
    "tensor",
    "train",
    "zero_grad",
]
