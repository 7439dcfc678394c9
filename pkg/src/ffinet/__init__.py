"""Future-feedback interaction network for multi-agent motion forecasting."""

from .config import default_config, load_config
from .estimator import FFINetForecaster
from .io import read_dataset, read_scene, write_dataset, write_scene
from .model import FFINet
from .scene import RawScene, decompose_scene, reconstruct_scene
from .synthetic import generate_dataset

__version__ = "0.1.0"

__all__ = [
    "FFINet",
    "FFINetForecaster",
    "RawScene",
    "decompose_scene",
    "default_config",
    "generate_dataset",
    "load_config",
    "read_dataset",
    "read_scene",
    "reconstruct_scene",
    "write_dataset",
    "write_scene",
]
