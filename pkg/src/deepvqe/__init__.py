"""Streaming speech enhancement: joint echo cancellation, noise suppression
and dereverberation as a causal tensor pipeline."""

from .audio import AudioBuffer, read_wav, write_wav
from .config import ModelConfig, count_parameters, preset, read_config, write_config
from .engine import (
    ChunkFifo,
    PassthroughEngine,
    RtfReport,
    StreamingEngine,
    StreamingEngine48k,
    measure_rtf,
)
from .errors import (
    ConfigError,
    DeepVqeError,
    FrameContractError,
    ShapeError,
    WeightFormatError,
)
from .model import BlockTrace, Model, build_model
from .scenario import EchoScenario, ErleReport, ScenarioParams, delay_accuracy, erle, synth_scenario
from .stft import ComplexSpectrum, StftConfig, compress, decompress, istft, stft
from .weights import WeightStore, identity_mask_weights, random_init
from .weights import load as load_weights
from .weights import save as save_weights

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "BlockTrace",
    "ChunkFifo",
    "ComplexSpectrum",
    "ConfigError",
    "DeepVqeError",
    "EchoScenario",
    "ErleReport",
    "FrameContractError",
    "Model",
    "ModelConfig",
    "PassthroughEngine",
    "RtfReport",
    "ScenarioParams",
    "ShapeError",
    "StftConfig",
    "StreamingEngine",
    "StreamingEngine48k",
    "WeightFormatError",
    "WeightStore",
    "build_model",
    "compress",
    "count_parameters",
    "decompress",
    "delay_accuracy",
    "erle",
    "identity_mask_weights",
    "istft",
    "load_weights",
    "measure_rtf",
    "preset",
    "random_init",
    "read_config",
    "read_wav",
    "save_weights",
    "stft",
    "synth_scenario",
    "write_config",
    "write_wav",
]
