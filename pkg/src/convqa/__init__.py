"""convqa: lightweight convolutional extractive question answering.

A small numpy/numba stack for span-extraction QA: a tape-based autodiff
engine, masked conv/attention layers, a SQuAD-style data pipeline, training
and evaluation loops, bundled model presets, and a CLI (``convqa``).
"""

from .autodiff import Graph, Tensor, backward, zero_grads
from .data import QAExample, Vocab, load_dataset, load_glove, load_squad, \
    make_batches, tokenize, tokenize_with_offsets
from .errors import (ConfigError, ConvqaError, DataError, DimensionError,
                     MaskError, ParseError, TrainingError)
from .evaluation import EvalReport, em_f1, ensemble, evaluate, normalize_answer
from .models import Model, ModelConfig, available_presets, build_model, \
    load_config, load_model, load_preset
from .span import SpanPrediction, decode_constrained, decode_naive
from .training import Adam, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Adam", "ConfigError", "ConvqaError", "DataError", "DimensionError",
    "EvalReport", "Graph", "MaskError", "Model", "ModelConfig", "ParseError",
    "QAExample", "SpanPrediction", "Tensor", "TrainConfig", "TrainingError",
    "Vocab", "available_presets", "backward", "build_model",
    "decode_constrained", "decode_naive", "em_f1", "ensemble", "evaluate",
    "load_config", "load_dataset", "load_glove", "load_model", "load_preset",
    "load_squad", "make_batches", "normalize_answer", "tokenize",
    "tokenize_with_offsets", "train", "zero_grads",
]
