"""Exact linear decompositions of Transformer decoder embeddings, with the
indicators and statistical protocols built on top of them."""

__version__ = "0.1.0"

from .errors import DcplError, NumericalError, ValidationError
from .model import Model, ModelConfig, init_random, interpolate_checkpoints
from .io import Sentence, load_model, read_corpus, save_model, write_corpus
from .forward import ForwardTrace, decode_forced, encode, greedy_decode
from .beam import decode_beam
from .decomp_sl import decompose_sl
from .decomp_tok import decompose_tok
from .indicators import INDICATORS, IndicatorSeries, cosine, importance_mu, norm_ratio
from .stats import dtw_distance, pearson, pitman_test, spearman, z_normalize

__all__ = [
    "DcplError", "NumericalError", "ValidationError",
    "Model", "ModelConfig", "init_random", "interpolate_checkpoints",
    "Sentence", "load_model", "read_corpus", "save_model", "write_corpus",
    "ForwardTrace", "decode_forced", "encode", "greedy_decode", "decode_beam",
    "decompose_sl", "decompose_tok",
    "INDICATORS", "IndicatorSeries", "cosine", "importance_mu", "norm_ratio",
    "dtw_distance", "pearson", "pitman_test", "spearman", "z_normalize",
]
