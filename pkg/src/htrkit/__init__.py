"""Decoding and evaluation toolkit for handwritten text recognition.

Turns per-timestep character probability matrices into transcripts via
CTC greedy decoding or LM-fused prefix beam search, builds and
interpolates backoff character n-gram models, scores results with
corpus-level CER/WER/ACC, and prepares line-level datasets from page
scans with polygon annotations.
"""

__version__ = "0.1.0"

from .decoding import (
    DecodeParams,
    DecodeResult,
    collapse,
    decode_directory,
    greedy_decode,
    prefix_beam_search,
)
from .emissions import Alphabet, EmissionMatrix, load_emissions, save_emissions, softmax_rows
from .lm import NGramModel, interpolate, oov_report, read_arpa, train, write_arpa
from .metrics import EvalPair, EvalReport, evaluate, evaluate_dirs, levenshtein

__all__ = [
    "__version__",
    "Alphabet",
    "DecodeParams",
    "DecodeResult",
    "EmissionMatrix",
    "EvalPair",
    "EvalReport",
    "NGramModel",
    "collapse",
    "decode_directory",
    "evaluate",
    "evaluate_dirs",
    "greedy_decode",
    "interpolate",
    "levenshtein",
    "load_emissions",
    "oov_report",
    "prefix_beam_search",
    "read_arpa",
    "save_emissions",
    "softmax_rows",
    "train",
    "write_arpa",
]
