"""Character alphabets and per-timestep emission matrices.

A recognizer hands the decoder a T x S grid of probability distributions
over an alphabet whose class 0 is the CTC blank.  This module defines the
two data types and the EMIT-v1 text format used to exchange emission
matrices with any external recognizer.

EMIT-v1 layout (UTF-8 text):
  line 1      single-line JSON header:
              {"format": "emit-v1", "timesteps": T, "classes": S,
               "alphabet": ["<blank>", ...], "blank_index": 0}
  lines 2..T+1  S space-separated decimal floats; line t+1 holds the
              distribution at timestep t.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BLANK_TOKEN = "<blank>"
EMIT_FORMAT = "emit-v1"

# Loose enough for 32-bit-float exporters, tight enough to catch raw logits.
ROW_SUM_TOL = 1e-4


class EmissionFormatError(ValueError):
    """An EMIT-v1 file or matrix violates the format contract."""


@dataclass(frozen=True)
class Alphabet:
    """Ordered character inventory with the CTC blank at index 0.

    The blank is the reserved token ``<blank>`` and is a distinct class
    from the space character; space may appear as an ordinary symbol.
    """

    symbols: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.symbols) < 2:
            raise EmissionFormatError(
                f"alphabet needs the blank plus at least one symbol, got {len(self.symbols)}"
            )
        if self.symbols[0] != BLANK_TOKEN:
            raise EmissionFormatError(
                f"alphabet[0] must be {BLANK_TOKEN!r}, got {self.symbols[0]!r}"
            )
        for sym in self.symbols[1:]:
            if len(sym) != 1:
                raise EmissionFormatError(
                    f"non-blank symbols must be single characters, got {sym!r}"
                )
        if len(set(self.symbols)) != len(self.symbols):
            seen: set[str] = set()
            dupes = sorted({s for s in self.symbols if s in seen or seen.add(s)})
            raise EmissionFormatError(f"duplicate symbols in alphabet: {dupes!r}")

    @classmethod
    def from_chars(cls, chars: Iterable[str]) -> "Alphabet":
        """Build an alphabet from the non-blank characters, blank prepended."""
        return cls((BLANK_TOKEN, *chars))

    @property
    def blank_index(self) -> int:
        return 0

    @property
    def size(self) -> int:
        return len(self.symbols)

    def char(self, index: int) -> str:
        if not 0 <= index < len(self.symbols):
            raise IndexError(f"class index {index} out of range for size {self.size}")
        return self.symbols[index]

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise KeyError(f"symbol {symbol!r} not in alphabet") from None


@dataclass(frozen=True, eq=False)
class EmissionMatrix:
    """T x S per-timestep probability distributions over an alphabet.

    Rows must sum to 1 within ``ROW_SUM_TOL`` and every entry must lie in
    [0, 1].  The probability array is frozen after validation so matrices
    can be shared freely across workers.
    """

    probs: np.ndarray
    alphabet: Alphabet

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2:
            raise EmissionFormatError(f"emissions must be 2-D, got shape {probs.shape}")
        t, s = probs.shape
        if t < 1:
            raise EmissionFormatError("emission matrix needs at least one timestep")
        if s != self.alphabet.size:
            raise EmissionFormatError(
                f"matrix has {s} classes but alphabet has {self.alphabet.size}"
            )
        if not np.all(np.isfinite(probs)):
            raise EmissionFormatError("emission matrix contains non-finite entries")
        if np.any(probs < 0):
            t_bad, s_bad = np.argwhere(probs < 0)[0]
            raise EmissionFormatError(
                f"negative entry {probs[t_bad, s_bad]!r} at row {t_bad}, class {s_bad}"
            )
        if np.any(probs > 1):
            t_bad, s_bad = np.argwhere(probs > 1)[0]
            raise EmissionFormatError(
                f"entry {probs[t_bad, s_bad]!r} > 1 at row {t_bad}, class {s_bad}"
            )
        sums = probs.sum(axis=1)
        bad = np.abs(sums - 1.0) > ROW_SUM_TOL
        if np.any(bad):
            row = int(np.argmax(bad))
            raise EmissionFormatError(
                f"row {row} not normalized: sum is {sums[row]!r}"
            )
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def timesteps(self) -> int:
        return self.probs.shape[0]

    @property
    def classes(self) -> int:
        return self.probs.shape[1]


def softmax_rows(logits: Sequence[Sequence[float]] | np.ndarray, alphabet: Alphabet) -> EmissionMatrix:
    """Exp-normalize each row of a raw score matrix.

    Adding a constant to a logit row leaves its output row unchanged, so
    recognizers may export unnormalized scores.
    """
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 2:
        raise EmissionFormatError(f"logits must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise EmissionFormatError("logits contain non-finite entries")
    shifted = arr - arr.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    probs = ex / ex.sum(axis=1, keepdims=True)
    return EmissionMatrix(probs, alphabet)


def load_emissions(path: str | Path) -> EmissionMatrix:
    """Read and validate an EMIT-v1 file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise EmissionFormatError(f"{path}: empty file")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise EmissionFormatError(f"{path}: malformed header: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != EMIT_FORMAT:
        raise EmissionFormatError(f"{path}: header is not an {EMIT_FORMAT} object")

    try:
        timesteps = int(header["timesteps"])
        classes = int(header["classes"])
        symbols = header["alphabet"]
        blank_index = int(header["blank_index"])
    except (KeyError, TypeError, ValueError) as exc:
        raise EmissionFormatError(f"{path}: malformed header field: {exc}") from None
    if blank_index != 0:
        raise EmissionFormatError(f"{path}: blank_index must be 0, got {blank_index}")
    if not isinstance(symbols, list) or len(symbols) != classes:
        raise EmissionFormatError(
            f"{path}: header says classes={classes} but alphabet lists "
            f"{len(symbols) if isinstance(symbols, list) else 'no'} symbols"
        )
    alphabet = Alphabet(tuple(symbols))

    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != timesteps:
        raise EmissionFormatError(
            f"{path}: header says timesteps={timesteps} but file has {len(body)} rows"
        )
    rows = np.empty((timesteps, classes), dtype=np.float64)
    for t, line in enumerate(body):
        fields = line.split()
        if len(fields) != classes:
            raise EmissionFormatError(
                f"{path}: row {t} has {len(fields)} values, expected {classes}"
            )
        try:
            rows[t] = [float(f) for f in fields]
        except ValueError as exc:
            raise EmissionFormatError(f"{path}: row {t}: {exc}") from None
    try:
        return EmissionMatrix(rows, alphabet)
    except EmissionFormatError as exc:
        raise EmissionFormatError(f"{path}: {exc}") from None


def save_emissions(matrix: EmissionMatrix, path: str | Path) -> None:
    """Write an EMIT-v1 file readable by :func:`load_emissions`.

    Values are rendered with shortest-exact float notation, so a
    save/load round trip reproduces the matrix bit for bit.
    """
    path = Path(path)
    header = {
        "format": EMIT_FORMAT,
        "timesteps": matrix.timesteps,
        "classes": matrix.classes,
        "alphabet": list(matrix.alphabet.symbols),
        "blank_index": matrix.alphabet.blank_index,
    }
    out = [json.dumps(header, ensure_ascii=False, separators=(", ", ": "))]
    for row in matrix.probs:
        out.append(" ".join(repr(float(v)) for v in row))
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
