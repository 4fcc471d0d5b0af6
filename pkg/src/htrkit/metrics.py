"""Corpus-level CER, WER and string accuracy.

All three rates pool at the corpus level: summed Levenshtein distance
over summed reference length, which in general differs from averaging
per-line rates.  Character distances run over Unicode scalar values
after NFC normalization, spaces included; word tokens are maximal runs
of non-whitespace.  Leading and trailing whitespace is trimmed before
comparison.
"""

from __future__ import annotations

import json
import unicodedata
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence


@dataclass(frozen=True)
class EvalPair:
    """One prediction/reference line, keyed by its file stem."""

    id: str
    pred: str
    truth: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("pair id must be non-empty")


@dataclass(frozen=True)
class LineScore:
    id: str
    char_dist: int
    char_len: int
    word_dist: int
    word_len: int
    exact_match: bool


@dataclass(frozen=True)
class EvalReport:
    n: int
    cer: float
    wer: float
    acc: float
    per_line: tuple[LineScore, ...]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "cer": self.cer,
            "wer": self.wer,
            "acc": self.acc,
            "lines": [
                {
                    "id": line.id,
                    "char_dist": line.char_dist,
                    "char_len": line.char_len,
                    "word_dist": line.word_dist,
                    "word_len": line.word_len,
                    "exact_match": line.exact_match,
                }
                for line in self.per_line
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimum unit-cost insertions, deletions and substitutions a -> b."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, item_a in enumerate(a, start=1):
        current = [i]
        for j, item_b in enumerate(b, start=1):
            if item_a == item_b:
                current.append(previous[j - 1])
            else:
                current.append(1 + min(previous[j - 1], previous[j], current[-1]))
        previous = current
    return previous[-1]


def _normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text.strip())


def _rate(dist: int, length: int) -> float:
    if length == 0:
        return 0.0 if dist == 0 else float("inf")
    return 100.0 * dist / length


def evaluate(pairs: Sequence[EvalPair]) -> EvalReport:
    """Score prediction/reference pairs into one corpus report.

    Empty references contribute their full distance to the numerator and
    nothing to the denominator, which can push CER past 100%; such lines
    trigger a warning.
    """
    if not pairs:
        raise ValueError("cannot evaluate an empty pair list")

    per_line: list[LineScore] = []
    for pair in sorted(pairs, key=lambda p: p.id):
        pred = _normalize(pair.pred)
        truth = _normalize(pair.truth)
        if not truth:
            warnings.warn(
                f"pair {pair.id!r}: empty reference contributes distance "
                "without length and may push CER above 100%",
                stacklevel=2,
            )
        per_line.append(
            LineScore(
                id=pair.id,
                char_dist=levenshtein(pred, truth),
                char_len=len(truth),
                word_dist=levenshtein(pred.split(), truth.split()),
                word_len=len(truth.split()),
                exact_match=pred == truth,
            )
        )

    char_dist = sum(line.char_dist for line in per_line)
    char_len = sum(line.char_len for line in per_line)
    word_dist = sum(line.word_dist for line in per_line)
    word_len = sum(line.word_len for line in per_line)
    exact = sum(1 for line in per_line if line.exact_match)
    return EvalReport(
        n=len(per_line),
        cer=_rate(char_dist, char_len),
        wer=_rate(word_dist, word_len),
        acc=100.0 * exact / len(per_line),
        per_line=tuple(per_line),
    )


def evaluate_dirs(pred_dir: str | Path, ref_dir: str | Path) -> EvalReport:
    """Pair up same-stem ``.txt`` files from two directories and score them.

    Stems present on only one side are an error naming every offender.
    """
    pred_dir, ref_dir = Path(pred_dir), Path(ref_dir)
    preds = {p.stem: p for p in pred_dir.glob("*.txt")}
    refs = {p.stem: p for p in ref_dir.glob("*.txt")}
    missing_pred = sorted(set(refs) - set(preds))
    missing_ref = sorted(set(preds) - set(refs))
    if missing_pred or missing_ref:
        parts = []
        if missing_pred:
            parts.append(f"stems missing from predictions: {', '.join(missing_pred)}")
        if missing_ref:
            parts.append(f"stems missing from references: {', '.join(missing_ref)}")
        raise ValueError("; ".join(parts))
    if not preds:
        raise ValueError("no matched prediction/reference pairs")

    pairs = [
        EvalPair(
            id=stem,
            pred=preds[stem].read_text(encoding="utf-8"),
            truth=refs[stem].read_text(encoding="utf-8"),
        )
        for stem in sorted(preds)
    ]
    return evaluate(pairs)


def format_table(report: EvalReport) -> str:
    """Render the corpus numbers as a small table, one decimal each."""
    header = f"{'n':>6}  {'CER':>6}  {'WER':>6}  {'ACC':>6}"
    row = (
        f"{report.n:>6}  {report.cer:>6.1f}  {report.wer:>6.1f}  {report.acc:>6.1f}"
    )
    return header + "\n" + row
