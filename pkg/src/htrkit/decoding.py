"""CTC decoding: best-path (greedy) and prefix beam search with LM fusion.

The beam search is timestep-synchronous over output prefixes.  Each
prefix tracks the natural-log mass of paths ending in blank and paths
ending in its last character; identical prefixes are merged with
log-sum-exp.  Hypotheses are ranked by the fused score

    Q = ln P(prefix | x) + alpha * ln(10) * lm_log10(prefix) + beta * len(prefix)

where the acoustic term is the marginal over all paths collapsing to the
prefix, the LM term accumulates character scores in log10 (converted at
fusion time), and beta is a per-character insertion bonus.  All
probability accumulation happens in log space; the only probability-
domain products live in the brute-force enumeration oracles.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import groupby, product
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .emissions import Alphabet, EmissionMatrix, load_emissions
from .lm import BOS, LN10, NGramModel

NEG_INF = float("-inf")


def _logaddexp(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


@dataclass(frozen=True)
class DecodeParams:
    """Beam search knobs.  Without an LM, alpha is treated as zero."""

    beam_width: int = 100
    alpha: float = 0.8
    beta: float = 2.0
    lm: NGramModel | None = None

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be >= 1, got {self.beam_width}")
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not math.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta}")


@dataclass
class BeamHypothesis:
    """A prefix with its blank/non-blank path masses and fused score."""

    prefix: str
    log_p_blank: float
    log_p_nonblank: float
    lm_log10: float
    score_q: float

    @property
    def total_logprob(self) -> float:
        """Natural-log marginal probability of the prefix."""
        return _logaddexp(self.log_p_blank, self.log_p_nonblank)

    @classmethod
    def scored(
        cls,
        prefix: str,
        log_p_blank: float,
        log_p_nonblank: float,
        lm_log10: float,
        alpha: float,
        beta: float,
    ) -> "BeamHypothesis":
        acoustic = _logaddexp(log_p_blank, log_p_nonblank)
        q = acoustic + alpha * LN10 * lm_log10 + beta * len(prefix)
        return cls(prefix, log_p_blank, log_p_nonblank, lm_log10, q)


@dataclass(frozen=True)
class DecodeResult:
    transcript: str
    score_q: float
    acoustic_logprob: float


def collapse(path: Sequence[int], alphabet: Alphabet) -> str:
    """Merge adjacent repeats, then delete blanks.

    The order matters: a blank between equal characters keeps both, so
    [a, blank, a] collapses to "aa" while [a, a] collapses to "a".
    """
    blank = alphabet.blank_index
    out: list[str] = []
    for index, _ in groupby(path):
        if not 0 <= index < alphabet.size:
            raise IndexError(f"class index {index} out of range for size {alphabet.size}")
        if index != blank:
            out.append(alphabet.symbols[index])
    return "".join(out)


def greedy_decode(matrix: EmissionMatrix) -> DecodeResult:
    """Best-path decoding: per-row argmax, then collapse.

    Ties in a row break toward the lowest class index.  The acoustic
    log-probability is the natural log of the chosen path's product.
    """
    path = np.argmax(matrix.probs, axis=1)
    chosen = matrix.probs[np.arange(matrix.timesteps), path]
    with np.errstate(divide="ignore"):
        logprob = float(np.sum(np.log(chosen)))
    transcript = collapse(path.tolist(), matrix.alphabet)
    return DecodeResult(transcript=transcript, score_q=logprob, acoustic_logprob=logprob)


def path_probability(matrix: EmissionMatrix, path: Sequence[int]) -> float:
    """Probability of one specific frame-level path: the entry product."""
    if len(path) != matrix.timesteps:
        raise ValueError(
            f"path length {len(path)} != {matrix.timesteps} timesteps"
        )
    prob = 1.0
    for t, index in enumerate(path):
        if not 0 <= index < matrix.classes:
            raise IndexError(f"class index {index} out of range at timestep {t}")
        prob *= float(matrix.probs[t, index])
    return prob


ORACLE_MAX_TIMESTEPS = 8
ORACLE_MAX_CLASSES = 6


def _check_oracle_limit(matrix: EmissionMatrix, max_timesteps: int, max_classes: int) -> None:
    if matrix.timesteps > max_timesteps or matrix.classes > max_classes:
        raise ValueError(
            f"enumeration oracle limited to T <= {max_timesteps}, S <= {max_classes}; "
            f"got T={matrix.timesteps}, S={matrix.classes}"
        )


def marginal_distribution(
    matrix: EmissionMatrix,
    max_timesteps: int = ORACLE_MAX_TIMESTEPS,
    max_classes: int = ORACLE_MAX_CLASSES,
) -> dict[str, float]:
    """Exact transcript distribution by enumerating all S^T paths.

    Brute-force oracle; usable only for tiny instances.
    """
    _check_oracle_limit(matrix, max_timesteps, max_classes)
    dist: dict[str, float] = {}
    classes = range(matrix.classes)
    for path in product(classes, repeat=matrix.timesteps):
        transcript = collapse(path, matrix.alphabet)
        dist[transcript] = dist.get(transcript, 0.0) + path_probability(matrix, path)
    return dist


def marginal_probability(
    matrix: EmissionMatrix,
    transcript: str,
    max_timesteps: int = ORACLE_MAX_TIMESTEPS,
    max_classes: int = ORACLE_MAX_CLASSES,
) -> float:
    """Exact P(transcript | matrix): sum over all paths that collapse to it."""
    _check_oracle_limit(matrix, max_timesteps, max_classes)
    total = 0.0
    classes = range(matrix.classes)
    for path in product(classes, repeat=matrix.timesteps):
        if collapse(path, matrix.alphabet) == transcript:
            total += path_probability(matrix, path)
    return total


def prefix_beam_hypotheses(
    matrix: EmissionMatrix, params: DecodeParams
) -> list[BeamHypothesis]:
    """Run the beam search and return the surviving hypotheses, best first.

    Ordering is by descending fused score with lexicographic transcript
    tie-breaking, which makes results deterministic.
    """
    alphabet = matrix.alphabet
    blank = alphabet.blank_index
    symbols = alphabet.symbols
    index_of = {ch: i for i, ch in enumerate(symbols)}
    use_lm = params.lm is not None and params.alpha > 0.0
    alpha, beta = (params.alpha if use_lm else 0.0), params.beta

    with np.errstate(divide="ignore"):
        logp = np.log(matrix.probs)

    # prefix -> [log_p_blank, log_p_nonblank]
    beam: dict[str, list[float]] = {"": [0.0, NEG_INF]}
    lm_acc: dict[str, float] = {"": 0.0}
    # LM scores get reused heavily across beams and timesteps.
    lm_cache: dict[str, list[float]] = {}

    def char_scores(prefix: str) -> list[float]:
        cached = lm_cache.get(prefix)
        if cached is None:
            context = (BOS, *prefix)
            cached = [
                params.lm.score(context, symbols[c]) for c in range(1, len(symbols))
            ]
            lm_cache[prefix] = cached
        return cached

    for t in range(matrix.timesteps):
        row = logp[t]
        row_list = [float(v) for v in row]
        next_beam: dict[str, list[float]] = {}
        next_lm: dict[str, float] = {}

        for prefix, (lpb, lpnb) in beam.items():
            total = _logaddexp(lpb, lpnb)
            lm_here = lm_acc[prefix]
            scores = char_scores(prefix) if use_lm else None

            slot = next_beam.get(prefix)
            if slot is None:
                slot = [NEG_INF, NEG_INF]
                next_beam[prefix] = slot
                next_lm[prefix] = lm_here
            # Blank keeps the prefix; any path may take it.
            slot[0] = _logaddexp(slot[0], total + row_list[blank])
            # Repeating the last character merges into the prefix.
            if prefix:
                slot[1] = _logaddexp(slot[1], lpnb + row_list[index_of[prefix[-1]]])

            for c in range(1, len(symbols)):
                ch = symbols[c]
                extended = prefix + ch
                # A repeated character needs a blank in between, so only
                # blank-terminated mass extends; otherwise all mass does.
                if prefix and prefix[-1] == ch:
                    mass = lpb + row_list[c]
                else:
                    mass = total + row_list[c]
                if mass == NEG_INF:
                    continue
                ext_slot = next_beam.get(extended)
                if ext_slot is None:
                    next_beam[extended] = [NEG_INF, mass]
                    next_lm[extended] = lm_here + (scores[c - 1] if use_lm else 0.0)
                else:
                    ext_slot[1] = _logaddexp(ext_slot[1], mass)

        ranked = sorted(
            (
                item
                for item in next_beam.items()
                if item[1][0] != NEG_INF or item[1][1] != NEG_INF
            ),
            key=lambda item: (
                -(
                    _logaddexp(item[1][0], item[1][1])
                    + alpha * LN10 * next_lm[item[0]]
                    + beta * len(item[0])
                ),
                item[0],
            ),
        )
        beam = dict(ranked[: params.beam_width])
        lm_acc = {prefix: next_lm[prefix] for prefix in beam}

    hypotheses = [
        BeamHypothesis.scored(prefix, lpb, lpnb, lm_acc[prefix], alpha, beta)
        for prefix, (lpb, lpnb) in beam.items()
    ]
    hypotheses.sort(key=lambda h: (-h.score_q, h.prefix))
    return hypotheses


def prefix_beam_search(
    matrix: EmissionMatrix, params: DecodeParams | None = None, n_best: int = 1
) -> list[DecodeResult]:
    """Decode one emission matrix, returning up to ``n_best`` results."""
    if n_best < 1:
        raise ValueError(f"n_best must be >= 1, got {n_best}")
    if params is None:
        params = DecodeParams()
    hypotheses = prefix_beam_hypotheses(matrix, params)
    return [
        DecodeResult(
            transcript=h.prefix,
            score_q=h.score_q,
            acoustic_logprob=h.total_logprob,
        )
        for h in hypotheses[:n_best]
    ]


def decode_directory(
    emissions_dir: str | Path,
    params: DecodeParams | None = None,
    out_dir: str | Path | None = None,
    mode: str = "beam",
    workers: int = 1,
    log: Callable[[str], None] | None = None,
) -> dict:
    """Decode every ``*.emit`` file in a directory to a same-stem ``.txt``.

    Files must share one alphabet; a file that fails to load, mismatches
    the alphabet, or fails to decode is reported in the summary and the
    job continues.  Results are independent of worker scheduling: files
    are processed from a sorted listing and outputs are keyed by stem.

    Returns a summary dict ``{"files": n_ok, "failures": [...],
    "mean_score": mean Q or None}``.
    """
    if mode not in ("beam", "greedy"):
        raise ValueError(f"mode must be 'beam' or 'greedy', got {mode!r}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if params is None:
        params = DecodeParams()
    emissions_dir = Path(emissions_dir)
    out_dir = Path(out_dir) if out_dir is not None else emissions_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    files = sorted(emissions_dir.glob("*.emit"))
    failures: list[dict] = []

    def load_one(path: Path):
        try:
            return path, load_emissions(path), None
        except Exception as exc:  # noqa: BLE001 - per-file errors become report entries
            return path, None, f"{type(exc).__name__}: {exc}"

    if workers == 1 or len(files) <= 1:
        loaded = [load_one(p) for p in files]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            loaded = list(pool.map(load_one, files))

    reference: Alphabet | None = None
    for _, matrix, err in loaded:
        if err is None:
            reference = matrix.alphabet
            break

    decodable: list[tuple[Path, EmissionMatrix]] = []
    for path, matrix, err in loaded:
        if err is not None:
            failures.append({"file": path.name, "error": err})
        elif matrix.alphabet != reference:
            failures.append(
                {"file": path.name, "error": "alphabet differs from the rest of the job"}
            )
        else:
            decodable.append((path, matrix))

    def decode_one(item: tuple[Path, EmissionMatrix]):
        path, matrix = item
        try:
            if mode == "greedy":
                result = greedy_decode(matrix)
            else:
                result = prefix_beam_search(matrix, params, n_best=1)[0]
            target = out_dir / (path.stem + ".txt")
            target.write_text(result.transcript + "\n", encoding="utf-8")
            if log is not None:
                log(f"{path.name} -> {target.name}")
            return path, result, None
        except Exception as exc:  # noqa: BLE001
            return path, None, f"{type(exc).__name__}: {exc}"

    if workers == 1 or len(decodable) <= 1:
        outcomes = [decode_one(item) for item in decodable]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(decode_one, decodable))

    scores: list[float] = []
    for path, result, err in outcomes:
        if err is not None:
            failures.append({"file": path.name, "error": err})
        else:
            scores.append(result.score_q)

    failures.sort(key=lambda f: f["file"])
    return {
        "files": len(scores),
        "failures": failures,
        "mean_score": (sum(scores) / len(scores)) if scores else None,
    }


def summary_json(summary: dict) -> str:
    """Stable JSON rendering of a decode-directory summary."""
    return json.dumps(summary, ensure_ascii=False, sort_keys=True)
