"""Backoff character n-gram language models.

Models are trained with Witten-Bell discounting, stored as per-order
tables of (log10 probability, log10 backoff weight), scored with the
standard backoff recursion, mixed by linear interpolation, and exchanged
in the ARPA text format.

Tokenization is per Unicode character, space included.  Every line is
framed as ``<s> c1 ... ck </s>``.  Tokens never seen in training score
through a dedicated ``<unk>`` entry whose floor probability is folded
into the unigram level, so :meth:`NGramModel.score` is a total function
over arbitrary characters.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

# ARPA fields are whitespace-separated, so a literal space token is written
# with this escape and mapped back on read.
SPACE_ESCAPE = "<space>"

DEFAULT_UNK_FLOOR = 1e-7
MAX_ORDER = 9

LN10 = math.log(10.0)

NgramKey = tuple[str, ...]
# value: (log10 probability, log10 backoff weight or None)
NgramEntry = tuple[float, "float | None"]


class ArpaFormatError(ValueError):
    """An ARPA file violates the format contract."""


def _log10(p: float) -> float:
    return math.log10(p) if p > 0.0 else float("-inf")


def _score_tables(
    tables: Mapping[int, dict[NgramKey, NgramEntry]],
    order: int,
    unk_log10: float,
    context: Sequence[str],
    token: str,
) -> float:
    """Backoff recursion over explicit tables.

    Shared by the public model and by the training/interpolation builders,
    which need to score with a partially assembled table set.
    """
    ctx = tuple(context)
    if order > 1:
        ctx = ctx[max(0, len(ctx) - (order - 1)):]
    else:
        ctx = ()
    acc = 0.0
    for k in range(len(ctx), 0, -1):
        sub = ctx[len(ctx) - k:]
        table = tables.get(k + 1)
        if table is not None:
            entry = table.get(sub + (token,))
            if entry is not None:
                return acc + entry[0]
        ctx_entry = tables.get(k, {}).get(sub)
        if ctx_entry is not None and ctx_entry[1] is not None:
            acc += ctx_entry[1]
    uni = tables.get(1, {}).get((token,))
    if uni is not None:
        return acc + uni[0]
    return acc + unk_log10


class NGramModel:
    """Immutable backoff n-gram model over character tokens.

    ``tables[n]`` maps n-token tuples to ``(log10_prob, log10_backoff)``;
    the backoff weight is ``None`` for n-grams that never serve as a
    context.  ``vocabulary`` is the set of real tokens (sentence markers
    included, the unknown pseudo-token excluded).
    """

    __slots__ = ("order", "tables", "unk_log10", "vocabulary")

    def __init__(self, order: int, tables: Mapping[int, dict[NgramKey, NgramEntry]]):
        if not 1 <= order <= MAX_ORDER:
            raise ValueError(f"order must be in [1, {MAX_ORDER}], got {order}")
        self.order = order
        self.tables: dict[int, dict[NgramKey, NgramEntry]] = {
            n: dict(tables.get(n, {})) for n in range(1, order + 1)
        }
        unk = self.tables[1].get((UNK,))
        self.unk_log10 = unk[0] if unk is not None else _log10(DEFAULT_UNK_FLOOR)
        self.vocabulary = frozenset(
            key[0] for key in self.tables[1] if key[0] != UNK
        ) | {BOS, EOS}

    def score(self, context: Sequence[str], token: str) -> float:
        """log10 P(token | context), backing off through shorter contexts.

        The context is truncated to the last order-1 tokens.  Unknown
        tokens score through the ``<unk>`` entry; the function never
        raises and never returns a positive value for trained models.
        """
        return _score_tables(self.tables, self.order, self.unk_log10, context, token)

    def sequence_logprob(self, text: str) -> float:
        """log10 probability of a full line framed as <s> ... </s>."""
        tokens = [BOS, *text, EOS]
        total = 0.0
        for i in range(1, len(tokens)):
            total += self.score(tokens[:i], tokens[i])
        return total

    def ngram_count(self, n: int) -> int:
        return len(self.tables.get(n, {}))

    def contexts(self, n: int) -> set[NgramKey]:
        """Distinct length-n contexts that have explicit continuations."""
        return {key[:-1] for key in self.tables.get(n + 1, {})}

    def context_mass(self, context: Sequence[str]) -> float:
        """Sum of backed-off P(token | context) over vocabulary plus <unk>."""
        tokens = set(self.vocabulary) | {UNK}
        return sum(10.0 ** self.score(context, tok) for tok in sorted(tokens))

    def validate(self, tol: float = 1e-4) -> None:
        """Check backoff reachability and per-context normalization."""
        for n in range(2, self.order + 1):
            lower = self.tables[n - 1]
            for key in self.tables[n]:
                if key[:-1] not in lower:
                    raise ValueError(
                        f"{len(key)}-gram {key!r} has no stored {n - 1}-gram prefix"
                    )
        for n in range(1, self.order + 1):
            for key, (prob, _) in self.tables[n].items():
                if prob > 0.0:
                    raise ValueError(f"positive log10 probability stored for {key!r}")
        for n in range(0, self.order):
            for ctx in sorted(self.contexts(n)):
                mass = self.context_mass(ctx)
                if abs(mass - 1.0) > tol:
                    raise ValueError(
                        f"context {ctx!r} sums to {mass!r}, outside 1 +/- {tol}"
                    )


def _framed(line: str) -> list[str]:
    return [BOS, *line, EOS]


def train(corpus: Iterable[str], order: int, unk_floor: float = DEFAULT_UNK_FLOOR) -> NGramModel:
    """Estimate a Witten-Bell backoff model from text lines.

    Each character is a token (space included) and each line is framed
    with sentence markers.  For a context h with continuation counts
    c(h, w), total N(h) and T(h) distinct continuation types, the stored
    probability is c(h, w) / (N(h) + T(h)); the reserved mass
    T(h) / (N(h) + T(h)) is spread over unseen tokens by a backoff weight
    computed so the context distribution sums to one exactly.  The
    unigram level is the plain relative frequency scaled by
    (1 - unk_floor), with the remainder on the ``<unk>`` entry.
    """
    lines = list(corpus)
    if not lines:
        raise ValueError("training corpus is empty")
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in [1, {MAX_ORDER}], got {order}")
    if not 0.0 <= unk_floor < 0.5:
        raise ValueError(f"unk_floor must be in [0, 0.5), got {unk_floor}")

    counts: dict[int, Counter[NgramKey]] = {n: Counter() for n in range(1, order + 1)}
    for line in lines:
        tokens = _framed(line)
        length = len(tokens)
        for i in range(length):
            for n in range(1, min(order, length - i) + 1):
                counts[n][tuple(tokens[i:i + n])] += 1

    tables: dict[int, dict[NgramKey, NgramEntry]] = {n: {} for n in range(1, order + 1)}

    total = sum(counts[1].values())
    for key, c in counts[1].items():
        tables[1][key] = (_log10((1.0 - unk_floor) * c / total), None)
    tables[1][(UNK,)] = (_log10(unk_floor), None)

    unk_log10 = _log10(unk_floor if unk_floor > 0.0 else DEFAULT_UNK_FLOOR)
    vocab_keys = sorted(tables[1])
    mass_cache: dict[NgramKey, float] = {}

    def lower_score(context: NgramKey, token: str) -> float:
        return _score_tables(tables, order, unk_log10, context, token)

    def lower_mass(context: NgramKey) -> float:
        if context not in mass_cache:
            mass_cache[context] = sum(
                10.0 ** lower_score(context, key[0]) for key in vocab_keys
            )
        return mass_cache[context]

    for n in range(2, order + 1):
        by_context: dict[NgramKey, list[tuple[str, int]]] = {}
        for key, c in counts[n].items():
            by_context.setdefault(key[:-1], []).append((key[-1], c))

        for ctx, conts in by_context.items():
            n_h = sum(c for _, c in conts)
            t_h = len(conts)
            denom = n_h + t_h
            for token, c in conts:
                tables[n][ctx + (token,)] = (_log10(c / denom), None)

        # Backoff weights for the level below, using the levels already
        # final: bow(h) = reserved mass / unseen mass under the shorter
        # context, which makes the context distribution sum to one.
        for ctx, conts in by_context.items():
            t_h = len(conts)
            n_h = sum(c for _, c in conts)
            reserved = t_h / (n_h + t_h)
            shorter = ctx[1:]
            seen_lower = sum(10.0 ** lower_score(shorter, tok) for tok, _ in conts)
            unseen = lower_mass(shorter) - seen_lower
            if unseen <= 0.0 or reserved <= 0.0:
                raise ValueError(f"degenerate backoff mass for context {ctx!r}")
            prob, _ = tables[n - 1][ctx]
            tables[n - 1][ctx] = (prob, _log10(reserved) - _log10(unseen))
        mass_cache.clear()

    return NGramModel(order, tables)


def interpolate(a: NGramModel, b: NGramModel, lam: float) -> NGramModel:
    """Mix two models: P = lam * P_a + (1 - lam) * P_b.

    The mixture is materialized over the union of explicitly stored
    n-grams, where it is exact; backoff weights are recomputed bottom-up
    so every explicit context still normalizes.  Elsewhere the single
    backoff structure approximates the mixture, except at the endpoints
    lam in {0, 1}, where the construction reproduces the corresponding
    input model everywhere.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    order = max(a.order, b.order)

    def mix(context: NgramKey, token: str) -> float:
        return lam * 10.0 ** a.score(context, token) + (1.0 - lam) * 10.0 ** b.score(
            context, token
        )

    tables: dict[int, dict[NgramKey, NgramEntry]] = {n: {} for n in range(1, order + 1)}
    union_tokens = sorted(
        {key[0] for key in a.tables[1]} | {key[0] for key in b.tables[1]} | {UNK}
    )

    for token in union_tokens:
        tables[1][(token,)] = (_log10(mix((), token)), None)

    for n in range(2, order + 1):
        keys = sorted(set(a.tables.get(n, {})) | set(b.tables.get(n, {})))
        for key in keys:
            tables[n][key] = (_log10(mix(key[:-1], key[-1])), None)

    unk_log10 = tables[1][(UNK,)][0]
    mass_cache: dict[NgramKey, float] = {}

    def lower_score(context: NgramKey, token: str) -> float:
        return _score_tables(tables, order, unk_log10, context, token)

    def lower_mass(context: NgramKey) -> float:
        if context not in mass_cache:
            mass_cache[context] = sum(10.0 ** lower_score(context, tok) for tok in union_tokens)
        return mass_cache[context]

    for n in range(2, order + 1):
        by_context: dict[NgramKey, list[str]] = {}
        for key in tables[n]:
            by_context.setdefault(key[:-1], []).append(key[-1])

        for ctx, conts in sorted(by_context.items()):
            target_full = lam * _model_mass(a, ctx, union_tokens) + (1.0 - lam) * _model_mass(
                b, ctx, union_tokens
            )
            target_seen = sum(10.0 ** tables[n][ctx + (tok,)][0] for tok in conts)
            shorter = ctx[1:]
            lower_seen = sum(10.0 ** lower_score(shorter, tok) for tok in conts)
            numer = target_full - target_seen
            denom = lower_mass(shorter) - lower_seen
            if ctx not in tables[n - 1]:
                raise ValueError(f"context {ctx!r} missing from level {n - 1} union")
            prob, _ = tables[n - 1][ctx]
            if numer <= 0.0 or denom <= 0.0:
                # All mass explicit under this context; nothing to back off to.
                tables[n - 1][ctx] = (prob, 0.0)
            else:
                tables[n - 1][ctx] = (prob, _log10(numer) - _log10(denom))
        mass_cache.clear()

    return NGramModel(order, tables)


def _model_mass(model: NGramModel, context: NgramKey, tokens: Sequence[str]) -> float:
    return sum(10.0 ** model.score(context, tok) for tok in tokens)


@dataclass(frozen=True)
class VocabReport:
    """Word-vocabulary coverage of an evaluation corpus."""

    vocab_size: int
    oov_tokens: int
    total_tokens: int

    @property
    def oov_rate(self) -> float:
        return 100.0 * self.oov_tokens / self.total_tokens


def oov_report(
    train_texts: Iterable[str],
    eval_texts: Iterable[str],
    unit: str = "token",
) -> VocabReport:
    """Out-of-vocabulary rate of eval word tokens against the train vocabulary.

    ``unit="token"`` counts every running word; ``unit="type"`` counts
    distinct words once.
    """
    if unit not in ("token", "type"):
        raise ValueError(f"unit must be 'token' or 'type', got {unit!r}")
    vocab: set[str] = set()
    for line in train_texts:
        vocab.update(line.split())
    if not vocab:
        raise ValueError("training corpus has no word tokens")

    eval_tokens: list[str] = []
    for line in eval_texts:
        eval_tokens.extend(line.split())
    if not eval_tokens:
        raise ValueError("evaluation corpus has no word tokens")
    if unit == "type":
        eval_tokens = sorted(set(eval_tokens))
    oov = sum(1 for tok in eval_tokens if tok not in vocab)
    return VocabReport(vocab_size=len(vocab), oov_tokens=oov, total_tokens=len(eval_tokens))


# ---------------------------------------------------------------------------
# ARPA serialization
# ---------------------------------------------------------------------------


def _escape(token: str) -> str:
    return SPACE_ESCAPE if token == " " else token


def _unescape(token: str) -> str:
    return " " if token == SPACE_ESCAPE else token


def write_arpa(model: NGramModel, path: str | Path) -> None:
    """Serialize a model in ARPA text form.

    Probabilities and backoff weights are written with shortest-exact
    float notation so write/read round trips preserve scores bit for bit.
    The space token is escaped as ``<space>``.
    """
    lines: list[str] = ["\\data\\"]
    for n in range(1, model.order + 1):
        lines.append(f"ngram {n}={model.ngram_count(n)}")
    for n in range(1, model.order + 1):
        lines.append("")
        lines.append(f"\\{n}-grams:")
        for key in sorted(model.tables[n]):
            prob, bow = model.tables[n][key]
            gram = " ".join(_escape(tok) for tok in key)
            if bow is None or n == model.order:
                lines.append(f"{prob!r}\t{gram}")
            else:
                lines.append(f"{prob!r}\t{gram}\t{bow!r}")
    lines.append("")
    lines.append("\\end\\")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_arpa(path: str | Path) -> NGramModel:
    """Parse an ARPA file into a model.

    Accepts tab- or space-separated fields.  Raises
    :class:`ArpaFormatError` on malformed section headers, on per-order
    counts that disagree with the body, and on non-numeric probability
    fields.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    pos = 0
    n_lines = len(lines)

    while pos < n_lines and lines[pos].strip() != "\\data\\":
        pos += 1
    if pos == n_lines:
        raise ArpaFormatError(f"{path}: missing \\data\\ header")
    pos += 1

    declared: dict[int, int] = {}
    while pos < n_lines:
        line = lines[pos].strip()
        if not line:
            pos += 1
            continue
        if line.startswith("\\"):
            break
        if not line.startswith("ngram "):
            raise ArpaFormatError(f"{path}: unexpected line in \\data\\ section: {line!r}")
        try:
            spec_part = line[len("ngram "):]
            n_str, count_str = spec_part.split("=")
            n, count = int(n_str), int(count_str)
        except ValueError:
            raise ArpaFormatError(f"{path}: malformed count line: {line!r}") from None
        if not 1 <= n <= MAX_ORDER:
            raise ArpaFormatError(f"{path}: unsupported n-gram order {n}")
        declared[n] = count
        pos += 1
    if not declared:
        raise ArpaFormatError(f"{path}: \\data\\ section declares no orders")
    order = max(declared)

    tables: dict[int, dict[NgramKey, NgramEntry]] = {n: {} for n in range(1, order + 1)}
    seen_sections: set[int] = set()
    while pos < n_lines:
        line = lines[pos].strip()
        pos += 1
        if not line:
            continue
        if line == "\\end\\":
            break
        if not (line.startswith("\\") and line.endswith("-grams:")):
            raise ArpaFormatError(f"{path}: malformed section header: {line!r}")
        try:
            n = int(line[1:-len("-grams:")])
        except ValueError:
            raise ArpaFormatError(f"{path}: malformed section header: {line!r}") from None
        if n not in declared:
            raise ArpaFormatError(f"{path}: section \\{n}-grams: not declared in \\data\\")
        if n in seen_sections:
            raise ArpaFormatError(f"{path}: duplicate section \\{n}-grams:")
        seen_sections.add(n)

        while pos < n_lines:
            entry_line = lines[pos].strip()
            if not entry_line or entry_line.startswith("\\"):
                break
            pos += 1
            fields = entry_line.split()
            if len(fields) == n + 1:
                prob_str, toks, bow_str = fields[0], fields[1:], None
            elif len(fields) == n + 2:
                prob_str, toks, bow_str = fields[0], fields[1:-1], fields[-1]
            else:
                raise ArpaFormatError(
                    f"{path}: \\{n}-grams: entry has {len(fields)} fields: {entry_line!r}"
                )
            try:
                prob = float(prob_str)
            except ValueError:
                raise ArpaFormatError(
                    f"{path}: \\{n}-grams: non-numeric probability {prob_str!r}"
                ) from None
            bow = None
            if bow_str is not None:
                try:
                    bow = float(bow_str)
                except ValueError:
                    raise ArpaFormatError(
                        f"{path}: \\{n}-grams: non-numeric backoff weight {bow_str!r}"
                    ) from None
            key = tuple(_unescape(t) for t in toks)
            tables[n][key] = (prob, bow)

    for n, count in sorted(declared.items()):
        if n not in seen_sections:
            raise ArpaFormatError(f"{path}: declared \\{n}-grams: section is missing")
        if len(tables[n]) != count:
            raise ArpaFormatError(
                f"{path}: section \\{n}-grams: header says {count} entries, "
                f"body has {len(tables[n])}"
            )
    return NGramModel(order, tables)
