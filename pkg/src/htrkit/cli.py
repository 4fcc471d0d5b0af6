"""Command-line entry point.

One subcommand per pipeline stage:

  prepare         cut annotated lines out of page scans into jpg/txt pairs
  stats           character/word statistics over a transcript directory
  lm-train        build a character n-gram model from a text corpus
  lm-interpolate  mix two ARPA models
  lm-score        log10 probabilities of text lines under a model
  decode          emission matrices -> transcripts (greedy or beam+LM)
  eval            corpus CER/WER/ACC of predictions against references

Exit codes: 0 full success, 1 partial per-file failures, 2 usage or
configuration errors.  Diagnostics go to stderr; data goes to files or
stdout.  Identical invocations on identical inputs produce byte-identical
outputs, for any ``--workers`` value.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .dataprep import (
    DEFAULT_ORIENT_THRESHOLD,
    DEFAULT_SPLIT_FRACTIONS,
    PageRecord,
    dataset_stats,
    export_pairs,
    parse_annotations,
)
from .decoding import DecodeParams, decode_directory
from .lm import DEFAULT_UNK_FLOOR, interpolate, read_arpa, train, write_arpa
from .metrics import evaluate_dirs, format_table

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


def _err(message: str) -> None:
    print(f"htrkit: {message}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htrkit",
        description="Decoding and evaluation toolkit for handwritten text recognition.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"htrkit {__version__} (formats: emit-v1, arpa)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="cut annotated lines into jpg/txt pairs")
    p.add_argument("--images", required=True, help="directory of x_y page images")
    p.add_argument("--annotations", required=True, help="COCO-style polygon annotations JSON")
    p.add_argument("--translations", required=True, help="directory of x_y.txt translation files")
    p.add_argument("--out", required=True, help="output directory for pairs and manifest.json")
    p.add_argument(
        "--orient-threshold",
        type=float,
        default=DEFAULT_ORIENT_THRESHOLD,
        help="rotate lines with height/width above this ratio (default: %(default)s)",
    )
    p.add_argument(
        "--rotate-clockwise",
        action="store_true",
        help="rotate vertical lines clockwise instead of counterclockwise",
    )
    p.add_argument("--workers", type=int, default=1, help="parallel page workers (default: %(default)s)")

    p = sub.add_parser("stats", help="character/word statistics of a transcript directory")
    p.add_argument("--text", required=True, help="directory of .txt transcripts")
    p.add_argument("--json", action="store_true", help="emit full JSON instead of a summary table")
    p.add_argument("--out", help="also write the JSON stats to this file")

    p = sub.add_parser("lm-train", help="train a character n-gram model")
    p.add_argument("--corpus", required=True, help="text file or directory of .txt files")
    p.add_argument("--order", type=int, default=6, help="n-gram order (default: %(default)s)")
    p.add_argument(
        "--unk-floor",
        type=float,
        default=DEFAULT_UNK_FLOOR,
        help="probability floor for unknown characters (default: %(default)s)",
    )
    p.add_argument("--out", required=True, help="output ARPA path")

    p = sub.add_parser("lm-interpolate", help="mix two ARPA models")
    p.add_argument("--a", required=True, help="first model (weight lambda)")
    p.add_argument("--b", required=True, help="second model (weight 1-lambda)")
    p.add_argument(
        "--lambda",
        dest="lam",
        type=float,
        default=0.5,
        help="mixture weight of model A (default: %(default)s)",
    )
    p.add_argument("--out", required=True, help="output ARPA path")

    p = sub.add_parser("lm-score", help="log10 probability of text lines under a model")
    p.add_argument("--lm", required=True, help="ARPA model path")
    p.add_argument("--input", required=True, help="text file, one line per transcript")
    p.add_argument("--json", action="store_true", help="emit JSON instead of one score per line")

    p = sub.add_parser("decode", help="decode .emit emission files to transcripts")
    p.add_argument("--emissions", required=True, help="directory of .emit files")
    p.add_argument("--out", required=True, help="output directory for .txt transcripts")
    p.add_argument(
        "--mode",
        choices=("beam", "greedy"),
        default="beam",
        help="decoding mode (default: %(default)s)",
    )
    p.add_argument("--lm", help="ARPA model for shallow fusion (beam mode)")
    p.add_argument("--alpha", type=float, default=0.8, help="LM weight (default: %(default)s)")
    p.add_argument(
        "--beta", type=float, default=2.0, help="per-character insertion bonus (default: %(default)s)"
    )
    p.add_argument(
        "--beam-width", type=int, default=100, help="active hypotheses kept per timestep (default: %(default)s)"
    )
    p.add_argument("--workers", type=int, default=1, help="parallel file workers (default: %(default)s)")

    p = sub.add_parser("eval", help="corpus CER/WER/ACC of predictions vs references")
    p.add_argument("--pred", required=True, help="directory of predicted .txt transcripts")
    p.add_argument("--ref", required=True, help="directory of reference .txt transcripts")
    p.add_argument("--json", action="store_true", help="emit the full JSON report")

    return parser


def _read_corpus_lines(corpus: Path) -> list[str]:
    if corpus.is_dir():
        files = sorted(corpus.glob("*.txt"))
        if not files:
            raise FileNotFoundError(f"no .txt files in {corpus}")
    elif corpus.is_file():
        files = [corpus]
    else:
        raise FileNotFoundError(f"corpus not found: {corpus}")
    lines: list[str] = []
    for path in files:
        lines.extend(ln for ln in path.read_text(encoding="utf-8").splitlines() if ln)
    if not lines:
        raise ValueError(f"corpus {corpus} contains no text lines")
    return lines


def _page_records(images_dir: Path, translations_dir: Path) -> list[PageRecord]:
    pages: list[PageRecord] = []
    for path in sorted(images_dir.iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        parts = path.stem.split("_")
        if len(parts) != 2:
            _err(f"skipping image {path.name}: name is not x_y")
            continue
        try:
            doc, page = int(parts[0]), int(parts[1])
        except ValueError:
            _err(f"skipping image {path.name}: name is not x_y")
            continue
        translation = translations_dir / f"{path.stem}.txt"
        if not translation.is_file():
            _err(f"skipping page {path.stem}: no translation file")
            continue
        lines = tuple(translation.read_text(encoding="utf-8").splitlines())
        pages.append(PageRecord(doc, page, path, lines))
    return pages


def _cmd_prepare(args: argparse.Namespace) -> int:
    images_dir = Path(args.images)
    translations_dir = Path(args.translations)
    if not images_dir.is_dir():
        _err(f"images directory not found: {images_dir}")
        return 2
    if not translations_dir.is_dir():
        _err(f"translations directory not found: {translations_dir}")
        return 2
    try:
        annotations = parse_annotations(args.annotations)
    except (OSError, ValueError) as exc:
        _err(f"cannot read annotations: {exc}")
        return 2
    pages = _page_records(images_dir, translations_dir)
    manifest = export_pairs(
        pages,
        annotations,
        args.out,
        orient_threshold=args.orient_threshold,
        rotate_clockwise=args.rotate_clockwise,
        workers=args.workers,
    )
    manifest_path = Path(args.out) / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    for failure in manifest["failures"]:
        _err(f"{failure['stem']}: {failure['error']}")
    print(
        json.dumps(
            {
                "pairs": len(manifest["pairs"]),
                "failures": len(manifest["failures"]),
                "manifest": str(manifest_path),
            }
        )
    )
    return 1 if manifest["failures"] else 0


def _cmd_stats(args: argparse.Namespace) -> int:
    text_dir = Path(args.text)
    if not text_dir.is_dir():
        _err(f"text directory not found: {text_dir}")
        return 2
    stats = dataset_stats(text_dir)
    payload = json.dumps(stats.to_dict(), ensure_ascii=False, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    if args.json:
        sys.stdout.write(payload)
    else:
        print(f"lines    {stats.line_count}")
        print(f"symbols  {stats.symbol_count}")
        print(f"words    {stats.word_count}")
        for ch, count in stats.histogram_sorted()[:10]:
            print(f"  {ch!r}  {count}")
    return 0


def _cmd_lm_train(args: argparse.Namespace) -> int:
    try:
        lines = _read_corpus_lines(Path(args.corpus))
        model = train(lines, order=args.order, unk_floor=args.unk_floor)
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return 2
    write_arpa(model, args.out)
    print(
        json.dumps(
            {
                "order": model.order,
                "lines": len(lines),
                "vocabulary": len(model.vocabulary),
                "ngrams": {n: model.ngram_count(n) for n in range(1, model.order + 1)},
            }
        )
    )
    return 0


def _cmd_lm_interpolate(args: argparse.Namespace) -> int:
    try:
        model_a = read_arpa(args.a)
        model_b = read_arpa(args.b)
        mixed = interpolate(model_a, model_b, args.lam)
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return 2
    write_arpa(mixed, args.out)
    return 0


def _cmd_lm_score(args: argparse.Namespace) -> int:
    try:
        model = read_arpa(args.lm)
        lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return 2
    scores = [model.sequence_logprob(line) for line in lines]
    if args.json:
        print(
            json.dumps(
                {"lines": [{"text": t, "log10": s} for t, s in zip(lines, scores)],
                 "total": sum(scores)},
                ensure_ascii=False,
            )
        )
    else:
        for score in scores:
            print(repr(score))
    return 0


def _cmd_decode(args: argparse.Namespace) -> int:
    emissions_dir = Path(args.emissions)
    if not emissions_dir.is_dir():
        _err(f"emissions directory not found: {emissions_dir}")
        return 2
    lm = None
    if args.mode == "greedy":
        if args.lm:
            _err("greedy mode ignores --lm/--alpha/--beta/--beam-width")
    elif args.lm:
        try:
            lm = read_arpa(args.lm)
        except (OSError, ValueError) as exc:
            _err(f"cannot read LM: {exc}")
            return 2
    try:
        params = DecodeParams(
            beam_width=args.beam_width, alpha=args.alpha, beta=args.beta, lm=lm
        )
    except ValueError as exc:
        _err(str(exc))
        return 2
    summary = decode_directory(
        emissions_dir,
        params,
        args.out,
        mode=args.mode,
        workers=args.workers,
        log=lambda line: print(line, file=sys.stderr),
    )
    print(json.dumps(summary, ensure_ascii=False, sort_keys=True))
    return 1 if summary["failures"] else 0


def _cmd_eval(args: argparse.Namespace) -> int:
    try:
        report = evaluate_dirs(args.pred, args.ref)
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return 2
    if args.json:
        print(report.to_json())
    else:
        print(format_table(report))
    return 0


_COMMANDS = {
    "prepare": _cmd_prepare,
    "stats": _cmd_stats,
    "lm-train": _cmd_lm_train,
    "lm-interpolate": _cmd_lm_interpolate,
    "lm-score": _cmd_lm_score,
    "decode": _cmd_decode,
    "eval": _cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        _err(str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
