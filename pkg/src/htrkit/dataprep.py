"""Line-level dataset preparation from page scans.

Pages arrive as images plus COCO-style polygon annotations whose labels
are 1-based line numbers, and a translation text file per page.  The
pipeline cuts each annotated line out of its page (crop the xywh
bounding box, then whiten everything outside the polygon mask), fixes
the orientation of vertical lines, and writes ``x_y_z.jpg`` /
``x_y_z.txt`` pairs where x is the document number, y the page number
and z the line number.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Sequence

import numpy as np
from PIL import Image

# Pixels this far past the page edge are clipped with a warning; anything
# beyond is treated as a broken annotation.
OVERHANG_TOLERANCE = 2

DEFAULT_ORIENT_THRESHOLD = 2.0
DEFAULT_SPLIT_FRACTIONS = (0.6434, 0.1991, 0.1575)


class AnnotationError(ValueError):
    """An annotation file or record violates the expected structure."""


def _round_half_up(value: float) -> int:
    return math.floor(value + 0.5)


@dataclass(frozen=True)
class LineAnnotation:
    """One segmented text line: polygon mask(s), xywh bbox, line number."""

    image_id: str
    polygons: tuple[tuple[float, ...], ...]
    bbox: tuple[float, float, float, float]
    label: int

    def __post_init__(self) -> None:
        if not self.polygons:
            raise AnnotationError(f"{self.image_id}: annotation has no polygon")
        for poly in self.polygons:
            if len(poly) % 2 != 0:
                raise AnnotationError(
                    f"{self.image_id}: polygon has odd coordinate count {len(poly)}"
                )
            if len(poly) < 6:
                raise AnnotationError(
                    f"{self.image_id}: polygon needs >= 3 points, got {len(poly) // 2}"
                )
        x, y, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise AnnotationError(f"{self.image_id}: bbox has non-positive size {self.bbox}")
        if not (isinstance(self.label, int) and self.label >= 1):
            raise AnnotationError(f"{self.image_id}: label must be a positive integer")
        xs = [v for poly in self.polygons for v in poly[0::2]]
        ys = [v for poly in self.polygons for v in poly[1::2]]
        if (
            min(xs) < x - 1
            or min(ys) < y - 1
            or max(xs) > x + w + 1
            or max(ys) > y + h + 1
        ):
            raise AnnotationError(
                f"{self.image_id}: bbox {self.bbox} does not enclose the polygon"
            )

    @property
    def rect(self) -> tuple[int, int, int, int]:
        """Pixel crop rectangle (x0, y0, width, height), bbox rounded half-up."""
        x, y, w, h = self.bbox
        return _round_half_up(x), _round_half_up(y), _round_half_up(w), _round_half_up(h)


@dataclass(frozen=True)
class PageRecord:
    """A page scan with its ordered translation lines."""

    document_no: int
    page_no: int
    image_path: Path
    translation_lines: tuple[str, ...]

    @property
    def stem(self) -> str:
        return f"{self.document_no}_{self.page_no}"


@dataclass
class DatasetStats:
    line_count: int = 0
    symbol_count: int = 0
    word_count: int = 0
    char_histogram: Counter = field(default_factory=Counter)

    def histogram_sorted(self) -> list[tuple[str, int]]:
        """Character counts, most frequent first (character breaks ties)."""
        return sorted(self.char_histogram.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_dict(self) -> dict:
        return {
            "line_count": self.line_count,
            "symbol_count": self.symbol_count,
            "word_count": self.word_count,
            "char_histogram": [[ch, count] for ch, count in self.histogram_sorted()],
        }


def parse_annotations(coco: dict | str | Path) -> dict[str, list[LineAnnotation]]:
    """Read the COCO subset used here, grouped by image file stem.

    Needs ``images`` (id, file_name) and ``annotations`` (image_id,
    segmentation, bbox) records; the line number comes from an explicit
    ``label`` field when present, otherwise from the annotation's
    category name.  Unknown fields are ignored.
    """
    if not isinstance(coco, dict):
        coco = json.loads(Path(coco).read_text(encoding="utf-8"))

    try:
        images = {img["id"]: Path(img["file_name"]).stem for img in coco["images"]}
    except (KeyError, TypeError) as exc:
        raise AnnotationError(f"bad images[] records: {exc}") from None
    categories = {
        cat.get("id"): cat.get("name") for cat in coco.get("categories", [])
    }

    grouped: dict[str, list[LineAnnotation]] = {}
    for ann in coco.get("annotations", []):
        image_id = ann.get("image_id")
        if image_id not in images:
            raise AnnotationError(f"annotation references unknown image id {image_id!r}")
        stem = images[image_id]
        segmentation = ann.get("segmentation")
        if not segmentation:
            raise AnnotationError(f"{stem}: annotation is missing its segmentation")
        if "bbox" not in ann or len(ann["bbox"]) != 4:
            raise AnnotationError(f"{stem}: annotation is missing a 4-element bbox")
        if isinstance(segmentation[0], (int, float)):
            segmentation = [segmentation]

        if "label" in ann:
            raw_label = ann["label"]
        elif ann.get("category_id") in categories:
            raw_label = categories[ann["category_id"]]
        else:
            raise AnnotationError(f"{stem}: annotation carries no line-number label")
        try:
            label = int(raw_label)
        except (TypeError, ValueError):
            raise AnnotationError(
                f"{stem}: label {raw_label!r} is not a positive integer"
            ) from None

        grouped.setdefault(stem, []).append(
            LineAnnotation(
                image_id=stem,
                polygons=tuple(tuple(float(v) for v in poly) for poly in segmentation),
                bbox=tuple(float(v) for v in ann["bbox"]),
                label=label,
            )
        )
    for anns in grouped.values():
        anns.sort(key=lambda a: a.label)
    return grouped


def _polygon_area(poly: Sequence[float]) -> float:
    xs, ys = poly[0::2], poly[1::2]
    n = len(xs)
    area = 0.0
    for i in range(n):
        j = (i + 1) % n
        area += xs[i] * ys[j] - xs[j] * ys[i]
    return abs(area) / 2.0


def _even_odd_mask(
    polygons: Sequence[Sequence[float]], x0: int, y0: int, width: int, height: int
) -> np.ndarray:
    """Even-odd rasterization at pixel centers, union over polygons."""
    cx = x0 + np.arange(width, dtype=np.float64) + 0.5
    cy = y0 + np.arange(height, dtype=np.float64) + 0.5
    mask = np.zeros((height, width), dtype=bool)
    for poly in polygons:
        xs = np.asarray(poly[0::2], dtype=np.float64)
        ys = np.asarray(poly[1::2], dtype=np.float64)
        inside = np.zeros((height, width), dtype=bool)
        n = len(xs)
        for i in range(n):
            j = (i + 1) % n
            x1, y1, x2, y2 = xs[i], ys[i], xs[j], ys[j]
            if y1 == y2:
                continue
            straddles = (y1 > cy) != (y2 > cy)  # (height,)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_cross = x1 + (cy - y1) * (x2 - x1) / (y2 - y1)
            inside ^= straddles[:, None] & (cx[None, :] < x_cross[:, None])
        mask |= inside
    return mask


def cut_line(page: np.ndarray, ann: LineAnnotation) -> np.ndarray:
    """Crop the annotation's bbox and whiten everything outside its mask.

    Output dimensions equal the rounded bbox size; pixels whose center
    falls outside the polygon(s) are set to 255 on every channel.  Boxes
    overhanging the page by at most ``OVERHANG_TOLERANCE`` pixels are
    clipped with a warning; larger overhangs raise.
    """
    if all(_polygon_area(poly) == 0.0 for poly in ann.polygons):
        raise AnnotationError(f"{ann.image_id}: polygon has zero area")

    page = np.asarray(page)
    page_h, page_w = page.shape[:2]
    x0, y0, w, h = ann.rect
    x1, y1 = x0 + w, y0 + h
    if x0 >= page_w or y0 >= page_h or x1 <= 0 or y1 <= 0:
        raise AnnotationError(
            f"{ann.image_id}: bbox {ann.bbox} lies fully outside the {page_w}x{page_h} page"
        )
    overhang = max(-x0, -y0, x1 - page_w, y1 - page_h, 0)
    if overhang > OVERHANG_TOLERANCE:
        raise AnnotationError(
            f"{ann.image_id}: bbox {ann.bbox} overhangs the page by {overhang} px"
        )
    if overhang > 0:
        warnings.warn(
            f"{ann.image_id}: clipping bbox overhanging the page by {overhang} px",
            stacklevel=2,
        )
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, page_w), min(y1, page_h)

    crop = page[y0:y1, x0:x1].copy()
    mask = _even_odd_mask(ann.polygons, x0, y0, x1 - x0, y1 - y0)
    crop[~mask] = 255  # broadcasts over channels for color pages
    return crop


def orient_line(
    line: np.ndarray,
    threshold: float = DEFAULT_ORIENT_THRESHOLD,
    clockwise: bool = False,
) -> np.ndarray:
    """Rotate clearly vertical lines (height/width > threshold) by 90 degrees.

    Counterclockwise by default.  Thresholds above 1 make this idempotent:
    a rotated line's ratio drops below 1/threshold and never triggers again.
    """
    if line.size == 0:
        raise ValueError("cannot orient an empty image")
    if threshold <= 1.0:
        raise ValueError(f"threshold must be > 1, got {threshold}")
    height, width = line.shape[:2]
    if height / width > threshold:
        return np.ascontiguousarray(np.rot90(line, k=-1 if clockwise else 1))
    return line


def export_pairs(
    pages: Sequence[PageRecord],
    annotations: dict[str, list[LineAnnotation]],
    out_dir: str | Path,
    orient_threshold: float = DEFAULT_ORIENT_THRESHOLD,
    rotate_clockwise: bool = False,
    workers: int = 1,
) -> dict:
    """Cut every annotated line and write ``x_y_z.jpg`` + ``x_y_z.txt`` pairs.

    The manifest accounts for every annotation: each one either becomes a
    pair entry or a failure entry (unresolvable label, duplicate label,
    missing page, cut error).  Pages are independent, so they may be
    processed in parallel; the manifest is assembled in (x, y, z) order
    regardless of scheduling.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pages_by_stem = {page.stem: page for page in pages}

    def process_page(item: tuple[str, list[LineAnnotation]]):
        stem, anns = item
        pairs: list[dict] = []
        failures: list[dict] = []
        page = pages_by_stem.get(stem)
        if page is None:
            for ann in anns:
                failures.append(
                    {"stem": f"{stem}_{ann.label}", "error": "no page record for image"}
                )
            return pairs, failures
        image = np.asarray(Image.open(page.image_path))
        seen_labels: set[int] = set()
        for ann in anns:
            name = f"{page.stem}_{ann.label}"
            if ann.label in seen_labels:
                failures.append({"stem": name, "error": f"duplicate label {ann.label}"})
                continue
            seen_labels.add(ann.label)
            if ann.label > len(page.translation_lines):
                failures.append(
                    {
                        "stem": name,
                        "error": f"label {ann.label} of {len(page.translation_lines)} translation lines",
                    }
                )
                continue
            try:
                line = cut_line(image, ann)
                line = orient_line(line, orient_threshold, rotate_clockwise)
            except (AnnotationError, ValueError) as exc:
                failures.append({"stem": name, "error": str(exc)})
                continue
            image_path = out_dir / f"{name}.jpg"
            text_path = out_dir / f"{name}.txt"
            Image.fromarray(line).save(image_path, quality=95)
            text_path.write_text(
                page.translation_lines[ann.label - 1] + "\n", encoding="utf-8"
            )
            pairs.append(
                {"stem": name, "image": image_path.name, "text": text_path.name}
            )
        return pairs, failures

    items = sorted(annotations.items())
    if workers == 1 or len(items) <= 1:
        results = [process_page(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(process_page, items))

    def stem_key(entry: dict) -> tuple:
        parts = entry["stem"].rsplit("_", 2)
        try:
            return (0, *(int(p) for p in parts))
        except ValueError:
            return (1, entry["stem"])

    all_pairs = sorted((p for pairs, _ in results for p in pairs), key=stem_key)
    all_failures = sorted((f for _, fails in results for f in fails), key=stem_key)
    return {"pairs": all_pairs, "failures": all_failures}


def dataset_stats(text_dir: str | Path) -> DatasetStats:
    """Character, word and line counts over a directory of ``.txt`` files.

    Newlines separate lines and are not counted as symbols; every other
    character, space included, is.
    """
    stats = DatasetStats()
    for path in sorted(Path(text_dir).glob("*.txt")):
        for line in path.read_text(encoding="utf-8").splitlines():
            stats.line_count += 1
            stats.symbol_count += len(line)
            stats.word_count += len(line.split())
            stats.char_histogram.update(line)
    return stats


def split_dataset(
    items: Sequence,
    seed: int,
    fractions: tuple[float, float, float] = DEFAULT_SPLIT_FRACTIONS,
) -> tuple[list, list, list]:
    """Deterministic (train, val, test) partition of a manifest.

    Validation and test sizes are the half-up-rounded fractions of the
    total; the remainder goes to train.  The same items and seed always
    produce the same partition.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    items = list(items)
    if len(items) < 3:
        raise ValueError(f"need at least 3 items to split, got {len(items)}")
    shuffled = items[:]
    Random(seed).shuffle(shuffled)
    n_val = _round_half_up(fractions[1] * len(items))
    n_test = _round_half_up(fractions[2] * len(items))
    n_train = len(items) - n_val - n_test
    if n_train < 0:
        raise ValueError(f"fractions {fractions} leave no items for training")
    train = shuffled[:n_train]
    val = shuffled[n_train:n_train + n_val]
    test = shuffled[n_train + n_val:]
    return train, val, test
