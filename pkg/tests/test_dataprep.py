import json

import numpy as np
import pytest
from PIL import Image

from htrkit.dataprep import (
    AnnotationError,
    DatasetStats,
    LineAnnotation,
    PageRecord,
    cut_line,
    dataset_stats,
    export_pairs,
    orient_line,
    parse_annotations,
    split_dataset,
)


def square_annotation(x, y, w, h, label=1, image_id="1_1"):
    polygon = (x, y, x + w, y, x + w, y + h, x, y + h)
    return LineAnnotation(image_id, (tuple(float(v) for v in polygon),), (float(x), float(y), float(w), float(h)), label)


def checkerboard(height, width):
    return ((np.indices((height, width)).sum(axis=0) % 2) * 255).astype(np.uint8)


class TestParseAnnotations:
    def coco(self, **overrides):
        data = {
            "images": [{"id": 7, "file_name": "10_2.jpg"}],
            "categories": [{"id": 3, "name": "5"}],
            "annotations": [
                {
                    "image_id": 7,
                    "category_id": 3,
                    "bbox": [330.0, 1294.0, 2886.0, 231.0],
                    "segmentation": [[330, 1294, 3216, 1294, 3216, 1525, 330, 1525]],
                }
            ],
        }
        data.update(overrides)
        return data

    def test_bbox_crop_rectangle(self):
        grouped = parse_annotations(self.coco())
        ann = grouped["10_2"][0]
        x0, y0, w, h = ann.rect
        assert (x0, x0 + w) == (330, 3216)
        assert (y0, y0 + h) == (1294, 1525)
        assert ann.label == 5

    def test_minimal_triangle_polygon(self):
        coco = self.coco()
        coco["annotations"][0]["segmentation"] = [[330, 1294, 3216, 1294, 3216, 1525]]
        ann = parse_annotations(coco)["10_2"][0]
        assert len(ann.polygons[0]) == 6

    def test_empty_segmentation_rejected(self):
        coco = self.coco()
        coco["annotations"][0]["segmentation"] = []
        with pytest.raises(AnnotationError, match="segmentation"):
            parse_annotations(coco)

    def test_odd_polygon_rejected(self):
        coco = self.coco()
        coco["annotations"][0]["segmentation"] = [[0, 0, 1, 0, 1]]
        with pytest.raises(AnnotationError, match="odd"):
            parse_annotations(coco)

    def test_missing_bbox_rejected(self):
        coco = self.coco()
        del coco["annotations"][0]["bbox"]
        with pytest.raises(AnnotationError, match="bbox"):
            parse_annotations(coco)

    def test_non_integer_label_rejected(self):
        coco = self.coco(categories=[{"id": 3, "name": "TEXT"}])
        with pytest.raises(AnnotationError, match="label"):
            parse_annotations(coco)

    def test_direct_label_field(self):
        coco = self.coco(categories=[])
        coco["annotations"][0]["label"] = 2
        assert parse_annotations(coco)["10_2"][0].label == 2

    def test_grouped_and_sorted_by_label(self):
        coco = self.coco()
        second = dict(coco["annotations"][0])
        second["label"] = 1
        coco["annotations"].append(second)
        grouped = parse_annotations(coco)
        assert [a.label for a in grouped["10_2"]] == [1, 5]

    def test_reads_from_file(self, tmp_path):
        path = tmp_path / "coco.json"
        path.write_text(json.dumps(self.coco()))
        assert "10_2" in parse_annotations(path)

    def test_bbox_must_enclose_polygon(self):
        with pytest.raises(AnnotationError, match="enclose"):
            LineAnnotation("x", ((0.0, 0.0, 10.0, 0.0, 10.0, 10.0),), (0.0, 0.0, 5.0, 5.0), 1)


class TestCutLine:
    def test_mask_covers_crop(self):
        page = np.zeros((4, 4), dtype=np.uint8)
        out = cut_line(page, square_annotation(1, 1, 2, 2))
        assert out.shape == (2, 2)
        assert (out == 0).all()

    def test_outside_mask_is_white(self):
        page = np.zeros((4, 4), dtype=np.uint8)
        ann = LineAnnotation("1_1", ((1.0, 1.0, 2.0, 1.0, 2.0, 3.0, 1.0, 3.0),), (1.0, 1.0, 2.0, 2.0), 1)
        out = cut_line(page, ann)
        assert out[:, 0].tolist() == [0, 0]
        assert out[:, 1].tolist() == [255, 255]

    def test_checkerboard_exact_subrectangle(self):
        page = checkerboard(12, 16)
        ann = square_annotation(3, 2, 7, 5)
        out = cut_line(page, ann)
        np.testing.assert_array_equal(out, page[2:7, 3:10])

    def test_color_channels_whitened(self):
        page = np.zeros((6, 6, 3), dtype=np.uint8)
        ann = LineAnnotation("1_1", ((1.0, 1.0, 3.0, 1.0, 3.0, 3.0, 1.0, 3.0),), (1.0, 1.0, 4.0, 4.0), 1)
        out = cut_line(page, ann)
        assert out.shape == (4, 4, 3)
        assert (out[3, 3] == [255, 255, 255]).all()
        assert (out[1, 1] == [0, 0, 0]).all()

    def test_fractional_bbox_rounds_half_up(self):
        page = checkerboard(10, 10)
        ann = LineAnnotation("1_1", ((1.0, 1.0, 4.0, 1.0, 4.0, 4.0, 1.0, 4.0),), (1.5, 0.5, 2.5, 3.5), 1)
        out = cut_line(page, ann)
        assert out.shape == (4, 3)  # h=round(3.5)=4, w=round(2.5)=3

    def test_small_overhang_clipped_with_warning(self):
        page = np.zeros((4, 4), dtype=np.uint8)
        ann = square_annotation(2, 2, 4, 2)
        with pytest.warns(UserWarning, match="clipping"):
            out = cut_line(page, ann)
        assert out.shape == (2, 2)

    def test_large_overhang_rejected(self):
        page = np.zeros((4, 4), dtype=np.uint8)
        with pytest.raises(AnnotationError, match="overhangs"):
            cut_line(page, square_annotation(2, 0, 7, 2))

    def test_fully_outside_rejected(self):
        page = np.zeros((4, 4), dtype=np.uint8)
        with pytest.raises(AnnotationError, match="outside"):
            cut_line(page, square_annotation(10, 10, 2, 2))

    def test_zero_area_polygon_rejected(self):
        page = np.zeros((4, 4), dtype=np.uint8)
        ann = LineAnnotation("1_1", ((1.0, 1.0, 2.0, 2.0, 3.0, 3.0),), (1.0, 1.0, 2.0, 2.0), 1)
        with pytest.raises(AnnotationError, match="zero area"):
            cut_line(page, ann)

    def test_multi_polygon_union(self):
        page = np.zeros((4, 6), dtype=np.uint8)
        polys = (
            (1.0, 1.0, 2.0, 1.0, 2.0, 3.0, 1.0, 3.0),
            (4.0, 1.0, 5.0, 1.0, 5.0, 3.0, 4.0, 3.0),
        )
        ann = LineAnnotation("1_1", polys, (1.0, 1.0, 4.0, 2.0), 1)
        out = cut_line(page, ann)
        assert out[0].tolist() == [0, 255, 255, 0]


class TestOrientLine:
    def test_tall_line_rotated(self):
        line = np.arange(300 * 100, dtype=np.uint8).reshape(300, 100)
        rotated = orient_line(line, threshold=2.0)
        assert rotated.shape == (100, 300)
        assert sorted(rotated.ravel()) == sorted(line.ravel())

    def test_wide_line_untouched(self):
        line = np.zeros((100, 300), dtype=np.uint8)
        assert orient_line(line, threshold=2.0) is line

    def test_idempotent(self):
        line = np.arange(12, dtype=np.uint8).reshape(6, 2)
        once = orient_line(line)
        twice = orient_line(once)
        np.testing.assert_array_equal(once, twice)

    def test_clockwise_flag(self):
        line = np.arange(6, dtype=np.uint8).reshape(6, 1)
        ccw = orient_line(line, clockwise=False)
        cw = orient_line(line, clockwise=True)
        np.testing.assert_array_equal(cw, np.rot90(ccw, 2))

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            orient_line(np.zeros((2, 2), dtype=np.uint8), threshold=1.0)


class TestExportPairs:
    def make_page(self, tmp_path, stem="10_2", lines=("one", "two", "three")):
        image_path = tmp_path / f"{stem}.png"
        Image.fromarray(checkerboard(20, 20)).save(image_path)
        doc, page = (int(p) for p in stem.split("_"))
        return PageRecord(doc, page, image_path, tuple(lines))

    def test_naming_format(self, tmp_path):
        page = self.make_page(tmp_path)
        annotations = {"10_2": [square_annotation(2, 2, 8, 4, label=3, image_id="10_2")]}
        manifest = export_pairs([page], annotations, tmp_path / "out")
        assert manifest["pairs"][0]["stem"] == "10_2_3"
        assert (tmp_path / "out" / "10_2_3.jpg").exists()
        assert (tmp_path / "out" / "10_2_3.txt").read_text() == "three\n"

    def test_full_page(self, tmp_path):
        page = self.make_page(tmp_path)
        annotations = {
            "10_2": [
                square_annotation(2, 1, 8, 4, label=1, image_id="10_2"),
                square_annotation(2, 6, 8, 4, label=2, image_id="10_2"),
                square_annotation(2, 11, 8, 4, label=3, image_id="10_2"),
            ]
        }
        manifest = export_pairs([page], annotations, tmp_path / "out")
        assert len(manifest["pairs"]) == 3
        assert manifest["failures"] == []

    def test_label_beyond_translation(self, tmp_path):
        page = self.make_page(tmp_path, lines=("a", "b", "c", "d", "e"))
        annotations = {"10_2": [square_annotation(2, 2, 8, 4, label=7, image_id="10_2")]}
        manifest = export_pairs([page], annotations, tmp_path / "out")
        assert manifest["pairs"] == []
        assert manifest["failures"][0]["error"] == "label 7 of 5 translation lines"

    def test_duplicate_label(self, tmp_path):
        page = self.make_page(tmp_path)
        annotations = {
            "10_2": [
                square_annotation(2, 2, 8, 4, label=1, image_id="10_2"),
                square_annotation(2, 8, 8, 4, label=1, image_id="10_2"),
            ]
        }
        manifest = export_pairs([page], annotations, tmp_path / "out")
        assert len(manifest["pairs"]) == 1
        assert "duplicate label" in manifest["failures"][0]["error"]

    def test_missing_page_record(self, tmp_path):
        annotations = {"9_9": [square_annotation(2, 2, 8, 4, image_id="9_9")]}
        manifest = export_pairs([], annotations, tmp_path / "out")
        assert manifest["failures"][0]["error"] == "no page record for image"

    def test_manifest_accounts_for_every_annotation(self, tmp_path):
        page = self.make_page(tmp_path, lines=("a", "b"))
        annotations = {
            "10_2": [
                square_annotation(2, 2, 8, 4, label=1, image_id="10_2"),
                square_annotation(2, 8, 8, 4, label=2, image_id="10_2"),
                square_annotation(2, 14, 8, 4, label=9, image_id="10_2"),
            ],
            "9_9": [square_annotation(1, 1, 4, 4, image_id="9_9")],
        }
        manifest = export_pairs([page], annotations, tmp_path / "out")
        total = sum(len(v) for v in annotations.values())
        assert len(manifest["pairs"]) + len(manifest["failures"]) == total
        for entry in manifest["pairs"]:
            x, y, z = entry["stem"].split("_")
            assert int(x) == 10 and int(y) == 2 and int(z) >= 1

    def test_workers_do_not_change_manifest(self, tmp_path):
        pages = [self.make_page(tmp_path, stem=f"{d}_1") for d in range(1, 5)]
        annotations = {
            f"{d}_1": [square_annotation(2, 2, 8, 4, label=1, image_id=f"{d}_1")]
            for d in range(1, 5)
        }
        m1 = export_pairs(pages, annotations, tmp_path / "o1", workers=1)
        m4 = export_pairs(pages, annotations, tmp_path / "o4", workers=4)
        strip = lambda m: [(p["stem"], p["image"], p["text"]) for p in m["pairs"]]
        assert strip(m1) == strip(m4)
        for p in m1["pairs"]:
            a = (tmp_path / "o1" / p["image"]).read_bytes()
            b = (tmp_path / "o4" / p["image"]).read_bytes()
            assert a == b


class TestDatasetStats:
    def test_hand_counted(self, tmp_path):
        (tmp_path / "1.txt").write_text("ab\n")
        (tmp_path / "2.txt").write_text("a b\n")
        stats = dataset_stats(tmp_path)
        assert stats.symbol_count == 5
        assert stats.word_count == 3
        assert stats.line_count == 2
        assert stats.char_histogram == {"a": 2, "b": 2, " ": 1}

    def test_empty_directory(self, tmp_path):
        stats = dataset_stats(tmp_path)
        assert stats == DatasetStats()

    def test_symbols_equal_histogram_total(self, tmp_path):
        (tmp_path / "1.txt").write_text("hello there\nsecond line\n")
        stats = dataset_stats(tmp_path)
        assert stats.symbol_count == sum(stats.char_histogram.values())

    def test_adding_file_adds_exactly_its_characters(self, tmp_path):
        (tmp_path / "1.txt").write_text("abc\n")
        before = dataset_stats(tmp_path).symbol_count
        (tmp_path / "2.txt").write_text("defgh\n")
        after = dataset_stats(tmp_path).symbol_count
        assert after - before == 5

    def test_histogram_sorted_by_count(self, tmp_path):
        (tmp_path / "1.txt").write_text("aaab\n")
        ordered = dataset_stats(tmp_path).histogram_sorted()
        assert ordered == [("a", 3), ("b", 1)]


class TestSplitDataset:
    def test_simple_fractions(self):
        train, val, test = split_dataset(list(range(10)), seed=1, fractions=(0.6, 0.2, 0.2))
        assert (len(train), len(val), len(test)) == (6, 2, 2)
        assert set(train) | set(val) | set(test) == set(range(10))
        assert not (set(train) & set(val)) and not (set(val) & set(test))

    def test_seed_determinism(self):
        first = split_dataset(list(range(50)), seed=9)
        second = split_dataset(list(range(50)), seed=9)
        assert first == second
        different = split_dataset(list(range(50)), seed=10)
        assert first != different

    def test_default_fractions_reference_sizes(self):
        train, val, test = split_dataset([f"i{i}" for i in range(9694)], seed=0)
        assert (len(train), len(val), len(test)) == (6237, 1930, 1527)

    def test_too_few_items(self):
        with pytest.raises(ValueError, match="at least 3"):
            split_dataset([1, 2], seed=0)

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            split_dataset(list(range(10)), seed=0, fractions=(0.5, 0.2, 0.2))
