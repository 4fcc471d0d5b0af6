import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from htrkit.metrics import EvalPair, evaluate, evaluate_dirs, format_table, levenshtein

short_strings = st.text(alphabet="abc", max_size=8)


def recursive_distance(a, b):
    """Textbook recursive definition; deliberately not the DP route."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    if a[0] == b[0]:
        return recursive_distance(a[1:], b[1:])
    return 1 + min(
        recursive_distance(a[1:], b),
        recursive_distance(a, b[1:]),
        recursive_distance(a[1:], b[1:]),
    )


class TestLevenshtein:
    def test_identity(self):
        assert levenshtein("abc", "abc") == 0

    def test_all_deletions(self):
        assert levenshtein("abc", "") == 3

    def test_kitten_sitting(self):
        assert levenshtein("kitten", "sitting") == 3
        assert recursive_distance("kitten", "sitting") == 3

    def test_word_sequences(self):
        assert levenshtein(["the", "cat"], ["the", "hat"]) == 1
        assert levenshtein([], ["a"]) == 1

    def test_matches_recursive_oracle_short(self):
        strings = ["", "a", "b", "ab", "ba", "abc", "cba", "aab"]
        for a in strings:
            for b in strings:
                assert levenshtein(a, b) == recursive_distance(a, b)

    @given(a=short_strings, b=short_strings)
    @settings(max_examples=300, deadline=None)
    def test_symmetry(self, a, b):
        assert levenshtein(a, b) == levenshtein(b, a)

    @given(a=short_strings, b=short_strings, c=short_strings)
    @settings(max_examples=300, deadline=None)
    def test_triangle_inequality(self, a, b, c):
        assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)

    @given(a=short_strings, b=short_strings)
    @settings(max_examples=300, deadline=None)
    def test_bounds(self, a, b):
        d = levenshtein(a, b)
        assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))

    @given(a=short_strings)
    @settings(max_examples=100, deadline=None)
    def test_self_distance_zero(self, a):
        assert levenshtein(a, a) == 0


class TestEvaluate:
    def test_hand_computed_corpus(self):
        report = evaluate(
            [EvalPair("1", "ab", "ab"), EvalPair("2", "cd", "ce")]
        )
        assert report.cer == pytest.approx(25.0)
        assert report.acc == pytest.approx(50.0)
        assert report.n == 2

    def test_perfect_predictions(self):
        pairs = [EvalPair(str(i), "line here", "line here") for i in range(3)]
        report = evaluate(pairs)
        assert (report.cer, report.wer, report.acc) == (0.0, 0.0, 100.0)

    def test_empty_pair_list_rejected(self):
        with pytest.raises(ValueError):
            evaluate([])

    def test_empty_reference_warns_and_counts_distance(self):
        with pytest.warns(UserWarning, match="empty reference"):
            report = evaluate(
                [EvalPair("1", "xx", ""), EvalPair("2", "ab", "ab")]
            )
        # 2 edits over 2 reference characters: the empty line inflates CER.
        assert report.cer == pytest.approx(100.0)

    def test_corpus_pooling_differs_from_mean_of_rates(self):
        # Line rates are 50% and 10%; the pooled corpus rate weights by
        # reference length and lands elsewhere.
        pairs = [
            EvalPair("1", "ax", "ab"),
            EvalPair("2", "abcdefghix", "abcdefghij"),
        ]
        report = evaluate(pairs)
        line_rates = [100 * l.char_dist / l.char_len for l in report.per_line]
        assert report.cer == pytest.approx(100 * 2 / 12)
        assert report.cer != pytest.approx(sum(line_rates) / 2)

    def test_permutation_invariance(self):
        pairs = [
            EvalPair("1", "abc", "abd"),
            EvalPair("2", "x y", "x z"),
            EvalPair("3", "qqq", "qqq"),
        ]
        forward = evaluate(pairs)
        backward = evaluate(list(reversed(pairs)))
        assert (forward.cer, forward.wer, forward.acc) == (
            backward.cer, backward.wer, backward.acc,
        )

    def test_nfc_normalization(self):
        composed = "café"
        decomposed = "café"
        report = evaluate([EvalPair("1", composed, decomposed)])
        assert report.cer == 0.0 and report.acc == 100.0

    def test_whitespace_trimmed(self):
        report = evaluate([EvalPair("1", " ab\n", "ab")])
        assert report.cer == 0.0 and report.acc == 100.0

    def test_spaces_count_as_characters(self):
        report = evaluate([EvalPair("1", "a b", "ab")])
        assert report.per_line[0].char_dist == 1
        assert report.per_line[0].char_len == 2

    def test_pair_needs_id(self):
        with pytest.raises(ValueError):
            EvalPair("", "a", "a")

    def test_table_formatting_one_decimal(self):
        pairs = [EvalPair("1", "ab", "ab")]
        table = format_table(evaluate(pairs))
        assert "0.0" in table and "100.0" in table

    def test_json_shape(self):
        report = evaluate([EvalPair("line", "a", "b")])
        data = report.to_dict()
        assert set(data) == {"n", "cer", "wer", "acc", "lines"}
        assert data["lines"][0]["id"] == "line"


class TestEvaluateDirs:
    def _write(self, directory, stems_to_text):
        directory.mkdir(exist_ok=True)
        for stem, text in stems_to_text.items():
            (directory / f"{stem}.txt").write_text(text + "\n", encoding="utf-8")

    def test_identical_directories(self, tmp_path):
        texts = {"5_1_1": "ab", "5_1_2": "cd"}
        self._write(tmp_path / "pred", texts)
        self._write(tmp_path / "ref", texts)
        report = evaluate_dirs(tmp_path / "pred", tmp_path / "ref")
        assert report.acc == 100.0 and report.n == 2

    def test_missing_stem_named(self, tmp_path):
        self._write(tmp_path / "pred", {"5_1_1": "ab"})
        self._write(tmp_path / "ref", {"5_1_1": "ab", "5_1_2": "cd"})
        with pytest.raises(ValueError, match="5_1_2"):
            evaluate_dirs(tmp_path / "pred", tmp_path / "ref")

    def test_extra_prediction_named(self, tmp_path):
        self._write(tmp_path / "pred", {"a": "x", "b": "y"})
        self._write(tmp_path / "ref", {"a": "x"})
        with pytest.raises(ValueError, match="b"):
            evaluate_dirs(tmp_path / "pred", tmp_path / "ref")

    def test_counts_matched_pairs(self, tmp_path):
        texts = {f"l{i}": "text" for i in range(3)}
        self._write(tmp_path / "pred", texts)
        self._write(tmp_path / "ref", texts)
        assert evaluate_dirs(tmp_path / "pred", tmp_path / "ref").n == 3

    def test_empty_directories_rejected(self, tmp_path):
        (tmp_path / "pred").mkdir()
        (tmp_path / "ref").mkdir()
        with pytest.raises(ValueError, match="no matched"):
            evaluate_dirs(tmp_path / "pred", tmp_path / "ref")
