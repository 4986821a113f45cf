import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markscan import pipeline as P
from markscan import synthgen as S
from markscan.layout import CancelMode
from markscan.raster import (BinaryImage, GlyphFeatures, GrayImage, rotate)


def _row(marked=None, blackout=None, speck=None, bridge=None,
         width=200, height=40, pitch=40, side=24):
    """A synthetic answer row: 5 outlined squares, optional mark and defects."""
    arr = np.zeros((height, width), dtype=bool)
    inset = (pitch - side) // 2
    top = (height - side) // 2
    for j in range(5):
        x0 = j * pitch + inset
        sq = np.zeros((side, side), dtype=bool)
        sq[:2, :] = sq[-2:, :] = sq[:, :2] = sq[:, -2:] = True
        if j == blackout:
            sq[:, :] = True
        elif j == marked:
            for i in range(side):
                sq[i, i] = sq[i, side - 1 - i] = True
                sq[min(i + 1, side - 1), i] = True
        arr[top : top + side, x0 : x0 + side] = sq
    if speck is not None:
        arr[height // 2, speck] = True
    if bridge is not None:
        j = bridge
        y = height // 2
        arr[y : y + 2, j * pitch + inset : (j + 1) * pitch + inset + side] = True
    return BinaryImage(arr)


class TestSplitRows:
    def test_even_split(self):
        col = BinaryImage(np.zeros((500, 20), dtype=bool))
        rows = P.split_rows(col, 10)
        assert [r.height for r in rows] == [50] * 10

    def test_uneven_split_floor_formula(self):
        col = BinaryImage(np.zeros((103, 20), dtype=bool))
        rows = P.split_rows(col, 10)
        heights = [r.height for r in rows]
        assert set(heights) == {10, 11}
        assert sum(heights) == 103

    def test_count_one_is_identity(self):
        col = BinaryImage(np.zeros((37, 20), dtype=bool))
        (row,) = P.split_rows(col, 1)
        assert row.height == 37


class TestLocateAnswerSquares:
    def _cal(self, kind_a):
        return kind_a.calibration

    def test_clean_row(self, kind_a):
        located = P.locate_answer_squares(_row(marked=3), self._cal(kind_a))
        assert isinstance(located, list) and len(located) == 5
        lefts = [g.bbox.left for g in located]
        assert lefts == sorted(lefts)

    def test_stray_speck_filtered(self, kind_a):
        located = P.locate_answer_squares(_row(marked=1, speck=38),
                                          self._cal(kind_a))
        assert isinstance(located, list) and len(located) == 5

    def test_bridged_squares_fail_with_found_count(self, kind_a):
        out = P.locate_answer_squares(_row(bridge=1), self._cal(kind_a))
        assert isinstance(out, P.RowError)
        assert out.found == 4

    def test_blank_row_fails(self, kind_a):
        out = P.locate_answer_squares(
            BinaryImage(np.zeros((40, 200), dtype=bool)), self._cal(kind_a))
        assert isinstance(out, P.RowError) and out.found == 0


class TestClassifySquare:
    def test_hollow_outline_is_empty(self, kind_a):
        f = GlyphFeatures(black_area=176, holeness=1, squareness=0,
                          x_extent=24, fill_ratio=176 / 576)
        assert P.classify_square(f, kind_a.calibration) is P.MarkState.EMPTY

    def test_crossed_square_is_chosen(self, kind_a):
        f = GlyphFeatures(black_area=290, holeness=4, squareness=0,
                          x_extent=24, fill_ratio=290 / 576)
        assert P.classify_square(f, kind_a.calibration) is P.MarkState.CHOSEN

    def test_solid_square_is_blacked_out(self, kind_a):
        f = GlyphFeatures(black_area=576, holeness=0, squareness=0,
                          x_extent=24, fill_ratio=1.0)
        assert P.classify_square(f, kind_a.calibration) is P.MarkState.BLACKED_OUT

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 8), st.floats(0.01, 1.0), st.integers(0, 4),
           st.floats(0.0, 0.3))
    def test_monotone_in_features(self, holes, fill, dh, df):
        from markscan.layout import bundled_template
        cal = bundled_template("kind_a").calibration
        base = GlyphFeatures(black_area=10, holeness=holes, squareness=0,
                             x_extent=24, fill_ratio=fill)
        more = GlyphFeatures(black_area=10, holeness=holes + dh, squareness=0,
                             x_extent=24, fill_ratio=min(1.0, fill + df))
        if P.classify_square(base, cal) is P.MarkState.CHOSEN:
            assert P.classify_square(more, cal) is not P.MarkState.EMPTY

    def test_pure_function(self, kind_a):
        f = GlyphFeatures(black_area=290, holeness=4, squareness=0,
                          x_extent=24, fill_ratio=0.5)
        results = {P.classify_square(f, kind_a.calibration) for _ in range(5)}
        assert results == {P.MarkState.CHOSEN}


class TestFindOrigin:
    def _binary(self, width=600, height=600):
        return np.zeros((height, width), dtype=bool)

    def test_single_square(self, kind_a):
        arr = self._binary()
        arr[40:70, 40:70] = True
        assert P.find_origin(BinaryImage(arr), kind_a) == (40, 40)

    def test_speck_nearer_to_corner_rejected(self, kind_a):
        arr = self._binary()
        arr[40:70, 40:70] = True
        arr[5:7, 5:7] = True  # 4-px speck, below origin_min_area
        assert P.find_origin(BinaryImage(arr), kind_a) == (40, 40)

    def test_blank_page(self, kind_a):
        with pytest.raises(P.OriginNotFound):
            P.find_origin(BinaryImage(self._binary()), kind_a)

    def test_candidate_outside_search_window_ignored(self, kind_a):
        arr = self._binary(1400, 1400)
        arr[1000:1100, 1000:1100] = True
        with pytest.raises(P.OriginNotFound):
            P.find_origin(BinaryImage(arr), kind_a)


class TestPreprocess:
    def test_rotated_sheet_restored(self, kind_a):
        spec = S.sample_spec(kind_a, np.random.default_rng(0), seed=0)
        img, _ = S.render_sheet(spec)
        tilted = rotate(img, 4.0)
        binary, applied = P.preprocess(tilted)
        assert abs(applied - 4.0) <= 0.5
        from markscan.raster import estimate_skew
        assert abs(estimate_skew(binary).angle) <= 0.5

    def test_straight_sheet_near_identity(self, kind_a):
        spec = S.sample_spec(kind_a, np.random.default_rng(1), seed=1)
        img, _ = S.render_sheet(spec)
        binary, applied = P.preprocess(img)
        assert abs(applied) <= 0.5
        assert binary.black_count() > 0

    def test_blank_page(self):
        blank = GrayImage(np.full((200, 200), 255, dtype=np.uint8))
        binary, applied = P.preprocess(blank)
        assert applied == 0.0
        assert binary.black_count() == 0


def _recognize_clean(template, seed=0, cancel_prob=0.0):
    spec = S.sample_spec(template, np.random.default_rng(seed),
                         cancel_prob=cancel_prob, seed=seed)
    img, truth = S.render_sheet(spec)
    return P.recognize_sheet(img, template), truth


class TestResolveQuestion:
    def test_kind_a_blackout_cancels(self, kind_a):
        marks = (P.MarkState.EMPTY, P.MarkState.EMPTY, P.MarkState.EMPTY,
                 P.MarkState.BLACKED_OUT, P.MarkState.EMPTY)
        q = P.resolve_question(0, marks, kind_a, None, (None,) * 5)
        assert q.canceled and not q.flagged
        assert q.matrix_row == [0, 0, 0, 0, 0]

    def test_kind_b_full_circle_cancels_but_keeps_mark(self, kind_b):
        marks = (P.MarkState.EMPTY, P.MarkState.EMPTY, P.MarkState.CHOSEN,
                 P.MarkState.EMPTY, P.MarkState.EMPTY)
        circle = GlyphFeatures(black_area=254, holeness=0, squareness=0,
                               x_extent=18, fill_ratio=0.78)
        q = P.resolve_question(0, marks, kind_b, circle, (None,) * 5)
        assert q.canceled
        assert q.marks[2] is P.MarkState.CHOSEN
        assert q.matrix_row == [0, 0, 0, 0, 0]

    def test_kind_b_missing_circle_flagged(self, kind_b):
        marks = (P.MarkState.EMPTY,) * 5
        q = P.resolve_question(0, marks, kind_b, None, (None,) * 5)
        assert q.flagged and q.flag_reason == "circle not found"

    def test_multiple_marks_flagged_and_recorded(self, kind_a):
        marks = (P.MarkState.CHOSEN, P.MarkState.EMPTY, P.MarkState.CHOSEN,
                 P.MarkState.EMPTY, P.MarkState.EMPTY)
        q = P.resolve_question(0, marks, kind_a, None, (None,) * 5)
        assert q.flagged and q.flag_reason == "multiple marks"
        assert q.matrix_row == [1, 0, 1, 0, 0]

    def test_blackout_plus_mark_flagged(self, kind_a):
        marks = (P.MarkState.BLACKED_OUT, P.MarkState.CHOSEN,
                 P.MarkState.EMPTY, P.MarkState.EMPTY, P.MarkState.EMPTY)
        q = P.resolve_question(0, marks, kind_a, None, (None,) * 5)
        assert q.canceled and q.flagged


class TestRecognizeSheet:
    def test_clean_kind_a_matches_truth(self, kind_a):
        report, truth = _recognize_clean(kind_a, seed=7, cancel_prob=0.1)
        assert report.answer_matrix == truth["answer_matrix"]
        assert [b for b in report.barcodes] == truth["barcodes"]
        assert report.flagged_questions == []

    def test_clean_kind_b_matches_truth(self, kind_b):
        report, truth = _recognize_clean(kind_b, seed=8, cancel_prob=0.1)
        assert report.answer_matrix == truth["answer_matrix"]
        assert [b for b in report.barcodes] == truth["barcodes"]

    def test_blank_page_is_fatal(self, kind_a):
        blank = GrayImage(np.full((720, 1200), 255, dtype=np.uint8))
        with pytest.raises(P.OriginNotFound):
            P.recognize_sheet(blank, kind_a)

    def test_bridged_row_flagged_others_correct(self, kind_a):
        spec = S.sample_spec(kind_a, np.random.default_rng(3), seed=3)
        img, truth = S.render_sheet(spec)
        px = img.pixels.copy()
        rects = S.square_rects(kind_a, 5)
        y = rects[0].top + rects[0].height // 2
        px[y : y + 2, rects[1].left : rects[2].right] = 0
        report = P.recognize_sheet(GrayImage(px), kind_a)
        assert 5 in report.flagged_questions
        assert report.answer_matrix[5] == [0, 0, 0, 0, 0]
        for i, row in enumerate(report.answer_matrix):
            if i != 5:
                assert row == truth["answer_matrix"][i]

    def test_rotation_robustness(self, kind_b):
        spec = S.sample_spec(kind_b, np.random.default_rng(9),
                             cancel_prob=0.1, seed=9)
        img, truth = S.render_sheet(spec)
        baseline = P.recognize_sheet(img, kind_b).answer_matrix
        assert baseline == truth["answer_matrix"]
        for theta in (-10.0, -3.0, 3.0, 10.0):
            report = P.recognize_sheet(rotate(img, theta), kind_b)
            assert report.answer_matrix == baseline, f"theta={theta}"

    def test_matrix_consistency_invariant(self, kind_b):
        report, _ = _recognize_clean(kind_b, seed=11, cancel_prob=0.2)
        for q, row in zip(report.questions, report.answer_matrix):
            if q.canceled or P.MarkState.CHOSEN not in q.marks:
                assert row == [0, 0, 0, 0, 0]
            for j, m in enumerate(q.marks):
                assert (row[j] == 1) == (m is P.MarkState.CHOSEN and not q.canceled)

    def test_report_serialization_schema(self, kind_a):
        report, _ = _recognize_clean(kind_a, seed=13)
        doc = P.report_to_dict(report)
        assert doc["schema"] == 1
        assert len(doc["answer_matrix"]) == kind_a.question_count
        assert all(len(row) == 5 for row in doc["answer_matrix"])
        assert len(doc["questions"][0]["square_boxes"]) == 5
        assert doc["barcodes"][0].keys() == {"value"}
