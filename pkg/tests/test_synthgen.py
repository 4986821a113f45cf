import json

import numpy as np
import pytest

from markscan import barcode as B
from markscan import pipeline as P
from markscan import synthgen as S
from markscan.raster import BinaryImage, estimate_skew, otsu_threshold


def _spec(template, seed=0, **kwargs):
    return S.sample_spec(template, np.random.default_rng(seed), seed=seed,
                         **kwargs)


class TestRenderSheet:
    def test_deterministic(self, kind_a):
        spec = _spec(kind_a, seed=4)
        img1, truth1 = S.render_sheet(spec, stroke_jitter=3)
        img2, truth2 = S.render_sheet(spec, stroke_jitter=3)
        assert (img1.pixels == img2.pixels).all()
        assert truth1 == truth2

    def test_no_answers_all_zero_matrix(self, kind_a):
        spec = S.SheetSpec(template=kind_a,
                           answers=(None,) * 40, cancels=(False,) * 40,
                           barcode_values=(1, 2))
        img, truth = S.render_sheet(spec)
        assert truth["answer_matrix"] == [[0] * 5] * 40
        report = P.recognize_sheet(img, kind_a)
        assert report.answer_matrix == truth["answer_matrix"]

    def test_crossed_square_rendered(self, kind_a):
        answers = [None] * 40
        answers[3] = 1
        spec = S.SheetSpec(template=kind_a, answers=tuple(answers),
                           cancels=(False,) * 40, barcode_values=(0, 0),
                           mark_style=S.MarkStyle.CROSS)
        img, _ = S.render_sheet(spec)
        binary, _ = otsu_threshold(img)
        r = S.square_rects(kind_a, 3)[1]
        sub = BinaryImage(binary.pixels[r.top : r.bottom, r.left : r.right].copy())
        from markscan.raster import connected_components, glyph_features
        (glyph,) = connected_components(sub)
        assert glyph_features(glyph).holeness == 4

    def test_kind_b_cancel_circle_filled(self, kind_b):
        n = kind_b.question_count
        answers = [0] * n
        cancels = [False] * n
        cancels[5] = True
        spec = S.SheetSpec(template=kind_b, answers=tuple(answers),
                           cancels=tuple(cancels), barcode_values=(0, 0))
        img, truth = S.render_sheet(spec)
        assert truth["answer_matrix"][5] == [0] * 5
        c = S.circle_rect(kind_b, 5)
        window = img.pixels[c.top : c.bottom, c.left : c.right]
        assert (window < 128).mean() > 0.5  # filled, not outline

    def test_bad_spec_rejected(self, kind_a):
        with pytest.raises(S.SynthError):
            S.SheetSpec(template=kind_a, answers=(None,) * 3,
                        cancels=(False,) * 40, barcode_values=(0, 0))
        with pytest.raises(S.SynthError):
            S.SheetSpec(template=kind_a, answers=(9,) + (None,) * 39,
                        cancels=(False,) * 40, barcode_values=(0, 0))


class TestDegrade:
    def test_identity_params(self, kind_a):
        img, _ = S.render_sheet(_spec(kind_a))
        out = S.degrade(img, S.DegradationParams(), seed=1)
        assert (out.pixels == img.pixels).all()

    def test_rotation_round_trip(self, kind_a):
        img, _ = S.render_sheet(_spec(kind_a))
        out = S.degrade(img, S.DegradationParams(rotation=5.0), seed=1)
        binary, _ = otsu_threshold(out)
        assert abs(estimate_skew(binary).angle - 5.0) <= 0.5

    def test_barcode_damage_survives_voting(self, kind_a):
        img, truth = S.render_sheet(_spec(kind_a, seed=6))
        out = S.degrade(img, S.DegradationParams(barcode_damage_strips=2),
                        seed=6, barcode_boxes=S.barcode_boxes(kind_a))
        report = P.recognize_sheet(out, kind_a)
        assert list(report.barcodes) == truth["barcodes"]

    def test_speckle_flips_expected_fraction(self, kind_a):
        img, _ = S.render_sheet(_spec(kind_a))
        out = S.degrade(img, S.DegradationParams(speckle_density=0.005), seed=2)
        frac = (out.pixels != img.pixels).mean()
        assert 0.004 < frac < 0.006

    def test_invalid_params_rejected(self):
        with pytest.raises(S.SynthError):
            S.DegradationParams(rotation=20.0)
        with pytest.raises(S.SynthError):
            S.DegradationParams(speckle_density=0.5)


class TestCorpus:
    def test_reproducible_bytes(self, kind_a, tmp_path):
        ranges = S.DegradationRanges(rotation=(-5, 5), speckle_max=0.003,
                                     stroke_jitter_max=2, barcode_damage_max=1)
        S.generate_corpus(3, kind_a, tmp_path / "one", ranges=ranges, seed=7)
        S.generate_corpus(3, kind_a, tmp_path / "two", ranges=ranges, seed=7)
        for name in sorted(p.name for p in (tmp_path / "one").iterdir()):
            assert ((tmp_path / "one" / name).read_bytes()
                    == (tmp_path / "two" / name).read_bytes()), name

    def test_layout_and_manifest(self, kind_b, tmp_path):
        out = S.generate_corpus(4, kind_b, tmp_path / "c", seed=1,
                                cancel_prob=0.2)
        files = {p.name for p in out.iterdir()}
        assert "manifest.json" in files
        assert sum(1 for f in files if f.endswith(".png")) == 4
        assert sum(1 for f in files if f.endswith(".truth.json")) == 4
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["count"] == 4
        marked = 0
        for entry in manifest["sheets"]:
            truth = json.loads((out / entry["truth"]).read_text())
            row_sum = sum(sum(r) for r in truth["answer_matrix"])
            assert entry["marked_squares"] == row_sum
            marked += row_sum
        assert manifest["totals"]["marked_squares"] == marked
        assert (manifest["totals"]["non_marked_squares"]
                == 4 * 5 * kind_b.question_count - marked)

    def test_oracle_soundness_undegraded(self, kind_a, kind_b, tmp_path):
        for template, name in ((kind_a, "a"), (kind_b, "b")):
            out = S.generate_corpus(2, template, tmp_path / name, seed=3,
                                    cancel_prob=0.15)
            from markscan.raster import load_image
            for truth_path in sorted(out.glob("*.truth.json")):
                truth = json.loads(truth_path.read_text())
                img = load_image(out / truth_path.name.replace(".truth.json", ".png"))
                report = P.recognize_sheet(img, template)
                assert report.answer_matrix == truth["answer_matrix"]
                assert list(report.barcodes) == truth["barcodes"]
                assert [q.canceled for q in report.questions] == truth["canceled"]

    def test_zero_count_rejected(self, kind_a, tmp_path):
        with pytest.raises(S.SynthError):
            S.generate_corpus(0, kind_a, tmp_path / "x")
