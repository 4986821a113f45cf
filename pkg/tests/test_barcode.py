import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markscan import barcode as B
from markscan.raster import BinaryImage, rotate

payloads = st.integers(0, B.MAX_VALUE)


class TestCodec:
    def test_encode_zero(self):
        assert B.bits_to_string(B.encode(0)) == "11000000000000000000000010"

    def test_encode_five(self):
        assert B.bits_to_string(B.encode(5)) == "11000000000000000001010010"

    def test_encode_seven_sets_both_parity_bits(self):
        # 7 has 3 payload ones (odd) and 17 zeros (odd)
        assert B.bits_to_string(B.encode(7)) == "11000000000000000001111110"

    def test_out_of_range_rejected(self):
        with pytest.raises(B.CodecError):
            B.encode(-1)
        with pytest.raises(B.CodecError):
            B.encode(B.MAX_VALUE + 1)

    @given(payloads)
    def test_round_trip(self, v):
        assert B.decode_bits(B.encode(v)) == v

    @given(payloads)
    def test_parity_bits_always_equal(self, v):
        bits = B.encode(v)
        assert bits[22] == bits[23]

    def test_wrong_length(self):
        out = B.decode_bits((1, 0, 1))
        assert isinstance(out, B.FrameError) and out.check == "length"

    def test_bad_start(self):
        bits = list(B.encode(9))
        bits[1] = 0
        out = B.decode_bits(bits)
        assert isinstance(out, B.FrameError) and out.check == "start"

    def test_bad_stop(self):
        bits = list(B.encode(12345))
        bits[25] = 1
        out = B.decode_bits(bits)
        assert isinstance(out, B.FrameError) and out.check == "stop"

    def test_payload_flip_breaks_parity(self):
        bits = list(B.encode(12345))
        bits[10] ^= 1
        out = B.decode_bits(bits)
        assert isinstance(out, B.FrameError) and out.check == "parity"

    @given(payloads, st.integers(0, 25))
    @settings(max_examples=200)
    def test_single_bit_flip_never_misdecodes(self, v, pos):
        bits = list(B.encode(v))
        bits[pos] ^= 1
        out = B.decode_bits(bits)
        assert isinstance(out, B.FrameError)


class TestReadBars:
    def test_render_read_round_trip(self):
        reading = B.read_bars(B.render_bars(0))
        assert reading.bits == B.encode(0)
        assert reading.outcome == 0

    def test_adaptive_threshold_splits_at_midpoint(self):
        # widths 3 and 7: threshold 5, so a 5-px bar reads as wide
        arr = np.zeros((20, 30), dtype=bool)
        arr[:, 0:3] = True    # narrow -> 0
        arr[:, 10:15] = True  # 5 px -> 1
        arr[:, 20:27] = True  # wide -> 1
        reading = B.read_bars(BinaryImage(arr))
        assert reading.bits == (0, 1, 1)

    def test_erased_bar_gives_short_frame(self):
        bars = B.render_bars(12345)
        px = bars.pixels.copy()
        glyph_starts = np.flatnonzero(np.diff(np.r_[0, px[0].astype(int)]) == 1)
        x = glyph_starts[4]
        px[:, x : x + B.WIDE_PX] = False
        out = B.read_bars(BinaryImage(px)).outcome
        assert isinstance(out, B.FrameError)
        assert out.check == "length" and "25" in out.detail

    def test_single_width_class_rejected(self):
        arr = np.zeros((10, 40), dtype=bool)
        for x in range(0, 40, 8):
            arr[:, x : x + 3] = True
        out = B.read_bars(BinaryImage(arr)).outcome
        assert isinstance(out, B.FrameError) and out.check == "widths"

    def test_empty_strip(self):
        out = B.read_bars(BinaryImage(np.zeros((5, 5), dtype=bool))).outcome
        assert isinstance(out, B.FrameError) and out.check == "length"


def _stack_strips(values):
    """Stack per-strip renders (None = blank strip) into one region."""
    strips = []
    rendered = [None if v is None else B.render_bars(v, height=24) for v in values]
    width = max(r.width for r in rendered if r is not None)
    for r in rendered:
        arr = np.zeros((24, width), dtype=bool)
        if r is not None:
            arr[:, : r.width] = r.pixels
        strips.append(arr)
    return BinaryImage(np.vstack(strips))


class TestDecodeRegion:
    def test_clean_region(self):
        assert B.decode_region(B.render_bars(777)) == 777

    def test_rotated_sticker(self):
        assert B.decode_region(rotate(B.render_bars(777), 7.0)) == 777

    def test_plurality_wins_over_minority_and_errors(self):
        region = _stack_strips([42, None, 42, None, 17])
        assert B.decode_region(region) == 42

    def test_tie_is_region_error(self):
        region = _stack_strips([42, None, 42, 17, 17])
        out = B.decode_region(region)
        assert isinstance(out, B.RegionError)
        outcomes = [o for o in out.strip_outcomes if isinstance(o, int)]
        assert sorted(outcomes) == [17, 17, 42, 42]

    def test_blank_region(self):
        out = B.decode_region(BinaryImage(np.zeros((50, 100), dtype=bool)))
        assert isinstance(out, B.RegionError)

    def test_two_damaged_strips_still_decode(self):
        region = B.render_bars(99123)
        px = region.pixels.copy()
        px[0:44, :] = True  # obliterate roughly the top two strips
        assert B.decode_region(BinaryImage(px)) == 99123
