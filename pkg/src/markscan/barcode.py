"""Encoder and decoder for the 26-bit discrete two-width barcode.

Frame layout (1-based bit positions):
  1-2    start bits, always 1 1
  3-22   20-bit payload, most-significant bit first
  23     parity of the number of payload ones (popcount mod 2)
  24     parity of the number of payload zeros ((20 - popcount) mod 2)
  25-26  stop bits, always 1 0

Only the bars carry information: a wide bar is a 1, a narrow bar a 0; the
spaces encode nothing. A printed barcode is read in 5 horizontal strips that
are decoded independently and settled by plurality vote, so moderate damage
does not defeat it.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .raster import BinaryImage, connected_components, estimate_skew, rotate

PAYLOAD_BITS = 20
FRAME_BITS = 26
MAX_VALUE = (1 << PAYLOAD_BITS) - 1

START_BITS = (1, 1)
STOP_BITS = (1, 0)

# Reference render geometry (pixels): two-width bars over uniform gaps.
NARROW_PX = 3
WIDE_PX = 7
GAP_PX = 3
BAR_HEIGHT_PX = 120
STRIP_COUNT = 5

# Bars shorter than this fraction of the tallest glyph are treated as noise.
_MIN_BAR_HEIGHT_FRAC = 0.5


class CodecError(ValueError):
    """Out-of-range payload or malformed codec input."""


@dataclass(frozen=True)
class FrameError:
    """A strip that failed to parse; `check` names the first violated rule."""

    check: str  # "length" | "start" | "stop" | "parity" | "widths"
    detail: str = ""

    def __str__(self) -> str:
        return f"frame error ({self.check}{': ' + self.detail if self.detail else ''})"


@dataclass(frozen=True)
class StripReading:
    bits: tuple[int, ...]
    outcome: Union[int, FrameError]


@dataclass(frozen=True)
class RegionError:
    """No plurality winner among the 5 strip decodes."""

    strip_outcomes: tuple[Union[int, FrameError], ...]


def encode(value: int) -> tuple[int, ...]:
    """Encode a payload into the full 26-bit frame."""
    if not 0 <= value <= MAX_VALUE:
        raise CodecError(f"payload must be in 0..{MAX_VALUE}, got {value}")
    payload = tuple((value >> (PAYLOAD_BITS - 1 - i)) & 1 for i in range(PAYLOAD_BITS))
    ones = sum(payload)
    parity = (ones % 2, (PAYLOAD_BITS - ones) % 2)
    return START_BITS + payload + parity + STOP_BITS


def decode_bits(bits: Sequence[int]) -> Union[int, FrameError]:
    """Parse a bit sequence as a Codeword26; returns the payload or the first failure."""
    bits = tuple(int(b) for b in bits)
    if len(bits) != FRAME_BITS:
        return FrameError("length", f"got {len(bits)} bits")
    if bits[0:2] != START_BITS:
        return FrameError("start")
    if bits[24:26] != STOP_BITS:
        return FrameError("stop")
    payload = bits[2:22]
    ones = sum(payload)
    if bits[22] != ones % 2 or bits[23] != (PAYLOAD_BITS - ones) % 2:
        return FrameError("parity")
    value = 0
    for b in payload:
        value = (value << 1) | b
    return value


def bits_to_string(bits: Sequence[int]) -> str:
    return "".join(str(int(b)) for b in bits)


def string_to_bits(text: str) -> tuple[int, ...]:
    if any(c not in "01" for c in text):
        raise CodecError("bit string may contain only '0' and '1'")
    return tuple(int(c) for c in text)


def render_bars(value: int, narrow: int = NARROW_PX, wide: int = WIDE_PX,
                gap: int = GAP_PX, height: int = BAR_HEIGHT_PX) -> BinaryImage:
    """Render a codeword as vertical bars at the reference geometry."""
    bits = encode(value)
    widths = [wide if b else narrow for b in bits]
    total = sum(widths) + gap * (len(bits) - 1)
    arr = np.zeros((height, total), dtype=bool)
    x = 0
    for w in widths:
        arr[:, x : x + w] = True
        x += w + gap
    return BinaryImage(arr)


def read_bars(strip: BinaryImage, bar_wide_min: int = 0) -> StripReading:
    """Read one horizontal strip of a barcode into bits.

    Glyphs are sorted left to right; each maps to 1 iff its x-extent reaches
    the wide threshold. With bar_wide_min == 0 the threshold adapts to the
    midpoint of the observed extents, rejecting strips that show only a single
    width class.
    """
    glyphs = connected_components(strip)
    if not glyphs:
        return StripReading((), FrameError("length", "got 0 bits"))
    max_height = max(g.bbox.height for g in glyphs)
    bars = [g for g in glyphs if g.bbox.height >= _MIN_BAR_HEIGHT_FRAC * max_height]
    bars.sort(key=lambda g: g.bbox.left)
    extents = [g.bbox.width for g in bars]
    if bar_wide_min > 0:
        threshold = bar_wide_min
    else:
        lo, hi = min(extents), max(extents)
        if hi < 1.5 * lo:
            return StripReading((), FrameError("widths", f"extents {lo}..{hi}"))
        threshold = (lo + hi) / 2
    bits = tuple(1 if e >= threshold else 0 for e in extents)
    return StripReading(bits, decode_bits(bits))


def split_strips(region: BinaryImage, count: int = STRIP_COUNT) -> list[BinaryImage]:
    """Split a region into `count` stacked full-width strips (floor boundaries)."""
    h = region.height
    strips = []
    for i in range(count):
        top = i * h // count
        bottom = (i + 1) * h // count
        if bottom > top:
            strips.append(BinaryImage(region.pixels[top:bottom].copy()))
    return strips


def _trim_guard(strip: BinaryImage) -> BinaryImage:
    """Drop a thin guard band from a strip's top and bottom edges.

    Strip boundaries are approximate after deskew, so a row or two of a
    neighboring strip's ink can bleed across and bridge adjacent bars.
    """
    guard = strip.height // 8
    if guard == 0 or strip.height - 2 * guard < 4:
        return strip
    return BinaryImage(strip.pixels[guard : strip.height - guard].copy())


def decode_region(region: BinaryImage, bar_wide_min: int = 0,
                  skew_range: float = 15.0) -> Union[int, RegionError]:
    """Decode a barcode region with per-region deskew and 5-strip voting.

    The region is straightened independently of the sheet (stickers may sit at
    their own angle), cropped to its ink, split into 5 stacked strips, and the
    plurality value among the clean strip decodes wins. A tie or zero clean
    strips yields a RegionError carrying all strip outcomes.
    """
    est = estimate_skew(region, -skew_range, skew_range, axis="cols")
    straight = region if est.low_confidence else rotate(region, -est.angle)
    ys, xs = np.nonzero(straight.pixels)
    if ys.size == 0:
        empty = FrameError("length", "got 0 bits")
        return RegionError((empty,) * STRIP_COUNT)
    content = BinaryImage(
        straight.pixels[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1].copy())
    outcomes = tuple(read_bars(_trim_guard(s), bar_wide_min).outcome
                     for s in split_strips(content))
    votes = Counter(o for o in outcomes if isinstance(o, int))
    if not votes:
        return RegionError(outcomes)
    ranked = votes.most_common(2)
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return RegionError(outcomes)
    return ranked[0][0]
