"""Low-level image types and the pixel algorithms the recognition pipeline is built from.

Everything here is pure: images are treated as immutable after construction and
every operation returns a new value, so all of it is safe to call from multiple
threads at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np
from PIL import Image
from scipy import ndimage

# Grayscale weights fixed so outputs are bit-reproducible across platforms.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# 8-connectivity for black pixels; holes are counted with the 4-connected dual.
_STRUCT_8 = np.ones((3, 3), dtype=bool)
_STRUCT_4 = ndimage.generate_binary_structure(2, 1)

MAX_ROTATION_DEG = 45.0


class RasterError(ValueError):
    """Invalid image input (empty, malformed, out-of-contract arguments)."""


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale raster, 0 = black, 255 = white."""

    pixels: np.ndarray  # uint8, shape (height, width)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 2 or px.size == 0:
            raise RasterError("grayscale image must be a non-empty 2-D array")
        object.__setattr__(self, "pixels", px)
        px.setflags(write=False)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class BinaryImage:
    """1-bit raster, True = black/ink."""

    pixels: np.ndarray  # bool, shape (height, width)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=bool)
        if px.ndim != 2 or px.size == 0:
            raise RasterError("binary image must be a non-empty 2-D array")
        object.__setattr__(self, "pixels", px)
        px.setflags(write=False)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def crop(self, left: int, top: int, width: int, height: int) -> "BinaryImage":
        if left < 0 or top < 0 or left + width > self.width or top + height > self.height:
            raise RasterError("crop rectangle outside image bounds")
        return BinaryImage(self.pixels[top : top + height, left : left + width].copy())

    def black_count(self) -> int:
        return int(self.pixels.sum())


@dataclass(frozen=True)
class Rect:
    left: int
    top: int
    width: int
    height: int

    @property
    def right(self) -> int:
        return self.left + self.width

    @property
    def bottom(self) -> int:
        return self.top + self.height

    def translated(self, dx: int, dy: int) -> "Rect":
        return Rect(self.left + dx, self.top + dy, self.width, self.height)


@dataclass(frozen=True)
class Glyph:
    """One connected component of black pixels, with its tight bounding box."""

    bbox: Rect
    mask: np.ndarray  # bool, shape (bbox.height, bbox.width)
    label: int

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if not mask.any():
            raise RasterError("glyph mask must contain at least one black pixel")
        object.__setattr__(self, "mask", mask)
        mask.setflags(write=False)

    @property
    def black_area(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class GlyphFeatures:
    black_area: int
    holeness: int
    squareness: int
    x_extent: int
    fill_ratio: float


class SkewEstimate(NamedTuple):
    angle: float
    low_confidence: bool


AnyImage = Union[GrayImage, BinaryImage]


def load_image(path) -> Union[GrayImage, np.ndarray]:
    """Read a PNG or PGM (P5) file.

    Returns a GrayImage for single-channel inputs, or an (H, W, 3) uint8 RGB
    array for color inputs.
    """
    path = Path(path)
    if path.suffix.lower() not in {".png", ".pgm"}:
        raise RasterError(f"unsupported image format: {path.suffix!r}")
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            return GrayImage(np.asarray(im.convert("L"), dtype=np.uint8))
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png(image: AnyImage, path) -> None:
    if isinstance(image, BinaryImage):
        arr = np.where(image.pixels, 0, 255).astype(np.uint8)
    else:
        arr = image.pixels
    Image.fromarray(arr, mode="L").save(Path(path), format="PNG")


def to_grayscale(rgb: np.ndarray) -> GrayImage:
    """Convert an (H, W, 3) RGB array to grayscale with fixed luma weights."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.size == 0:
        raise RasterError("expected a non-empty (H, W, 3) RGB array")
    wr, wg, wb = LUMA_WEIGHTS
    luma = wr * rgb[..., 0] + wg * rgb[..., 1] + wb * rgb[..., 2]
    return GrayImage(np.clip(np.rint(luma), 0, 255).astype(np.uint8))


def otsu_threshold(gray: GrayImage) -> tuple[BinaryImage, int]:
    """Global Otsu binarization.

    Returns the binary image (black iff intensity <= t) and the chosen
    threshold t. Among tied maximizers of the between-class variance the
    smallest t wins; a constant image yields an all-white output with t = 0.
    """
    hist = np.bincount(gray.pixels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    # w0(t), sum0(t): weight and intensity mass of the class {<= t}
    w0 = np.cumsum(hist)
    sum0 = np.cumsum(hist * np.arange(256))
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        # constant image: no split exists
        return BinaryImage(np.zeros_like(gray.pixels, dtype=bool)), 0
    mu0 = np.where(valid, sum0 / np.where(w0 == 0, 1, w0), 0.0)
    mu1 = np.where(valid, (sum0[-1] - sum0) / np.where(w1 == 0, 1, w1), 0.0)
    bcv = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -1.0)
    t = int(np.argmax(bcv))  # argmax returns the first (smallest) maximizer
    return BinaryImage(gray.pixels <= t), t


def rotate(image: AnyImage, angle: float) -> AnyImage:
    """Rotate by `angle` degrees onto an enlarged white canvas.

    rotate(img, -theta) compensates a skew of +theta as reported by
    estimate_skew. Nearest-neighbor sampling; |angle| must be <= 45.
    """
    if abs(angle) > MAX_ROTATION_DEG:
        raise RasterError(f"|angle| must be <= {MAX_ROTATION_DEG}, got {angle}")
    if angle == 0.0:
        return image
    if isinstance(image, BinaryImage):
        out = ndimage.rotate(image.pixels, angle, reshape=True, order=0,
                             cval=False, prefilter=False)
        return BinaryImage(out)
    out = ndimage.rotate(image.pixels, angle, reshape=True, order=0,
                         cval=255, prefilter=False)
    return GrayImage(out)


def estimate_skew(binary: BinaryImage, min_angle: float = -15.0,
                  max_angle: float = 15.0, axis: str = "rows") -> SkewEstimate:
    """Estimate document skew from the projection profile.

    Scans candidate angles coarse (0.5 deg) then fine (0.1 deg around the coarse
    best) and returns the angle whose counter-rotation maximizes the variance
    of the row-sum profile. axis="cols" uses the column-sum profile instead,
    which suits vertical-bar content such as barcodes.
    """
    if min_angle >= max_angle:
        raise RasterError("min_angle must be < max_angle")
    ys, xs = np.nonzero(binary.pixels)
    if ys.size == 0:
        return SkewEstimate(0.0, True)
    if axis == "cols":
        ys, xs = xs, ys
    elif axis != "rows":
        raise RasterError(f"unknown profile axis {axis!r}")
    ys = ys.astype(np.float64)
    xs = xs.astype(np.float64)

    def profile_variance(angle: float) -> float:
        # Row coordinate of each black pixel after counter-rotation by `angle`.
        rad = np.deg2rad(angle)
        rows = np.rint(np.cos(rad) * ys + np.sin(rad) * xs).astype(np.int64)
        rows -= rows.min()
        prof = np.bincount(rows)
        return float(prof.var())

    # Swapping the axes mirrors the plane, so the candidate sign flips too.
    sign = -1.0 if axis == "cols" else 1.0
    coarse = np.arange(min_angle, max_angle + 1e-9, 0.5)
    best = max(coarse, key=lambda a: profile_variance(sign * a))
    fine = np.arange(best - 0.5, best + 0.5 + 1e-9, 0.1)
    fine = fine[(fine >= min_angle) & (fine <= max_angle)]
    best = max(fine, key=lambda a: profile_variance(sign * a))
    return SkewEstimate(round(float(best), 4), False)


def connected_components(binary: BinaryImage) -> list[Glyph]:
    """8-connected components of the black pixels, in unspecified order."""
    labels, count = ndimage.label(binary.pixels, structure=_STRUCT_8)
    glyphs: list[Glyph] = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        mask = labels[sl] == idx
        bbox = Rect(sl[1].start, sl[0].start,
                    sl[1].stop - sl[1].start, sl[0].stop - sl[0].start)
        glyphs.append(Glyph(bbox=bbox, mask=mask, label=idx))
    return glyphs


def glyph_features(glyph: Glyph) -> GlyphFeatures:
    """Per-glyph features: black area, enclosed-hole count, squareness, extent."""
    mask = glyph.mask
    black_area = int(mask.sum())
    white_labels, n_white = ndimage.label(~mask, structure=_STRUCT_4)
    border = np.concatenate([
        white_labels[0, :], white_labels[-1, :],
        white_labels[:, 0], white_labels[:, -1],
    ])
    touching = set(np.unique(border[border > 0]).tolist())
    holeness = n_white - len(touching)
    return GlyphFeatures(
        black_area=black_area,
        holeness=holeness,
        squareness=abs(glyph.bbox.height - glyph.bbox.width),
        x_extent=glyph.bbox.width,
        fill_ratio=black_area / (glyph.bbox.width * glyph.bbox.height),
    )


def close_gaps(binary: BinaryImage) -> BinaryImage:
    """3x3 morphological closing: heals 1-px stroke breaks and speckle holes."""
    closed = ndimage.binary_closing(binary.pixels, structure=_STRUCT_8)
    return BinaryImage(closed)
