"""Boxes, binary masks, affine warps and mask codecs.

Conventions used throughout the package:

* Boxes are continuous: ``Box(x, y, w, h)`` covers the half-open region
  ``[x, x + w) x [y, y + h)`` with ``x`` growing rightwards (columns) and
  ``y`` downwards (rows).  Box overlap is computed analytically.
* Masks are discrete: 2-D boolean numpy arrays indexed ``[row, col]``.  The
  pixel at ``(row, col)`` has center coordinates ``(x, y) = (col, row)``; a
  pixel belongs to a box when its center lies inside the half-open region.
* All functions are pure; none mutates its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Mask = np.ndarray  # 2-D bool array, shape (height, width)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: left edge, top edge, width, height (pixels)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"box field {name} is not finite")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box sides must be positive, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class AffineTransform:
    """Plane transform mapping (x, y) to (a*x + b*y + tx, c*x + d*y + ty)."""

    a: float
    b: float
    tx: float
    c: float
    d: float
    ty: float

    def __post_init__(self):
        if abs(self.determinant) < 1e-12:
            raise ValueError("affine transform is not invertible (determinant ~ 0)")

    @property
    def determinant(self) -> float:
        return self.a * self.d - self.b * self.c

    def apply(self, x: float, y: float) -> tuple[float, float]:
        return (self.a * x + self.b * y + self.tx, self.c * x + self.d * y + self.ty)

    def compose(self, inner: "AffineTransform") -> "AffineTransform":
        """Transform equal to applying ``inner`` first, then this one."""
        return AffineTransform(
            a=self.a * inner.a + self.b * inner.c,
            b=self.a * inner.b + self.b * inner.d,
            tx=self.a * inner.tx + self.b * inner.ty + self.tx,
            c=self.c * inner.a + self.d * inner.c,
            d=self.c * inner.b + self.d * inner.d,
            ty=self.c * inner.tx + self.d * inner.ty + self.ty,
        )

    def inverse(self) -> "AffineTransform":
        det = self.determinant
        ia, ib = self.d / det, -self.b / det
        ic, id_ = -self.c / det, self.a / det
        return AffineTransform(
            a=ia, b=ib, tx=-(ia * self.tx + ib * self.ty),
            c=ic, d=id_, ty=-(ic * self.tx + id_ * self.ty),
        )

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    @classmethod
    def translation(cls, dx: float, dy: float) -> "AffineTransform":
        return cls(1.0, 0.0, dx, 0.0, 1.0, dy)

    @classmethod
    def scaling(cls, sx: float, sy: float | None = None) -> "AffineTransform":
        sy = sx if sy is None else sy
        return cls(sx, 0.0, 0.0, 0.0, sy, 0.0)

    @classmethod
    def rotation(cls, radians: float, center: tuple[float, float] = (0.0, 0.0)) -> "AffineTransform":
        cos_t, sin_t = math.cos(radians), math.sin(radians)
        cx, cy = center
        return cls(
            a=cos_t, b=-sin_t, tx=cx - cos_t * cx + sin_t * cy,
            c=sin_t, d=cos_t, ty=cy - sin_t * cx - cos_t * cy,
        )


@dataclass(frozen=True)
class RleMask:
    """Row-major run-length encoding; the first run counts zeros."""

    height: int
    width: int
    runs: tuple[int, ...]

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"invalid RLE dimensions {self.height}x{self.width}")
        if any(r < 0 for r in self.runs):
            raise ValueError("RLE runs must be non-negative")
        if any(r == 0 for r in self.runs[1:]):
            raise ValueError("only the leading RLE run may be zero")
        total = sum(self.runs)
        if total != self.height * self.width:
            raise ValueError(
                f"RLE runs sum to {total}, expected {self.height * self.width}"
            )


def as_mask(values) -> Mask:
    """Coerce nested lists / arrays to a validated 2-D boolean mask."""
    mask = np.asarray(values, dtype=bool)
    if mask.ndim != 2 or mask.shape[0] < 1 or mask.shape[1] < 1:
        raise ValueError(f"mask must be a non-empty 2-D grid, got shape {mask.shape}")
    return mask


def empty_mask(height: int, width: int) -> Mask:
    return np.zeros((height, width), dtype=bool)


def box_iou(a: Box, b: Box) -> float:
    """Intersection-over-union of two boxes, computed analytically."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def mask_iou(a: Mask, b: Mask) -> float:
    """Jaccard overlap of two equal-sized masks.

    Two empty masks are in perfect agreement, so the overlap is defined as
    1.0; one empty and one non-empty mask give 0.0.
    """
    if a.shape != b.shape:
        raise ValueError(f"mask dimensions differ: {a.shape} vs {b.shape}")
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(a, b).sum())
    return inter / union


def box_from_mask(mask: Mask) -> Box | None:
    """Tight box over the set pixels of ``mask``; None when empty."""
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        return None
    r0, r1 = int(rows.min()), int(rows.max())
    c0, c1 = int(cols.min()), int(cols.max())
    return Box(float(c0), float(r0), float(c1 - c0 + 1), float(r1 - r0 + 1))


def rasterize_box(box: Box, width: int, height: int) -> Mask:
    """Mask of pixels whose centers fall inside the half-open box region."""
    cols = np.arange(width)
    rows = np.arange(height)
    in_x = (cols >= box.x) & (cols < box.x + box.w)
    in_y = (rows >= box.y) & (rows < box.y + box.h)
    return np.logical_and.outer(in_y, in_x)


def _round_half_up(values: np.ndarray) -> np.ndarray:
    # Ties round towards +inf on both axes so inverse warps leave no holes.
    return np.floor(values + 0.5).astype(np.int64)


def warp_mask(mask: Mask, transform: AffineTransform) -> Mask:
    """Warp a mask by an affine transform using inverse nearest-neighbor mapping.

    Output pixel (row, col) is set iff the inverse-mapped source location
    rounds (half-up) to a set source pixel inside bounds.  Output dimensions
    equal input dimensions; content mapped outside the grid is clipped.
    """
    height, width = mask.shape
    inv = transform.inverse()
    cols, rows = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    src_x = inv.a * cols + inv.b * rows + inv.tx
    src_y = inv.c * cols + inv.d * rows + inv.ty
    src_c = _round_half_up(src_x)
    src_r = _round_half_up(src_y)
    inside = (src_r >= 0) & (src_r < height) & (src_c >= 0) & (src_c < width)
    out = np.zeros_like(mask)
    out[inside] = mask[src_r[inside], src_c[inside]]
    return out


def boundary_pixels(mask: Mask) -> Mask:
    """Set pixels with an unset 4-neighbor, or lying on the image border.

    Padding the grid with zeros makes the border rule fall out of the
    neighbor rule: a set border pixel always sees a padded unset neighbor.
    """
    padded = np.zeros((mask.shape[0] + 2, mask.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    all_neighbors_set = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return mask & ~all_neighbors_set


def rle_encode(mask: Mask) -> RleMask:
    """Encode a mask as row-major run lengths, zero run first."""
    flat = mask.ravel().astype(np.int8)
    change_points = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], change_points, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return RleMask(mask.shape[0], mask.shape[1], tuple(int(r) for r in runs))


def rle_decode(rle: RleMask) -> Mask:
    """Invert :func:`rle_encode` exactly (RleMask validates its invariants)."""
    values = np.zeros(len(rle.runs), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, rle.runs)
    return flat.reshape(rle.height, rle.width)


# ---------------------------------------------------------------------------
# Mask file formats
# ---------------------------------------------------------------------------

RLE_LINE_PREFIX = "RLE"


def rle_line_dumps(rle: RleMask) -> str:
    """One-line text form: ``RLE <height> <width> <run1> <run2> ...``."""
    parts = [RLE_LINE_PREFIX, str(rle.height), str(rle.width)]
    parts.extend(str(r) for r in rle.runs)
    return " ".join(parts)


def rle_line_loads(line: str) -> RleMask:
    tokens = line.split()
    if len(tokens) < 3 or tokens[0] != RLE_LINE_PREFIX:
        raise ValueError(f"not an RLE mask line: {line[:40]!r}")
    try:
        height, width = int(tokens[1]), int(tokens[2])
        runs = tuple(int(t) for t in tokens[3:])
    except ValueError as exc:
        raise ValueError(f"malformed RLE mask line: {line[:40]!r}") from exc
    return RleMask(height, width, runs)


def pbm_dumps(mask: Mask) -> str:
    """Serialize a mask as ASCII PBM (magic P1, then width/height, then bits)."""
    height, width = mask.shape
    digits = (mask.astype(np.uint8) + ord("0")).astype(np.uint8)
    spaced = np.full((height, 2 * width), ord(" "), dtype=np.uint8)
    spaced[:, ::2] = digits
    spaced[:, -1] = ord("\n")
    body = spaced.tobytes().decode("ascii")
    return f"P1\n{width} {height}\n{body}"


def pbm_loads(text: str) -> Mask:
    """Parse ASCII PBM; accepts packed or whitespace-separated bits and comments."""
    lines = [line.split("#", 1)[0] for line in text.splitlines()]
    tokens = " ".join(lines).split()
    if len(tokens) < 3 or tokens[0] != "P1":
        raise ValueError("not an ASCII PBM document (missing P1 header)")
    try:
        width, height = int(tokens[1]), int(tokens[2])
    except ValueError as exc:
        raise ValueError("malformed PBM dimensions") from exc
    if width < 1 or height < 1:
        raise ValueError(f"invalid PBM dimensions {width}x{height}")
    bits = "".join(tokens[3:])
    if len(bits) != width * height:
        raise ValueError(
            f"PBM payload has {len(bits)} bits, expected {width * height}"
        )
    if bits.strip("01"):
        raise ValueError("PBM payload contains characters other than 0/1")
    flat = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) == ord("1")
    return flat.reshape(height, width)


def write_rle_stream(path, masks) -> None:
    """Write many masks to one text file, one RLE line per mask."""
    with open(path, "w", encoding="ascii") as handle:
        for mask in masks:
            handle.write(rle_line_dumps(rle_encode(mask)) + "\n")


def read_rle_stream(path) -> list[Mask]:
    masks = []
    with open(path, "r", encoding="ascii") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                masks.append(rle_decode(rle_line_loads(line)))
            except ValueError as exc:
                raise ValueError(f"{path}:{number}: {exc}") from exc
    return masks


def write_mask(path, mask: Mask) -> None:
    """Write a mask file; format chosen by extension (.pbm or .rle)."""
    path = str(path)
    if path.endswith(".pbm"):
        data = pbm_dumps(mask)
    elif path.endswith(".rle"):
        data = rle_line_dumps(rle_encode(mask)) + "\n"
    else:
        raise ValueError(f"unsupported mask file extension: {path}")
    with open(path, "w", encoding="ascii") as handle:
        handle.write(data)


def read_mask(path) -> Mask:
    path = str(path)
    with open(path, "r", encoding="ascii") as handle:
        text = handle.read()
    if path.endswith(".pbm"):
        return pbm_loads(text)
    if path.endswith(".rle"):
        stripped = text.strip()
        if not stripped:
            raise ValueError(f"empty RLE mask file: {path}")
        return rle_decode(rle_line_loads(stripped))
    raise ValueError(f"unsupported mask file extension: {path}")
