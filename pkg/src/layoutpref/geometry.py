"""Domain types for canvases, elements and boxes, plus binning and rectangle geometry.

Boxes are stored center-format (x, y, w, h) and converted to corner form only
inside geometry routines. Position tokens live in {0, ..., K}: coordinates are
clamped to the canvas before binning so the token alphabet stays closed, and
the inverse mapping reconstructs bin centers (clamped at the canvas edge).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence


class ElementKind(str, Enum):
    IMAGE = "image"
    TEXT = "text"
    SHAPE = "shape"
    BACKGROUND = "background"


@dataclass(frozen=True)
class Canvas:
    """A blank canvas of positive pixel dimensions."""

    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"canvas dimensions must be positive, got {self.width}x{self.height}")

    @property
    def aspect(self) -> float:
        return self.width / self.height


@dataclass(frozen=True)
class Element:
    """A design element to be placed on a canvas.

    ``text`` is present exactly when kind is text; non-text kinds may carry an
    ``asset_ref`` (file path) and an intrinsic aspect ratio (width / height).
    """

    id: str
    kind: ElementKind
    text: Optional[str] = None
    asset_ref: Optional[str] = None
    intrinsic_aspect: Optional[float] = None

    def __post_init__(self):
        if self.kind is ElementKind.TEXT and self.text is None:
            raise ValueError(f"text element {self.id!r} must carry text")
        if self.kind is not ElementKind.TEXT and self.text is not None:
            raise ValueError(f"non-text element {self.id!r} must not carry text")
        if self.intrinsic_aspect is not None and not self.intrinsic_aspect > 0:
            raise ValueError(f"intrinsic_aspect must be positive, got {self.intrinsic_aspect}")


@dataclass(frozen=True)
class BBox:
    """Center-format bounding box: center coordinates plus width and height, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"box sides must be nonnegative, got w={self.w} h={self.h}")

    @property
    def left(self) -> float:
        return self.x - self.w / 2

    @property
    def right(self) -> float:
        return self.x + self.w / 2

    @property
    def top(self) -> float:
        return self.y - self.h / 2

    @property
    def bottom(self) -> float:
        return self.y + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.right, self.bottom)


@dataclass(frozen=True)
class Layout:
    """A canvas plus placed elements; placement order is the draw order."""

    canvas: Canvas
    placements: tuple[tuple[Element, BBox], ...]

    def __init__(self, canvas: Canvas, placements: Sequence[tuple[Element, BBox]]):
        object.__setattr__(self, "canvas", canvas)
        object.__setattr__(self, "placements", tuple(placements))
        ids = [e.id for e, _ in self.placements]
        if len(ids) != len(set(ids)):
            raise ValueError("element ids within a layout must be unique")

    def __len__(self) -> int:
        return len(self.placements)

    def foreground(self) -> list[tuple[Element, BBox]]:
        """Placements excluding background elements (the prediction targets)."""
        return [(e, b) for e, b in self.placements if e.kind is not ElementKind.BACKGROUND]


@dataclass(frozen=True)
class TokenizedLayout:
    """Discrete position tokens, grouped (x, y, w, h) per element."""

    tokens: tuple[int, ...]
    k: int

    def __init__(self, tokens: Sequence[int], k: int):
        tokens = tuple(int(t) for t in tokens)
        if k < 1:
            raise ValueError(f"bin count must be >= 1, got {k}")
        if len(tokens) % 4 != 0:
            raise ValueError(f"token count must be divisible by 4, got {len(tokens)}")
        for t in tokens:
            if not 0 <= t <= k:
                raise ValueError(f"token {t} outside [0, {k}]")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "k", k)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def n_elements(self) -> int:
        return len(self.tokens) // 4

    def groups(self) -> list[tuple[int, int, int, int]]:
        t = self.tokens
        return [(t[i], t[i + 1], t[i + 2], t[i + 3]) for i in range(0, len(t), 4)]


def bin_coord(a: float, extent: float, k: int) -> int:
    """Map a continuous coordinate to a position token: clamp(floor(a/D * K), 0, K).

    Inputs outside [0, D] are clamped to the canvas before binning.
    """
    if extent <= 0:
        raise ValueError(f"extent must be positive, got {extent}")
    if k < 1:
        raise ValueError(f"bin count must be >= 1, got {k}")
    a = min(max(a, 0.0), extent)
    t = math.floor(a / extent * k)
    return min(max(t, 0), k)


def unbin_coord(t: int, extent: float, k: int) -> float:
    """Approximate inverse of bin_coord: bin-center reconstruction, clamped to the canvas."""
    if extent <= 0:
        raise ValueError(f"extent must be positive, got {extent}")
    if k < 1:
        raise ValueError(f"bin count must be >= 1, got {k}")
    if not 0 <= t <= k:
        raise ValueError(f"token {t} outside [0, {k}]")
    return min((t + 0.5) / k * extent, extent)


def tokenize_layout(layout: Layout, k: int) -> TokenizedLayout:
    """Discretize every non-background placement into (x, y, w, h) tokens.

    x and w are binned by the canvas width, y and h by its height. Background
    elements are the canvas base and are not prediction targets.
    """
    w_c, h_c = layout.canvas.width, layout.canvas.height
    tokens: list[int] = []
    for _, box in layout.foreground():
        tokens.append(bin_coord(box.x, w_c, k))
        tokens.append(bin_coord(box.y, h_c, k))
        tokens.append(bin_coord(box.w, w_c, k))
        tokens.append(bin_coord(box.h, h_c, k))
    return TokenizedLayout(tokens, k)


def detokenize_layout(
    tokens: TokenizedLayout, elements: Sequence[Element], canvas: Canvas
) -> Layout:
    """Reconstruct a layout from position tokens via bin-center mapping."""
    if len(tokens) != 4 * len(elements):
        raise ValueError(
            f"token count {len(tokens)} does not match 4 x {len(elements)} elements"
        )
    k = tokens.k
    placements = []
    for element, (tx, ty, tw, th) in zip(elements, tokens.groups()):
        box = BBox(
            x=unbin_coord(tx, canvas.width, k),
            y=unbin_coord(ty, canvas.height, k),
            w=unbin_coord(tw, canvas.width, k),
            h=unbin_coord(th, canvas.height, k),
        )
        placements.append((element, box))
    return Layout(canvas, placements)


def intersection_area(a: BBox, b: BBox) -> float:
    """Area of the axis-aligned intersection of two boxes."""
    ow = min(a.right, b.right) - max(a.left, b.left)
    oh = min(a.bottom, b.bottom) - max(a.top, b.top)
    return max(0.0, ow) * max(0.0, oh)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when the union has zero area."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union
