"""Deterministic rasterizer for layouts.

Two modes: ``boxes`` draws opaque category-colored rectangles (the base mode
for heuristic probes and judge input), ``composite`` additionally pastes
decoded assets and renders text placeholders with an embedded bitmap font.
Output is an RGBA uint8 array; the same inputs always produce the same bytes.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np
from PIL import Image

from . import font5x7
from .errors import MissingAssetError
from .geometry import ElementKind, Layout

DEFAULT_PALETTE: dict[ElementKind, tuple[int, int, int, int]] = {
    ElementKind.BACKGROUND: (200, 200, 200, 255),
    ElementKind.IMAGE: (66, 103, 244, 255),
    ElementKind.TEXT: (255, 153, 0, 255),
    ElementKind.SHAPE: (52, 168, 83, 255),
}

# Fill opacity for the boxes-on-background overlay; borders stay opaque.
OVERLAY_ALPHA = 140

AssetResolver = Callable[[str], np.ndarray]


@dataclass(frozen=True)
class RenderStyle:
    mode: str = "boxes"
    target_long_side: int = 512
    palette: Mapping[ElementKind, tuple[int, int, int, int]] = field(
        default_factory=lambda: dict(DEFAULT_PALETTE)
    )
    background_color: tuple[int, int, int, int] = (255, 255, 255, 255)

    def __post_init__(self):
        if self.mode not in ("composite", "boxes"):
            raise ValueError(f"mode must be 'composite' or 'boxes', got {self.mode!r}")
        if self.target_long_side < 64:
            raise ValueError("target_long_side must be >= 64")
        missing = [k for k in ElementKind if k not in self.palette]
        if missing:
            raise ValueError(f"palette must cover all element kinds; missing {missing}")


def file_asset_resolver(ref: str) -> np.ndarray:
    """Default resolver: decode an image file from disk into RGBA."""
    try:
        with Image.open(ref) as img:
            return np.asarray(img.convert("RGBA"), dtype=np.uint8)
    except Exception as exc:
        raise MissingAssetError(f"cannot resolve asset {ref!r}: {exc}")


def output_size(canvas_w: float, canvas_h: float, target_long_side: int) -> tuple[int, int]:
    """Pixel dimensions: long side equals the target, short side rounds, floor 1."""
    if canvas_w >= canvas_h:
        return target_long_side, max(1, round(target_long_side * canvas_h / canvas_w))
    return max(1, round(target_long_side * canvas_w / canvas_h)), target_long_side


def _pixel_rect(box, sx: float, sy: float, w_px: int, h_px: int):
    x0 = max(0, min(w_px, round(box.left * sx)))
    x1 = max(0, min(w_px, round(box.right * sx)))
    y0 = max(0, min(h_px, round(box.top * sy)))
    y1 = max(0, min(h_px, round(box.bottom * sy)))
    return x0, y0, x1, y1


def _fill(img: np.ndarray, x0, y0, x1, y1, color) -> None:
    img[y0:y1, x0:x1] = np.asarray(color, dtype=np.uint8)


def _blend_fill(img: np.ndarray, x0, y0, x1, y1, color, alpha: int) -> None:
    if x1 <= x0 or y1 <= y0:
        return
    region = img[y0:y1, x0:x1, :3].astype(np.float64)
    src = np.asarray(color[:3], dtype=np.float64)
    a = alpha / 255.0
    img[y0:y1, x0:x1, :3] = np.round(src * a + region * (1.0 - a)).astype(np.uint8)
    img[y0:y1, x0:x1, 3] = 255


def _paste_rgba(img: np.ndarray, tile: np.ndarray, x0, y0, x1, y1) -> None:
    """Src-over composite of a decoded asset resized to the target rect."""
    if x1 <= x0 or y1 <= y0:
        return
    resized = np.asarray(
        Image.fromarray(tile, "RGBA").resize((x1 - x0, y1 - y0), Image.NEAREST),
        dtype=np.uint8,
    )
    dst = img[y0:y1, x0:x1].astype(np.float64)
    src = resized.astype(np.float64)
    sa = src[..., 3:4] / 255.0
    da = dst[..., 3:4] / 255.0
    out_a = sa + da * (1.0 - sa)
    safe = np.where(out_a > 0, out_a, 1.0)
    out_rgb = (src[..., :3] * sa + dst[..., :3] * da * (1.0 - sa)) / safe
    img[y0:y1, x0:x1, :3] = np.round(out_rgb).astype(np.uint8)
    img[y0:y1, x0:x1, 3] = np.round(out_a[..., 0] * 255.0).astype(np.uint8)


def _draw_text(img: np.ndarray, text: str, x0, y0, x1, y1, color) -> None:
    """First 20 characters in the 5x7 embedded font, clipped to the rect."""
    rect_h = y1 - y0
    rect_w = x1 - x0
    if rect_h < font5x7.GLYPH_H or rect_w < font5x7.GLYPH_W:
        return
    scale = max(1, min(rect_h // (font5x7.GLYPH_H + 3), rect_w // (20 * font5x7.ADVANCE)))
    cy = y0 + (rect_h - font5x7.GLYPH_H * scale) // 2
    cx = x0 + scale
    col = np.asarray(color, dtype=np.uint8)
    for ch in text[:20]:
        rows = font5x7.glyph(ch)
        gx1 = cx + font5x7.GLYPH_W * scale
        if gx1 > x1:
            break
        for r, bits in enumerate(rows):
            for c in range(font5x7.GLYPH_W):
                if bits & (1 << (font5x7.GLYPH_W - 1 - c)):
                    py = cy + r * scale
                    px = cx + c * scale
                    img[py : py + scale, px : px + scale] = col
        cx += font5x7.ADVANCE * scale
    return


def render(
    layout: Layout,
    style: Optional[RenderStyle] = None,
    assets: Optional[AssetResolver] = None,
) -> np.ndarray:
    """Rasterize a layout to an RGBA array; placement order is the draw order."""
    style = style or RenderStyle()
    if layout.canvas.width <= 0 or layout.canvas.height <= 0:
        raise ValueError("cannot render a zero-size canvas")
    w_px, h_px = output_size(layout.canvas.width, layout.canvas.height, style.target_long_side)
    sx = w_px / layout.canvas.width
    sy = h_px / layout.canvas.height
    img = np.empty((h_px, w_px, 4), dtype=np.uint8)
    img[:] = np.asarray(style.background_color, dtype=np.uint8)

    resolver = assets or file_asset_resolver
    for element, box in layout.placements:
        x0, y0, x1, y1 = _pixel_rect(box, sx, sy, w_px, h_px)
        color = style.palette[element.kind]
        if style.mode == "boxes":
            _fill(img, x0, y0, x1, y1, color)
            continue
        if element.kind is ElementKind.TEXT:
            _fill(img, x0, y0, x1, y1, color)
            _draw_text(img, element.text or "", x0, y0, x1, y1, (255, 255, 255, 255))
        elif element.asset_ref is not None:
            tile = resolver(element.asset_ref)
            _paste_rgba(img, tile, x0, y0, x1, y1)
        else:
            _fill(img, x0, y0, x1, y1, color)
    return img


def render_boxes_on_background(
    layout: Layout,
    background: np.ndarray,
    style: Optional[RenderStyle] = None,
) -> np.ndarray:
    """Semi-transparent category-colored boxes with opaque 2 px borders over a background.

    The background is rescaled to the layout's output size when needed;
    background-kind placements are skipped (they are the background itself).
    """
    style = style or RenderStyle()
    w_px, h_px = output_size(layout.canvas.width, layout.canvas.height, style.target_long_side)
    bg = np.asarray(background, dtype=np.uint8)
    if bg.ndim != 3 or bg.shape[2] != 4:
        raise ValueError("background must be an RGBA array")
    if bg.shape[0] != h_px or bg.shape[1] != w_px:
        bg = np.asarray(
            Image.fromarray(bg, "RGBA").resize((w_px, h_px), Image.NEAREST), dtype=np.uint8
        )
    img = bg.copy()
    sx = w_px / layout.canvas.width
    sy = h_px / layout.canvas.height
    for element, box in layout.placements:
        if element.kind is ElementKind.BACKGROUND:
            continue
        x0, y0, x1, y1 = _pixel_rect(box, sx, sy, w_px, h_px)
        if x1 <= x0 or y1 <= y0:
            continue
        color = style.palette[element.kind]
        _blend_fill(img, x0, y0, x1, y1, color, OVERLAY_ALPHA)
        t = min(2, x1 - x0, y1 - y0)
        _fill(img, x0, y0, x1, y0 + t, color)
        _fill(img, x0, y1 - t, x1, y1, color)
        _fill(img, x0, y0, x0 + t, y1, color)
        _fill(img, x1 - t, y0, x1, y1, color)
    return img


def encode_png(img: np.ndarray) -> bytes:
    """8-bit RGBA PNG bytes, no interlacing."""
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8), "RGBA").save(buf, format="PNG")
    return buf.getvalue()


def save_png(img: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_png(img))


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGBA"), dtype=np.uint8)
