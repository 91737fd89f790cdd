"""Verbalization of layout-generation inputs into the instruction template.

The template opens with the canvas description, then one numbered block per
non-background element (`Text: ...` for text, `Image: <image>` otherwise).
Elements with known positions get an extra `Position:` line carrying literal
position-token names so conditioning stays inside the closed token alphabet.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .geometry import Canvas, Element, ElementKind

HEADER_TEMPLATE = (
    "Consider the image <image> with height and width of {canvas_height} and "
    "{canvas_width}. The following elements need to be placed on the image to "
    "obtain an aesthetic poster layout."
)


@dataclass(frozen=True)
class SerializedPrompt:
    text: str
    image_slots: tuple[str, ...]


def _fmt_dim(v: float) -> str:
    return f"{v:g}"


def build_prompt(
    canvas: Canvas,
    elements: Sequence[Element],
    known_positions: Optional[Mapping[str, Sequence[int]]] = None,
) -> SerializedPrompt:
    """Serialize the canvas and element list into the instruction prompt.

    ``known_positions`` maps element ids to their fixed (x, y, w, h) token
    quadruple; those elements are annotated with a Position line.
    """
    if len(elements) == 0:
        raise ValueError("cannot build a prompt for an empty element list")
    known_positions = known_positions or {}

    background = [e for e in elements if e.kind is ElementKind.BACKGROUND]
    slots: list[str] = [background[0].id if background else "canvas"]
    parts = [
        HEADER_TEMPLATE.format(
            canvas_height=_fmt_dim(canvas.height), canvas_width=_fmt_dim(canvas.width)
        )
    ]

    number = 0
    for element in elements:
        if element.kind is ElementKind.BACKGROUND:
            continue
        number += 1
        block = [f"Element {number}:"]
        if element.kind is ElementKind.TEXT:
            block.append(f"Text: {element.text}")
        else:
            block.append("Image: <image>")
            slots.append(element.id)
        block.append(f"Category: {element.kind.value}")
        if element.id in known_positions:
            tokens = known_positions[element.id]
            if len(tokens) != 4:
                raise ValueError(f"known position for {element.id!r} must be 4 tokens")
            block.append("Position: " + " ".join(f"pos_{int(t)}" for t in tokens))
        parts.append("\n".join(block))

    return SerializedPrompt(text="\n\n".join(parts), image_slots=tuple(slots))
