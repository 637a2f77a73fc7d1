"""Annotated-overlay rendering as SVG.

Draws gun and person boxes, pose skeletons, and per-gun threat labels.
Guns judged threatening are outlined in the threat color and tagged with a
"Threat Detected!" text element; everything else uses the safe color.
Output is deterministic: identical inputs produce byte-identical SVG.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape, quoteattr

from .errors import RenderError
from .model import BBox, POSE_EDGES, Pose, Scene
from .threat import ThreatVerdict

THREAT_LABEL = "Threat Detected!"
FONT_SIZE_PX = 14
LABEL_PAD_PX = 4


@dataclass(frozen=True)
class OverlaySpec:
    """Rendering options; colors are 24-bit RGB."""

    draw_boxes: bool = True
    draw_skeleton: bool = True
    draw_labels: bool = True
    threat_color: int = 0xFF0000
    safe_color: int = 0x00CC00
    skeleton_edges: tuple[tuple[int, int], ...] = POSE_EDGES
    visibility_min: float = 0.5

    def validate(self) -> None:
        for name in ("threat_color", "safe_color"):
            value = getattr(self, name)
            if not 0 <= value <= 0xFFFFFF:
                raise RenderError(f"{name} must be 24-bit RGB (got {value:#x})")


def _hex(color: int) -> str:
    return f"#{color:06x}"


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _rect(box: BBox, w: int, h: int, color: int) -> str:
    x = _fmt(box.x_min * w)
    y = _fmt(box.y_min * h)
    return (
        f'<rect x="{x}" y="{y}" width="{_fmt(box.w * w)}" height="{_fmt(box.h * h)}" '
        f'fill="none" stroke="{_hex(color)}" stroke-width="2"/>'
    )


def _text(x: float, y: float, content: str, color: int) -> str:
    # Keep the anchor inside the canvas even for boxes at the frame edge.
    x = max(x, 0.0)
    y = max(y, float(FONT_SIZE_PX))
    return (
        f'<text x="{_fmt(x)}" y="{_fmt(y)}" fill="{_hex(color)}" '
        f'font-size="{FONT_SIZE_PX}" font-family="sans-serif">{escape(content)}</text>'
    )


def _skeleton_lines(
    pose: Pose, spec: OverlaySpec, w: int, h: int, color: int
) -> list[str]:
    present = {
        lm.index: lm for lm in pose.landmarks if lm.visibility >= spec.visibility_min
    }
    lines = []
    for a, b in spec.skeleton_edges:
        if a in present and b in present:
            la, lb = present[a], present[b]
            lines.append(
                f'<line x1="{_fmt(la.x * w)}" y1="{_fmt(la.y * h)}" '
                f'x2="{_fmt(lb.x * w)}" y2="{_fmt(lb.y * h)}" '
                f'stroke="{_hex(color)}" stroke-width="1"/>'
            )
    return lines


def render_overlay(
    scene: Scene,
    verdicts: Sequence[ThreatVerdict] = (),
    spec: OverlaySpec = OverlaySpec(),
) -> str:
    """Render one scene (plus its verdicts) as an SVG 1.1 document.

    Element order is fixed: gun boxes by index, person boxes by index,
    skeletons by pose index, then labels. A verdict naming a gun index the
    scene does not have is an error.
    """
    spec.validate()
    threat_guns: set[int] = set()
    for v in verdicts:
        if not 0 <= v.gun_index < len(scene.guns):
            raise RenderError(
                f"verdict names gun {v.gun_index}, scene has {len(scene.guns)} guns"
            )
        if v.threat:
            threat_guns.add(v.gun_index)

    w, h = scene.width_px, scene.height_px
    body: list[str] = []
    if spec.draw_boxes:
        for i, gun in enumerate(scene.guns):
            color = spec.threat_color if i in threat_guns else spec.safe_color
            body.append(_rect(gun, w, h, color))
        for person in scene.persons:
            body.append(_rect(person, w, h, spec.safe_color))
    if spec.draw_skeleton:
        for pose in scene.poses:
            body.extend(_skeleton_lines(pose, spec, w, h, spec.safe_color))
    if spec.draw_labels:
        for i, gun in enumerate(scene.guns):
            color = spec.threat_color if i in threat_guns else spec.safe_color
            body.append(_text(gun.x_min * w, gun.y_min * h - LABEL_PAD_PX, "gun", color))
        for person in scene.persons:
            body.append(
                _text(person.x_min * w, person.y_min * h - LABEL_PAD_PX, "person",
                      spec.safe_color)
            )
    for i in sorted(threat_guns):
        gun = scene.guns[i]
        body.append(
            _text(
                gun.x_min * w,
                gun.y_min * h - LABEL_PAD_PX - FONT_SIZE_PX,
                THREAT_LABEL,
                spec.threat_color,
            )
        )

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{w}" height="{h}" viewBox="0 0 {w} {h}" '
        f'data-image-id={quoteattr(scene.image_id)}>',
        *body,
        "</svg>",
    ]
    return "\n".join(lines) + "\n"


def expected_shape_count(
    scene: Scene, verdicts: Sequence[ThreatVerdict], spec: OverlaySpec
) -> int:
    """Exact number of rect/line/text elements render_overlay will emit."""
    count = 0
    if spec.draw_boxes:
        count += len(scene.guns) + len(scene.persons)
    if spec.draw_skeleton:
        for pose in scene.poses:
            present = {
                lm.index
                for lm in pose.landmarks
                if lm.visibility >= spec.visibility_min
            }
            count += sum(1 for a, b in spec.skeleton_edges if a in present and b in present)
    if spec.draw_labels:
        count += len(scene.guns) + len(scene.persons)
    count += sum(1 for v in verdicts if v.threat)
    return count
