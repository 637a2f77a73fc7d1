"""Parsers and writers for every format the pipeline touches.

Covers YOLO label files, VIA 2.x project exports, the pose interchange
JSON, plain key-value config documents, the scene bundle directory
convention, and annotation-level EXIF orientation / stretch-resize
remapping. All functions are pure over their inputs and safe for
concurrent batch use.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .errors import ConfigError, ParseError
from .model import (
    BBox,
    ClassMap,
    DEFAULT_CLASSES,
    GUN_CLASS_ID,
    Landmark,
    NUM_LANDMARKS,
    PERSON_CLASS_ID,
    Pose,
    Scene,
    clamp_box,
)

YOLO_DECIMALS = 6

# Bundle layout: images/<id>.<ext>, labels/<id>.txt, poses/<id>.json.
BUNDLE_IMAGES = "images"
BUNDLE_LABELS = "labels"
BUNDLE_POSES = "poses"
IMAGE_EXTENSIONS = (".ppm", ".png", ".jpg", ".jpeg")

# Scenes with neither a pose header nor a readable image default to the
# dataset's working resolution.
DEFAULT_SCENE_SIZE = (640, 640)


@dataclass(frozen=True)
class ViaRegion:
    """One rectangular region from a VIA project."""

    shape: str
    x: float
    y: float
    width: float
    height: float
    attributes: dict[str, str]


@dataclass(frozen=True)
class ExifOrientation:
    """EXIF orientation tag value, 1 through 8."""

    code: int

    def __post_init__(self) -> None:
        if self.code not in range(1, 9):
            raise ConfigError(f"EXIF orientation code must be in 1..8 (got {self.code})")


# ---------------------------------------------------------------------------
# YOLO labels


def parse_yolo_labels(text: str, class_map: ClassMap = DEFAULT_CLASSES) -> list[BBox]:
    """Parse YOLO label text: one "class cx cy w h[ conf]" line per box.

    Confidence defaults to 1.0 when the sixth field is absent. Blank lines
    are skipped. Malformed lines raise ParseError naming the line number.
    """
    boxes: list[BBox] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) not in (5, 6):
            raise ParseError(
                f"line {lineno}: expected 5 or 6 fields, got {len(tokens)}"
            )
        try:
            class_id = int(tokens[0])
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer class id {tokens[0]!r}") from None
        if not 0 <= class_id < len(class_map):
            raise ParseError(f"line {lineno}: class id {class_id} outside class map")
        try:
            values = [float(t) for t in tokens[1:]]
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric field in {line!r}") from None
        cx, cy, w, h = values[:4]
        conf = values[4] if len(values) == 5 else 1.0
        if not 0.0 <= cx <= 1.0 or not 0.0 <= cy <= 1.0:
            raise ParseError(f"line {lineno}: center ({cx}, {cy}) outside [0, 1]")
        if not 0.0 < w <= 1.0:
            raise ParseError(f"line {lineno}: width must be in (0, 1] (got {w})")
        if not 0.0 < h <= 1.0:
            raise ParseError(f"line {lineno}: height must be in (0, 1] (got {h})")
        if not 0.0 <= conf <= 1.0:
            raise ParseError(f"line {lineno}: confidence must be in [0, 1] (got {conf})")
        boxes.append(BBox(class_id, cx, cy, w, h, conf))
    return boxes


def write_yolo_labels(boxes: Iterable[BBox], include_conf: bool = False) -> str:
    """Render boxes as YOLO label text, coordinates at 6 decimal places."""
    lines = []
    for box in boxes:
        fields = [
            str(box.class_id),
            f"{box.cx:.{YOLO_DECIMALS}f}",
            f"{box.cy:.{YOLO_DECIMALS}f}",
            f"{box.w:.{YOLO_DECIMALS}f}",
            f"{box.h:.{YOLO_DECIMALS}f}",
        ]
        if include_conf:
            fields.append(f"{box.confidence:.{YOLO_DECIMALS}f}")
        lines.append(" ".join(fields) + "\n")
    return "".join(lines)


# ---------------------------------------------------------------------------
# VIA projects


def parse_via_project(json_text: str) -> tuple[dict[str, list[ViaRegion]], list[str]]:
    """Parse a VIA 2.x project export into image-id -> rect regions.

    Accepts either the full project (with "_via_img_metadata") or a bare
    metadata map. Non-rect regions are skipped; each skip is reported in
    the returned warning list. Missing shape_attributes is a parse error.
    """
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid VIA JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("VIA project must be a JSON object")
    metadata = doc.get("_via_img_metadata", doc)
    if not isinstance(metadata, dict):
        raise ParseError("_via_img_metadata must be a JSON object")

    regions_by_image: dict[str, list[ViaRegion]] = {}
    warnings: list[str] = []
    for key, entry in metadata.items():
        if key.startswith("_via_"):
            continue
        if not isinstance(entry, dict):
            raise ParseError(f"image entry {key!r} is not an object")
        image_id = entry.get("filename") or key
        regions: list[ViaRegion] = []
        for r, region in enumerate(entry.get("regions") or []):
            shape = region.get("shape_attributes")
            if shape is None:
                raise ParseError(f"{image_id}: region {r} missing shape_attributes")
            name = shape.get("name")
            if name != "rect":
                warnings.append(f"{image_id}: skipped non-rect region {r} ({name})")
                continue
            try:
                x = float(shape["x"])
                y = float(shape["y"])
                width = float(shape["width"])
                height = float(shape["height"])
            except (KeyError, TypeError, ValueError):
                raise ParseError(
                    f"{image_id}: region {r} has malformed rect attributes"
                ) from None
            if width <= 0 or height <= 0 or x < 0 or y < 0:
                raise ParseError(
                    f"{image_id}: region {r} has invalid extents "
                    f"(x={x}, y={y}, width={width}, height={height})"
                )
            attrs = {
                k: v
                for k, v in (region.get("region_attributes") or {}).items()
                if isinstance(v, str)
            }
            regions.append(ViaRegion("rect", x, y, width, height, attrs))
        regions_by_image[image_id] = regions
    return regions_by_image, warnings


def via_to_bbox(
    region: ViaRegion,
    width_px: int,
    height_px: int,
    class_map: ClassMap = DEFAULT_CLASSES,
    label_key: str = "label",
) -> BBox:
    """Convert a pixel rect to a normalized ground-truth box.

    The class name is read from the region attributes under ``label_key``
    and falls back to "gun" when absent. Regions extending past the image
    are clamped to the frame.
    """
    if width_px <= 0 or height_px <= 0:
        raise ConfigError(f"image dims must be positive (got {width_px}x{height_px})")
    label = region.attributes.get(label_key, "gun")
    try:
        class_id = class_map.id_of(label)
    except KeyError:
        raise ParseError(f"region label {label!r} not in class map {class_map.names}") from None
    box = BBox(
        class_id=class_id,
        cx=(region.x + region.width / 2) / width_px,
        cy=(region.y + region.height / 2) / height_px,
        w=region.width / width_px,
        h=region.height / height_px,
        confidence=1.0,
    )
    clamped = clamp_box(box)
    if clamped is None:
        raise ParseError(
            f"region at ({region.x}, {region.y}) lies outside the {width_px}x{height_px} image"
        )
    return clamped


# ---------------------------------------------------------------------------
# Pose interchange


def _parse_box_obj(obj: dict, context: str) -> BBox:
    try:
        return BBox(
            class_id=int(obj["class_id"]),
            cx=float(obj["cx"]),
            cy=float(obj["cy"]),
            w=float(obj["w"]),
            h=float(obj["h"]),
            confidence=float(obj.get("confidence", 1.0)),
        )
    except (KeyError, TypeError, ValueError):
        raise ParseError(f"{context}: malformed box object") from None


def parse_pose_file(json_text: str) -> list[Pose]:
    """Parse the pose interchange JSON and return its skeletons.

    Landmarks with visibility outside [0, 1] are rejected (dropped).
    Duplicate landmark indices or indices beyond 32 are parse errors.
    """
    _, _, _, poses = parse_pose_document(json_text)
    return poses


def parse_pose_document(json_text: str) -> tuple[str, int, int, list[Pose]]:
    """Parse a pose interchange file including its image header.

    Returns (image_id, width_px, height_px, poses).
    """
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid pose JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("pose document must be a JSON object")
    image_id = str(doc.get("image_id", ""))
    width_px = int(doc.get("width_px", 0))
    height_px = int(doc.get("height_px", 0))
    poses: list[Pose] = []
    for p, pose_obj in enumerate(doc.get("poses") or []):
        seen: set[int] = set()
        landmarks: list[Landmark] = []
        for lm in pose_obj.get("landmarks") or []:
            try:
                index = int(lm["i"])
                x = float(lm["x"])
                y = float(lm["y"])
                v = float(lm.get("v", 1.0))
            except (KeyError, TypeError, ValueError):
                raise ParseError(f"poses[{p}]: malformed landmark object") from None
            if not 0 <= index < NUM_LANDMARKS:
                raise ParseError(f"poses[{p}]: landmark index {index} outside [0, 32]")
            if index in seen:
                raise ParseError(f"poses[{p}]: duplicate landmark index {index}")
            seen.add(index)
            if not 0.0 <= v <= 1.0:
                continue  # out-of-range visibility: landmark rejected
            landmarks.append(Landmark(index, x, y, v))
        person_box = None
        if pose_obj.get("person_box") is not None:
            person_box = _parse_box_obj(pose_obj["person_box"], f"poses[{p}].person_box")
        poses.append(Pose(tuple(landmarks), person_box))
    return image_id, width_px, height_px, poses


def write_pose_file(
    image_id: str, width_px: int, height_px: int, poses: Iterable[Pose]
) -> str:
    """Render poses in the interchange format (full float precision)."""
    pose_objs = []
    for pose in poses:
        obj: dict = {
            "landmarks": [
                {"i": lm.index, "x": lm.x, "y": lm.y, "v": lm.visibility}
                for lm in pose.landmarks
            ]
        }
        if pose.person_box is not None:
            b = pose.person_box
            obj["person_box"] = {
                "class_id": b.class_id,
                "cx": b.cx,
                "cy": b.cy,
                "w": b.w,
                "h": b.h,
                "confidence": b.confidence,
            }
        pose_objs.append(obj)
    doc = {
        "image_id": image_id,
        "width_px": width_px,
        "height_px": height_px,
        "poses": pose_objs,
    }
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Orientation and resize remapping

# Normalized point remaps that upright each EXIF orientation code.
_EXIF_POINT_MAPS = {
    1: lambda x, y: (x, y),
    2: lambda x, y: (1.0 - x, y),
    3: lambda x, y: (1.0 - x, 1.0 - y),
    4: lambda x, y: (x, 1.0 - y),
    5: lambda x, y: (y, x),
    6: lambda x, y: (1.0 - y, x),
    7: lambda x, y: (1.0 - y, 1.0 - x),
    8: lambda x, y: (y, 1.0 - x),
}
_EXIF_SWAPS_AXES = frozenset({5, 6, 7, 8})


def _orient_box(box: BBox, code: int) -> BBox:
    cx, cy = _EXIF_POINT_MAPS[code](box.cx, box.cy)
    w, h = (box.h, box.w) if code in _EXIF_SWAPS_AXES else (box.w, box.h)
    return BBox(box.class_id, cx, cy, w, h, box.confidence)


def apply_exif_orientation(scene: Scene, orientation: ExifOrientation) -> Scene:
    """Remap all annotations so the scene describes the upright image.

    Codes 5-8 swap width_px and height_px. Only annotations move; pixel
    remapping lives in augment.
    """
    code = orientation.code
    if code == 1:
        return scene
    remap = _EXIF_POINT_MAPS[code]
    swap = code in _EXIF_SWAPS_AXES

    def orient_pose(pose: Pose) -> Pose:
        landmarks = tuple(
            Landmark(lm.index, *remap(lm.x, lm.y), lm.visibility)
            for lm in pose.landmarks
        )
        person_box = None if pose.person_box is None else _orient_box(pose.person_box, code)
        return Pose(landmarks, person_box)

    return Scene(
        image_id=scene.image_id,
        width_px=scene.height_px if swap else scene.width_px,
        height_px=scene.width_px if swap else scene.height_px,
        guns=tuple(_orient_box(b, code) for b in scene.guns),
        persons=tuple(_orient_box(b, code) for b in scene.persons),
        poses=tuple(orient_pose(p) for p in scene.poses),
    )


def stretch_resize_remap(scene: Scene, new_w: int, new_h: int) -> Scene:
    """Record a stretch resize: dims change, normalized coordinates do not."""
    if new_w <= 0 or new_h <= 0:
        raise ConfigError(f"resize dims must be positive (got {new_w}x{new_h})")
    return dataclasses.replace(scene, width_px=new_w, height_px=new_h)


# ---------------------------------------------------------------------------
# Key-value config documents


def parse_keyvalue(text: str) -> dict[str, str]:
    """Parse a "key = value" document; '#' starts a comment line.

    Duplicate keys are an error (fail fast on typos).
    """
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ParseError(f"line {lineno}: empty key")
        if key in out:
            raise ParseError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# Image size sniffing (header-only; full raster I/O lives in augment)


def read_image_size(path: Path) -> tuple[int, int]:
    """Read (width, height) from a PPM, PNG, or JPEG header."""
    data = path.read_bytes()
    if data[:2] == b"P6":
        from .augment import parse_ppm_header

        w, h, _, _ = parse_ppm_header(data)
        return w, h
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        if len(data) < 24:
            raise ParseError(f"{path.name}: truncated PNG header")
        w, h = struct.unpack(">II", data[16:24])
        return w, h
    if data[:2] == b"\xff\xd8":
        return _jpeg_size(data, path.name)
    raise ParseError(f"{path.name}: unrecognized image format")


def _jpeg_size(data: bytes, name: str) -> tuple[int, int]:
    # Walk segments until a start-of-frame marker carries the dimensions.
    i = 2
    while i + 4 <= len(data):
        if data[i] != 0xFF:
            i += 1
            continue
        marker = data[i + 1]
        if marker in (0xD8, 0x01) or 0xD0 <= marker <= 0xD7:
            i += 2
            continue
        length = struct.unpack(">H", data[i + 2:i + 4])[0]
        if 0xC0 <= marker <= 0xCF and marker not in (0xC4, 0xC8, 0xCC):
            if i + 9 > len(data):
                break
            h, w = struct.unpack(">HH", data[i + 5:i + 9])
            return w, h
        i += 2 + length
    raise ParseError(f"{name}: no JPEG frame header found")


# ---------------------------------------------------------------------------
# Scene bundles


def scene_from_parts(
    image_id: str,
    width_px: int,
    height_px: int,
    boxes: Iterable[BBox] = (),
    poses: Iterable[Pose] = (),
) -> Scene:
    """Assemble a Scene, splitting boxes into guns and persons by class id.

    Boxes of any other class are dropped (scenes carry the two-class
    vocabulary only).
    """
    boxes = list(boxes)
    return Scene(
        image_id=image_id,
        width_px=width_px,
        height_px=height_px,
        guns=tuple(b for b in boxes if b.class_id == GUN_CLASS_ID),
        persons=tuple(b for b in boxes if b.class_id == PERSON_CLASS_ID),
        poses=tuple(poses),
    )


def list_scene_ids(bundle_dir: Path) -> list[str]:
    """All image ids present in a bundle's labels/ or poses/ directory."""
    ids: set[str] = set()
    labels = bundle_dir / BUNDLE_LABELS
    if labels.is_dir():
        ids.update(p.stem for p in labels.glob("*.txt"))
    poses = bundle_dir / BUNDLE_POSES
    if poses.is_dir():
        ids.update(p.stem for p in poses.glob("*.json"))
    return sorted(ids)


def find_image_file(bundle_dir: Path, image_id: str) -> Optional[Path]:
    for ext in IMAGE_EXTENSIONS:
        candidate = bundle_dir / BUNDLE_IMAGES / f"{image_id}{ext}"
        if candidate.is_file():
            return candidate
    return None


def load_scene(
    bundle_dir: Path, image_id: str, class_map: ClassMap = DEFAULT_CLASSES
) -> Scene:
    """Load one scene from the bundle directory convention.

    Image dimensions come from the pose file header when present, then
    from the image file, then default to 640x640.
    """
    boxes: list[BBox] = []
    label_path = bundle_dir / BUNDLE_LABELS / f"{image_id}.txt"
    if label_path.is_file():
        try:
            boxes = parse_yolo_labels(label_path.read_text(), class_map)
        except ParseError as exc:
            raise ParseError(f"{label_path.name}: {exc}") from None

    poses: list[Pose] = []
    width_px = height_px = 0
    pose_path = bundle_dir / BUNDLE_POSES / f"{image_id}.json"
    if pose_path.is_file():
        try:
            _, width_px, height_px, poses = parse_pose_document(pose_path.read_text())
        except ParseError as exc:
            raise ParseError(f"{pose_path.name}: {exc}") from None

    if width_px <= 0 or height_px <= 0:
        image_path = find_image_file(bundle_dir, image_id)
        if image_path is not None:
            width_px, height_px = read_image_size(image_path)
        else:
            width_px, height_px = DEFAULT_SCENE_SIZE

    return scene_from_parts(image_id, width_px, height_px, boxes, poses)


def load_scene_bundle(
    bundle_dir: Path, class_map: ClassMap = DEFAULT_CLASSES
) -> list[Scene]:
    """Load every scene in a bundle, sorted by image id."""
    return [load_scene(bundle_dir, sid, class_map) for sid in list_scene_ids(bundle_dir)]


def write_scene_files(
    bundle_dir: Path, scene: Scene, include_conf: bool = False
) -> None:
    """Write a scene's label and pose files into a bundle directory."""
    labels_dir = bundle_dir / BUNDLE_LABELS
    poses_dir = bundle_dir / BUNDLE_POSES
    labels_dir.mkdir(parents=True, exist_ok=True)
    poses_dir.mkdir(parents=True, exist_ok=True)
    (labels_dir / f"{scene.image_id}.txt").write_text(
        write_yolo_labels(list(scene.guns) + list(scene.persons), include_conf)
    )
    (poses_dir / f"{scene.image_id}.json").write_text(
        write_pose_file(scene.image_id, scene.width_px, scene.height_px, scene.poses)
    )
