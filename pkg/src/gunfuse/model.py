"""Shared domain types and coordinate conventions.

All coordinates are normalized to [0, 1] with the origin at the top-left
corner, x increasing rightward and y increasing downward. Pixel coordinates
appear only at format boundaries (see ingest) and in raster operations
(see augment). Every type here is an immutable value object and safe to
share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

GUN_CLASS_ID = 0
PERSON_CLASS_ID = 1

# Minimum clamped box extent before the box is considered degenerate and
# dropped (normalized units).
MIN_BOX_EXTENT = 1e-6

NUM_LANDMARKS = 33

# 33-point pose topology (MediaPipe ordering).
LANDMARK_NAMES = (
    "nose",
    "left_eye_inner", "left_eye", "left_eye_outer",
    "right_eye_inner", "right_eye", "right_eye_outer",
    "left_ear", "right_ear",
    "mouth_left", "mouth_right",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "left_pinky", "right_pinky",
    "left_index", "right_index",
    "left_thumb", "right_thumb",
    "left_hip", "right_hip",
    "left_knee", "right_knee",
    "left_ankle", "right_ankle",
    "left_heel", "right_heel",
    "left_foot_index", "right_foot_index",
)

NOSE = 0
LEFT_SHOULDER, RIGHT_SHOULDER = 11, 12
LEFT_ELBOW, RIGHT_ELBOW = 13, 14
LEFT_WRIST, RIGHT_WRIST = 15, 16
LEFT_HIP, RIGHT_HIP = 23, 24

# Wrists, pinkies, indexes, thumbs.
HAND_LANDMARKS = frozenset(range(15, 23))

# (left, right) landmark index pairs, swapped on horizontal flip.
LEFT_RIGHT_PAIRS = (
    (1, 4), (2, 5), (3, 6),      # eyes
    (7, 8),                      # ears
    (9, 10),                     # mouth corners
    (11, 12),                    # shoulders
    (13, 14),                    # elbows
    (15, 16),                    # wrists
    (17, 18), (19, 20), (21, 22),  # hands
    (23, 24),                    # hips
    (25, 26), (27, 28),          # knees, ankles
    (29, 30), (31, 32),          # heels, foot indexes
)

# Skeleton connection table for the 33-point topology; used by the renderer.
POSE_EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 7),
    (0, 4), (4, 5), (5, 6), (6, 8),
    (9, 10),
    (11, 12),
    (11, 13), (13, 15), (15, 17), (15, 19), (15, 21), (17, 19),
    (12, 14), (14, 16), (16, 18), (16, 20), (16, 22), (18, 20),
    (11, 23), (12, 24), (23, 24),
    (23, 25), (24, 26),
    (25, 27), (26, 28),
    (27, 29), (28, 30),
    (29, 31), (30, 32),
    (27, 31), (28, 32),
)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: normalized center plus extents, with class and score.

    Ground-truth boxes carry confidence 1.0.
    """

    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: float = 1.0

    @property
    def x_min(self) -> float:
        return self.cx - self.w / 2

    @property
    def x_max(self) -> float:
        return self.cx + self.w / 2

    @property
    def y_min(self) -> float:
        return self.cy - self.h / 2

    @property
    def y_max(self) -> float:
        return self.cy + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Landmark:
    """One pose keypoint. x/y may fall slightly outside [0,1] for off-frame
    joints; visibility is always in [0,1]."""

    index: int
    x: float
    y: float
    visibility: float = 1.0


@dataclass(frozen=True)
class Pose:
    """Sparse 33-point skeleton; undetected joints are simply absent."""

    landmarks: tuple[Landmark, ...] = ()
    person_box: Optional[BBox] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "landmarks", tuple(self.landmarks))

    def landmark(self, index: int) -> Optional[Landmark]:
        for lm in self.landmarks:
            if lm.index == index:
                return lm
        return None


@dataclass(frozen=True)
class Scene:
    """Everything known about one image: dimensions, detections, skeletons."""

    image_id: str
    width_px: int
    height_px: int
    guns: tuple[BBox, ...] = ()
    persons: tuple[BBox, ...] = ()
    poses: tuple[Pose, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "guns", tuple(self.guns))
        object.__setattr__(self, "persons", tuple(self.persons))
        object.__setattr__(self, "poses", tuple(self.poses))


@dataclass(frozen=True)
class ClassMap:
    """Ordered class vocabulary; ids are list positions."""

    names: tuple[str, ...] = ("gun", "person")

    def __post_init__(self) -> None:
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"class names must be unique: {self.names}")

    def __len__(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown class name {name!r}") from None

    def name_of(self, class_id: int) -> str:
        if not 0 <= class_id < len(self.names):
            raise KeyError(f"class id {class_id} outside vocabulary")
        return self.names[class_id]


DEFAULT_CLASSES = ClassMap()


def clamp_box(box: BBox) -> Optional[BBox]:
    """Clamp a box's corners to the [0,1] frame.

    Returns None when the clamped width or height falls below
    MIN_BOX_EXTENT (the box lies essentially outside the frame).
    Boxes already inside the frame are returned unchanged.
    """
    x0, x1 = box.x_min, box.x_max
    y0, y1 = box.y_min, box.y_max
    if x0 >= 0.0 and y0 >= 0.0 and x1 <= 1.0 and y1 <= 1.0:
        return box
    x0, x1 = max(x0, 0.0), min(x1, 1.0)
    y0, y1 = max(y0, 0.0), min(y1, 1.0)
    w, h = x1 - x0, y1 - y0
    if w < MIN_BOX_EXTENT or h < MIN_BOX_EXTENT:
        return None
    return BBox(
        class_id=box.class_id,
        cx=(x0 + x1) / 2,
        cy=(y0 + y1) / 2,
        w=w,
        h=h,
        confidence=box.confidence,
    )


def _check_box(box: BBox, path: str, expect_class: Optional[int], out: list[str]) -> None:
    if expect_class is not None and box.class_id != expect_class:
        out.append(f"{path}.class_id must be {expect_class} (got {box.class_id})")
    if not 0.0 <= box.cx <= 1.0:
        out.append(f"{path}.cx must be in [0, 1] (got {box.cx})")
    if not 0.0 <= box.cy <= 1.0:
        out.append(f"{path}.cy must be in [0, 1] (got {box.cy})")
    if not box.w > 0.0:
        out.append(f"{path}.w must be > 0 (got {box.w})")
    elif box.w > 1.0:
        out.append(f"{path}.w must be <= 1 (got {box.w})")
    if not box.h > 0.0:
        out.append(f"{path}.h must be > 0 (got {box.h})")
    elif box.h > 1.0:
        out.append(f"{path}.h must be <= 1 (got {box.h})")
    if not 0.0 <= box.confidence <= 1.0:
        out.append(f"{path}.confidence must be in [0, 1] (got {box.confidence})")


def validate_scene(scene: Scene) -> list[str]:
    """Check every type invariant; return one description per violation.

    Validation never raises: an empty list means the scene is valid.
    Each message names the offending field and its value.
    """
    out: list[str] = []
    if scene.width_px <= 0:
        out.append(f"width_px must be > 0 (got {scene.width_px})")
    if scene.height_px <= 0:
        out.append(f"height_px must be > 0 (got {scene.height_px})")
    for i, box in enumerate(scene.guns):
        _check_box(box, f"guns[{i}]", GUN_CLASS_ID, out)
    for i, box in enumerate(scene.persons):
        _check_box(box, f"persons[{i}]", PERSON_CLASS_ID, out)
    for p, pose in enumerate(scene.poses):
        seen: set[int] = set()
        for k, lm in enumerate(pose.landmarks):
            path = f"poses[{p}].landmarks[{k}]"
            if not 0 <= lm.index < NUM_LANDMARKS:
                out.append(f"{path}.index must be in [0, 32] (got {lm.index})")
            elif lm.index in seen:
                out.append(f"{path}.index duplicates landmark {lm.index}")
            else:
                seen.add(lm.index)
            if not 0.0 <= lm.visibility <= 1.0:
                out.append(
                    f"{path}.visibility must be in [0, 1] (got {lm.visibility})"
                )
        if pose.person_box is not None:
            _check_box(pose.person_box, f"poses[{p}].person_box", PERSON_CLASS_ID, out)
    return out
