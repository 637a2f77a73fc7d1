"""Shared fixtures and random-scene generators.

Coordinate grids matter for the exactness guarantees under test:

* "dyadic" scenes put every coordinate on a 2**-20 grid. On that grid
  1 - x is exactly representable, so mirror-style transforms (hflip,
  EXIF codes 2/3/4/6/8) are bit-exact involutions/compositions.
* "decimal6" scenes put box fields on a 1e-6 decimal grid, the exact
  resolution of the 6-decimal YOLO label format, so a bundle round trip
  reproduces box fields exactly.
"""

from __future__ import annotations

import random

import pytest

from gunfuse.model import BBox, GUN_CLASS_ID, Landmark, PERSON_CLASS_ID, Pose, Scene

DYADIC_DENOM = 2**20
DECIMAL6_DENOM = 10**6


def grid_value(rng: random.Random, grid: str) -> float:
    denom = DYADIC_DENOM if grid == "dyadic" else DECIMAL6_DENOM
    return rng.randint(0, denom) / denom


def random_box(rng: random.Random, class_id: int, grid: str = "dyadic") -> BBox:
    """Box with all four corners inside the frame, on the requested grid."""
    denom = DYADIC_DENOM if grid == "dyadic" else DECIMAL6_DENOM
    half_w = rng.randint(1, denom // 4)
    half_h = rng.randint(1, denom // 4)
    cx = rng.randint(half_w, denom - half_w)
    cy = rng.randint(half_h, denom - half_h)
    conf = rng.randint(0, denom) / denom
    return BBox(class_id, cx / denom, cy / denom, 2 * half_w / denom, 2 * half_h / denom, conf)


def random_pose(rng: random.Random, grid: str = "dyadic") -> Pose:
    indices = rng.sample(range(33), k=rng.randint(1, 12))
    landmarks = tuple(
        Landmark(i, grid_value(rng, grid), grid_value(rng, grid), grid_value(rng, grid))
        for i in sorted(indices)
    )
    return Pose(landmarks)


def random_scene(rng: random.Random, grid: str = "dyadic", image_id: str = "scene") -> Scene:
    return Scene(
        image_id=image_id,
        width_px=640,
        height_px=640,
        guns=tuple(random_box(rng, GUN_CLASS_ID, grid) for _ in range(rng.randint(0, 3))),
        persons=tuple(
            random_box(rng, PERSON_CLASS_ID, grid) for _ in range(rng.randint(0, 2))
        ),
        poses=tuple(random_pose(rng, grid) for _ in range(rng.randint(0, 3))),
    )


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xFACADE)
