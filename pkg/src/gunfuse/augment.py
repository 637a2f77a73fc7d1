"""Dataset augmentation with exact annotation remapping.

Implements horizontal flip (with left/right landmark role swap), rotation
about the image center, scaling about the center, and per-pixel HSV
adjustment. Transforms compose in the fixed order flip -> rotate ->
scale -> hsv. Identity parameters take bit-exact fast paths.

Raster I/O is binary PPM (P6), read and written bit-exactly with no
dependencies; PNG reading is available when Pillow is installed. Rasters
are resampled by nearest neighbor with black fill for out-of-frame
pixels, which keeps results reproducible to the byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ParseError
from .model import BBox, LEFT_RIGHT_PAIRS, Landmark, Pose, Scene, clamp_box


@dataclass(frozen=True)
class AugmentSpec:
    """Random-draw ranges for one augmentation pass.

    sat/val factors are drawn from [max(0, 1 - factor_max), 1 + factor_max];
    hue deltas from [-hue_delta_max, +hue_delta_max] in fractional turns.
    """

    fliplr_prob: float = 0.5
    degrees_max: float = 10.0
    scale_range: tuple[float, float] = (0.9, 1.1)
    hue_delta_max: float = 0.015
    sat_factor_max: float = 0.7
    val_factor_max: float = 0.4
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "scale_range", tuple(self.scale_range))

    def validate(self) -> None:
        if not 0.0 <= self.fliplr_prob <= 1.0:
            raise ConfigError(f"fliplr_prob must be in [0, 1] (got {self.fliplr_prob})")
        if self.degrees_max < 0.0:
            raise ConfigError(f"degrees_max must be >= 0 (got {self.degrees_max})")
        lo, hi = self.scale_range
        if not 0.0 < lo <= hi:
            raise ConfigError(f"scale_range must satisfy 0 < lo <= hi (got {lo}, {hi})")
        for name in ("hue_delta_max", "sat_factor_max", "val_factor_max"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be >= 0 (got {getattr(self, name)})")


def parse_augment_spec(text: str) -> AugmentSpec:
    """Parse the augment.spec key-value document; unknown keys are errors."""
    from .ingest import parse_keyvalue

    mapping = parse_keyvalue(text)
    kwargs: dict = {}
    valid = {f.name for f in dataclasses.fields(AugmentSpec)}
    for key, value in mapping.items():
        if key not in valid:
            raise ConfigError(f"unknown augment spec key {key!r}")
        try:
            if key == "seed":
                kwargs[key] = int(value)
            elif key == "scale_range":
                lo, _, hi = value.partition(",")
                kwargs[key] = (float(lo), float(hi))
            else:
                kwargs[key] = float(value)
        except ValueError:
            raise ConfigError(f"augment spec key {key!r} has bad value {value!r}") from None
    spec = AugmentSpec(**kwargs)
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# Rasters


@dataclass(frozen=True)
class Raster:
    """Row-major 8-bit RGB pixel buffer."""

    width: int
    height: int
    pixels: bytes

    def __post_init__(self) -> None:
        expected = self.width * self.height * 3
        if len(self.pixels) != expected:
            raise ValueError(
                f"pixel buffer holds {len(self.pixels)} bytes, expected {expected}"
            )


def raster_to_array(raster: Raster) -> np.ndarray:
    return np.frombuffer(raster.pixels, dtype=np.uint8).reshape(
        raster.height, raster.width, 3
    )


def raster_from_array(arr: np.ndarray) -> Raster:
    h, w, _ = arr.shape
    return Raster(w, h, np.ascontiguousarray(arr, dtype=np.uint8).tobytes())


def parse_ppm_header(data: bytes) -> tuple[int, int, int, int]:
    """Parse a P6 header; returns (width, height, maxval, pixel offset).

    Tolerates comments and arbitrary whitespace per the PPM spec.
    """
    if data[:2] != b"P6":
        raise ParseError("not a binary PPM (P6) file")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise ParseError(f"malformed PPM header token {token!r}")
        fields.append(int(token))
    pos += 1  # single whitespace byte separating header from pixels
    return fields[0], fields[1], fields[2], pos


def read_ppm(data: bytes) -> Raster:
    width, height, maxval, offset = parse_ppm_header(data)
    if maxval != 255:
        raise ParseError(f"only 8-bit PPM supported (maxval {maxval})")
    expected = width * height * 3
    pixels = data[offset:offset + expected]
    if len(pixels) != expected:
        raise ParseError(
            f"PPM pixel data truncated: {len(pixels)} of {expected} bytes"
        )
    return Raster(width, height, pixels)


def write_ppm(raster: Raster) -> bytes:
    header = f"P6\n{raster.width} {raster.height}\n255\n".encode("ascii")
    return header + raster.pixels


def read_png(path: Path) -> Raster:
    """Read a PNG via Pillow; errors out when Pillow is not installed."""
    try:
        from PIL import Image
    except ImportError:
        raise ParseError("PNG reading requires Pillow; install it or use PPM") from None
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return Raster(rgb.width, rgb.height, rgb.tobytes())


def read_raster(path: Path) -> Raster:
    data = path.read_bytes()
    if data[:2] == b"P6":
        return read_ppm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return read_png(path)
    raise ParseError(f"{path.name}: unsupported raster format (use PPM or PNG)")


# ---------------------------------------------------------------------------
# Geometric transforms

_FLIP_INDEX = {a: b for a, b in LEFT_RIGHT_PAIRS} | {b: a for a, b in LEFT_RIGHT_PAIRS}


def _flip_pose(pose: Pose) -> Pose:
    landmarks = tuple(
        Landmark(_FLIP_INDEX.get(lm.index, lm.index), 1.0 - lm.x, lm.y, lm.visibility)
        for lm in pose.landmarks
    )
    person_box = None
    if pose.person_box is not None:
        b = pose.person_box
        person_box = BBox(b.class_id, 1.0 - b.cx, b.cy, b.w, b.h, b.confidence)
    return Pose(landmarks, person_box)


def hflip(
    scene: Scene, raster: Optional[Raster] = None
) -> tuple[Scene, Optional[Raster]]:
    """Mirror the scene about the vertical axis.

    Box centers reflect, extents are untouched; landmark x reflects and
    left/right roles swap per the pairing table.
    """
    flipped = Scene(
        image_id=scene.image_id,
        width_px=scene.width_px,
        height_px=scene.height_px,
        guns=tuple(
            BBox(b.class_id, 1.0 - b.cx, b.cy, b.w, b.h, b.confidence)
            for b in scene.guns
        ),
        persons=tuple(
            BBox(b.class_id, 1.0 - b.cx, b.cy, b.w, b.h, b.confidence)
            for b in scene.persons
        ),
        poses=tuple(_flip_pose(p) for p in scene.poses),
    )
    if raster is None:
        return flipped, None
    arr = raster_to_array(raster)
    return flipped, raster_from_array(arr[:, ::-1, :])


def _rotate_point(
    x: float, y: float, cos_t: float, sin_t: float, w: int, h: int
) -> tuple[float, float]:
    # Pixel-space rotation about the image center, then renormalize.
    dx = x * w - w / 2.0
    dy = y * h - h / 2.0
    rx = cos_t * dx - sin_t * dy
    ry = sin_t * dx + cos_t * dy
    return (w / 2.0 + rx) / w, (h / 2.0 + ry) / h


def _box_hull(
    box: BBox, map_point, *args
) -> Optional[BBox]:
    corners = [
        map_point(box.x_min, box.y_min, *args),
        map_point(box.x_max, box.y_min, *args),
        map_point(box.x_max, box.y_max, *args),
        map_point(box.x_min, box.y_max, *args),
    ]
    xs = [c[0] for c in corners]
    ys = [c[1] for c in corners]
    hull = BBox(
        class_id=box.class_id,
        cx=(min(xs) + max(xs)) / 2,
        cy=(min(ys) + max(ys)) / 2,
        w=max(xs) - min(xs),
        h=max(ys) - min(ys),
        confidence=box.confidence,
    )
    return clamp_box(hull)


def rotate(
    scene: Scene, raster: Optional[Raster], theta_deg: float
) -> tuple[Scene, Optional[Raster]]:
    """Rotate about the image center; positive theta turns content
    clockwise on screen (y points down).

    Boxes become the axis-aligned hull of their rotated corners and are
    clamped to the frame (dropped when fully outside). Landmarks rotate
    as points and may leave [0,1]. Raster pixels are resampled by nearest
    neighbor; uncovered pixels are black.
    """
    if theta_deg % 360.0 == 0.0:
        return scene, raster
    quadrant = theta_deg % 360.0
    if quadrant in (90.0, 180.0, 270.0):
        # Exact trig at right angles; sin(pi) etc. would leave ~1e-16 smear.
        cos_t, sin_t = {90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}[quadrant]
    else:
        theta = math.radians(theta_deg)
        cos_t, sin_t = math.cos(theta), math.sin(theta)
    w, h = scene.width_px, scene.height_px

    def rot_pose(pose: Pose) -> Pose:
        landmarks = tuple(
            Landmark(lm.index, *_rotate_point(lm.x, lm.y, cos_t, sin_t, w, h), lm.visibility)
            for lm in pose.landmarks
        )
        person_box = (
            None
            if pose.person_box is None
            else _box_hull(pose.person_box, _rotate_point, cos_t, sin_t, w, h)
        )
        return Pose(landmarks, person_box)

    rotated = Scene(
        image_id=scene.image_id,
        width_px=w,
        height_px=h,
        guns=tuple(
            b2 for b in scene.guns
            if (b2 := _box_hull(b, _rotate_point, cos_t, sin_t, w, h)) is not None
        ),
        persons=tuple(
            b2 for b in scene.persons
            if (b2 := _box_hull(b, _rotate_point, cos_t, sin_t, w, h)) is not None
        ),
        poses=tuple(rot_pose(p) for p in scene.poses),
    )
    if raster is None:
        return rotated, None

    arr = raster_to_array(raster)
    rh, rw = arr.shape[0], arr.shape[1]
    jj, ii = np.meshgrid(np.arange(rw), np.arange(rh))
    # Inverse map each destination pixel center back into the source.
    dx = (jj + 0.5) - rw / 2.0
    dy = (ii + 0.5) - rh / 2.0
    sx = cos_t * dx + sin_t * dy + rw / 2.0
    sy = -sin_t * dx + cos_t * dy + rh / 2.0
    src_j = np.floor(sx).astype(np.int64)
    src_i = np.floor(sy).astype(np.int64)
    valid = (src_j >= 0) & (src_j < rw) & (src_i >= 0) & (src_i < rh)
    out = np.zeros_like(arr)
    out[valid] = arr[src_i[valid], src_j[valid]]
    return rotated, raster_from_array(out)


def _scale_point(x: float, y: float, factor: float) -> tuple[float, float]:
    return 0.5 + factor * (x - 0.5), 0.5 + factor * (y - 0.5)


def scale(
    scene: Scene, raster: Optional[Raster], factor: float
) -> tuple[Scene, Optional[Raster]]:
    """Zoom about the image center; extents multiply by the factor.

    Boxes are clamped to the frame; raster zoom pads with black when
    factor < 1 and crops when factor > 1.
    """
    if factor <= 0.0:
        raise ConfigError(f"scale factor must be > 0 (got {factor})")
    if factor == 1.0:
        return scene, raster

    def scale_box(box: BBox) -> Optional[BBox]:
        cx, cy = _scale_point(box.cx, box.cy, factor)
        return clamp_box(
            BBox(box.class_id, cx, cy, box.w * factor, box.h * factor, box.confidence)
        )

    def scale_pose(pose: Pose) -> Pose:
        landmarks = tuple(
            Landmark(lm.index, *_scale_point(lm.x, lm.y, factor), lm.visibility)
            for lm in pose.landmarks
        )
        person_box = None if pose.person_box is None else scale_box(pose.person_box)
        return Pose(landmarks, person_box)

    scaled = Scene(
        image_id=scene.image_id,
        width_px=scene.width_px,
        height_px=scene.height_px,
        guns=tuple(b2 for b in scene.guns if (b2 := scale_box(b)) is not None),
        persons=tuple(b2 for b in scene.persons if (b2 := scale_box(b)) is not None),
        poses=tuple(scale_pose(p) for p in scene.poses),
    )
    if raster is None:
        return scaled, None

    arr = raster_to_array(raster)
    rh, rw = arr.shape[0], arr.shape[1]
    jj, ii = np.meshgrid(np.arange(rw), np.arange(rh))
    sx = ((jj + 0.5) - rw / 2.0) / factor + rw / 2.0
    sy = ((ii + 0.5) - rh / 2.0) / factor + rh / 2.0
    src_j = np.floor(sx).astype(np.int64)
    src_i = np.floor(sy).astype(np.int64)
    valid = (src_j >= 0) & (src_j < rw) & (src_i >= 0) & (src_i < rh)
    out = np.zeros_like(arr)
    out[valid] = arr[src_i[valid], src_j[valid]]
    return scaled, raster_from_array(out)


# ---------------------------------------------------------------------------
# Color transform


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    delta = maxc - minc
    v = maxc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    h = np.zeros_like(maxc)
    mask = delta > 0
    safe = np.where(mask, delta, 1.0)
    r_max = mask & (maxc == r)
    g_max = mask & (maxc == g) & ~r_max
    b_max = mask & ~r_max & ~g_max
    h = np.where(r_max, ((g - b) / safe) % 6.0, h)
    h = np.where(g_max, (b - r) / safe + 2.0, h)
    h = np.where(b_max, (r - g) / safe + 4.0, h)
    return np.stack([h / 6.0, s, v], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def hsv_adjust(
    raster: Raster, hue_delta: float, sat_factor: float, val_factor: float
) -> Raster:
    """Shift hue (fractional turns, wrapping) and multiply saturation and
    value, clamped to [0, 1]. Geometry is untouched."""
    if hue_delta == 0.0 and sat_factor == 1.0 and val_factor == 1.0:
        return raster
    rgb = raster_to_array(raster).astype(np.float64) / 255.0
    hsv = _rgb_to_hsv(rgb)
    hsv[..., 0] = (hsv[..., 0] + hue_delta) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] * sat_factor, 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * val_factor, 0.0, 1.0)
    out = np.clip(np.round(_hsv_to_rgb(hsv) * 255.0), 0, 255).astype(np.uint8)
    return raster_from_array(out)


# ---------------------------------------------------------------------------
# Batch driver


def _item_rng(seed: int, index: int) -> random.Random:
    # Stable per-item stream: independent of worker scheduling and of the
    # other items in the batch.
    digest = hashlib.sha256(f"{seed}:{index}".encode("ascii")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass(frozen=True)
class AugmentDraws:
    flip: bool
    theta_deg: float
    scale_factor: float
    hue_delta: float
    sat_factor: float
    val_factor: float

    def suffix(self) -> str:
        return (
            f"f{int(self.flip)}_r{self.theta_deg:.2f}_s{self.scale_factor:.3f}"
            f"_h{self.hue_delta:.4f}_t{self.sat_factor:.3f}_v{self.val_factor:.3f}"
        )


def draw_parameters(spec: AugmentSpec, index: int) -> AugmentDraws:
    """Deterministic parameter draws for one batch item."""
    rng = _item_rng(spec.seed, index)
    flip = rng.random() < spec.fliplr_prob
    theta = rng.uniform(-spec.degrees_max, spec.degrees_max)
    factor = rng.uniform(spec.scale_range[0], spec.scale_range[1])
    hue = rng.uniform(-spec.hue_delta_max, spec.hue_delta_max)
    sat = rng.uniform(max(0.0, 1.0 - spec.sat_factor_max), 1.0 + spec.sat_factor_max)
    val = rng.uniform(max(0.0, 1.0 - spec.val_factor_max), 1.0 + spec.val_factor_max)
    return AugmentDraws(flip, theta, factor, hue, sat, val)


def augment_item(
    scene: Scene, raster: Optional[Raster], spec: AugmentSpec, index: int
) -> tuple[Scene, Optional[Raster]]:
    """Apply one drawn transform chain (flip -> rotate -> scale -> hsv)."""
    draws = draw_parameters(spec, index)
    if draws.flip:
        scene, raster = hflip(scene, raster)
    scene, raster = rotate(scene, raster, draws.theta_deg)
    scene, raster = scale(scene, raster, draws.scale_factor)
    if raster is not None:
        raster = hsv_adjust(raster, draws.hue_delta, draws.sat_factor, draws.val_factor)
    scene = dataclasses.replace(scene, image_id=f"{scene.image_id}__{draws.suffix()}")
    return scene, raster


def augment_batch(
    items: Sequence[tuple[Scene, Optional[Raster]]], spec: AugmentSpec
) -> list[tuple[Scene, Optional[Raster]]]:
    """Augment a batch deterministically: (inputs, spec) fully determine
    the outputs, item by item."""
    spec.validate()
    return [
        augment_item(scene, raster, spec, index)
        for index, (scene, raster) in enumerate(items)
    ]
