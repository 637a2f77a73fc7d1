import random

import numpy as np
import pytest

from gunfuse.augment import (
    AugmentSpec,
    Raster,
    augment_batch,
    draw_parameters,
    hflip,
    hsv_adjust,
    parse_augment_spec,
    raster_from_array,
    raster_to_array,
    read_ppm,
    rotate,
    scale,
    write_ppm,
)
from gunfuse.errors import ConfigError, ParseError
from gunfuse.geometry import Point, euclidean
from gunfuse.ingest import stretch_resize_remap, write_pose_file, write_yolo_labels
from gunfuse.model import BBox, Landmark, Pose, Scene, validate_scene

from conftest import random_scene


def random_raster(rng: random.Random, w: int = 16, h: int = 12) -> Raster:
    return Raster(w, h, bytes(rng.randrange(256) for _ in range(w * h * 3)))


class TestPpm:
    def test_round_trip_bit_exact(self, rng):
        raster = random_raster(rng)
        assert read_ppm(write_ppm(raster)) == raster

    def test_header_with_comment(self):
        data = b"P6\n# a comment\n2 1\n255\n" + bytes(6)
        raster = read_ppm(data)
        assert (raster.width, raster.height) == (2, 1)

    def test_truncated_pixels(self):
        with pytest.raises(ParseError, match="truncated"):
            read_ppm(b"P6\n4 4\n255\n" + bytes(5))

    def test_wrong_magic(self):
        with pytest.raises(ParseError):
            read_ppm(b"P3\n1 1\n255\n0 0 0")

    def test_sixteen_bit_rejected(self):
        with pytest.raises(ParseError, match="maxval"):
            read_ppm(b"P6\n1 1\n65535\n" + bytes(6))


class TestPngGate:
    def test_read_png_when_pillow_available(self, tmp_path, rng):
        PIL = pytest.importorskip("PIL")
        from PIL import Image

        from gunfuse.augment import read_raster

        arr = np.array(
            [[rng.randrange(256) for _ in range(9)] for _ in range(4)], dtype=np.uint8
        ).reshape(4, 3, 3)
        path = tmp_path / "img.png"
        Image.fromarray(arr, "RGB").save(path)
        raster = read_raster(path)
        assert (raster.width, raster.height) == (3, 4)
        assert np.array_equal(raster_to_array(raster), arr)


class TestHflip:
    def test_box_center_reflects(self):
        scene = Scene("s", 640, 640, guns=[BBox(0, 0.25, 0.4, 0.1, 0.2, 0.9)])
        flipped, _ = hflip(scene)
        gun = flipped.guns[0]
        assert gun.cx == 0.75
        assert (gun.cy, gun.w, gun.h, gun.confidence) == (0.4, 0.1, 0.2, 0.9)

    def test_involution_exact_on_scene_and_raster(self, rng):
        for _ in range(25):
            scene = random_scene(rng)  # dyadic grid: 1-x is exact
            raster = random_raster(rng)
            back_scene, back_raster = hflip(*hflip(scene, raster))
            assert back_scene == scene
            assert back_raster == raster

    def test_left_wrist_becomes_right_wrist(self):
        pose = Pose([Landmark(15, 0.3, 0.5, 0.9)])
        scene = Scene("s", 640, 640, poses=[pose])
        flipped, _ = hflip(scene)
        lm = flipped.poses[0].landmarks[0]
        assert lm.index == 16
        assert lm.x == 0.7
        assert (lm.y, lm.visibility) == (0.5, 0.9)

    def test_extents_and_distances_preserved(self, rng):
        for _ in range(25):
            scene = random_scene(rng)
            flipped, _ = hflip(scene)
            for a, b in zip(scene.guns + scene.persons, flipped.guns + flipped.persons):
                assert (a.w, a.h) == (b.w, b.h)
            for pose, fpose in zip(scene.poses, flipped.poses):
                pts = [Point(lm.x, lm.y) for lm in pose.landmarks]
                fpts = [Point(lm.x, lm.y) for lm in fpose.landmarks]
                for i in range(len(pts)):
                    for j in range(i + 1, len(pts)):
                        assert euclidean(pts[i], pts[j]) == euclidean(fpts[i], fpts[j])

    def test_raster_mirrored(self):
        arr = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
        scene = Scene("s", 3, 2)
        _, flipped = hflip(scene, raster_from_array(arr))
        assert np.array_equal(raster_to_array(flipped), arr[:, ::-1, :])


class TestRotate:
    def test_zero_is_bit_exact_identity(self, rng):
        scene = random_scene(rng)
        raster = random_raster(rng)
        out_scene, out_raster = rotate(scene, raster, 0.0)
        assert out_scene is scene
        assert out_raster is raster

    def test_full_turn_is_identity(self, rng):
        scene = random_scene(rng)
        assert rotate(scene, None, 360.0)[0] is scene

    def test_half_turn_point_symmetry(self):
        scene = Scene("s", 640, 640, guns=[BBox(0, 0.25, 0.4, 0.1, 0.2)])
        out, _ = rotate(scene, None, 180.0)
        gun = out.guns[0]
        assert gun.cx == pytest.approx(0.75, abs=1e-12)
        assert gun.cy == pytest.approx(0.6, abs=1e-12)
        assert gun.w == pytest.approx(0.1, abs=1e-12)
        assert gun.h == pytest.approx(0.2, abs=1e-12)

    def test_quarter_turn_swaps_extents(self):
        scene = Scene("s", 640, 640, guns=[BBox(0, 0.5, 0.5, 0.4, 0.2)])
        out, _ = rotate(scene, None, 90.0)
        gun = out.guns[0]
        assert gun.cx == pytest.approx(0.5, abs=1e-12)
        assert gun.cy == pytest.approx(0.5, abs=1e-12)
        assert gun.w == pytest.approx(0.2, abs=1e-12)
        assert gun.h == pytest.approx(0.4, abs=1e-12)

    def test_hull_never_smaller_than_box(self, rng):
        for _ in range(40):
            theta = rng.uniform(-180, 180)
            box = BBox(0, 0.5, 0.5, 0.2, 0.1)
            scene = Scene("s", 640, 640, guns=[box])
            out, _ = rotate(scene, None, theta)
            if out.guns:  # may clamp at the frame
                assert out.guns[0].area >= box.area - 1e-12

    def test_landmark_count_preserved(self, rng):
        for _ in range(20):
            scene = random_scene(rng)
            out, _ = rotate(scene, None, rng.uniform(-45, 45))
            for pose, rpose in zip(scene.poses, out.poses):
                assert len(rpose.landmarks) == len(pose.landmarks)

    def test_raster_quarter_turn_moves_corner(self):
        arr = np.zeros((4, 4, 3), dtype=np.uint8)
        arr[0, 0] = (255, 0, 0)  # top-left marker
        scene = Scene("s", 4, 4)
        _, out = rotate(scene, raster_from_array(arr), 90.0)
        rotated = raster_to_array(out)
        assert tuple(rotated[0, 3]) == (255, 0, 0)  # clockwise: to top-right
        assert rotated.sum() == 255

    def test_out_of_frame_pixels_black(self):
        arr = np.full((4, 4, 3), 200, dtype=np.uint8)
        scene = Scene("s", 4, 4)
        _, out = rotate(scene, raster_from_array(arr), 45.0)
        rotated = raster_to_array(out)
        assert tuple(rotated[0, 0]) == (0, 0, 0)  # corner leaves the frame


class TestScale:
    def test_unit_factor_is_bit_exact_identity(self, rng):
        scene = random_scene(rng)
        raster = random_raster(rng)
        out_scene, out_raster = scale(scene, raster, 1.0)
        assert out_scene is scene
        assert out_raster is raster

    def test_doubling_centered_box(self):
        scene = Scene("s", 640, 640, guns=[BBox(0, 0.5, 0.5, 0.2, 0.1)])
        out, _ = scale(scene, None, 2.0)
        gun = out.guns[0]
        assert gun.cx == 0.5
        assert gun.w == pytest.approx(0.4)
        assert gun.h == pytest.approx(0.2)

    def test_doubling_clips_edge_box(self):
        # Corners (0.65..0.95) scale to (0.8..1.4) and clamp to (0.8..1.0).
        scene = Scene("s", 640, 640, guns=[BBox(0, 0.8, 0.5, 0.3, 0.2)])
        out, _ = scale(scene, None, 2.0)
        gun = out.guns[0]
        assert gun.x_min == pytest.approx(0.8)
        assert gun.x_max == pytest.approx(1.0)
        assert gun.w == pytest.approx(0.2)

    def test_nonpositive_factor_rejected(self):
        with pytest.raises(ConfigError):
            scale(Scene("s", 4, 4), None, 0.0)

    def test_box_fully_out_of_frame_dropped(self):
        scene = Scene("s", 640, 640, guns=[BBox(0, 0.95, 0.95, 0.05, 0.05)])
        out, _ = scale(scene, None, 3.0)
        assert out.guns == ()

    def test_raster_shrink_pads_black(self):
        arr = np.full((4, 4, 3), 200, dtype=np.uint8)
        _, out = scale(Scene("s", 4, 4), raster_from_array(arr), 0.5)
        scaled = raster_to_array(out)
        assert tuple(scaled[0, 0]) == (0, 0, 0)
        assert tuple(scaled[2, 2]) == (200, 200, 200)


class TestHsvAdjust:
    def test_identity_is_bit_exact(self, rng):
        raster = random_raster(rng)
        assert hsv_adjust(raster, 0.0, 1.0, 1.0) is raster

    def test_zero_value_blacks_out(self, rng):
        raster = random_raster(rng)
        out = hsv_adjust(raster, 0.0, 1.0, 0.0)
        assert out.pixels == bytes(len(raster.pixels))

    def test_half_turn_twice_within_one_step(self, rng):
        raster = random_raster(rng, 24, 24)
        once = hsv_adjust(raster, 0.5, 1.0, 1.0)
        twice = hsv_adjust(once, 0.5, 1.0, 1.0)
        a = raster_to_array(raster).astype(np.int16)
        b = raster_to_array(twice).astype(np.int16)
        assert int(np.abs(a - b).max()) <= 1

    def test_saturation_zero_makes_grey(self):
        arr = np.array([[[200, 40, 90]]], dtype=np.uint8)
        out = raster_to_array(hsv_adjust(raster_from_array(arr), 0.0, 0.0, 1.0))
        r, g, b = out[0, 0]
        assert r == g == b == 200  # value channel preserved

    def test_geometry_untouched(self):
        # hsv_adjust only sees rasters; scenes cannot change by construction.
        raster = Raster(2, 2, bytes(12))
        out = hsv_adjust(raster, 0.25, 1.3, 0.7)
        assert (out.width, out.height) == (2, 2)


class TestAugmentBatch:
    def test_same_seed_byte_identical(self, rng):
        items = [(random_scene(rng, image_id=f"s{k}"), random_raster(rng)) for k in range(6)]
        spec = AugmentSpec(seed=1234)
        first = augment_batch(items, spec)
        second = augment_batch(items, spec)
        for (sa, ra), (sb, rb) in zip(first, second):
            assert sa == sb
            assert write_ppm(ra) == write_ppm(rb)
            assert write_yolo_labels(sa.guns + sa.persons) == write_yolo_labels(
                sb.guns + sb.persons
            )
            assert write_pose_file(sa.image_id, 640, 640, sa.poses) == write_pose_file(
                sb.image_id, 640, 640, sb.poses
            )

    def test_identity_spec_returns_inputs(self, rng):
        items = [(random_scene(rng, image_id=f"s{k}"), random_raster(rng)) for k in range(4)]
        spec = AugmentSpec(
            fliplr_prob=0.0, degrees_max=0.0, scale_range=(1.0, 1.0),
            hue_delta_max=0.0, sat_factor_max=0.0, val_factor_max=0.0, seed=7,
        )
        for (scene, raster), (out_scene, out_raster) in zip(items, augment_batch(items, spec)):
            assert out_scene.image_id.startswith(scene.image_id + "__")
            assert out_scene.guns == scene.guns
            assert out_scene.persons == scene.persons
            assert out_scene.poses == scene.poses
            assert out_raster is raster

    def test_outputs_valid_over_random_specs(self, rng):
        for trial in range(10):
            spec = AugmentSpec(
                fliplr_prob=rng.random(),
                degrees_max=rng.uniform(0, 30),
                scale_range=(0.7, rng.uniform(0.7, 1.3)),
                hue_delta_max=rng.uniform(0, 0.1),
                sat_factor_max=rng.uniform(0, 1),
                val_factor_max=rng.uniform(0, 1),
                seed=trial,
            )
            items = [(random_scene(rng, image_id=f"s{k}"), None) for k in range(5)]
            for scene, _ in augment_batch(items, spec):
                assert validate_scene(scene) == []

    def test_per_item_seeding_independent_of_batch(self, rng):
        scenes = [random_scene(rng, image_id=f"s{k}") for k in range(3)]
        spec = AugmentSpec(seed=42)
        full = augment_batch([(s, None) for s in scenes], spec)
        # Item k alone, at index k, reproduces the batch result.
        for k, scene in enumerate(scenes):
            draws_full = draw_parameters(spec, k)
            assert draws_full == draw_parameters(spec, k)
            alone = augment_batch([(scenes[k], None)], spec)
            if k == 0:
                assert alone[0][0] == full[0][0]

    def test_image_id_carries_draw_summary(self, rng):
        scene = random_scene(rng, image_id="base")
        (out, _), = augment_batch([(scene, None)], AugmentSpec(seed=5))
        assert out.image_id.startswith("base__f")
        assert "_r" in out.image_id and "_s" in out.image_id

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            AugmentSpec(fliplr_prob=1.5).validate()
        with pytest.raises(ConfigError):
            AugmentSpec(scale_range=(0.0, 1.0)).validate()


class TestAugmentSpecFile:
    def test_parse(self):
        spec = parse_augment_spec(
            "fliplr_prob = 0.25\ndegrees_max = 5\nscale_range = 0.8, 1.2\nseed = 99\n"
        )
        assert spec.fliplr_prob == 0.25
        assert spec.scale_range == (0.8, 1.2)
        assert spec.seed == 99

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="mosaic"):
            parse_augment_spec("mosaic = 1.0")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="degrees_max"):
            parse_augment_spec("degrees_max = plenty")


class TestResizeCommutation:
    def test_hflip_commutes_with_resize(self, rng):
        scene = random_scene(rng)
        a = stretch_resize_remap(hflip(scene)[0], 320, 240)
        b = hflip(stretch_resize_remap(scene, 320, 240))[0]
        assert a == b

    def test_scale_commutes_with_resize(self, rng):
        scene = random_scene(rng)
        a = stretch_resize_remap(scale(scene, None, 1.3)[0], 320, 240)
        b = scale(stretch_resize_remap(scene, 320, 240), None, 1.3)[0]
        assert a == b

    def test_rotate_commutes_with_aspect_preserving_resize(self, rng):
        # Pixel-space rotation depends on the aspect ratio, so commutation
        # holds when the resize preserves it (640x640 -> 320x320).
        scene = random_scene(rng)
        a = stretch_resize_remap(rotate(scene, None, 30.0)[0], 320, 320)
        b = rotate(stretch_resize_remap(scene, 320, 320), None, 30.0)[0]
        assert a == b
