import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gunfuse.augment import Raster, write_ppm
from gunfuse.errors import ConfigError, ParseError
from gunfuse.ingest import (
    ExifOrientation,
    ViaRegion,
    apply_exif_orientation,
    list_scene_ids,
    load_scene,
    parse_keyvalue,
    parse_pose_document,
    parse_pose_file,
    parse_via_project,
    parse_yolo_labels,
    read_image_size,
    scene_from_parts,
    stretch_resize_remap,
    via_to_bbox,
    write_pose_file,
    write_scene_files,
    write_yolo_labels,
)
from gunfuse.model import BBox, Landmark, Pose, Scene

from conftest import random_box, random_scene


class TestYoloLabels:
    def test_parse_basic_line(self):
        boxes = parse_yolo_labels("0 0.500000 0.500000 0.200000 0.100000")
        assert boxes == [BBox(0, 0.5, 0.5, 0.2, 0.1, 1.0)]

    def test_parse_empty_file(self):
        assert parse_yolo_labels("") == []

    def test_parse_blank_lines_skipped(self):
        boxes = parse_yolo_labels("\n0 0.5 0.5 0.2 0.1\n\n")
        assert len(boxes) == 1

    def test_parse_confidence_field(self):
        boxes = parse_yolo_labels("1 0.5 0.5 0.2 0.1 0.75")
        assert boxes[0].confidence == 0.75
        assert boxes[0].class_id == 1

    def test_negative_width_names_line(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_yolo_labels("0 0.5 0.5 -0.1 0.1")

    def test_error_line_number_counts_blanks(self):
        with pytest.raises(ParseError, match="line 3"):
            parse_yolo_labels("0 0.5 0.5 0.2 0.1\n\n0 0.5 0.5 0.2")

    def test_non_numeric(self):
        with pytest.raises(ParseError, match="non-numeric"):
            parse_yolo_labels("0 0.5 abc 0.2 0.1")

    def test_class_outside_map(self):
        with pytest.raises(ParseError, match="class id 5"):
            parse_yolo_labels("5 0.5 0.5 0.2 0.1")

    def test_center_out_of_range(self):
        with pytest.raises(ParseError, match="outside"):
            parse_yolo_labels("0 1.5 0.5 0.2 0.1")

    def test_write_format(self):
        text = write_yolo_labels([BBox(0, 0.5, 0.5, 0.2, 0.1, 1.0)])
        assert text == "0 0.500000 0.500000 0.200000 0.100000\n"

    def test_write_empty(self):
        assert write_yolo_labels([]) == ""

    def test_write_with_confidence(self):
        text = write_yolo_labels([BBox(1, 0.5, 0.5, 0.2, 0.1, 0.25)], include_conf=True)
        assert text == "1 0.500000 0.500000 0.200000 0.100000 0.250000\n"

    def test_round_trip_100_random_boxes(self, rng):
        boxes = [random_box(rng, rng.randint(0, 1), "decimal6") for _ in range(100)]
        parsed = parse_yolo_labels(write_yolo_labels(boxes, include_conf=True))
        assert len(parsed) == len(boxes)
        for a, b in zip(boxes, parsed):
            assert a.class_id == b.class_id
            for field in ("cx", "cy", "w", "h", "confidence"):
                assert abs(getattr(a, field) - getattr(b, field)) <= 5e-7

    @settings(max_examples=100)
    @given(
        cx=st.floats(0.26, 0.74), cy=st.floats(0.26, 0.74),
        w=st.floats(0.001, 0.5), h=st.floats(0.001, 0.5),
        conf=st.floats(0.0, 1.0),
    )
    def test_round_trip_property(self, cx, cy, w, h, conf):
        box = BBox(0, cx, cy, w, h, conf)
        (back,) = parse_yolo_labels(write_yolo_labels([box], include_conf=True))
        for field in ("cx", "cy", "w", "h", "confidence"):
            assert abs(getattr(box, field) - getattr(back, field)) <= 5e-7


VIA_PROJECT = {
    "_via_settings": {"ui": {}},
    "_via_img_metadata": {
        "pistol.jpg12345": {
            "filename": "pistol.jpg",
            "size": 12345,
            "regions": [
                {
                    "shape_attributes": {
                        "name": "rect", "x": 10, "y": 20, "width": 30, "height": 40,
                    },
                    "region_attributes": {"label": "gun"},
                }
            ],
            "file_attributes": {},
        }
    },
    "_via_attributes": {},
}


class TestViaProject:
    def test_parse_one_rect(self):
        regions, warnings = parse_via_project(json.dumps(VIA_PROJECT))
        assert warnings == []
        assert list(regions) == ["pistol.jpg"]
        (region,) = regions["pistol.jpg"]
        assert (region.x, region.y, region.width, region.height) == (10, 20, 30, 40)
        assert region.attributes["label"] == "gun"

    def test_polygon_skipped_with_warning(self):
        project = {
            "_via_img_metadata": {
                "a.jpg1": {
                    "filename": "a.jpg",
                    "regions": [
                        {"shape_attributes": {"name": "polygon", "all_points_x": [1]},
                         "region_attributes": {}},
                    ],
                }
            }
        }
        regions, warnings = parse_via_project(json.dumps(project))
        assert regions["a.jpg"] == []
        assert len(warnings) == 1 and "polygon" in warnings[0]

    def test_empty_metadata(self):
        regions, warnings = parse_via_project(json.dumps({"_via_img_metadata": {}}))
        assert regions == {} and warnings == []

    def test_missing_shape_attributes_is_error(self):
        project = {
            "_via_img_metadata": {
                "a.jpg1": {"filename": "a.jpg", "regions": [{"region_attributes": {}}]}
            }
        }
        with pytest.raises(ParseError, match="a.jpg"):
            parse_via_project(json.dumps(project))

    def test_bare_metadata_map_accepted(self):
        bare = VIA_PROJECT["_via_img_metadata"]
        regions, _ = parse_via_project(json.dumps(bare))
        assert list(regions) == ["pistol.jpg"]

    def test_invalid_json(self):
        with pytest.raises(ParseError, match="invalid VIA JSON"):
            parse_via_project("{nope")


class TestViaToBbox:
    def test_derived_arithmetic(self):
        region = ViaRegion("rect", 10, 20, 30, 40, {"label": "gun"})
        box = via_to_bbox(region, 100, 100)
        assert box.class_id == 0
        assert box.cx == pytest.approx(0.25)
        assert box.cy == pytest.approx(0.4)
        assert box.w == pytest.approx(0.3)
        assert box.h == pytest.approx(0.4)
        assert box.confidence == 1.0

    def test_full_frame_rect(self):
        region = ViaRegion("rect", 0, 0, 640, 640, {"label": "person"})
        box = via_to_bbox(region, 640, 640)
        assert (box.cx, box.cy, box.w, box.h) == (0.5, 0.5, 1.0, 1.0)
        assert box.class_id == 1

    def test_unknown_label(self):
        region = ViaRegion("rect", 0, 0, 10, 10, {"label": "knife"})
        with pytest.raises(ParseError, match="knife"):
            via_to_bbox(region, 100, 100)

    def test_missing_label_defaults_to_gun(self):
        region = ViaRegion("rect", 0, 0, 10, 10, {})
        assert via_to_bbox(region, 100, 100).class_id == 0

    def test_overhang_clamped(self):
        region = ViaRegion("rect", 90, 90, 20, 20, {"label": "gun"})
        box = via_to_bbox(region, 100, 100)
        assert box.x_max <= 1.0 and box.y_max <= 1.0


class TestPoseInterchange:
    def doc(self, landmarks):
        return json.dumps(
            {"image_id": "x", "width_px": 640, "height_px": 480,
             "poses": [{"landmarks": landmarks}]}
        )

    def test_two_wrists(self):
        poses = parse_pose_file(
            self.doc([{"i": 15, "x": 0.3, "y": 0.4, "v": 0.9},
                      {"i": 16, "x": 0.6, "y": 0.4, "v": 0.8}])
        )
        assert len(poses) == 1 and len(poses[0].landmarks) == 2

    def test_index_out_of_range(self):
        with pytest.raises(ParseError, match="40"):
            parse_pose_file(self.doc([{"i": 40, "x": 0.1, "y": 0.1, "v": 1.0}]))

    def test_duplicate_index(self):
        with pytest.raises(ParseError, match="duplicate"):
            parse_pose_file(
                self.doc([{"i": 15, "x": 0.1, "y": 0.1, "v": 1.0},
                          {"i": 15, "x": 0.2, "y": 0.2, "v": 1.0}])
            )

    def test_empty_poses(self):
        assert parse_pose_file(json.dumps(
            {"image_id": "x", "width_px": 1, "height_px": 1, "poses": []}
        )) == []

    def test_out_of_range_visibility_rejected(self):
        poses = parse_pose_file(
            self.doc([{"i": 15, "x": 0.1, "y": 0.1, "v": 1.5},
                      {"i": 16, "x": 0.2, "y": 0.2, "v": 0.5}])
        )
        assert [lm.index for lm in poses[0].landmarks] == [16]

    def test_header_parsed(self):
        image_id, w, h, _ = parse_pose_document(self.doc([]))
        assert (image_id, w, h) == ("x", 640, 480)

    def test_round_trip_exact(self, rng):
        poses = [
            Pose(
                tuple(Landmark(i, rng.random(), rng.random() * 1.2 - 0.1, rng.random())
                      for i in sorted(rng.sample(range(33), 5))),
                person_box=BBox(1, 0.5, 0.5, 0.4, 0.8, 0.9),
            )
            for _ in range(4)
        ]
        text = write_pose_file("img7", 1920, 1080, poses)
        image_id, w, h, back = parse_pose_document(text)
        assert (image_id, w, h) == ("img7", 1920, 1080)
        assert back == poses  # bitwise float equality through JSON


# Independent pixel-level orientation oracle: numpy views implementing the
# standard EXIF display corrections.
def orient_raster_oracle(arr: np.ndarray, code: int) -> np.ndarray:
    t = arr.transpose(1, 0, 2)
    return {
        1: arr,
        2: arr[:, ::-1],
        3: arr[::-1, ::-1],
        4: arr[::-1, :],
        5: t,
        6: t[:, ::-1],
        7: t[::-1, ::-1],
        8: t[::-1, :],
    }[code]


class TestExifOrientation:
    def test_code_one_is_identity(self, rng):
        scene = random_scene(rng)
        assert apply_exif_orientation(scene, ExifOrientation(1)) == scene

    def test_code_three_moves_center(self):
        scene = scene_from_parts("x", 100, 100, [BBox(0, 0.25, 0.4, 0.3, 0.4)])
        out = apply_exif_orientation(scene, ExifOrientation(3))
        gun = out.guns[0]
        assert gun.cx == pytest.approx(0.75)
        assert gun.cy == pytest.approx(0.6)
        assert (gun.w, gun.h) == (0.3, 0.4)

    def test_code_out_of_range(self):
        with pytest.raises(ConfigError):
            ExifOrientation(9)

    def test_pairs_compose_to_identity(self, rng):
        scene = random_scene(rng)  # dyadic grid: 1-x is exact
        for codes in [(3, 3), (2, 2), (4, 4), (6, 8), (8, 6), (5, 5), (7, 7)]:
            out = scene
            for code in codes:
                out = apply_exif_orientation(out, ExifOrientation(code))
            assert out == scene, f"codes {codes} did not compose to identity"

    def test_dims_swap_for_transposed_codes(self):
        scene = Scene("x", 800, 600)
        for code in (5, 6, 7, 8):
            out = apply_exif_orientation(scene, ExifOrientation(code))
            assert (out.width_px, out.height_px) == (600, 800)
        for code in (1, 2, 3, 4):
            out = apply_exif_orientation(scene, ExifOrientation(code))
            assert (out.width_px, out.height_px) == (800, 600)

    @pytest.mark.parametrize("code", range(1, 9))
    def test_matches_pixel_oracle(self, code, rng):
        # Tag single pixels of a synthetic raster, orient the raster with
        # the independent oracle, and check the annotation remap lands each
        # landmark in its marker's new pixel.
        w, h = 8, 6
        for _ in range(25):
            col, row = rng.randrange(w), rng.randrange(h)
            arr = np.zeros((h, w, 3), dtype=np.uint8)
            arr[row, col] = (255, 255, 255)
            oriented = orient_raster_oracle(arr, code)
            rows, cols = np.nonzero(oriented[..., 0])
            marker = (int(cols[0]), int(rows[0]))

            scene = Scene(
                "m", w, h,
                poses=[Pose([Landmark(0, (col + 0.5) / w, (row + 0.5) / h, 1.0)])],
            )
            out = apply_exif_orientation(scene, ExifOrientation(code))
            lm = out.poses[0].landmarks[0]
            ow, oh = out.width_px, out.height_px
            assert (math.floor(lm.x * ow), math.floor(lm.y * oh)) == marker


class TestStretchResize:
    def test_coordinates_unchanged(self, rng):
        scene = random_scene(rng)
        out = stretch_resize_remap(scene, 640, 640)
        assert out.guns == scene.guns
        assert out.persons == scene.persons
        assert out.poses == scene.poses
        assert (out.width_px, out.height_px) == (640, 640)

    def test_identity_resize(self, rng):
        scene = random_scene(rng)
        assert stretch_resize_remap(scene, 640, 640) == scene

    def test_bad_dims(self):
        with pytest.raises(ConfigError):
            stretch_resize_remap(Scene("x", 10, 10), 0, 640)

    def test_commutes_with_via_to_bbox(self):
        # Exact pixel arithmetic: 100 -> 640 scales by 6.4.
        region = ViaRegion("rect", 10, 20, 30, 40, {"label": "gun"})
        direct = via_to_bbox(region, 100, 100)
        resized_scene = stretch_resize_remap(
            scene_from_parts("x", 100, 100, [direct]), 640, 640
        )
        scaled_region = ViaRegion("rect", 64, 128, 192, 256, {"label": "gun"})
        assert via_to_bbox(scaled_region, 640, 640) == resized_scene.guns[0]


class TestKeyValue:
    def test_basics(self):
        mapping = parse_keyvalue("# comment\nalpha = 0.5\n\ncombinator=any\n")
        assert mapping == {"alpha": "0.5", "combinator": "any"}

    def test_duplicate_key(self):
        with pytest.raises(ParseError, match="duplicate"):
            parse_keyvalue("a = 1\na = 2")

    def test_missing_equals(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_keyvalue("just words")


class TestImageSize:
    def test_ppm(self, tmp_path):
        raster = Raster(5, 3, bytes(5 * 3 * 3))
        path = tmp_path / "img.ppm"
        path.write_bytes(write_ppm(raster))
        assert read_image_size(path) == (5, 3)

    def test_png_header(self, tmp_path):
        data = (
            b"\x89PNG\r\n\x1a\n"
            + struct.pack(">I", 13) + b"IHDR"
            + struct.pack(">II", 320, 240) + bytes(5) + bytes(4)
        )
        path = tmp_path / "img.png"
        path.write_bytes(data)
        assert read_image_size(path) == (320, 240)

    def test_jpeg_header(self, tmp_path):
        data = (
            b"\xff\xd8"
            + b"\xff\xe0" + struct.pack(">H", 16) + b"JFIF\x00" + bytes(9)
            + b"\xff\xc0" + struct.pack(">H", 17) + b"\x08"
            + struct.pack(">HH", 480, 640) + b"\x03" + bytes(9)
        )
        path = tmp_path / "img.jpg"
        path.write_bytes(data)
        assert read_image_size(path) == (640, 480)

    def test_unknown_format(self, tmp_path):
        path = tmp_path / "img.bin"
        path.write_bytes(b"GIF89a")
        with pytest.raises(ParseError):
            read_image_size(path)


class TestSceneBundle:
    def test_round_trip_within_1e9(self, tmp_path, rng):
        originals = []
        for k in range(10):
            scene = random_scene(rng, grid="decimal6", image_id=f"scene{k:03d}")
            originals.append(scene)
            write_scene_files(tmp_path, scene, include_conf=True)
        assert list_scene_ids(tmp_path) == [s.image_id for s in originals]
        for scene in originals:
            back = load_scene(tmp_path, scene.image_id)
            assert back.image_id == scene.image_id
            assert (back.width_px, back.height_px) == (scene.width_px, scene.height_px)
            assert len(back.guns) == len(scene.guns)
            assert len(back.persons) == len(scene.persons)
            for a, b in zip(scene.guns + scene.persons, back.guns + back.persons):
                for field in ("cx", "cy", "w", "h", "confidence"):
                    assert abs(getattr(a, field) - getattr(b, field)) <= 1e-9
            assert back.poses == scene.poses

    def test_dims_fall_back_to_image_file(self, tmp_path):
        scene = scene_from_parts("only_labels", 640, 640, [BBox(0, 0.5, 0.5, 0.2, 0.2)])
        labels = tmp_path / "labels"
        labels.mkdir()
        (labels / "only_labels.txt").write_text(write_yolo_labels(scene.guns))
        images = tmp_path / "images"
        images.mkdir()
        (images / "only_labels.ppm").write_bytes(write_ppm(Raster(32, 16, bytes(32 * 16 * 3))))
        loaded = load_scene(tmp_path, "only_labels")
        assert (loaded.width_px, loaded.height_px) == (32, 16)

    def test_dims_default_when_nothing_known(self, tmp_path):
        labels = tmp_path / "labels"
        labels.mkdir()
        (labels / "bare.txt").write_text("0 0.5 0.5 0.2 0.2\n")
        loaded = load_scene(tmp_path, "bare")
        assert (loaded.width_px, loaded.height_px) == (640, 640)

    def test_malformed_label_names_file(self, tmp_path):
        labels = tmp_path / "labels"
        labels.mkdir()
        (labels / "bad.txt").write_text("0 nope 0.5 0.2 0.2\n")
        with pytest.raises(ParseError, match="bad.txt"):
            load_scene(tmp_path, "bad")
