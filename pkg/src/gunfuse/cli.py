"""Command line interface over the scene bundle directory convention.

Subcommands: convert, fuse, evaluate, augment, render, serve. Every run
emits a machine-parseable manifest (JSON, one line) to stderr. Exit
status is 0 iff there were no fatal errors; per-item failures are counted
in the manifest and the run continues.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, TypeVar

from . import __version__
from .augment import (
    AugmentSpec,
    augment_item,
    parse_augment_spec,
    read_raster,
    write_ppm,
)
from .errors import GunfuseError, ParseError
from .evaluation import confusion_report, map_range, render_report_text, report_to_dict
from .ingest import (
    BUNDLE_IMAGES,
    BUNDLE_LABELS,
    find_image_file,
    list_scene_ids,
    load_scene,
    parse_keyvalue,
    parse_via_project,
    parse_yolo_labels,
    read_image_size,
    via_to_bbox,
    write_scene_files,
    write_yolo_labels,
)
from .model import DEFAULT_CLASSES, Scene
from .render import OverlaySpec, render_overlay
from .threat import (
    ThreatConfig,
    classify_scene,
    read_verdict_lines,
    threat_config_from_mapping,
    write_verdict_lines,
)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class RunManifest:
    subcommand: str
    tool: str = "gunfuse"
    version: str = __version__
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    wall_time_s: float = 0.0


def _emit_manifest(manifest: RunManifest, started: float) -> None:
    manifest.wall_time_s = round(time.monotonic() - started, 6)
    print(json.dumps(dataclasses.asdict(manifest), separators=(",", ":")), file=sys.stderr)


def _parallel_map(fn: Callable[[T], R], items: Sequence[T], workers: int) -> list[R]:
    # Order-preserving map; output never depends on worker scheduling.
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fail(manifest: RunManifest, started: float, message: str) -> int:
    manifest.errors.append(message)
    print(f"error: {message}", file=sys.stderr)
    _emit_manifest(manifest, started)
    return 2


def _resolve_threat_config(
    config_path: Optional[str], overrides: list[str]
) -> ThreatConfig:
    mapping: dict[str, str] = {}
    if config_path:
        mapping = parse_keyvalue(Path(config_path).read_text())
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ParseError(f"--set expects key=value, got {item!r}")
        mapping[key.strip()] = value.strip()
    return threat_config_from_mapping(mapping)


# ---------------------------------------------------------------------------
# convert


def cmd_convert(args: argparse.Namespace) -> int:
    started = time.monotonic()
    manifest = RunManifest(
        "convert",
        inputs={"via_project": args.project, "images_dir": args.images},
        outputs={"labels_dir": args.out},
    )
    project_path = Path(args.project)
    images_dir = Path(args.images)
    out_dir = Path(args.out)
    if not project_path.is_file():
        return _fail(manifest, started, f"VIA project not found: {project_path}")
    if not images_dir.is_dir():
        return _fail(manifest, started, f"images directory not found: {images_dir}")
    try:
        regions_by_image, warnings = parse_via_project(project_path.read_text())
    except (ParseError, OSError) as exc:
        return _fail(manifest, started, f"unreadable VIA project: {exc}")
    manifest.errors.extend(warnings)

    out_dir.mkdir(parents=True, exist_ok=True)
    written = failed = 0
    for image_id, regions in sorted(regions_by_image.items()):
        image_path = images_dir / image_id
        try:
            if not image_path.is_file():
                raise ParseError(f"image file missing: {image_path.name}")
            width, height = read_image_size(image_path)
            boxes = [
                via_to_bbox(r, width, height, DEFAULT_CLASSES, args.label_key)
                for r in regions
            ]
        except ParseError as exc:
            manifest.errors.append(f"{image_id}: {exc}")
            failed += 1
            continue
        stem = Path(image_id).stem
        (out_dir / f"{stem}.txt").write_text(write_yolo_labels(boxes))
        written += 1
    manifest.counts = {
        "images": len(regions_by_image),
        "labels_written": written,
        "failed_images": failed,
        "skipped_regions": len(warnings),
    }
    print(f"convert: {written} label file(s) written, {failed} image(s) failed")
    _emit_manifest(manifest, started)
    return 0


# ---------------------------------------------------------------------------
# fuse


def cmd_fuse(args: argparse.Namespace) -> int:
    started = time.monotonic()
    manifest = RunManifest(
        "fuse",
        inputs={"scenes_dir": args.scenes, "config": args.config or ""},
        outputs={"verdicts": args.out, "svg_dir": args.svg_dir or ""},
    )
    scenes_dir = Path(args.scenes)
    if not scenes_dir.is_dir():
        return _fail(manifest, started, f"scenes directory not found: {scenes_dir}")
    try:
        cfg = _resolve_threat_config(args.config, args.set or [])
    except GunfuseError as exc:
        return _fail(manifest, started, f"config error: {exc}")
    except OSError as exc:
        return _fail(manifest, started, f"cannot read config: {exc}")
    manifest.config = {
        **dataclasses.asdict(cfg),
        "enabled_rules": [r.value for r in cfg.enabled_rules],
    }

    scenes: list[Scene] = []
    for scene_id in list_scene_ids(scenes_dir):
        try:
            scenes.append(load_scene(scenes_dir, scene_id))
        except ParseError as exc:
            manifest.errors.append(f"{scene_id}: {exc}")

    results = _parallel_map(lambda s: classify_scene(s, cfg), scenes, args.workers)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        "".join(
            write_verdict_lines(scene.image_id, verdicts)
            for scene, verdicts in zip(scenes, results)
        )
    )
    if args.svg_dir:
        svg_dir = Path(args.svg_dir)
        svg_dir.mkdir(parents=True, exist_ok=True)
        overlay = OverlaySpec()
        for scene, verdicts in zip(scenes, results):
            (svg_dir / f"{scene.image_id}.svg").write_text(
                render_overlay(scene, verdicts, overlay)
            )

    threats = sum(1 for vs in results for v in vs if v.threat)
    manifest.counts = {
        "scenes": len(scenes),
        "skipped_scenes": len(manifest.errors),
        "verdicts": sum(len(vs) for vs in results),
        "threats": threats,
    }
    print(f"fuse: {len(scenes)} scene(s), {threats} threat(s) flagged")
    _emit_manifest(manifest, started)
    return 0


# ---------------------------------------------------------------------------
# evaluate


def _read_labels_dir(path: Path) -> dict[str, list]:
    out = {}
    for label_path in sorted(path.glob("*.txt")):
        out[label_path.stem] = parse_yolo_labels(label_path.read_text())
    return out


def cmd_evaluate(args: argparse.Namespace) -> int:
    started = time.monotonic()
    manifest = RunManifest(
        "evaluate",
        inputs={"preds_dir": args.preds, "gts_dir": args.gts},
        outputs={"report": args.report},
        config={"conf_min": args.conf_min, "iou_min": args.iou_min},
    )
    preds_dir, gts_dir = Path(args.preds), Path(args.gts)
    for d in (preds_dir, gts_dir):
        if not d.is_dir():
            return _fail(manifest, started, f"labels directory not found: {d}")
    try:
        preds = _read_labels_dir(preds_dir)
        gts = _read_labels_dir(gts_dir)
    except ParseError as exc:
        return _fail(manifest, started, f"label parse error: {exc}")

    missing_gt = sorted(set(preds) - set(gts))
    missing_pred = sorted(set(gts) - set(preds))
    if missing_gt or missing_pred:
        return _fail(
            manifest,
            started,
            "file stems do not match: "
            f"no ground truth for {missing_gt or 'none'}, "
            f"no predictions for {missing_pred or 'none'}",
        )

    report = map_range(preds, gts, DEFAULT_CLASSES, conf_min=args.conf_min)
    confusion = confusion_report(preds, gts, args.conf_min, args.iou_min)
    doc = report_to_dict(report)
    doc["confusion"] = {
        "tp": confusion.tp,
        "fp": confusion.fp,
        "fn": confusion.fn,
        "per_image": {
            image_id: {
                "false_positives": [
                    {"index": i, "class_id": b.class_id, "cx": b.cx, "cy": b.cy,
                     "w": b.w, "h": b.h, "confidence": b.confidence}
                    for i, b in entry.false_positives
                ],
                "false_negatives": [
                    {"index": i, "class_id": b.class_id, "cx": b.cx, "cy": b.cy,
                     "w": b.w, "h": b.h}
                    for i, b in entry.false_negatives
                ],
            }
            for image_id, entry in confusion.per_image.items()
            if entry.false_positives or entry.false_negatives
        },
    }
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(doc, indent=2) + "\n")
    print(render_report_text(report), end="")

    manifest.counts = {
        "images": len(gts),
        "predictions": sum(len(v) for v in preds.values()),
        "ground_truths": sum(len(v) for v in gts.values()),
        "tp": confusion.tp,
        "fp": confusion.fp,
        "fn": confusion.fn,
    }
    _emit_manifest(manifest, started)
    return 0


# ---------------------------------------------------------------------------
# augment


def _labels_carry_confidence(bundle_dir: Path, scene_id: str) -> bool:
    # Mirror the input label format on output: 6-field prediction files
    # keep their confidence column, 5-field ground truth stays 5-field.
    label_path = bundle_dir / BUNDLE_LABELS / f"{scene_id}.txt"
    if not label_path.is_file():
        return False
    for line in label_path.read_text().splitlines():
        if line.strip():
            return len(line.split()) == 6
    return False


def cmd_augment(args: argparse.Namespace) -> int:
    started = time.monotonic()
    manifest = RunManifest(
        "augment",
        inputs={"scenes_dir": args.scenes, "spec": args.spec or ""},
        outputs={"out_dir": args.out},
    )
    scenes_dir = Path(args.scenes)
    out_dir = Path(args.out)
    if not scenes_dir.is_dir():
        return _fail(manifest, started, f"scenes directory not found: {scenes_dir}")
    try:
        spec = (
            parse_augment_spec(Path(args.spec).read_text()) if args.spec else AugmentSpec()
        )
    except GunfuseError as exc:
        return _fail(manifest, started, f"spec error: {exc}")
    except OSError as exc:
        return _fail(manifest, started, f"cannot read spec: {exc}")
    manifest.config = dataclasses.asdict(spec)

    items = []
    confidence_fields = []
    for scene_id in list_scene_ids(scenes_dir):
        try:
            scene = load_scene(scenes_dir, scene_id)
            image_path = find_image_file(scenes_dir, scene_id)
            raster = read_raster(image_path) if image_path else None
            items.append((scene, raster))
            confidence_fields.append(_labels_carry_confidence(scenes_dir, scene_id))
        except ParseError as exc:
            manifest.errors.append(f"{scene_id}: {exc}")

    augmented = _parallel_map(
        lambda pair: augment_item(pair[1][0], pair[1][1], spec, pair[0]),
        list(enumerate(items)),
        args.workers,
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    rasters_written = 0
    for (scene, raster), include_conf in zip(augmented, confidence_fields):
        write_scene_files(out_dir, scene, include_conf=include_conf)
        if raster is not None:
            images_dir = out_dir / BUNDLE_IMAGES
            images_dir.mkdir(parents=True, exist_ok=True)
            (images_dir / f"{scene.image_id}.ppm").write_bytes(write_ppm(raster))
            rasters_written += 1
    manifest.counts = {
        "scenes": len(items),
        "skipped_scenes": len(manifest.errors),
        "rasters_written": rasters_written,
    }
    print(f"augment: {len(augmented)} scene(s) written to {out_dir}")
    _emit_manifest(manifest, started)
    return 0


# ---------------------------------------------------------------------------
# render


def cmd_render(args: argparse.Namespace) -> int:
    started = time.monotonic()
    manifest = RunManifest(
        "render",
        inputs={"scenes_dir": args.scenes, "verdicts": args.verdicts or ""},
        outputs={"svg_dir": args.out},
    )
    scenes_dir = Path(args.scenes)
    if not scenes_dir.is_dir():
        return _fail(manifest, started, f"scenes directory not found: {scenes_dir}")
    verdicts_by_image = {}
    if args.verdicts:
        try:
            verdicts_by_image = read_verdict_lines(Path(args.verdicts).read_text())
        except (OSError, ValueError, KeyError) as exc:
            return _fail(manifest, started, f"cannot read verdicts: {exc}")
    try:
        cfg = _resolve_threat_config(args.config, args.set or [])
    except GunfuseError as exc:
        return _fail(manifest, started, f"config error: {exc}")

    to_stdout = args.out == "-"
    out_dir = Path(args.out)
    if not to_stdout:
        out_dir.mkdir(parents=True, exist_ok=True)
    overlay = OverlaySpec()
    rendered = 0
    for scene_id in list_scene_ids(scenes_dir):
        try:
            scene = load_scene(scenes_dir, scene_id)
        except ParseError as exc:
            manifest.errors.append(f"{scene_id}: {exc}")
            continue
        if args.verdicts:
            verdicts = verdicts_by_image.get(scene.image_id, [])
        else:
            verdicts = classify_scene(scene, cfg)
        svg = render_overlay(scene, verdicts, overlay)
        if to_stdout:
            sys.stdout.write(svg)
        else:
            (out_dir / f"{scene.image_id}.svg").write_text(svg)
        rendered += 1
    manifest.counts = {"scenes_rendered": rendered, "skipped": len(manifest.errors)}
    if not to_stdout:
        print(f"render: {rendered} overlay(s) written to {out_dir}")
    _emit_manifest(manifest, started)
    return 0


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("gunfuse.service:app", host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gunfuse",
        description="Fuse gun detections with pose landmarks into threat verdicts.",
    )
    parser.add_argument("--version", action="version", version=f"gunfuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a VIA project to YOLO label files")
    p.add_argument("--project", required=True, help="VIA 2.x project JSON")
    p.add_argument("--images", required=True, help="directory with the annotated images")
    p.add_argument("--out", required=True, help="output labels directory")
    p.add_argument("--label-key", default="label", help="region attribute holding the class")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("fuse", help="classify threats for every scene in a bundle")
    p.add_argument("--scenes", required=True, help="scene bundle directory")
    p.add_argument("--config", help="threat config file (key = value)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--out", required=True, help="output verdicts JSON-lines path")
    p.add_argument("--svg-dir", help="also write an SVG overlay per scene")
    p.add_argument("--workers", type=int, default=1, help="parallel scene workers")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("evaluate", help="COCO-style evaluation of predictions vs ground truth")
    p.add_argument("--preds", required=True, help="predicted labels directory")
    p.add_argument("--gts", required=True, help="ground-truth labels directory")
    p.add_argument("--report", required=True, help="output report JSON path")
    p.add_argument("--conf-min", type=float, default=0.25,
                   help="confidence floor for P/R/F1 and confusion listings")
    p.add_argument("--iou-min", type=float, default=0.5,
                   help="IoU threshold for confusion listings")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("augment", help="augment a scene bundle with exact remapping")
    p.add_argument("--scenes", required=True, help="scene bundle directory")
    p.add_argument("--spec", help="augment.spec file (key = value)")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--workers", type=int, default=1, help="parallel scene workers")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("render", help="render SVG overlays for a scene bundle")
    p.add_argument("--scenes", required=True, help="scene bundle directory")
    p.add_argument("--verdicts", help="verdicts JSON-lines (else classify on the fly)")
    p.add_argument("--config", help="threat config file used when classifying")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--out", required=True, help="output SVG directory, or '-' for stdout")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
