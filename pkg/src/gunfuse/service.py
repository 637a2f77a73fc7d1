"""HTTP service exposing the fusion pipeline for long-running use.

Wraps the core library behind JSON endpoints: threat classification,
overlay rendering, detection evaluation, VIA-to-YOLO conversion, and
annotation-level augmentation. Rasters stay a file-level concern of the
CLI; the service works on annotations.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from . import __version__
from .augment import augment_batch
from .errors import GunfuseError
from .evaluation import confusion_report, map_range, report_to_dict
from .ingest import parse_via_project, via_to_bbox, write_yolo_labels
from .model import validate_scene
from .render import OverlaySpec, render_overlay
from .schemas import (
    AugmentRequest,
    AugmentResponse,
    ClassifyRequest,
    ClassifyResponse,
    ConvertViaRequest,
    ConvertViaResponse,
    EvaluateRequest,
    RenderRequest,
    SceneModel,
    VerdictModel,
)
from .threat import ThreatConfig, classify_scene

app = FastAPI(title="gunfuse", version=__version__)


@app.exception_handler(GunfuseError)
async def _domain_error(request: Request, exc: GunfuseError) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": str(exc)})


def _checked_scene(scene_model: SceneModel):
    scene = scene_model.to_core()
    violations = validate_scene(scene)
    if violations:
        raise GunfuseError("invalid scene: " + "; ".join(violations))
    return scene


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.get("/version")
def version() -> dict:
    return {"name": "gunfuse", "version": __version__}


@app.post("/classify", response_model=ClassifyResponse)
def classify(request: ClassifyRequest) -> ClassifyResponse:
    scene = _checked_scene(request.scene)
    cfg = request.config.to_core() if request.config else ThreatConfig()
    verdicts = classify_scene(scene, cfg)
    return ClassifyResponse(
        image_id=scene.image_id,
        verdicts=[VerdictModel.from_core(v) for v in verdicts],
    )


@app.post("/render")
def render(request: RenderRequest) -> Response:
    scene = _checked_scene(request.scene)
    if request.verdicts is not None:
        verdicts = [v.to_core() for v in request.verdicts]
    else:
        cfg = request.config.to_core() if request.config else ThreatConfig()
        verdicts = classify_scene(scene, cfg)
    svg = render_overlay(scene, verdicts, OverlaySpec())
    return Response(content=svg, media_type="image/svg+xml")


@app.post("/evaluate")
def evaluate(request: EvaluateRequest) -> dict:
    preds = {k: [b.to_core() for b in v] for k, v in request.predictions.items()}
    gts = {k: [b.to_core() for b in v] for k, v in request.ground_truth.items()}
    report = map_range(preds, gts, conf_min=request.conf_min)
    confusion = confusion_report(preds, gts, request.conf_min, 0.5)
    doc = report_to_dict(report)
    doc["confusion"] = {
        "tp": confusion.tp,
        "fp": confusion.fp,
        "fn": confusion.fn,
    }
    return doc


@app.post("/convert/via", response_model=ConvertViaResponse)
def convert_via(request: ConvertViaRequest) -> ConvertViaResponse:
    regions_by_image, warnings = parse_via_project(json.dumps(request.project))
    labels: dict[str, str] = {}
    for image_id, regions in regions_by_image.items():
        size = request.image_sizes.get(image_id)
        if size is None:
            warnings.append(f"{image_id}: no image size supplied, skipped")
            continue
        boxes = [
            via_to_bbox(r, size[0], size[1], label_key=request.label_key)
            for r in regions
        ]
        labels[image_id] = write_yolo_labels(boxes)
    return ConvertViaResponse(labels=labels, warnings=warnings)


@app.post("/augment", response_model=AugmentResponse)
def augment_scenes(request: AugmentRequest) -> AugmentResponse:
    spec = request.spec.to_core()
    items = [(_checked_scene(s), None) for s in request.scenes]
    out = augment_batch(items, spec)
    return AugmentResponse(scenes=[SceneModel.from_core(s) for s, _ in out])
