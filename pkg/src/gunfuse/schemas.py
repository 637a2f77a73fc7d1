"""Pydantic request/response models for the HTTP service.

These mirror the on-disk interchange formats (same field names as the
pose JSON and verdict lines) and convert to and from the core value types.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field

from . import augment, model, threat
from .errors import ConfigError


class BoxModel(BaseModel):
    class_id: int = Field(ge=0)
    cx: float
    cy: float
    w: float
    h: float
    confidence: float = 1.0

    def to_core(self) -> model.BBox:
        return model.BBox(self.class_id, self.cx, self.cy, self.w, self.h, self.confidence)

    @classmethod
    def from_core(cls, box: model.BBox) -> "BoxModel":
        return cls(
            class_id=box.class_id, cx=box.cx, cy=box.cy, w=box.w, h=box.h,
            confidence=box.confidence,
        )


class LandmarkModel(BaseModel):
    i: int = Field(ge=0, le=32)
    x: float
    y: float
    v: float = Field(default=1.0, ge=0.0, le=1.0)


class PoseModel(BaseModel):
    landmarks: list[LandmarkModel] = []
    person_box: Optional[BoxModel] = None

    def to_core(self) -> model.Pose:
        return model.Pose(
            tuple(model.Landmark(lm.i, lm.x, lm.y, lm.v) for lm in self.landmarks),
            None if self.person_box is None else self.person_box.to_core(),
        )

    @classmethod
    def from_core(cls, pose: model.Pose) -> "PoseModel":
        return cls(
            landmarks=[
                LandmarkModel(i=lm.index, x=lm.x, y=lm.y, v=lm.visibility)
                for lm in pose.landmarks
            ],
            person_box=None if pose.person_box is None
            else BoxModel.from_core(pose.person_box),
        )


class SceneModel(BaseModel):
    image_id: str
    width_px: int = Field(gt=0)
    height_px: int = Field(gt=0)
    guns: list[BoxModel] = []
    persons: list[BoxModel] = []
    poses: list[PoseModel] = []

    def to_core(self) -> model.Scene:
        return model.Scene(
            image_id=self.image_id,
            width_px=self.width_px,
            height_px=self.height_px,
            guns=tuple(b.to_core() for b in self.guns),
            persons=tuple(b.to_core() for b in self.persons),
            poses=tuple(p.to_core() for p in self.poses),
        )

    @classmethod
    def from_core(cls, scene: model.Scene) -> "SceneModel":
        return cls(
            image_id=scene.image_id,
            width_px=scene.width_px,
            height_px=scene.height_px,
            guns=[BoxModel.from_core(b) for b in scene.guns],
            persons=[BoxModel.from_core(b) for b in scene.persons],
            poses=[PoseModel.from_core(p) for p in scene.poses],
        )


class ThreatConfigModel(BaseModel):
    alpha: float = 0.5
    gun_conf_min: float = 0.25
    visibility_min: float = 0.5
    aim_angle_max_deg: float = 30.0
    head_radius_factor: float = 0.6
    combinator: str = "any"
    enabled_rules: list[str] = ["proximity", "overlap"]

    def to_core(self) -> threat.ThreatConfig:
        try:
            rules = tuple(threat.Rule(r) for r in self.enabled_rules)
        except ValueError:
            raise ConfigError(
                f"unknown rule name in enabled_rules: {self.enabled_rules}"
            ) from None
        cfg = threat.ThreatConfig(
            alpha=self.alpha,
            gun_conf_min=self.gun_conf_min,
            visibility_min=self.visibility_min,
            aim_angle_max_deg=self.aim_angle_max_deg,
            head_radius_factor=self.head_radius_factor,
            combinator=self.combinator,
            enabled_rules=rules,
        )
        cfg.validate()
        return cfg


class RuleResultModel(BaseModel):
    rule: str
    fired: bool
    evidence: dict[str, float] = {}
    landmarks_used: list[int] = []


class VerdictModel(BaseModel):
    gun_index: int
    person_index: Optional[int] = None
    threat: bool
    rules: list[RuleResultModel] = []

    def to_core(self) -> threat.ThreatVerdict:
        return threat.ThreatVerdict(
            gun_index=self.gun_index,
            person_index=self.person_index,
            threat=self.threat,
            rules=tuple(
                threat.RuleResult(
                    threat.Rule(r.rule), r.fired, dict(r.evidence),
                    tuple(r.landmarks_used),
                )
                for r in self.rules
            ),
        )

    @classmethod
    def from_core(cls, verdict: threat.ThreatVerdict) -> "VerdictModel":
        return cls(
            gun_index=verdict.gun_index,
            person_index=verdict.person_index,
            threat=verdict.threat,
            rules=[
                RuleResultModel(
                    rule=r.rule.value,
                    fired=r.fired,
                    evidence=r.evidence,
                    landmarks_used=list(r.landmarks_used),
                )
                for r in verdict.rules
            ],
        )


class ClassifyRequest(BaseModel):
    scene: SceneModel
    config: Optional[ThreatConfigModel] = None


class ClassifyResponse(BaseModel):
    image_id: str
    verdicts: list[VerdictModel]


class RenderRequest(BaseModel):
    scene: SceneModel
    verdicts: Optional[list[VerdictModel]] = None
    config: Optional[ThreatConfigModel] = None


class EvaluateRequest(BaseModel):
    predictions: dict[str, list[BoxModel]]
    ground_truth: dict[str, list[BoxModel]]
    conf_min: float = 0.25


class ConvertViaRequest(BaseModel):
    project: dict
    image_sizes: dict[str, tuple[int, int]]
    label_key: str = "label"


class ConvertViaResponse(BaseModel):
    labels: dict[str, str]
    warnings: list[str]


class AugmentSpecModel(BaseModel):
    fliplr_prob: float = 0.5
    degrees_max: float = 10.0
    scale_range: tuple[float, float] = (0.9, 1.1)
    hue_delta_max: float = 0.015
    sat_factor_max: float = 0.7
    val_factor_max: float = 0.4
    seed: int = 0

    def to_core(self) -> augment.AugmentSpec:
        spec = augment.AugmentSpec(
            fliplr_prob=self.fliplr_prob,
            degrees_max=self.degrees_max,
            scale_range=self.scale_range,
            hue_delta_max=self.hue_delta_max,
            sat_factor_max=self.sat_factor_max,
            val_factor_max=self.val_factor_max,
            seed=self.seed,
        )
        spec.validate()
        return spec


class AugmentRequest(BaseModel):
    scenes: list[SceneModel]
    spec: AugmentSpecModel = AugmentSpecModel()


class AugmentResponse(BaseModel):
    scenes: list[SceneModel]
