"""Rule-based threat classification over gun detections and pose skeletons.

Four rule families are implemented: hand-to-gun proximity against a
size-scaled threshold, hand/gun box overlap, forearm aim direction, and
gun position inside body zones (torso quadrilateral, head disc). Proximity
and overlap are enabled by default; aim and zone ship implemented but
disabled because no tolerances are established for them.

Every verdict carries a per-rule evidence trace so decisions are auditable.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .errors import ConfigError, DegenerateGeometryError
from .geometry import (
    Point,
    Vector,
    angle_deg,
    center,
    dynamic_threshold,
    euclidean,
    point_in_box,
    point_in_polygon,
)
from .ingest import parse_keyvalue
from .model import (
    BBox,
    HAND_LANDMARKS,
    LEFT_ELBOW,
    LEFT_HIP,
    LEFT_SHOULDER,
    LEFT_WRIST,
    NOSE,
    Pose,
    RIGHT_ELBOW,
    RIGHT_HIP,
    RIGHT_SHOULDER,
    RIGHT_WRIST,
    Scene,
)


class Rule(str, Enum):
    PROXIMITY = "proximity"
    OVERLAP = "overlap"
    AIM = "aim"
    ZONE = "zone"


# Canonical evaluation order.
ALL_RULES = (Rule.PROXIMITY, Rule.OVERLAP, Rule.AIM, Rule.ZONE)


@dataclass(frozen=True)
class ThreatConfig:
    """Tunable thresholds for the rules engine.

    alpha scales the proximity cutoff to the gun's box width (0.5 means
    half the width). gun_conf_min is the detection floor; it defaults low
    so partially occluded guns still reach the rules.
    """

    alpha: float = 0.5
    gun_conf_min: float = 0.25
    visibility_min: float = 0.5
    aim_angle_max_deg: float = 30.0
    head_radius_factor: float = 0.6
    combinator: str = "any"
    enabled_rules: tuple[Rule, ...] = (Rule.PROXIMITY, Rule.OVERLAP)

    def __post_init__(self) -> None:
        object.__setattr__(self, "enabled_rules", tuple(self.enabled_rules))

    def validate(self) -> None:
        if self.alpha <= 0.0:
            raise ConfigError(f"alpha must be > 0 (got {self.alpha})")
        if not 0.0 <= self.gun_conf_min <= 1.0:
            raise ConfigError(f"gun_conf_min must be in [0, 1] (got {self.gun_conf_min})")
        if not 0.0 <= self.visibility_min <= 1.0:
            raise ConfigError(
                f"visibility_min must be in [0, 1] (got {self.visibility_min})"
            )
        if not 0.0 <= self.aim_angle_max_deg <= 180.0:
            raise ConfigError(
                f"aim_angle_max_deg must be in [0, 180] (got {self.aim_angle_max_deg})"
            )
        if self.head_radius_factor <= 0.0:
            raise ConfigError(
                f"head_radius_factor must be > 0 (got {self.head_radius_factor})"
            )
        if self.combinator not in ("any", "all"):
            raise ConfigError(f"combinator must be 'any' or 'all' (got {self.combinator!r})")
        if not self.enabled_rules:
            raise ConfigError("enabled_rules must not be empty")
        if len(set(self.enabled_rules)) != len(self.enabled_rules):
            raise ConfigError(f"enabled_rules has duplicates: {self.enabled_rules}")


@dataclass(frozen=True)
class RuleResult:
    rule: Rule
    fired: bool
    evidence: dict[str, float] = field(default_factory=dict)
    landmarks_used: tuple[int, ...] = ()


@dataclass(frozen=True)
class ThreatVerdict:
    gun_index: int
    person_index: Optional[int]
    threat: bool
    rules: tuple[RuleResult, ...]


def hand_points(pose: Pose, cfg: ThreatConfig) -> list[tuple[int, Point]]:
    """Hand landmarks (wrists, pinkies, indexes, thumbs) passing the
    visibility floor, sorted by index."""
    return [
        (lm.index, Point(lm.x, lm.y))
        for lm in sorted(pose.landmarks, key=lambda lm: lm.index)
        if lm.index in HAND_LANDMARKS and lm.visibility >= cfg.visibility_min
    ]


def _visible(pose: Pose, index: int, cfg: ThreatConfig) -> Optional[Point]:
    lm = pose.landmark(index)
    if lm is None or lm.visibility < cfg.visibility_min:
        return None
    return Point(lm.x, lm.y)


def associate(scene: Scene, cfg: ThreatConfig) -> list[tuple[int, Optional[int]]]:
    """Pair each sufficiently confident gun with the pose whose nearest
    visible hand point is closest to the gun center.

    Ties break to the lowest pose index; a gun pairs with None when no
    pose has any visible hand point.
    """
    pairs: list[tuple[int, Optional[int]]] = []
    pose_hands = [hand_points(pose, cfg) for pose in scene.poses]
    for gun_index, gun in enumerate(scene.guns):
        if gun.confidence < cfg.gun_conf_min:
            continue
        gun_center = center(gun)
        best: Optional[int] = None
        best_dist = float("inf")
        for pose_index, hands in enumerate(pose_hands):
            if not hands:
                continue
            dist = min(euclidean(pt, gun_center) for _, pt in hands)
            if dist < best_dist:
                best, best_dist = pose_index, dist
        pairs.append((gun_index, best))
    return pairs


def rule_proximity(gun: BBox, pose: Pose, cfg: ThreatConfig) -> RuleResult:
    """Fire when the nearest visible hand point is closer to the gun
    center than alpha times the gun width."""
    threshold = dynamic_threshold(gun, cfg.alpha)
    hands = hand_points(pose, cfg)
    if not hands:
        return RuleResult(Rule.PROXIMITY, False, {"threshold": threshold})
    gun_center = center(gun)
    best_index, best_dist = hands[0][0], euclidean(hands[0][1], gun_center)
    for index, pt in hands[1:]:
        dist = euclidean(pt, gun_center)
        if dist < best_dist:
            best_index, best_dist = index, dist
    return RuleResult(
        Rule.PROXIMITY,
        best_dist < threshold,
        {"distance": best_dist, "threshold": threshold},
        (best_index,),
    )


def rule_overlap(gun: BBox, pose: Pose, cfg: ThreatConfig) -> RuleResult:
    """Fire when any visible hand point lies inside the gun box
    (boundary inclusive)."""
    inside = tuple(
        index for index, pt in hand_points(pose, cfg) if point_in_box(pt, gun)
    )
    return RuleResult(
        Rule.OVERLAP,
        bool(inside),
        {"hands_inside": float(len(inside))},
        inside,
    )


_AIM_SIDES = (("left", LEFT_ELBOW, LEFT_WRIST), ("right", RIGHT_ELBOW, RIGHT_WRIST))


def rule_aim(gun: BBox, pose: Pose, cfg: ThreatConfig) -> RuleResult:
    """Fire when a forearm (elbow to wrist) points at the gun center
    within the angle tolerance. Sides lacking either joint are skipped;
    collapsed forearms are recorded and skipped."""
    gun_center = center(gun)
    evidence: dict[str, float] = {}
    best_angle = float("inf")
    best_side: Optional[tuple[int, int]] = None
    for side, elbow_idx, wrist_idx in _AIM_SIDES:
        elbow = _visible(pose, elbow_idx, cfg)
        wrist = _visible(pose, wrist_idx, cfg)
        if elbow is None or wrist is None:
            continue
        forearm = Vector(wrist.x - elbow.x, wrist.y - elbow.y)
        target = Vector(gun_center.x - elbow.x, gun_center.y - elbow.y)
        try:
            angle = angle_deg(forearm, target)
        except DegenerateGeometryError:
            evidence[f"{side}_degenerate"] = 1.0
            continue
        evidence[f"angle_{side}_deg"] = angle
        if angle < best_angle:
            best_angle = angle
            best_side = (elbow_idx, wrist_idx)
    if best_side is None:
        return RuleResult(Rule.AIM, False, evidence)
    evidence["angle_deg"] = best_angle
    return RuleResult(
        Rule.AIM, best_angle <= cfg.aim_angle_max_deg, evidence, best_side
    )


def rule_zone(gun: BBox, pose: Pose, cfg: ThreatConfig) -> RuleResult:
    """Fire when the gun center lies inside the torso quadrilateral or the
    head disc. Zones missing their defining landmarks are skipped."""
    gun_center = center(gun)
    evidence: dict[str, float] = {}
    used: list[int] = []
    fired = False

    torso_points = [
        _visible(pose, idx, cfg)
        for idx in (LEFT_SHOULDER, RIGHT_SHOULDER, RIGHT_HIP, LEFT_HIP)
    ]
    if all(p is not None for p in torso_points):
        try:
            in_torso = point_in_polygon(gun_center, torso_points)  # type: ignore[arg-type]
        except DegenerateGeometryError:
            in_torso = None
        if in_torso is not None:
            evidence["torso"] = float(in_torso)
            used += [LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP]
            fired = fired or in_torso

    nose = _visible(pose, NOSE, cfg)
    left_sh = _visible(pose, LEFT_SHOULDER, cfg)
    right_sh = _visible(pose, RIGHT_SHOULDER, cfg)
    if nose is not None and left_sh is not None and right_sh is not None:
        mid = Point((left_sh.x + right_sh.x) / 2, (left_sh.y + right_sh.y) / 2)
        radius = cfg.head_radius_factor * euclidean(nose, mid)
        in_head = euclidean(gun_center, nose) <= radius
        evidence["head"] = float(in_head)
        evidence["head_radius"] = radius
        used += [NOSE, LEFT_SHOULDER, RIGHT_SHOULDER]
        fired = fired or in_head

    return RuleResult(Rule.ZONE, fired, evidence, tuple(sorted(set(used))))


_RULE_FUNCTIONS = {
    Rule.PROXIMITY: rule_proximity,
    Rule.OVERLAP: rule_overlap,
    Rule.AIM: rule_aim,
    Rule.ZONE: rule_zone,
}

_EMPTY_POSE = Pose()


def classify_scene(scene: Scene, cfg: ThreatConfig = ThreatConfig()) -> list[ThreatVerdict]:
    """Evaluate the enabled rules for every gun above the confidence floor.

    Guns with no associated pose get every rule not-fired. The verdict's
    threat flag folds the fired flags with the configured combinator.
    """
    cfg.validate()
    fold = any if cfg.combinator == "any" else all
    enabled = [r for r in ALL_RULES if r in cfg.enabled_rules]
    verdicts: list[ThreatVerdict] = []
    for gun_index, pose_index in associate(scene, cfg):
        gun = scene.guns[gun_index]
        pose = scene.poses[pose_index] if pose_index is not None else _EMPTY_POSE
        results = tuple(_RULE_FUNCTIONS[rule](gun, pose, cfg) for rule in enabled)
        verdicts.append(
            ThreatVerdict(
                gun_index=gun_index,
                person_index=pose_index,
                threat=fold(r.fired for r in results),
                rules=results,
            )
        )
    return verdicts


# ---------------------------------------------------------------------------
# Serialization


def verdict_to_dict(image_id: str, verdict: ThreatVerdict) -> dict:
    return {
        "image_id": image_id,
        "gun_index": verdict.gun_index,
        "person_index": verdict.person_index,
        "threat": verdict.threat,
        "rules": [
            {
                "rule": r.rule.value,
                "fired": r.fired,
                "evidence": r.evidence,
                "landmarks_used": list(r.landmarks_used),
            }
            for r in verdict.rules
        ],
    }


def write_verdict_lines(image_id: str, verdicts: Iterable[ThreatVerdict]) -> str:
    """One compact JSON object per gun, newline terminated."""
    return "".join(
        json.dumps(verdict_to_dict(image_id, v), separators=(",", ":")) + "\n"
        for v in verdicts
    )


def verdict_from_dict(obj: dict) -> tuple[str, ThreatVerdict]:
    """Inverse of verdict_to_dict; returns (image_id, verdict)."""
    rules = tuple(
        RuleResult(
            rule=Rule(r["rule"]),
            fired=bool(r["fired"]),
            evidence={k: float(v) for k, v in (r.get("evidence") or {}).items()},
            landmarks_used=tuple(int(i) for i in r.get("landmarks_used") or ()),
        )
        for r in obj.get("rules") or ()
    )
    verdict = ThreatVerdict(
        gun_index=int(obj["gun_index"]),
        person_index=None if obj.get("person_index") is None else int(obj["person_index"]),
        threat=bool(obj["threat"]),
        rules=rules,
    )
    return str(obj.get("image_id", "")), verdict


def read_verdict_lines(text: str) -> dict[str, list[ThreatVerdict]]:
    """Parse JSON-lines verdicts, grouped by image id."""
    by_image: dict[str, list[ThreatVerdict]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        image_id, verdict = verdict_from_dict(json.loads(line))
        by_image.setdefault(image_id, []).append(verdict)
    return by_image


# ---------------------------------------------------------------------------
# Config documents


def threat_config_from_mapping(mapping: dict[str, str]) -> ThreatConfig:
    """Build a ThreatConfig from string key-values; unknown keys are errors."""
    kwargs: dict = {}
    valid = {f.name for f in dataclasses.fields(ThreatConfig)}
    for key, value in mapping.items():
        if key not in valid:
            raise ConfigError(f"unknown config key {key!r}")
        if key == "combinator":
            kwargs[key] = value.lower()
        elif key == "enabled_rules":
            names = [v.strip() for v in value.split(",") if v.strip()]
            try:
                kwargs[key] = tuple(Rule(name) for name in names)
            except ValueError:
                raise ConfigError(f"unknown rule name in enabled_rules: {value!r}") from None
        else:
            try:
                kwargs[key] = float(value)
            except ValueError:
                raise ConfigError(f"config key {key!r} must be numeric (got {value!r})") from None
    cfg = ThreatConfig(**kwargs)
    cfg.validate()
    return cfg


def parse_threat_config(text: str) -> ThreatConfig:
    """Parse the plain-text key-value threat config document."""
    return threat_config_from_mapping(parse_keyvalue(text))
