"""gunfuse: fuse gun detections with human pose landmarks into rule-based
threat verdicts, plus the dataset tooling around it (annotation format
conversion, augmentation with exact coordinate remapping, COCO-style
evaluation, and SVG overlay rendering).
"""

__version__ = "0.1.0"

from .model import BBox, ClassMap, Landmark, Pose, Scene, validate_scene
from .threat import Rule, ThreatConfig, ThreatVerdict, classify_scene

__all__ = [
    "__version__",
    "BBox",
    "ClassMap",
    "Landmark",
    "Pose",
    "Rule",
    "Scene",
    "ThreatConfig",
    "ThreatVerdict",
    "classify_scene",
    "validate_scene",
]
