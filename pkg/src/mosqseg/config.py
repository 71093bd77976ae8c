"""Run configuration and the recorded training hyperparameters.

Nothing here trains a network.  :data:`TRAINING` records the optimizer
settings the segmentation model was trained with so they stay auditable
next to the evaluation tooling.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

from mosqseg.anchors import DEFAULT_NEG_THR, DEFAULT_NMS_THR, DEFAULT_POS_THR, AnchorConfig
from mosqseg.dataset.transforms import DEFAULT_COPIES, DEFAULT_FLIP_PROB, DEFAULT_SIGMA_RANGE, TARGET_DIMS
from mosqseg.dataset.via import DEFAULT_CLASS_KEY
from mosqseg.losses import DEFAULT_GAMMA
from mosqseg.metrics import DEFAULT_THRESHOLDS, IOU_KINDS

OUTPUT_FORMATS = ("json", "csv", "md")


@dataclass(frozen=True)
class LearningRateStage:
    first_epoch: int
    last_epoch: int
    rate: float


@dataclass(frozen=True)
class TrainingHyperparameters:
    layers: int = 394
    optimizer: str = "SGD"
    momentum: float = 0.9
    weight_decay: float = 0.001
    epochs: int = 500
    schedule: tuple[LearningRateStage, ...] = (
        LearningRateStage(1, 100, 1e-3),
        LearningRateStage(101, 200, 5e-4),
        LearningRateStage(201, 400, 1e-5),
        LearningRateStage(401, 500, 1e-6),
    )
    focal_gamma: float = DEFAULT_GAMMA
    image_size: int = TARGET_DIMS.width

    def learning_rate(self, epoch: int) -> float:
        for stage in self.schedule:
            if stage.first_epoch <= epoch <= stage.last_epoch:
                return stage.rate
        raise ValueError(f"epoch {epoch} outside 1..{self.epochs}")

    def to_dict(self) -> dict:
        return asdict(self)


TRAINING = TrainingHyperparameters()


@dataclass(frozen=True)
class RunConfig:
    gt_path: Optional[str] = None
    pred_path: Optional[str] = None
    out_path: Optional[str] = None
    class_key: str = DEFAULT_CLASS_KEY
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    iou_kind: str = "box"
    output_format: str = "json"
    gamma: float = DEFAULT_GAMMA
    seed: int = 0
    flip_prob: float = DEFAULT_FLIP_PROB
    sigma_range: tuple[float, float] = DEFAULT_SIGMA_RANGE
    copies: int = DEFAULT_COPIES
    anchors: AnchorConfig = field(default_factory=AnchorConfig)
    pos_thr: float = DEFAULT_POS_THR
    neg_thr: float = DEFAULT_NEG_THR
    nms_thr: float = DEFAULT_NMS_THR

    def __post_init__(self):
        if not self.thresholds or any(not 0.0 < t <= 1.0 for t in self.thresholds):
            raise ValueError(f"IoU thresholds must be in (0, 1], got {self.thresholds}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.iou_kind not in IOU_KINDS:
            raise ValueError(f"iou kind must be one of {IOU_KINDS}")
        if self.output_format not in OUTPUT_FORMATS:
            raise ValueError(f"format must be one of {OUTPUT_FORMATS}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip probability must be in [0, 1], got {self.flip_prob}")
        lo, hi = self.sigma_range
        if lo < 0 or hi < lo:
            raise ValueError(f"bad blur sigma range {self.sigma_range}")
        if self.copies < 0:
            raise ValueError("copies must be >= 0")
        if not 0.0 <= self.neg_thr <= self.pos_thr <= 1.0:
            raise ValueError("need 0 <= neg_thr <= pos_thr <= 1")
        for p in (self.gt_path, self.pred_path, self.out_path):
            if p is not None and not p:
                raise ValueError("paths must be non-empty")
