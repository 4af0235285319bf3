from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union
import hashlib
import json

import numpy as np
import yaml

from src.models.errors import ConfigError, InputError


DEFAULT_CONFIG_PATH = Path(__file__).resolve().parents[2] / "config" / "metric_defaults.yaml"

# Sentinel instance id marking "no instance"
NO_INSTANCE = 0xFFFFFFFF

# A metric value is a real in [0, 1] or NULL (None) for an absent category
MetricValue = Optional[float]

IOU_LEVELS = ("mIoU^D", "mIoU^P", "mIoU^C", "mIoU^I")
ACC_LEVELS = ("mAcc^D", "mAcc^P", "mAcc^C", "mAcc^I")
SUMMARY_KEYS = IOU_LEVELS + ACC_LEVELS


class NullMode(Enum):
    GT_ABSENT = "gt-absent"
    UNION_ABSENT = "union-absent"


class AccMode(Enum):
    PAPER = "paper"
    RECALL = "recall"


class InstanceTnMode(Enum):
    CLOUD_LEVEL = "cloud-level"
    ALLOCATED = "allocated"


class MetricKind(Enum):
    IOU = "IoU"
    ACC = "Acc"

    @property
    def prefix(self) -> str:
        return f"m{self.value}"


class Level(Enum):
    DATASET = "D"
    CLOUD_FIRST = "P"
    CATEGORY_FIRST = "C"
    INSTANCE = "I"


def summary_key(kind: MetricKind, level: Level) -> str:
    return f"{kind.prefix}^{level.value}"


@dataclass(frozen=True)
class MetricConfig:
    """Evaluation settings; every choice is echoed into reports"""
    ignore_id: int = 255
    null_mode: NullMode = NullMode.GT_ABSENT
    acc_mode: AccMode = AccMode.PAPER
    instance_tn_mode: InstanceTnMode = InstanceTnMode.CLOUD_LEVEL

    def __post_init__(self):
        if self.ignore_id < 0:
            raise ConfigError(f"ignore_id must be nonnegative, got {self.ignore_id}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "MetricConfig":
        unknown = set(values) - {"ignore_id", "null_mode", "acc_mode", "instance_tn_mode"}
        if unknown:
            raise ConfigError(f"Unknown metric settings: {', '.join(sorted(unknown))}")
        try:
            return cls(
                ignore_id=int(values.get("ignore_id", cls.ignore_id)),
                null_mode=NullMode(values.get("null_mode", cls.null_mode.value)),
                acc_mode=AccMode(values.get("acc_mode", cls.acc_mode.value)),
                instance_tn_mode=InstanceTnMode(
                    values.get("instance_tn_mode", cls.instance_tn_mode.value)
                ),
            )
        except ValueError as e:
            raise ConfigError(f"Invalid metric setting: {e}") from e

    @classmethod
    def from_yaml(cls, path: Union[str, Path] = DEFAULT_CONFIG_PATH) -> "MetricConfig":
        return cls.from_mapping(load_settings(path).get("metrics", {}))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ignore_id": self.ignore_id,
            "null_mode": self.null_mode.value,
            "acc_mode": self.acc_mode.value,
            "instance_tn_mode": self.instance_tn_mode.value,
        }

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def load_settings(path: Union[str, Path] = DEFAULT_CONFIG_PATH) -> Dict[str, Any]:
    """Load the YAML settings file (metrics, ingest and presentation sections)"""
    try:
        with open(path, "r") as f:
            return yaml.safe_load(f) or {}
    except OSError as e:
        raise ConfigError(f"Cannot read settings: {e}", path=str(path)) from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed settings: {e}", path=str(path)) from e


@dataclass(frozen=True)
class ConfusionCell:
    """Binary confusion counts of one (cloud, category) pair, in points"""
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise InputError(f"Negative confusion count in {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_tuple(self) -> tuple:
        return (self.tp, self.fp, self.fn, self.tn)


@dataclass(frozen=True)
class InstanceStats:
    instance_id: int
    tp: int
    fn: int

    def __post_init__(self):
        if self.tp < 0 or self.fn < 0 or self.tp + self.fn < 1:
            raise InputError(f"Instance {self.instance_id} has no ground-truth points")

    @property
    def size(self) -> int:
        return self.tp + self.fn


@dataclass
class CloudStats:
    cloud_id: str
    valid_points: int
    cells: List[ConfusionCell]
    instances: List[List[InstanceStats]]
    # Valid ground-truth points carrying no instance id
    unassigned_instance_points: int = 0

    def __post_init__(self):
        if not self.cloud_id:
            raise InputError("Cloud id must be nonempty")
        if len(self.instances) != len(self.cells):
            raise InputError("One instance list per category is required", cloud_id=self.cloud_id)

    @property
    def num_categories(self) -> int:
        return len(self.cells)

    @property
    def correct_points(self) -> int:
        return sum(cell.tp for cell in self.cells)


@dataclass
class DatasetStats:
    """All confusion cells and instance statistics of one evaluated dataset.

    Clouds are kept sorted by cloud id so that any merge order yields the
    same value.
    """
    num_categories: int
    config: MetricConfig = field(default_factory=MetricConfig)
    clouds: List[CloudStats] = field(default_factory=list)
    # Clouds dropped during ingestion for having no valid points
    skipped_clouds: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.num_categories < 1:
            raise InputError(f"At least one category is required, got {self.num_categories}")
        seen = set()
        for cloud in self.clouds:
            if cloud.cloud_id in seen:
                raise InputError(f"Duplicate cloud id '{cloud.cloud_id}'")
            seen.add(cloud.cloud_id)
            if cloud.num_categories != self.num_categories:
                raise InputError(
                    f"Expected {self.num_categories} cells, found {cloud.num_categories}",
                    cloud_id=cloud.cloud_id,
                )
        self.clouds.sort(key=lambda c: c.cloud_id)
        self.skipped_clouds = sorted(set(self.skipped_clouds))

    @classmethod
    def empty(cls, num_categories: int, config: Optional[MetricConfig] = None) -> "DatasetStats":
        return cls(num_categories=num_categories, config=config or MetricConfig())

    @property
    def num_clouds(self) -> int:
        return len(self.clouds)

    @property
    def cloud_ids(self) -> List[str]:
        return [cloud.cloud_id for cloud in self.clouds]

    @property
    def valid_points(self) -> int:
        return sum(cloud.valid_points for cloud in self.clouds)

    def cell_array(self) -> np.ndarray:
        """Counts as an int64 array of shape (P, C, 4), last axis (tp, fp, fn, tn)"""
        cells = np.zeros((self.num_clouds, self.num_categories, 4), dtype=np.int64)
        for p, cloud in enumerate(self.clouds):
            cells[p] = [cell.as_tuple() for cell in cloud.cells]
        return cells

    def confusion_totals(self) -> List[ConfusionCell]:
        summed = self.cell_array().sum(axis=0)
        return [ConfusionCell(*(int(v) for v in row)) for row in summed]

    def has_instances(self) -> bool:
        return any(inst for cloud in self.clouds for inst in cloud.instances)


@dataclass
class LevelResult:
    """Per-category / per-cloud constituents and the m-prefixed summary of one level"""
    summary: MetricValue
    per_category: Optional[List[MetricValue]] = None
    per_cloud: Optional[List[MetricValue]] = None

    def null_categories(self) -> int:
        if self.per_category is None:
            return 0
        return sum(1 for v in self.per_category if v is None)
