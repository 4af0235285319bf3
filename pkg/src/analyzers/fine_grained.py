from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence
import logging

import numpy as np

from src.models.errors import AllocationError, InputError
from src.models.segmentation import (
    AccMode, ConfusionCell, DatasetStats, InstanceStats, InstanceTnMode, Level,
    LevelResult, MetricConfig, MetricKind, MetricValue, NullMode, summary_key
)


logger = logging.getLogger(__name__)


@dataclass
class InstanceScore:
    cloud_id: str
    category: int
    instance_id: int
    value: float


@dataclass
class MetricDiagnostics:
    """Bookkeeping that explains NULLs and skipped contributions in a result"""
    null_categories: Dict[str, int] = field(default_factory=dict)
    null_clouds: List[str] = field(default_factory=list)
    unattributed_fp: int = 0
    unattributed_pairs: int = 0
    unassigned_instance_points: int = 0
    instance_count: int = 0
    skipped_clouds: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "null_categories": dict(self.null_categories),
            "null_clouds": list(self.null_clouds),
            "unattributed_fp": self.unattributed_fp,
            "unattributed_pairs": self.unattributed_pairs,
            "unassigned_instance_points": self.unassigned_instance_points,
            "instance_count": self.instance_count,
            "skipped_clouds": list(self.skipped_clouds),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "MetricDiagnostics":
        return cls(**data)


@dataclass
class MetricResults:
    levels: Dict[str, LevelResult]
    overall_accuracy: float
    diagnostics: MetricDiagnostics

    @property
    def summaries(self) -> Dict[str, MetricValue]:
        return {key: level.summary for key, level in self.levels.items()}


def _to_value(x: float) -> MetricValue:
    return None if np.isnan(x) else float(x)


def _to_values(xs: np.ndarray) -> List[MetricValue]:
    return [_to_value(x) for x in xs]


def null_mean(values: np.ndarray, axis: Optional[int] = None) -> np.ndarray:
    """Mean that skips NaN (NULL) entries; all-NULL slices stay NULL"""
    values = np.asarray(values, dtype=np.float64)
    present = ~np.isnan(values)
    counts = present.sum(axis=axis)
    totals = np.where(present, values, 0.0).sum(axis=axis)
    return np.where(counts > 0, totals / np.maximum(counts, 1), np.nan)


class FineGrainedMetricCalculator:
    """
    Computes dataset-level, cloud-first, category-first and instance-level
    IoU and Acc from accumulated confusion statistics
    """

    def __init__(self, config: MetricConfig = None):
        self.config = config or MetricConfig()

    def cell_metric(self, kind: MetricKind, cell: ConfusionCell) -> MetricValue:
        value = self._cell_values(kind, np.array([cell.as_tuple()], dtype=np.int64))[0]
        return _to_value(value)

    def _cell_values(self, kind: MetricKind, cells: np.ndarray) -> np.ndarray:
        """Vectorized cell metric over an array whose last axis is (tp, fp, fn, tn)"""
        cells = cells.astype(np.float64)
        tp, fp, fn, tn = cells[..., 0], cells[..., 1], cells[..., 2], cells[..., 3]

        if self.config.null_mode is NullMode.GT_ABSENT:
            absent = (tp + fn) == 0
        else:
            absent = (tp + fp + fn) == 0

        if kind is MetricKind.IOU:
            numerator, denominator = tp, tp + fp + fn
        elif self.config.acc_mode is AccMode.PAPER:
            numerator, denominator = tp + tn, tp + fp + fn + tn
        else:
            numerator, denominator = tp, tp + fn

        absent = absent | (denominator == 0)
        ratio = np.divide(numerator, denominator,
                          out=np.zeros_like(numerator), where=denominator > 0)
        return np.where(absent, np.nan, ratio)

    @staticmethod
    def _require_clouds(stats: DatasetStats) -> None:
        if stats.num_clouds == 0:
            raise InputError("Dataset has no point clouds to evaluate")

    def dataset_level(self, kind: MetricKind, stats: DatasetStats) -> LevelResult:
        self._require_clouds(stats)
        totals = stats.cell_array().sum(axis=0)
        per_category = self._cell_values(kind, totals)

        null_count = int(np.isnan(per_category).sum())
        if null_count:
            logger.warning(
                f"{summary_key(kind, Level.DATASET)}: {null_count} categories absent "
                f"from the whole dataset are skipped"
            )
        return LevelResult(
            summary=_to_value(null_mean(per_category)),
            per_category=_to_values(per_category),
        )

    def cloud_first(self, kind: MetricKind, stats: DatasetStats) -> LevelResult:
        self._require_clouds(stats)
        values = self._cell_values(kind, stats.cell_array())
        per_cloud = null_mean(values, axis=1)

        empty = int(np.isnan(per_cloud).sum())
        if empty:
            logger.warning(
                f"{summary_key(kind, Level.CLOUD_FIRST)}: {empty} clouds have no "
                f"non-NULL category and are skipped"
            )
        return LevelResult(
            summary=_to_value(null_mean(per_cloud)),
            per_cloud=_to_values(per_cloud),
        )

    def category_first(self, kind: MetricKind, stats: DatasetStats) -> LevelResult:
        self._require_clouds(stats)
        values = self._cell_values(kind, stats.cell_array())
        per_category = null_mean(values, axis=0)
        return LevelResult(
            summary=_to_value(null_mean(per_category)),
            per_category=_to_values(per_category),
        )

    def instance_scores(self, kind: MetricKind, stats: DatasetStats) -> List[InstanceScore]:
        scores = []
        for cloud in stats.clouds:
            for category, instances in enumerate(cloud.instances):
                if not instances:
                    continue
                values = self._instance_values(kind, cloud.cells[category], instances)
                scores.extend(
                    InstanceScore(cloud.cloud_id, category, inst.instance_id, float(v))
                    for inst, v in zip(instances, values)
                )
        return scores

    def _instance_values(self, kind: MetricKind, cell: ConfusionCell,
                         instances: Sequence[InstanceStats]) -> np.ndarray:
        tp = np.array([inst.tp for inst in instances], dtype=np.float64)
        fn = np.array([inst.fn for inst in instances], dtype=np.float64)
        fp_share = np.asarray(allocate_fp(instances, cell.fp))

        if kind is MetricKind.IOU:
            return tp / (tp + fn + fp_share)
        if self.config.acc_mode is AccMode.RECALL:
            return tp / (tp + fn)

        if self.config.instance_tn_mode is InstanceTnMode.ALLOCATED:
            tn = np.asarray(_allocate(instances, cell.tn))
        else:
            tn = np.full_like(tp, float(cell.tn))
        return (tp + tn) / (tp + fn + tn + fp_share)

    def instance_level(self, kind: MetricKind, stats: DatasetStats) -> LevelResult:
        self._require_clouds(stats)
        pooled: List[List[float]] = [[] for _ in range(stats.num_categories)]
        for score in self.instance_scores(kind, stats):
            pooled[score.category].append(score.value)

        if not any(pooled):
            logger.warning(
                f"{summary_key(kind, Level.INSTANCE)}: dataset carries no instance "
                f"annotations, instance-level values are NULL"
            )
        per_category = np.array(
            [np.mean(values) if values else np.nan for values in pooled],
            dtype=np.float64,
        )
        return LevelResult(
            summary=_to_value(null_mean(per_category)),
            per_category=_to_values(per_category),
        )

    def overall_accuracy(self, stats: DatasetStats) -> float:
        valid = stats.valid_points
        if valid == 0:
            raise InputError("Overall accuracy needs at least one valid point")
        correct = sum(cloud.correct_points for cloud in stats.clouds)
        return correct / valid

    def diagnose(self, stats: DatasetStats) -> MetricDiagnostics:
        diagnostics = MetricDiagnostics(skipped_clouds=list(stats.skipped_clouds))
        for cloud in stats.clouds:
            diagnostics.unassigned_instance_points += cloud.unassigned_instance_points
            for cell, instances in zip(cloud.cells, cloud.instances):
                diagnostics.instance_count += len(instances)
                if cell.fp > 0 and not instances:
                    diagnostics.unattributed_fp += cell.fp
                    diagnostics.unattributed_pairs += 1
        if diagnostics.unattributed_pairs and stats.has_instances():
            logger.info(
                f"{diagnostics.unattributed_fp} false positives in "
                f"{diagnostics.unattributed_pairs} (cloud, category) pairs without "
                f"instances are not attributed at instance level"
            )
        return diagnostics

    def compute_all(self, stats: DatasetStats) -> MetricResults:
        levels: Dict[str, LevelResult] = {}
        diagnostics = self.diagnose(stats)
        for kind in (MetricKind.IOU, MetricKind.ACC):
            levels[summary_key(kind, Level.DATASET)] = self.dataset_level(kind, stats)
            cloud_first = self.cloud_first(kind, stats)
            levels[summary_key(kind, Level.CLOUD_FIRST)] = cloud_first
            levels[summary_key(kind, Level.CATEGORY_FIRST)] = self.category_first(kind, stats)
            levels[summary_key(kind, Level.INSTANCE)] = self.instance_level(kind, stats)

            for cloud_id, value in zip(stats.cloud_ids, cloud_first.per_cloud):
                if value is None and cloud_id not in diagnostics.null_clouds:
                    diagnostics.null_clouds.append(cloud_id)

        diagnostics.null_categories = {
            key: result.null_categories() for key, result in levels.items()
            if result.per_category is not None
        }

        return MetricResults(
            levels=levels,
            overall_accuracy=self.overall_accuracy(stats),
            diagnostics=diagnostics,
        )


def _allocate(instances: Sequence[InstanceStats], amount: int) -> List[float]:
    sizes = np.array([inst.size for inst in instances], dtype=np.float64)
    return (sizes / sizes.sum() * amount).tolist()


def allocate_fp(instances: Sequence[InstanceStats], fp_pc: int) -> List[float]:
    """Split a cloud-level FP count over instances proportionally to their size"""
    if not instances:
        raise AllocationError("Cannot allocate false positives to an empty instance list")
    if fp_pc < 0:
        raise AllocationError(f"False positive count must be nonnegative, got {fp_pc}")
    return _allocate(instances, fp_pc)


def _calculator(stats: DatasetStats, config: Optional[MetricConfig]) -> FineGrainedMetricCalculator:
    return FineGrainedMetricCalculator(config or stats.config)


def cell_metric(kind: MetricKind, cell: ConfusionCell, config: MetricConfig = None) -> MetricValue:
    return FineGrainedMetricCalculator(config).cell_metric(kind, cell)


def metric_dataset_level(kind: MetricKind, stats: DatasetStats,
                         config: MetricConfig = None) -> LevelResult:
    return _calculator(stats, config).dataset_level(kind, stats)


def metric_cloud_first(kind: MetricKind, stats: DatasetStats,
                       config: MetricConfig = None) -> LevelResult:
    return _calculator(stats, config).cloud_first(kind, stats)


def metric_category_first(kind: MetricKind, stats: DatasetStats,
                          config: MetricConfig = None) -> LevelResult:
    return _calculator(stats, config).category_first(kind, stats)


def metric_instance_level(kind: MetricKind, stats: DatasetStats,
                          config: MetricConfig = None) -> LevelResult:
    return _calculator(stats, config).instance_level(kind, stats)


def instance_scores(kind: MetricKind, stats: DatasetStats,
                    config: MetricConfig = None) -> List[InstanceScore]:
    return _calculator(stats, config).instance_scores(kind, stats)


def overall_accuracy(stats: DatasetStats) -> float:
    return FineGrainedMetricCalculator(stats.config).overall_accuracy(stats)


def compute_all(stats: DatasetStats, config: MetricConfig = None) -> MetricResults:
    return _calculator(stats, config).compute_all(stats)
