from typing import Dict, Iterable, List, Optional, Sequence
import logging

import numpy as np

from src.models.errors import ConfigError, InputError, MergeError
from src.models.segmentation import (
    CloudStats, ConfusionCell, DatasetStats, InstanceStats,
    MetricConfig, NO_INSTANCE
)


logger = logging.getLogger(__name__)

# Instance keys pack (category, instance id, correct) into one int64
_INSTANCE_SHIFT = 33


class CloudAccumulator:
    """
    Accumulates the confusion cells and instance counts of one point cloud.
    Label arrays may be fed in any number of chunks.
    """

    def __init__(self, num_categories: int, config: MetricConfig = None,
                 cloud_id: Optional[str] = None):
        if num_categories < 1:
            raise InputError(f"At least one category is required, got {num_categories}")
        self.num_categories = num_categories
        self.config = config or MetricConfig()
        self.cloud_id = cloud_id
        # rows = ground truth, columns = prediction
        self._matrix = np.zeros((num_categories, num_categories), dtype=np.int64)
        self._instances: Dict[tuple, List[int]] = {}
        self._unassigned = 0
        self._offset = 0

    @property
    def points_seen(self) -> int:
        return self._offset

    def update(self, gt: Sequence[int], pred: Sequence[int],
               inst: Optional[Sequence[int]] = None) -> None:
        gt = np.asarray(gt, dtype=np.int64).ravel()
        pred = np.asarray(pred, dtype=np.int64).ravel()
        if gt.shape != pred.shape:
            raise InputError(
                f"Ground truth has {gt.size} points but prediction has {pred.size}",
                cloud_id=self.cloud_id,
            )
        if inst is not None:
            inst = np.asarray(inst, dtype=np.int64).ravel()
            if inst.shape != gt.shape:
                raise InputError(
                    f"Ground truth has {gt.size} points but instances have {inst.size}",
                    cloud_id=self.cloud_id,
                )

        n = self.num_categories
        ignore_id = self.config.ignore_id
        valid = gt != ignore_id

        bad_gt = valid & ((gt < 0) | (gt >= n))
        if bad_gt.any():
            idx = int(np.argmax(bad_gt))
            raise InputError(
                f"Ground-truth label {gt[idx]} at index {self._offset + idx} is not below {n}",
                index=self._offset + idx, cloud_id=self.cloud_id,
            )

        bad_pred = valid & ((pred < 0) | (pred >= n) | (pred == ignore_id))
        if bad_pred.any():
            idx = int(np.argmax(bad_pred))
            raise InputError(
                f"Predicted label {pred[idx]} at index {self._offset + idx} "
                f"is not a category below {n}",
                index=self._offset + idx, cloud_id=self.cloud_id,
            )

        g = gt[valid]
        p = pred[valid]
        self._matrix += np.bincount(n * g + p, minlength=n * n).reshape(n, n)

        if inst is not None:
            self._count_instances(valid, g, p, inst)

        self._offset += gt.size

    def _count_instances(self, valid: np.ndarray, g: np.ndarray, p: np.ndarray,
                         inst: np.ndarray) -> None:
        stray = ~valid & (inst != NO_INSTANCE)
        if stray.any():
            idx = int(np.argmax(stray))
            raise InputError(
                f"Instance id {inst[idx]} on ignored point at index {self._offset + idx}",
                index=self._offset + idx, cloud_id=self.cloud_id,
            )

        iv = inst[valid]
        assigned = iv != NO_INSTANCE
        self._unassigned += int(assigned.size - np.count_nonzero(assigned))
        if not assigned.any():
            return

        correct = (p[assigned] == g[assigned]).astype(np.int64)
        keys = (g[assigned] << _INSTANCE_SHIFT) | (iv[assigned] << 1) | correct
        unique_keys, counts = np.unique(keys, return_counts=True)
        for key, count in zip(unique_keys.tolist(), counts.tolist()):
            category = key >> _INSTANCE_SHIFT
            instance_id = (key >> 1) & NO_INSTANCE
            entry = self._instances.setdefault((category, instance_id), [0, 0])
            # [tp, fn]
            entry[0 if key & 1 else 1] += count

    def finalize(self, cloud_id: Optional[str] = None) -> CloudStats:
        cloud_id = cloud_id or self.cloud_id or "cloud"
        m = self._matrix
        tp = np.diag(m)
        fn = m.sum(axis=1) - tp
        fp = m.sum(axis=0) - tp
        valid_points = int(m.sum())
        tn = valid_points - tp - fp - fn

        cells = [
            ConfusionCell(int(tp[c]), int(fp[c]), int(fn[c]), int(tn[c]))
            for c in range(self.num_categories)
        ]

        instances: List[List[InstanceStats]] = [[] for _ in range(self.num_categories)]
        for (category, instance_id), (i_tp, i_fn) in sorted(self._instances.items()):
            instances[category].append(InstanceStats(instance_id, i_tp, i_fn))

        if self._unassigned and self._instances:
            logger.warning(
                f"Cloud {cloud_id}: {self._unassigned} labeled points carry no instance id "
                f"and are left out of instance-level metrics"
            )

        return CloudStats(
            cloud_id=cloud_id,
            valid_points=valid_points,
            cells=cells,
            instances=instances,
            unassigned_instance_points=self._unassigned,
        )


def count_confusion(gt: Sequence[int], pred: Sequence[int], config: MetricConfig,
                    num_categories: int, cloud_id: Optional[str] = None) -> List[ConfusionCell]:
    """Per-category TP/FP/FN/TN of one cloud; ignored points count nowhere"""
    accumulator = CloudAccumulator(num_categories, config, cloud_id)
    accumulator.update(gt, pred)
    return accumulator.finalize().cells


def count_instances(gt: Sequence[int], pred: Sequence[int], inst: Sequence[int],
                    config: MetricConfig, num_categories: int,
                    cloud_id: Optional[str] = None) -> List[List[InstanceStats]]:
    """Per-category instance lists, each ascending by instance id"""
    accumulator = CloudAccumulator(num_categories, config, cloud_id)
    accumulator.update(gt, pred, inst)
    return accumulator.finalize().instances


def accumulate_cloud(cloud_id: str, gt: Sequence[int], pred: Sequence[int],
                     inst: Optional[Sequence[int]], num_categories: int,
                     config: MetricConfig = None) -> CloudStats:
    accumulator = CloudAccumulator(num_categories, config, cloud_id)
    accumulator.update(gt, pred, inst)
    return accumulator.finalize()


def merge(a: DatasetStats, b: DatasetStats) -> DatasetStats:
    """Union of two datasets with disjoint cloud ids, clouds ordered by id"""
    if a.num_categories != b.num_categories:
        raise ConfigError(
            f"Cannot merge stats with {a.num_categories} and {b.num_categories} categories"
        )
    if a.config.fingerprint() != b.config.fingerprint():
        raise ConfigError(
            f"Cannot merge stats built with different configs "
            f"({a.config.fingerprint()} vs {b.config.fingerprint()})"
        )
    duplicates = sorted(set(a.cloud_ids) & set(b.cloud_ids))
    if duplicates:
        raise MergeError(f"Duplicate cloud ids: {', '.join(duplicates)}")

    return DatasetStats(
        num_categories=a.num_categories,
        config=a.config,
        clouds=list(a.clouds) + list(b.clouds),
        skipped_clouds=a.skipped_clouds + b.skipped_clouds,
    )


def merge_all(parts: Iterable[DatasetStats], num_categories: int,
              config: MetricConfig = None) -> DatasetStats:
    merged = DatasetStats.empty(num_categories, config)
    for part in parts:
        merged = merge(merged, part)
    return merged


def stats_from_clouds(clouds: Iterable[CloudStats], num_categories: int,
                      config: MetricConfig = None) -> DatasetStats:
    parts = (
        DatasetStats(num_categories, config or MetricConfig(), [cloud])
        for cloud in clouds
    )
    return merge_all(parts, num_categories, config)
