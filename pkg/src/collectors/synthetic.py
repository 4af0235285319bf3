"""
Synthetic labeled point clouds with controllable category-frequency and
instance-size imbalance. Only label streams are produced; there is no
geometry.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Optional, Sequence, Union
import logging

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from src.collectors.label_io import LabelFormat, write_instances, write_labels
from src.collectors.manifest import MANIFEST_SUFFIX, CloudEntry, Manifest, write_manifest
from src.core.accumulator import accumulate_cloud, stats_from_clouds
from src.models.errors import SpecError
from src.models.segmentation import DatasetStats, MetricConfig


logger = logging.getLogger(__name__)


class SizeLaw(BaseModel):
    """Instance sizes follow min + (max - min) * u**skew with u uniform in [0, 1)"""
    min: int = Field(20, ge=1)
    max: int = Field(2000, ge=1)
    skew: float = Field(2.0, gt=0)

    @model_validator(mode="after")
    def _check_bounds(self) -> "SizeLaw":
        if self.min > self.max:
            raise ValueError(f"size min {self.min} exceeds max {self.max}")
        return self


class InstanceCountRange(BaseModel):
    min: int = Field(1, ge=1)
    max: int = Field(3, ge=1)

    @model_validator(mode="after")
    def _check_bounds(self) -> "InstanceCountRange":
        if self.min > self.max:
            raise ValueError(f"instance count min {self.min} exceeds max {self.max}")
        return self


class ErrorModel(BaseModel):
    miss_rate: List[float]
    confusion_target: List[int]
    # Spare the largest instance of every (cloud, category) from corruption
    size_targeted: bool = False

    @model_validator(mode="after")
    def _check_rates(self) -> "ErrorModel":
        if len(self.miss_rate) != len(self.confusion_target):
            raise ValueError("miss_rate and confusion_target need one entry per category")
        if any(not 0.0 <= r <= 1.0 for r in self.miss_rate):
            raise ValueError("miss rates must lie in [0, 1]")
        if any(t < 0 for t in self.confusion_target):
            raise ValueError("confusion targets must be nonnegative")
        return self

    @classmethod
    def uniform(cls, num_categories: int, miss_rate: float = 0.0,
                target: Optional[int] = None, size_targeted: bool = False) -> "ErrorModel":
        """Same miss rate everywhere; errors go to target or to the next category"""
        targets = [
            target if target is not None else (c + 1) % num_categories
            for c in range(num_categories)
        ]
        return cls(miss_rate=[miss_rate] * num_categories, confusion_target=targets,
                   size_targeted=size_targeted)


class SynthSpec(BaseModel):
    seed: int = Field(0, ge=0)
    num_clouds: int = Field(10, ge=0)
    num_categories: int = Field(4, ge=0)
    # Probability that a category appears in a cloud; all ones when omitted
    category_frequency: Optional[List[float]] = None
    instances_per_category: InstanceCountRange = Field(default_factory=InstanceCountRange)
    instance_size_law: SizeLaw = Field(default_factory=SizeLaw)
    error_model: Optional[ErrorModel] = None

    @model_validator(mode="after")
    def _check_lengths(self) -> "SynthSpec":
        if self.category_frequency is not None:
            if len(self.category_frequency) != self.num_categories:
                raise ValueError("category_frequency needs one entry per category")
            if any(not 0.0 <= f <= 1.0 for f in self.category_frequency):
                raise ValueError("category frequencies must lie in [0, 1]")
        if self.error_model is not None and len(self.error_model.miss_rate) != self.num_categories:
            raise ValueError("error_model needs one entry per category")
        return self

    @classmethod
    def create(cls, **fields: Any) -> "SynthSpec":
        try:
            return cls(**fields)
        except ValidationError as e:
            raise SpecError(str(e)) from e

    def frequencies(self) -> List[float]:
        return self.category_frequency or [1.0] * self.num_categories


@dataclass
class SynthCloud:
    cloud_id: str
    labels: np.ndarray
    instances: np.ndarray

    @property
    def num_points(self) -> int:
        return int(self.labels.size)


@dataclass
class SynthDataset:
    num_categories: int
    clouds: List[SynthCloud]

    @property
    def num_points(self) -> int:
        return sum(cloud.num_points for cloud in self.clouds)


# Corruption stream; flips never reuse generation draws
CORRUPTION_STREAM = 1


def _cloud_rng(seed: int, index: int, stream: Optional[int] = None) -> np.random.Generator:
    if stream is None:
        return np.random.Generator(np.random.PCG64(seed ^ index))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed ^ index, stream])))


def _cloud_id(index: int) -> str:
    return f"synth_{index:05d}"


def generate(spec: SynthSpec) -> SynthDataset:
    """Ground truth and instances; a deterministic function of the SynthSpec"""
    if spec.num_categories < 1 or spec.num_clouds < 1:
        raise SpecError(
            f"Need at least one cloud and one category, got {spec.num_clouds} clouds "
            f"and {spec.num_categories} categories"
        )

    law = spec.instance_size_law
    counts = spec.instances_per_category
    frequencies = spec.frequencies()
    clouds = []
    for index in range(spec.num_clouds):
        rng = _cloud_rng(spec.seed, index)
        labels, instances = [], []
        next_instance = 0
        for category in range(spec.num_categories):
            if rng.random() >= frequencies[category]:
                continue
            k = int(rng.integers(counts.min, counts.max + 1))
            sizes = np.rint(law.min + (law.max - law.min) * rng.random(k) ** law.skew)
            for size in sizes.astype(np.int64):
                labels.append(np.full(size, category, dtype=np.uint32))
                instances.append(np.full(size, next_instance, dtype=np.uint32))
                next_instance += 1

        clouds.append(SynthCloud(
            cloud_id=_cloud_id(index),
            labels=np.concatenate(labels) if labels else np.zeros(0, dtype=np.uint32),
            instances=np.concatenate(instances) if instances else np.zeros(0, dtype=np.uint32),
        ))

    dataset = SynthDataset(spec.num_categories, clouds)
    logger.info(f"Generated {len(clouds)} clouds with {dataset.num_points} points")
    return dataset


def _size_targeted_rates(cloud: SynthCloud, rates: np.ndarray) -> np.ndarray:
    rates = rates.copy()
    for category in np.unique(cloud.labels):
        mask = cloud.labels == category
        ids, sizes = np.unique(cloud.instances[mask], return_counts=True)
        largest = ids[np.argmax(sizes)]
        rates[mask & (cloud.instances == largest)] = 0.0
    return rates


def corrupt(clouds: Sequence[SynthCloud], error_model: ErrorModel, seed: int = 0) -> List[np.ndarray]:
    """Predictions: each point is relabeled to its category's target with the miss rate"""
    num_categories = len(error_model.miss_rate)
    bad_targets = [t for t in error_model.confusion_target if t >= num_categories]
    if bad_targets:
        raise SpecError(
            f"Confusion target {bad_targets[0]} is not below {num_categories} categories"
        )

    miss = np.asarray(error_model.miss_rate, dtype=np.float64)
    target = np.asarray(error_model.confusion_target, dtype=np.uint32)
    predictions = []
    for index, cloud in enumerate(clouds):
        rng = _cloud_rng(seed, index, CORRUPTION_STREAM)
        labels = cloud.labels.astype(np.int64)
        if labels.size and labels.max() >= num_categories:
            raise SpecError(
                f"Cloud {cloud.cloud_id} has category {labels.max()} outside the error model"
            )
        rates = miss[labels]
        if error_model.size_targeted:
            rates = _size_targeted_rates(cloud, rates)
        flip = rng.random(labels.size) < rates
        predictions.append(np.where(flip, target[labels], cloud.labels).astype(np.uint32))
    return predictions


def size_bias_scenario(large: int = 1000, small: int = 10, count: int = 4):
    """One fully correct large instance plus count small instances fully missed.

    Category 0 carries every ground-truth point; misses go to category 1,
    which never appears in the ground truth.
    """
    sizes = [large] + [small] * count
    labels = np.zeros(sum(sizes), dtype=np.uint32)
    instances = np.repeat(np.arange(len(sizes), dtype=np.uint32), sizes)
    dataset = SynthDataset(2, [SynthCloud(_cloud_id(0), labels, instances)])
    model = ErrorModel(miss_rate=[1.0, 0.0], confusion_target=[1, 1], size_targeted=True)
    return dataset, model


def dataset_stats(dataset: SynthDataset, predictions: Sequence[np.ndarray],
                  config: MetricConfig = None) -> DatasetStats:
    config = config or MetricConfig()
    clouds = [
        accumulate_cloud(cloud.cloud_id, cloud.labels, pred, cloud.instances,
                         dataset.num_categories, config)
        for cloud, pred in zip(dataset.clouds, predictions)
        if cloud.num_points
    ]
    return stats_from_clouds(clouds, dataset.num_categories, config)


def emit_dataset(dataset: SynthDataset, predictions: Sequence[np.ndarray],
                 directory: Union[str, Path], name: str = "synthetic",
                 fmt: LabelFormat = LabelFormat.BINARY,
                 category_names: Optional[List[str]] = None) -> Path:
    """Write label files and a manifest; returns the manifest path"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    suffix = "bin" if fmt is LabelFormat.BINARY else "txt"
    ignore_id = max(MetricConfig().ignore_id, dataset.num_categories)

    entries = []
    for cloud, pred in zip(dataset.clouds, predictions):
        gt_name = f"{cloud.cloud_id}.gt.{suffix}"
        pred_name = f"{cloud.cloud_id}.pred.{suffix}"
        inst_name = f"{cloud.cloud_id}.inst.{suffix}"
        write_labels(directory / gt_name, cloud.labels, fmt)
        write_labels(directory / pred_name, pred, fmt)
        write_instances(directory / inst_name, cloud.instances, fmt)
        entries.append(CloudEntry(cloud_id=cloud.cloud_id, gt_path=Path(gt_name),
                                  pred_path=Path(pred_name), instance_path=Path(inst_name)))

    manifest = Manifest(
        num_categories=dataset.num_categories,
        ignore_id=ignore_id,
        clouds=entries,
        category_names=category_names,
    )
    manifest_path = directory / f"{name}{MANIFEST_SUFFIX}"
    write_manifest(manifest, manifest_path)
    logger.info(f"Emitted {len(entries)} clouds to {directory}")
    return manifest_path
