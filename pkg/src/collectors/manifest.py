from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import zip_longest
from pathlib import Path
from typing import List, Optional, Union
import json
import logging

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.collectors.label_io import (
    DEFAULT_CHUNK_SIZE, LabelKind, iter_label_chunks
)
from src.core.accumulator import CloudAccumulator, stats_from_clouds
from src.models.errors import InputError, LoadError, SchemaError, SegEvalError, WriteError
from src.models.segmentation import CloudStats, DatasetStats, MetricConfig


logger = logging.getLogger(__name__)

MANIFEST_SUFFIX = ".segm.json"


class CloudEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cloud_id: str = Field(..., min_length=1, description="Unique cloud identifier")
    gt_path: Path = Field(..., description="Ground-truth label file")
    pred_path: Path = Field(..., description="Predicted label file")
    instance_path: Optional[Path] = Field(None, description="Ground-truth instance file")


class Manifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    num_categories: int = Field(..., ge=1)
    ignore_id: int = Field(..., ge=0)
    clouds: List[CloudEntry]
    category_names: Optional[List[str]] = None

    @model_validator(mode="after")
    def _check_consistency(self) -> "Manifest":
        seen = set()
        for entry in self.clouds:
            if entry.cloud_id in seen:
                raise ValueError(f"duplicate cloud id '{entry.cloud_id}'")
            seen.add(entry.cloud_id)
        if self.category_names is not None and len(self.category_names) != self.num_categories:
            raise ValueError(
                f"category_names has {len(self.category_names)} entries, "
                f"expected {self.num_categories}"
            )
        return self

    def resolved(self, base: Path) -> "Manifest":
        """Copy with relative file paths resolved against base"""
        def resolve(p: Optional[Path]) -> Optional[Path]:
            if p is None or p.is_absolute():
                return p
            return base / p

        clouds = [
            entry.model_copy(update={
                "gt_path": resolve(entry.gt_path),
                "pred_path": resolve(entry.pred_path),
                "instance_path": resolve(entry.instance_path),
            })
            for entry in self.clouds
        ]
        return self.model_copy(update={"clouds": clouds})

    def category_name(self, category: int) -> str:
        if self.category_names:
            return self.category_names[category]
        return str(category)


def load_manifest(path: Union[str, Path]) -> Manifest:
    path = Path(path)
    if not path.name.endswith(MANIFEST_SUFFIX):
        logger.debug(f"Manifest {path} does not use the {MANIFEST_SUFFIX} extension")

    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise LoadError(f"Cannot read manifest: {e.strerror}", path=str(path)) from e

    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise LoadError(f"Invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}",
                        line=e.lineno, path=str(path)) from e

    try:
        manifest = Manifest.model_validate(data)
    except ValidationError as e:
        problems = []
        for error in e.errors():
            location = ".".join(str(part) for part in error["loc"]) or "manifest"
            problems.append(f"{location}: {error['msg']}")
        first = ".".join(str(part) for part in e.errors()[0]["loc"]) if e.errors() else None
        raise SchemaError("; ".join(problems), field=first, path=str(path)) from e

    logger.info(f"Loaded manifest {path} with {len(manifest.clouds)} clouds")
    return manifest.resolved(path.parent)


def write_manifest(manifest: Manifest, path: Union[str, Path]) -> None:
    payload = manifest.model_dump(mode="json", exclude_none=True)
    try:
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise WriteError(f"Cannot write manifest: {e.strerror}", path=str(path)) from e


def _accumulate_entry(entry: CloudEntry, num_categories: int, config: MetricConfig,
                      chunk_size: int) -> Optional[CloudStats]:
    accumulator = CloudAccumulator(num_categories, config, entry.cloud_id)
    gt_chunks = iter_label_chunks(entry.gt_path, LabelKind.LABELS, chunk_size=chunk_size)
    pred_chunks = iter_label_chunks(entry.pred_path, LabelKind.LABELS, chunk_size=chunk_size)
    if entry.instance_path is not None:
        inst_chunks = iter_label_chunks(entry.instance_path, LabelKind.INSTANCES,
                                        chunk_size=chunk_size)
    else:
        inst_chunks = iter(())

    gt_total = pred_total = inst_total = 0
    for gt, pred, inst in zip_longest(gt_chunks, pred_chunks, inst_chunks):
        gt_total += 0 if gt is None else gt.size
        pred_total += 0 if pred is None else pred.size
        inst_total += 0 if inst is None else inst.size
        if gt is None or pred is None or (entry.instance_path is not None and inst is None):
            continue
        if gt.size != pred.size or (inst is not None and inst.size != gt.size):
            continue
        accumulator.update(gt, pred, inst)

    if gt_total != pred_total:
        raise InputError(
            f"Ground truth has {gt_total} points but prediction has {pred_total}",
            cloud_id=entry.cloud_id,
        )
    if entry.instance_path is not None and inst_total != gt_total:
        raise InputError(
            f"Ground truth has {gt_total} points but instances have {inst_total}",
            cloud_id=entry.cloud_id,
        )

    stats = accumulator.finalize(entry.cloud_id)
    if stats.valid_points == 0:
        logger.warning(f"Cloud {entry.cloud_id} has no valid points and is skipped")
        return None
    return stats


def build_stats(manifest: Manifest, config: MetricConfig = None, threads: int = 1,
                chunk_size: int = DEFAULT_CHUNK_SIZE) -> DatasetStats:
    """Accumulate every cloud of a manifest; identical output for any thread count"""
    config = config or MetricConfig(ignore_id=manifest.ignore_id)
    if config.ignore_id != manifest.ignore_id:
        logger.warning(
            f"Config ignore id {config.ignore_id} overrides manifest ignore id "
            f"{manifest.ignore_id}"
        )

    def work(entry: CloudEntry) -> Optional[CloudStats]:
        try:
            return _accumulate_entry(entry, manifest.num_categories, config, chunk_size)
        except SegEvalError as e:
            raise e.attach_cloud(entry.cloud_id)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, manifest.clouds))
    else:
        results = [work(entry) for entry in manifest.clouds]

    skipped = [entry.cloud_id for entry, r in zip(manifest.clouds, results) if r is None]
    stats = stats_from_clouds((r for r in results if r is not None),
                              manifest.num_categories, config)
    stats.skipped_clouds = sorted(skipped)
    logger.info(
        f"Accumulated {stats.num_clouds} clouds, {stats.valid_points} valid points"
        + (f", skipped {len(skipped)}" if skipped else "")
    )
    return stats


@dataclass
class ValidationSummary:
    num_clouds: int
    evaluated_clouds: int
    valid_points: int
    instance_count: int
    unassigned_instance_points: int
    skipped_clouds: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.evaluated_clouds > 0


def validate_manifest(manifest: Manifest, config: MetricConfig = None, threads: int = 1,
                      chunk_size: int = DEFAULT_CHUNK_SIZE) -> ValidationSummary:
    """Load and check every referenced file without computing metrics"""
    stats = build_stats(manifest, config, threads, chunk_size)
    return ValidationSummary(
        num_clouds=len(manifest.clouds),
        evaluated_clouds=stats.num_clouds,
        valid_points=stats.valid_points,
        instance_count=sum(len(inst) for cloud in stats.clouds for inst in cloud.instances),
        unassigned_instance_points=sum(c.unassigned_instance_points for c in stats.clouds),
        skipped_clouds=list(stats.skipped_clouds),
    )
