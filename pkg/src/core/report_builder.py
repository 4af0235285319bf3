from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union
import io
import json
import logging
import sys

import pandas as pd

from src.analyzers.fine_grained import FineGrainedMetricCalculator, MetricDiagnostics
from src.models.errors import ComparisonError, LoadError, WriteError
from src.models.segmentation import (
    DatasetStats, LevelResult, MetricConfig, MetricValue, SUMMARY_KEYS
)


logger = logging.getLogger(__name__)

OA_KEY = "OA"
NULL_LITERAL = "NULL"
CSV_COLUMNS = ["Method", OA_KEY] + list(SUMMARY_KEYS)
# Published result tables list the eight summaries first
TABLE_COLUMNS = ["Method"] + list(SUMMARY_KEYS) + [OA_KEY]


class ReportFormat(Enum):
    JSON = "json"
    CSV = "csv"
    TABLE = "table"


@dataclass
class MethodReport:
    """All fine-grained metrics of one segmentation method on one dataset"""
    method: str
    config: MetricConfig
    num_categories: int
    overall_accuracy: float
    levels: Dict[str, LevelResult]
    cloud_ids: List[str] = field(default_factory=list)
    category_names: Optional[List[str]] = None
    diagnostics: MetricDiagnostics = field(default_factory=MetricDiagnostics)

    @property
    def config_fingerprint(self) -> str:
        return self.config.fingerprint()

    @property
    def summaries(self) -> Dict[str, MetricValue]:
        return {key: self.levels[key].summary for key in SUMMARY_KEYS}

    def value(self, metric: str) -> MetricValue:
        if metric == OA_KEY:
            return self.overall_accuracy
        if metric not in self.levels:
            raise ComparisonError(f"Report '{self.method}' has no metric '{metric}'")
        return self.levels[metric].summary

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "config": self.config.to_dict(),
            "config_fingerprint": self.config_fingerprint,
            "num_categories": self.num_categories,
            "category_names": self.category_names,
            "cloud_ids": list(self.cloud_ids),
            "overall_accuracy": self.overall_accuracy,
            "summaries": self.summaries,
            "levels": {
                key: {
                    "summary": level.summary,
                    "per_category": level.per_category,
                    "per_cloud": level.per_cloud,
                }
                for key, level in self.levels.items()
            },
            "diagnostics": self.diagnostics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MethodReport":
        try:
            config = MetricConfig.from_mapping(data["config"])
            report = cls(
                method=data["method"],
                config=config,
                num_categories=data["num_categories"],
                overall_accuracy=data["overall_accuracy"],
                levels={
                    key: LevelResult(
                        summary=level["summary"],
                        per_category=level.get("per_category"),
                        per_cloud=level.get("per_cloud"),
                    )
                    for key, level in data["levels"].items()
                },
                cloud_ids=data.get("cloud_ids", []),
                category_names=data.get("category_names"),
                diagnostics=MetricDiagnostics.from_dict(data.get("diagnostics", {})),
            )
        except (KeyError, TypeError) as e:
            raise LoadError(f"Malformed report document: missing or invalid {e}") from e

        recorded = data.get("config_fingerprint")
        if recorded and recorded != report.config_fingerprint:
            raise LoadError(
                f"Report '{report.method}' fingerprint {recorded} does not match its config"
            )
        return report


def build_report(method_name: str, stats: DatasetStats, config: MetricConfig = None,
                 category_names: Optional[List[str]] = None) -> MethodReport:
    config = config or stats.config
    calculator = FineGrainedMetricCalculator(config)
    results = calculator.compute_all(stats)

    if not stats.has_instances():
        logger.info(f"{method_name}: no instance annotations, instance-level rows are NULL")

    return MethodReport(
        method=method_name,
        config=config,
        num_categories=stats.num_categories,
        overall_accuracy=results.overall_accuracy,
        levels=results.levels,
        cloud_ids=stats.cloud_ids,
        category_names=category_names,
        diagnostics=results.diagnostics,
    )


def _check_comparable(reports: Sequence[MethodReport]) -> None:
    fingerprints = {r.config_fingerprint for r in reports}
    if len(fingerprints) > 1:
        detail = ", ".join(f"{r.method}={r.config_fingerprint}" for r in reports)
        raise ComparisonError(f"Config mismatch between reports: {detail}")


def _percent(value: MetricValue, decimals: int) -> str:
    if value is None:
        return NULL_LITERAL
    return f"{value * 100:.{decimals}f}"


def summary_frame(reports: Sequence[MethodReport]) -> pd.DataFrame:
    """One row per method, full precision, NULL as missing"""
    rows = []
    for report in reports:
        row = {"Method": report.method, OA_KEY: report.overall_accuracy}
        row.update(report.summaries)
        rows.append(row)
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def render_table(reports: Sequence[MethodReport], decimals: int = 1) -> str:
    """Percent values with fixed decimals, laid out like published result tables"""
    frame = summary_frame(reports)[TABLE_COLUMNS].copy()
    for column in TABLE_COLUMNS[1:]:
        frame[column] = [
            _percent(None if pd.isna(v) else float(v), decimals) for v in frame[column]
        ]
    return frame.to_string(index=False) + "\n"


def render_json(reports: Sequence[MethodReport]) -> str:
    payload = reports[0].to_dict() if len(reports) == 1 else [r.to_dict() for r in reports]
    return json.dumps(payload, indent=2) + "\n"


def render_csv(reports: Sequence[MethodReport]) -> str:
    buffer = io.StringIO()
    summary_frame(reports).to_csv(buffer, index=False, na_rep=NULL_LITERAL, lineterminator="\n")
    return buffer.getvalue()


def write_report(reports: Union[MethodReport, Sequence[MethodReport]],
                 fmt: Union[ReportFormat, str] = ReportFormat.JSON,
                 path: Optional[Union[str, Path]] = None, decimals: int = 1) -> None:
    """Write reports to path, or to standard output when path is None"""
    if isinstance(reports, MethodReport):
        reports = [reports]
    if not reports:
        raise WriteError("No reports to write")
    fmt = ReportFormat(fmt)
    _check_comparable(reports)

    if fmt is ReportFormat.JSON:
        text = render_json(reports)
    elif fmt is ReportFormat.CSV:
        text = render_csv(reports)
    else:
        text = render_table(reports, decimals)

    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise WriteError(f"Cannot write report: {e.strerror}", path=str(path)) from e
    logger.info(f"Wrote {len(reports)} report(s) to {path}")


def read_reports(path: Union[str, Path]) -> List[MethodReport]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise LoadError(f"Cannot read report: {e.strerror}", path=str(path)) from e
    except json.JSONDecodeError as e:
        raise LoadError(f"Invalid JSON at line {e.lineno}: {e.msg}",
                        line=e.lineno, path=str(path)) from e

    documents = data if isinstance(data, list) else [data]
    return [MethodReport.from_dict(doc) for doc in documents]


def read_report(path: Union[str, Path]) -> MethodReport:
    reports = read_reports(path)
    if len(reports) != 1:
        raise LoadError(f"Expected one report, found {len(reports)}", path=str(path))
    return reports[0]
