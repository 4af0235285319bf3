import numpy as np
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union
from pathlib import Path
import logging
from dataclasses import dataclass, field
import pandas as pd
from scipy.stats import kendalltau, rankdata

from src.core.report_builder import MethodReport, NULL_LITERAL, OA_KEY
from src.models.errors import ComparisonError, ConfigError, InputError, LoadError
from src.models.segmentation import ACC_LEVELS, IOU_LEVELS


logger = logging.getLogger(__name__)

ValueTable = Dict[str, Dict[str, Optional[float]]]
TAU_VARIANTS = ("b", "c")


@dataclass
class RankingCriteria:
    """How ranks and their correlation are computed"""
    tie_method: str = "average"
    tau_variant: str = "b"

    def __post_init__(self):
        if self.tau_variant not in TAU_VARIANTS:
            raise ConfigError(
                f"Unknown Kendall tau variant '{self.tau_variant}', expected one of {TAU_VARIANTS}"
            )


@dataclass
class RankComparison:
    """Ranks of the same methods under two metrics, and how far they disagree"""
    metric_a: str
    metric_b: str
    methods: List[str]
    values_a: List[float]
    values_b: List[float]
    ranks_a: List[float]
    ranks_b: List[float]
    tau: float
    discordant_pairs: List[Tuple[str, str]] = field(default_factory=list)
    tie_method: str = "average"
    tau_variant: str = "b"

    @property
    def top_a(self) -> List[str]:
        best = min(self.ranks_a)
        return [m for m, r in zip(self.methods, self.ranks_a) if r == best]

    @property
    def top_b(self) -> List[str]:
        best = min(self.ranks_b)
        return [m for m, r in zip(self.methods, self.ranks_b) if r == best]

    @property
    def is_discordant(self) -> bool:
        return bool(self.discordant_pairs)

    def rank_pairs(self) -> List[Dict[str, Any]]:
        """Plot-ready rows: one per method with both values and both ranks"""
        return [
            {
                "method": method,
                self.metric_a: value_a,
                self.metric_b: value_b,
                f"rank {self.metric_a}": rank_a,
                f"rank {self.metric_b}": rank_b,
            }
            for method, value_a, value_b, rank_a, rank_b in zip(
                self.methods, self.values_a, self.values_b, self.ranks_a, self.ranks_b
            )
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metric_a": self.metric_a,
            "metric_b": self.metric_b,
            "tau": self.tau,
            "tie_method": self.tie_method,
            "tau_variant": self.tau_variant,
            "top_a": self.top_a,
            "top_b": self.top_b,
            "discordant_pairs": [list(pair) for pair in self.discordant_pairs],
            "rank_pairs": self.rank_pairs(),
        }


def kendall_tau(ranks_a: Sequence[float], ranks_b: Sequence[float], variant: str = "b") -> float:
    """Tie-adjusted Kendall tau (tau-b unless variant says otherwise) between two rankings"""
    a = np.asarray(ranks_a, dtype=np.float64)
    b = np.asarray(ranks_b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"Rankings differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise InputError(f"Need at least two ranked items, got {a.size}")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise InputError("Kendall tau is undefined for a constant ranking")

    tau, _ = kendalltau(a, b, variant=variant)
    return float(tau)


def values_from_reports(reports: Sequence[MethodReport]) -> ValueTable:
    fingerprints = {r.config_fingerprint for r in reports}
    if len(fingerprints) > 1:
        detail = ", ".join(f"{r.method}={r.config_fingerprint}" for r in reports)
        raise ComparisonError(f"Cannot rank reports built with different configs: {detail}")

    table: ValueTable = {}
    for report in reports:
        if report.method in table:
            raise ComparisonError(f"Method '{report.method}' appears in more than one report")
        values = dict(report.summaries)
        values[OA_KEY] = report.overall_accuracy
        table[report.method] = values
    return table


def _as_table(source: Union[Sequence[MethodReport], Mapping[str, Mapping[str, Any]]]) -> ValueTable:
    if isinstance(source, Mapping):
        return {method: dict(values) for method, values in source.items()}
    return values_from_reports(list(source))


class MethodRankingEngine:
    """
    Ranks segmentation methods by their metric values and measures rank
    disagreement between metric levels
    """

    def __init__(self, criteria: RankingCriteria = None):
        self.criteria = criteria or RankingCriteria()

    def rank(self, values: Sequence[float]) -> List[float]:
        """Rank 1 for the highest value; ties share the average rank"""
        return rankdata(-np.asarray(values, dtype=np.float64), method=self.criteria.tie_method).tolist()

    def _column(self, table: ValueTable, metric: str) -> List[float]:
        column = []
        for method, values in table.items():
            value = values.get(metric)
            if value is None or (isinstance(value, float) and np.isnan(value)):
                raise ComparisonError(f"Method '{method}' has no value for {metric}")
            column.append(float(value))
        return column

    def compare(self, source, metric_a: str, metric_b: str) -> RankComparison:
        table = _as_table(source)
        if len(table) < 2:
            raise ComparisonError(f"Ranking needs at least two methods, got {len(table)}")

        methods = list(table)
        values_a = self._column(table, metric_a)
        values_b = self._column(table, metric_b)
        ranks_a = self.rank(values_a)
        ranks_b = self.rank(values_b)
        tau = kendall_tau(ranks_a, ranks_b, self.criteria.tau_variant)

        discordant = []
        for i in range(len(methods)):
            for j in range(i + 1, len(methods)):
                if (values_a[i] - values_a[j]) * (values_b[i] - values_b[j]) < 0:
                    discordant.append((methods[i], methods[j]))

        comparison = RankComparison(
            metric_a=metric_a,
            metric_b=metric_b,
            methods=methods,
            values_a=values_a,
            values_b=values_b,
            ranks_a=ranks_a,
            ranks_b=ranks_b,
            tau=tau,
            discordant_pairs=discordant,
            tie_method=self.criteria.tie_method,
            tau_variant=self.criteria.tau_variant,
        )
        if discordant:
            logger.info(
                f"{metric_a} vs {metric_b}: tau={tau:.3f}, {len(discordant)} discordant pair(s)"
            )
        return comparison

    def compare_against(self, source, anchor: str = "mIoU^C") -> List[RankComparison]:
        """Compare the anchor metric with the other levels of its family"""
        for family in (IOU_LEVELS, ACC_LEVELS):
            if anchor in family:
                return [self.compare(source, other, anchor) for other in family if other != anchor]
        raise ComparisonError(f"Unknown anchor metric '{anchor}'")

    def generate_ranking_report(self, comparisons: Sequence[RankComparison]) -> pd.DataFrame:
        """One row per metric pair with tau and the top methods under each metric"""
        rows = []
        for c in comparisons:
            rows.append({
                "Metric A": c.metric_a,
                "Metric B": c.metric_b,
                "Kendall tau": round(c.tau, 4),
                "Top A": ", ".join(c.top_a),
                "Top B": ", ".join(c.top_b),
                "Discordant pairs": len(c.discordant_pairs),
            })
        return pd.DataFrame(rows)


def rank_methods(source, metric_a: str, metric_b: str) -> RankComparison:
    return MethodRankingEngine().compare(source, metric_a, metric_b)


def compare_against(source, anchor: str = "mIoU^C") -> List[RankComparison]:
    return MethodRankingEngine().compare_against(source, anchor)


def load_value_table(path: Union[str, Path]) -> ValueTable:
    """Read a Method + metric columns CSV, e.g. a published result table"""
    try:
        frame = pd.read_csv(path, na_values=[NULL_LITERAL], keep_default_na=False)
    except FileNotFoundError as e:
        raise LoadError("Value table not found", path=str(path)) from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise LoadError(f"Cannot parse value table: {e}", path=str(path)) from e

    if "Method" not in frame.columns:
        raise LoadError("Value table needs a 'Method' column", field="Method", path=str(path))
    metrics = [c for c in frame.columns if c != "Method"]
    for metric in metrics:
        if not pd.api.types.is_numeric_dtype(frame[metric]):
            raise LoadError(f"Column {metric} is not numeric", field=metric, path=str(path))

    table: ValueTable = {}
    values = frame[metrics].to_numpy(dtype=np.float64)
    for method, row in zip(frame["Method"].astype(str), values):
        if method in table:
            raise LoadError(f"Duplicate method '{method}'", path=str(path))
        table[method] = {m: (None if np.isnan(v) else float(v)) for m, v in zip(metrics, row)}
    logger.debug(f"Loaded {len(table)} methods x {len(metrics)} metrics from {path}")
    return table
