#!/usr/bin/env python3
"""
Command-line interface for fine-grained point cloud segmentation evaluation
"""

import json
import logging
import sys
from pathlib import Path

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from src.collectors.label_io import LabelFormat
from src.collectors.manifest import build_stats, load_manifest, validate_manifest
from src.collectors.synthetic import (
    SynthSpec, corrupt, emit_dataset, generate, size_bias_scenario
)
from src.core.ranking_engine import (
    MethodRankingEngine, load_value_table
)
from src.core.report_builder import build_report, read_reports, write_report
from src.models.errors import ComparisonError, InputError, SegEvalError, WriteError
from src.models.segmentation import (
    DEFAULT_CONFIG_PATH, AccMode, InstanceTnMode, MetricConfig, NullMode, load_settings
)


logger = logging.getLogger("segeval")

# Data goes to stdout or files; everything for humans goes to stderr
err_console = Console(stderr=True)


def setup_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.ERROR if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


def _percent(value) -> str:
    return "NULL" if value is None else f"{value * 100:.1f}"


def _metric_config(settings: dict, ignore_id: int, null_mode, acc_mode, instance_tn_mode) -> MetricConfig:
    values = dict(settings.get("metrics") or {})
    values["ignore_id"] = ignore_id
    if null_mode:
        values["null_mode"] = null_mode
    if acc_mode:
        values["acc_mode"] = acc_mode
    if instance_tn_mode:
        values["instance_tn_mode"] = instance_tn_mode
    return MetricConfig.from_mapping(values)


@click.group()
@click.option('-v', '--verbose', is_flag=True, help='Debug logging')
@click.option('-q', '--quiet', is_flag=True, help='Only log errors')
def cli(verbose, quiet):
    """Fine-grained mIoU / mAcc evaluation for point cloud segmentation"""
    setup_logging(verbose, quiet)


@cli.command('eval')
@click.option('--manifest', 'manifest_path', required=True, help='Dataset manifest (.segm.json)')
@click.option('--method', required=True, help='Method name recorded in the report')
@click.option('--out', default=None, help='Report file (stdout when omitted)')
@click.option('--format', 'fmt', type=click.Choice(['json', 'csv', 'table']), default='json')
@click.option('--null-mode', type=click.Choice([m.value for m in NullMode]), default=None)
@click.option('--acc-mode', type=click.Choice([m.value for m in AccMode]), default=None)
@click.option('--instance-tn-mode', type=click.Choice([m.value for m in InstanceTnMode]), default=None)
@click.option('--ignore-id', type=int, default=None, help='Override the manifest ignore id')
@click.option('--threads', type=click.IntRange(min=1), default=None, help='Clouds processed in parallel')
@click.option('--chunk-size', type=click.IntRange(min=1), default=None, help='Points per streamed chunk')
@click.option('--config', 'config_path', default=None, help='Settings YAML')
def evaluate(manifest_path, method, out, fmt, null_mode, acc_mode, instance_tn_mode,
             ignore_id, threads, chunk_size, config_path):
    """Evaluate one method's predictions listed in a manifest"""
    settings = load_settings(config_path or DEFAULT_CONFIG_PATH)
    ingest = settings.get("ingest") or {}
    manifest = load_manifest(manifest_path)
    config = _metric_config(
        settings, manifest.ignore_id if ignore_id is None else ignore_id,
        null_mode, acc_mode, instance_tn_mode,
    )

    with err_console.status(f"[bold green]Accumulating {len(manifest.clouds)} clouds..."):
        stats = build_stats(
            manifest, config,
            threads=threads or ingest.get("threads", 1),
            chunk_size=chunk_size or ingest.get("chunk_size", 1 << 20),
        )

    report = build_report(method, stats, config, manifest.category_names)
    decimals = (settings.get("presentation") or {}).get("decimals", 1)
    write_report(report, fmt, out, decimals=decimals)

    table = Table(title=f"{method}: {stats.num_clouds} clouds, {stats.valid_points:,} points")
    table.add_column("Level", style="cyan")
    table.add_column("mIoU", justify="right", style="green")
    table.add_column("mAcc", justify="right")
    summaries = report.summaries
    for level in "DPCI":
        table.add_row(level, _percent(summaries[f"mIoU^{level}"]), _percent(summaries[f"mAcc^{level}"]))
    table.add_row("OA", _percent(report.overall_accuracy), "")
    err_console.print(table)


def _parse_pair(text: str):
    metric_a, sep, metric_b = text.partition(':')
    if not sep or not metric_a or not metric_b:
        raise click.BadParameter(f"expected METRIC_A:METRIC_B, got '{text}'", param_hint='--pair')
    return metric_a, metric_b


@cli.command()
@click.argument('report_files', nargs=-1)
@click.option('--reports', 'use_reports', is_flag=True, help='Rank the report files given as arguments')
@click.option('--values', 'values_path', default=None, help='CSV of Method + metric columns')
@click.option('--pair', 'pairs', multiple=True, help='Metric pair A:B, repeatable')
@click.option('--anchor', default='mIoU^C', help='Metric compared with its family when no pair is given')
@click.option('--out', default=None, help='Comparison JSON (stdout when omitted)')
def rank(report_files, use_reports, values_path, pairs, anchor, out):
    """Compare method rankings across metric levels"""
    if use_reports and not report_files:
        raise click.UsageError("--reports needs at least one report file")
    if bool(report_files) == bool(values_path):
        raise click.UsageError("Give either report files (--reports R1 R2 ...) or --values CSV")

    if values_path:
        source = load_value_table(values_path)
    else:
        source = [r for path in report_files for r in read_reports(path)]
        if len(source) < 2:
            raise ComparisonError(f"Ranking needs at least two reports, got {len(source)}")

    engine = MethodRankingEngine()
    if pairs:
        comparisons = [engine.compare(source, *_parse_pair(p)) for p in pairs]
    else:
        comparisons = engine.compare_against(source, anchor)

    payload = json.dumps({"comparisons": [c.to_dict() for c in comparisons]}, indent=2) + "\n"
    if out:
        try:
            Path(out).write_text(payload, encoding="utf-8")
        except OSError as e:
            raise WriteError(f"Cannot write comparison: {e.strerror}", path=out) from e
    else:
        sys.stdout.write(payload)

    frame = engine.generate_ranking_report(comparisons)
    table = Table(title="Rank comparison")
    for column in frame.columns:
        table.add_column(column, justify="right" if column in ("Kendall tau", "Discordant pairs") else "left")
    for row in frame.itertuples(index=False):
        table.add_row(*[str(v) for v in row])
    err_console.print(table)


@cli.command()
@click.option('--emit', 'directory', required=True, help='Output directory')
@click.option('--scenario', type=click.Choice(['size-bias']), default=None,
              help='Write a fixed demonstration dataset instead')
@click.option('--seed', type=click.IntRange(min=0), default=0)
@click.option('--clouds', type=int, default=10)
@click.option('--categories', type=int, default=4)
@click.option('--frequency', type=float, multiple=True, help='Per-category presence probability')
@click.option('--instances-min', type=int, default=1)
@click.option('--instances-max', type=int, default=3)
@click.option('--size-min', type=int, default=20)
@click.option('--size-max', type=int, default=2000)
@click.option('--skew', type=float, default=2.0)
@click.option('--miss-rate', type=float, default=0.1)
@click.option('--target', type=int, default=None, help='Category receiving misses (next one by default)')
@click.option('--size-targeted', is_flag=True, help='Spare the largest instance per cloud and category')
@click.option('--format', 'fmt', type=click.Choice(['binary', 'text']), default='binary')
@click.option('--name', default='synthetic', help='Manifest base name')
def synth(directory, scenario, seed, clouds, categories, frequency, instances_min, instances_max,
          size_min, size_max, skew, miss_rate, target, size_targeted, fmt, name):
    """Generate a synthetic labeled dataset with predictions"""
    if scenario == 'size-bias':
        dataset, error_model = size_bias_scenario()
    else:
        targets = [target if target is not None else (c + 1) % max(categories, 1)
                   for c in range(categories)]
        spec = SynthSpec.create(
            seed=seed,
            num_clouds=clouds,
            num_categories=categories,
            category_frequency=list(frequency) or None,
            instances_per_category={"min": instances_min, "max": instances_max},
            instance_size_law={"min": size_min, "max": size_max, "skew": skew},
            error_model={"miss_rate": [miss_rate] * categories, "confusion_target": targets,
                         "size_targeted": size_targeted},
        )
        dataset, error_model = generate(spec), spec.error_model

    predictions = corrupt(dataset.clouds, error_model, seed)
    manifest_path = emit_dataset(dataset, predictions, directory, name=name, fmt=LabelFormat(fmt))
    err_console.print(f"[green]Wrote {len(dataset.clouds)} clouds, {dataset.num_points:,} points[/green]")
    click.echo(str(manifest_path))


@cli.command()
@click.option('--manifest', 'manifest_path', required=True, help='Dataset manifest (.segm.json)')
@click.option('--ignore-id', type=int, default=None, help='Override the manifest ignore id')
@click.option('--threads', type=click.IntRange(min=1), default=1)
@click.option('--chunk-size', type=click.IntRange(min=1), default=1 << 20)
def validate(manifest_path, ignore_id, threads, chunk_size):
    """Check a manifest and every file it references without computing metrics"""
    manifest = load_manifest(manifest_path)
    config = MetricConfig(ignore_id=manifest.ignore_id if ignore_id is None else ignore_id)
    summary = validate_manifest(manifest, config, threads, chunk_size)

    table = Table(title=f"Manifest {manifest_path}")
    table.add_column("Check", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("Clouds listed", str(summary.num_clouds))
    table.add_row("Clouds evaluated", str(summary.evaluated_clouds))
    table.add_row("Valid points", f"{summary.valid_points:,}")
    table.add_row("Instances", str(summary.instance_count))
    table.add_row("Points without instance", str(summary.unassigned_instance_points))
    table.add_row("Skipped clouds", ", ".join(summary.skipped_clouds) or "-")
    err_console.print(table)

    if not summary.ok:
        raise InputError("No cloud in the manifest has valid points")


def run(argv=None) -> int:
    """Run the CLI and map the outcome to an exit code: 0 ok, 1 input error, 2 internal error"""
    try:
        rv = cli.main(args=argv, prog_name="segeval", standalone_mode=False)
    except click.exceptions.Abort:
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except SegEvalError as e:
        err_console.print(f"Error: {e}", style="red", markup=False, highlight=False)
        return 1
    except Exception as e:
        logger.debug("Internal error", exc_info=True)
        err_console.print(f"Internal error: {e}", style="red", markup=False, highlight=False)
        return 2
    return rv if isinstance(rv, int) else 0


if __name__ == '__main__':
    sys.exit(run())
