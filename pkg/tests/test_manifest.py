import json

import numpy as np
import pytest

from conftest import make_stats, write_dataset
from src.collectors.label_io import LabelFormat
from src.collectors.manifest import build_stats, load_manifest, validate_manifest
from src.models.errors import InputError, LoadError, SchemaError
from src.models.segmentation import ConfusionCell, MetricConfig


def _write(tmp_path, payload):
    path = tmp_path / "m.segm.json"
    path.write_text(json.dumps(payload))
    return path


def test_minimal_manifest(tmp_path):
    path = _write(tmp_path, {
        "num_categories": 2, "ignore_id": 255,
        "clouds": [{"cloud_id": "room", "gt_path": "g.txt", "pred_path": "p.txt"}],
    })
    manifest = load_manifest(path)
    assert len(manifest.clouds) == 1
    assert manifest.clouds[0].gt_path == tmp_path / "g.txt"


def test_duplicate_cloud_id_named(tmp_path):
    entry = {"cloud_id": "room_a", "gt_path": "g", "pred_path": "p"}
    path = _write(tmp_path, {"num_categories": 2, "ignore_id": 255, "clouds": [entry, entry]})
    with pytest.raises(SchemaError, match="room_a"):
        load_manifest(path)


def test_category_names_length(tmp_path):
    path = _write(tmp_path, {
        "num_categories": 2, "ignore_id": 255, "clouds": [], "category_names": ["wall"],
    })
    with pytest.raises(SchemaError):
        load_manifest(path)


def test_missing_field_named(tmp_path):
    path = _write(tmp_path, {"ignore_id": 255, "clouds": []})
    with pytest.raises(SchemaError) as info:
        load_manifest(path)
    assert info.value.field == "num_categories"


def test_invalid_json_line(tmp_path):
    path = tmp_path / "m.segm.json"
    path.write_text('{\n  "num_categories": 2,\n  oops\n}')
    with pytest.raises(LoadError) as info:
        load_manifest(path)
    assert info.value.line == 3


@pytest.mark.parametrize("fmt", [LabelFormat.BINARY, LabelFormat.TEXT])
def test_toy_files_match_in_memory_stats(tmp_path, toy_clouds, toy_stats, fmt):
    manifest = load_manifest(write_dataset(tmp_path, toy_clouds, fmt=fmt))
    stats = build_stats(manifest)
    assert stats.clouds == toy_stats.clouds
    assert stats.clouds[0].cells[0] == ConfusionCell(4, 2, 0, 2)


def test_thread_count_does_not_change_result(tmp_path):
    rng = np.random.default_rng(4)
    clouds = [
        (f"c{k}", rng.integers(0, 3, 300).tolist(), rng.integers(0, 3, 300).tolist(),
         rng.integers(0, 5, 300).tolist())
        for k in range(6)
    ]
    manifest = load_manifest(write_dataset(tmp_path, clouds, num_categories=3))
    serial = build_stats(manifest, threads=1, chunk_size=50)
    parallel = build_stats(manifest, threads=4, chunk_size=128)
    assert serial.clouds == parallel.clouds
    assert serial.clouds == make_stats(clouds, 3).clouds


def test_length_mismatch_names_cloud(tmp_path):
    clouds = [("good", [0, 1], [0, 1], None), ("bad_room", [0, 1, 1], [0, 1], None)]
    manifest = load_manifest(write_dataset(tmp_path, clouds))
    with pytest.raises(InputError, match="bad_room"):
        build_stats(manifest)


def test_label_error_names_cloud(tmp_path):
    clouds = [("room_x", [0, 9], [0, 1], None)]
    manifest = load_manifest(write_dataset(tmp_path, clouds))
    with pytest.raises(InputError) as info:
        build_stats(manifest)
    assert info.value.cloud_id == "room_x"
    assert "room_x" in str(info.value)


def test_no_instance_paths(tmp_path):
    clouds = [("a", [0, 1], [0, 1], None)]
    stats = build_stats(load_manifest(write_dataset(tmp_path, clouds)))
    assert not stats.has_instances()


def test_cloud_without_valid_points_skipped(tmp_path):
    clouds = [("a", [0, 1], [0, 1], None), ("empty", [255, 255], [0, 0], None)]
    stats = build_stats(load_manifest(write_dataset(tmp_path, clouds)))
    assert stats.cloud_ids == ["a"]
    assert stats.skipped_clouds == ["empty"]


def test_manifest_ignore_id_is_default(tmp_path):
    clouds = [("a", [0, 7, 1], [0, 1, 1], None)]
    manifest = load_manifest(write_dataset(tmp_path, clouds, ignore_id=7))
    assert build_stats(manifest).valid_points == 2
    with pytest.raises(InputError):
        build_stats(manifest, MetricConfig(ignore_id=255))


def test_validate_summary(tmp_path, toy_clouds):
    summary = validate_manifest(load_manifest(write_dataset(tmp_path, toy_clouds)))
    assert summary.ok
    assert summary.evaluated_clouds == 2
    assert summary.valid_points == 13
    assert summary.instance_count == 3
    assert summary.unassigned_instance_points == 4
