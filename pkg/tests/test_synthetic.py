import numpy as np
import pytest

from src.collectors.manifest import build_stats, load_manifest
from src.collectors.synthetic import (
    ErrorModel, SynthSpec, corrupt, dataset_stats, emit_dataset, generate, size_bias_scenario
)
from src.analyzers.fine_grained import compute_all
from src.models.errors import SpecError


def _spec(**fields):
    fields.setdefault("seed", 7)
    return SynthSpec.create(**fields)


def test_generation_is_deterministic():
    first = generate(_spec(num_categories=2))
    second = generate(_spec(num_categories=2))
    for a, b in zip(first.clouds, second.clouds):
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.instances, b.instances)


def test_different_seed_differs():
    first = generate(_spec(seed=1))
    second = generate(_spec(seed=2))
    assert any(
        a.labels.size != b.labels.size or not np.array_equal(a.labels, b.labels)
        for a, b in zip(first.clouds, second.clouds)
    )


def test_absent_category():
    dataset = generate(_spec(num_categories=2, category_frequency=[1.0, 0.0]))
    assert all(not np.any(cloud.labels == 1) for cloud in dataset.clouds)


def test_every_point_has_an_instance():
    dataset = generate(_spec())
    for cloud in dataset.clouds:
        assert cloud.instances.size == cloud.labels.size
        assert np.all(cloud.instances != 0xFFFFFFFF)


def test_high_skew_gives_heavy_tail():
    dataset = generate(_spec(num_clouds=100, instance_size_law={"min": 20, "max": 2000, "skew": 6.0}))
    sizes = np.concatenate([
        np.unique(cloud.instances, return_counts=True)[1] for cloud in dataset.clouds
    ])
    assert sizes.max() >= 10 * np.median(sizes)


@pytest.mark.parametrize("fields", [
    {"num_categories": 0},
    {"num_clouds": 0},
])
def test_empty_specs_rejected(fields):
    with pytest.raises(SpecError):
        generate(_spec(**fields))


@pytest.mark.parametrize("fields", [
    {"num_categories": 2, "category_frequency": [0.5, 1.5]},
    {"instance_size_law": {"min": 50, "max": 10}},
    {"num_categories": 1, "error_model": {"miss_rate": [2.0], "confusion_target": [0]}},
])
def test_invalid_specs_rejected(fields):
    with pytest.raises(SpecError):
        _spec(**fields)


def test_zero_miss_rate_is_identity():
    dataset = generate(_spec())
    predictions = corrupt(dataset.clouds, ErrorModel.uniform(4, 0.0), seed=3)
    for cloud, pred in zip(dataset.clouds, predictions):
        assert np.array_equal(cloud.labels, pred)


def test_full_miss_rate_relabels_category():
    dataset = generate(_spec(num_categories=3))
    model = ErrorModel(miss_rate=[1.0, 0.0, 0.0], confusion_target=[2, 1, 2])
    for cloud, pred in zip(dataset.clouds, corrupt(dataset.clouds, model)):
        assert np.all(pred[cloud.labels == 0] == 2)
        assert np.array_equal(pred[cloud.labels != 0], cloud.labels[cloud.labels != 0])


def test_corruption_is_deterministic():
    dataset = generate(_spec())
    model = ErrorModel.uniform(4, 0.3)
    first = corrupt(dataset.clouds, model, seed=5)
    second = corrupt(dataset.clouds, model, seed=5)
    assert all(np.array_equal(a, b) for a, b in zip(first, second))


def test_corruption_independent_of_generation_with_shared_seed():
    spec = _spec(seed=11, num_clouds=400, num_categories=2, category_frequency=[0.5, 1.0])
    dataset = generate(spec)
    model = ErrorModel(miss_rate=[0.5, 0.0], confusion_target=[1, 0])
    predictions = corrupt(dataset.clouds, model, seed=11)

    # category 0 is laid out first, so point 0 is a category-0 point when present
    flips = [pred[0] == 1 for cloud, pred in zip(dataset.clouds, predictions)
             if cloud.labels.size and cloud.labels[0] == 0]
    assert len(flips) > 100
    assert 0.35 < np.mean(flips) < 0.65


def test_target_out_of_range():
    dataset = generate(_spec(num_categories=2))
    model = ErrorModel(miss_rate=[0.5, 0.5], confusion_target=[1, 2])
    with pytest.raises(SpecError):
        corrupt(dataset.clouds, model)


def test_size_targeted_spares_largest_instance():
    dataset = generate(_spec(num_categories=1, instances_per_category={"min": 3, "max": 3}))
    model = ErrorModel(miss_rate=[1.0, 0.0], confusion_target=[1, 1], size_targeted=True)
    predictions = corrupt(dataset.clouds, model)
    for cloud, pred in zip(dataset.clouds, predictions):
        ids, sizes = np.unique(cloud.instances, return_counts=True)
        largest = ids[np.argmax(sizes)]
        kept = cloud.instances == largest
        assert np.all(pred[kept] == 0)
        assert np.all(pred[~kept] == 1)


def test_bias_scenario_gap():
    dataset, model = size_bias_scenario()
    results = compute_all(dataset_stats(dataset, corrupt(dataset.clouds, model)))
    assert results.summaries["mIoU^D"] == pytest.approx(1000 / 1040)
    assert results.summaries["mIoU^I"] == pytest.approx(0.2)


def test_emitted_dataset_round_trips(tmp_path):
    dataset = generate(_spec(num_clouds=3))
    predictions = corrupt(dataset.clouds, ErrorModel.uniform(4, 0.2))
    manifest_path = emit_dataset(dataset, predictions, tmp_path)
    assert manifest_path.name.endswith(".segm.json")

    from_files = build_stats(load_manifest(manifest_path))
    in_memory = dataset_stats(dataset, predictions)
    assert from_files.clouds == in_memory.clouds
