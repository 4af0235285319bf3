import numpy as np
import pytest

from src.collectors.label_io import LabelFormat, write_instances, write_labels
from src.collectors.manifest import CloudEntry, Manifest, write_manifest
from src.core.accumulator import accumulate_cloud, stats_from_clouds
from src.models.segmentation import MetricConfig, NO_INSTANCE


A, B = 0, 1
X = NO_INSTANCE

# Toy dataset: cloud_1 has 4 A points (all correct, no instances) and 4 B
# points in instances u (correct) and v (missed as A); cloud_2 has 5 A points
# in one instance w, one of them predicted B.
TOY_CLOUDS = [
    (
        "cloud_1",
        [A, A, A, A, B, B, B, B],
        [A, A, A, A, B, B, A, A],
        [X, X, X, X, 0, 0, 1, 1],
    ),
    (
        "cloud_2",
        [A, A, A, A, A],
        [A, A, A, A, B],
        [7, 7, 7, 7, 7],
    ),
]


def make_stats(clouds, num_categories=2, config=None):
    config = config or MetricConfig()
    return stats_from_clouds(
        [accumulate_cloud(cid, gt, pred, inst, num_categories, config)
         for cid, gt, pred, inst in clouds],
        num_categories, config,
    )


def write_dataset(directory, clouds, num_categories=2, ignore_id=255,
                  fmt=LabelFormat.BINARY, name="toy"):
    """Serialize clouds next to a manifest; returns the manifest path"""
    entries = []
    for cid, gt, pred, inst in clouds:
        write_labels(directory / f"{cid}.gt", gt, fmt)
        write_labels(directory / f"{cid}.pred", pred, fmt)
        instance_path = None
        if inst is not None:
            write_instances(directory / f"{cid}.inst", inst, fmt)
            instance_path = f"{cid}.inst"
        entries.append(CloudEntry(cloud_id=cid, gt_path=f"{cid}.gt", pred_path=f"{cid}.pred",
                                  instance_path=instance_path))
    manifest = Manifest(num_categories=num_categories, ignore_id=ignore_id, clouds=entries)
    path = directory / f"{name}.segm.json"
    write_manifest(manifest, path)
    return path


def random_clouds(rng, max_clouds=5, max_categories=4, max_points=200, ignore_id=255):
    """Random clouds with complete instance coverage and some ignored points"""
    num_categories = int(rng.integers(1, max_categories + 1))
    clouds = []
    for p in range(int(rng.integers(1, max_clouds + 1))):
        n = int(rng.integers(1, max_points + 1))
        gt = rng.integers(0, num_categories, n)
        gt[rng.random(n) < 0.1] = ignore_id
        pred = rng.integers(0, num_categories, n)
        inst = rng.integers(0, 3, n).astype(np.int64)
        inst[gt == ignore_id] = NO_INSTANCE
        clouds.append((f"r{p:02d}", gt.tolist(), pred.tolist(), inst.tolist()))
    return clouds, num_categories


@pytest.fixture
def toy_clouds():
    return [tuple(list(v) if isinstance(v, list) else v for v in cloud) for cloud in TOY_CLOUDS]


@pytest.fixture
def toy_stats(toy_clouds):
    return make_stats(toy_clouds)


@pytest.fixture
def toy_manifest(tmp_path, toy_clouds):
    return write_dataset(tmp_path, toy_clouds)


def assert_values_close(actual, expected, tol=1e-12):
    """Elementwise comparison of metric lists where None marks NULL"""
    assert len(actual) == len(expected)
    for a, e in zip(actual, expected):
        if e is None:
            assert a is None
        else:
            assert a == pytest.approx(e, abs=tol)
