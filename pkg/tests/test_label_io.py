import struct

import numpy as np
import pytest

from src.collectors.label_io import (
    LabelFormat, LabelKind, iter_label_chunks, read_instances, read_labels,
    sniff_format, write_instances, write_labels
)
from src.models.errors import LoadError, ParseError


def test_text_labels(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("0\n0\n1\n")
    assert read_labels(path).tolist() == [0, 0, 1]


def test_text_without_trailing_newline(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("3\n4")
    assert read_labels(path, LabelFormat.TEXT).tolist() == [3, 4]


def test_binary_labels(tmp_path):
    path = tmp_path / "labels.bin"
    path.write_bytes(b"SGL1" + struct.pack("<I", 3) + struct.pack("<3I", 0, 0, 1))
    assert sniff_format(path) is LabelFormat.BINARY
    assert read_labels(path).tolist() == [0, 0, 1]


def test_truncated_payload_offset(tmp_path):
    path = tmp_path / "labels.bin"
    path.write_bytes(b"SGL1" + struct.pack("<I", 4) + struct.pack("<3I", 0, 0, 1))
    with pytest.raises(ParseError) as info:
        read_labels(path)
    assert info.value.offset == 20
    assert "20" in str(info.value)


def test_trailing_data_is_count_mismatch(tmp_path):
    path = tmp_path / "labels.bin"
    path.write_bytes(b"SGL1" + struct.pack("<I", 1) + struct.pack("<2I", 0, 1))
    with pytest.raises(ParseError, match="Count mismatch"):
        read_labels(path)


def test_wrong_magic_for_instances(tmp_path):
    path = tmp_path / "labels.bin"
    write_labels(path, [1, 2])
    with pytest.raises(ParseError, match="magic"):
        read_instances(path, LabelFormat.BINARY)


def test_non_integer_line_reports_line(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("0\n1\nchair\n")
    with pytest.raises(ParseError) as info:
        read_labels(path)
    assert info.value.line == 3


def test_negative_value_rejected(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("-1\n")
    with pytest.raises(ParseError):
        read_labels(path)


def test_missing_file(tmp_path):
    with pytest.raises(LoadError):
        read_labels(tmp_path / "absent.bin")


@pytest.mark.parametrize("fmt", [LabelFormat.TEXT, LabelFormat.BINARY])
def test_text_and_binary_agree(tmp_path, fmt):
    values = np.random.default_rng(0).integers(0, 40, 1000)
    path = tmp_path / f"labels.{fmt.value}"
    write_labels(path, values, fmt)
    assert np.array_equal(read_labels(path), values)


def test_instance_sentinel_survives(tmp_path):
    path = tmp_path / "inst.bin"
    write_instances(path, [0, 0xFFFFFFFF, 3])
    assert read_instances(path).tolist() == [0, 0xFFFFFFFF, 3]


def test_chunks_bounded(tmp_path):
    path = tmp_path / "labels.bin"
    write_labels(path, range(10))
    chunks = list(iter_label_chunks(path, LabelKind.LABELS, chunk_size=4))
    assert [c.size for c in chunks] == [4, 4, 2]
    assert np.concatenate(chunks).tolist() == list(range(10))


def test_empty_binary_file(tmp_path):
    path = tmp_path / "labels.bin"
    write_labels(path, [])
    assert read_labels(path).size == 0
