"""
Readers and writers for per-cloud label and instance files.

Binary layout: 4-byte magic, uint32 little-endian point count, then that many
uint32 little-endian values. Text layout: one decimal integer per line.
"""

from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence, Union
import logging
import struct

import numpy as np

from src.models.errors import LoadError, ParseError, WriteError


logger = logging.getLogger(__name__)

HEADER = struct.Struct("<4sI")
MAX_VALUE = 0xFFFFFFFF
DEFAULT_CHUNK_SIZE = 1 << 20


class LabelFormat(Enum):
    AUTO = "auto"
    TEXT = "text"
    BINARY = "binary"


class LabelKind(Enum):
    LABELS = b"SGL1"
    INSTANCES = b"SGI1"

    @property
    def magic(self) -> bytes:
        return self.value


def sniff_format(path: Union[str, Path]) -> LabelFormat:
    """Binary files start with one of the known magics; anything else is text"""
    try:
        with open(path, "rb") as f:
            head = f.read(4)
    except OSError as e:
        raise LoadError(f"Cannot open label file: {e.strerror}", path=str(path)) from e
    if head in (LabelKind.LABELS.magic, LabelKind.INSTANCES.magic):
        return LabelFormat.BINARY
    return LabelFormat.TEXT


def iter_label_chunks(path: Union[str, Path], kind: LabelKind = LabelKind.LABELS,
                      fmt: LabelFormat = LabelFormat.AUTO,
                      chunk_size: int = DEFAULT_CHUNK_SIZE) -> Iterator[np.ndarray]:
    """Stream a label file as uint32 arrays of at most chunk_size values"""
    if chunk_size < 1:
        raise LoadError(f"Chunk size must be positive, got {chunk_size}")
    path = Path(path)
    if fmt is LabelFormat.AUTO:
        fmt = sniff_format(path)
    if fmt is LabelFormat.BINARY:
        return _iter_binary(path, kind, chunk_size)
    return _iter_text(path, chunk_size)


def _iter_binary(path: Path, kind: LabelKind, chunk_size: int) -> Iterator[np.ndarray]:
    try:
        f = open(path, "rb")
    except OSError as e:
        raise LoadError(f"Cannot open label file: {e.strerror}", path=str(path)) from e

    with f:
        header = f.read(HEADER.size)
        if len(header) < HEADER.size:
            raise ParseError(f"Truncated header at byte {len(header)}",
                             offset=len(header), path=str(path))
        magic, count = HEADER.unpack(header)
        if magic != kind.magic:
            raise ParseError(f"Bad magic {magic!r}, expected {kind.magic!r}",
                             offset=0, path=str(path))

        offset = HEADER.size
        remaining = count
        while remaining:
            wanted = min(chunk_size, remaining)
            buf = f.read(4 * wanted)
            if len(buf) < 4 * wanted:
                end = offset + (len(buf) // 4) * 4
                raise ParseError(
                    f"Truncated payload: header declares {count} values, data ends at byte {end}",
                    offset=end, path=str(path),
                )
            yield np.frombuffer(buf, dtype="<u4").astype(np.uint32)
            offset += len(buf)
            remaining -= wanted

        if f.read(1):
            raise ParseError(
                f"Count mismatch: data continues past the {count} values declared in the header",
                offset=offset, path=str(path),
            )


def _iter_text(path: Path, chunk_size: int) -> Iterator[np.ndarray]:
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as e:
        raise LoadError(f"Cannot open label file: {e.strerror}", path=str(path)) from e

    buffer = []
    with f:
        line_no = 0
        try:
            for line_no, line in enumerate(f, 1):
                token = line.strip()
                if not (token.isascii() and token.isdigit()):
                    raise ParseError(
                        f"Line {line_no}: expected a nonnegative integer, found {token!r}",
                        line=line_no, path=str(path),
                    )
                value = int(token)
                if value > MAX_VALUE:
                    raise ParseError(f"Line {line_no}: value {value} exceeds 32 bits",
                                     line=line_no, path=str(path))
                buffer.append(value)
                if len(buffer) == chunk_size:
                    yield np.array(buffer, dtype=np.uint32)
                    buffer = []
        except UnicodeDecodeError as e:
            raise ParseError(f"Line {line_no + 1}: not valid UTF-8",
                             line=line_no + 1, path=str(path)) from e
    if buffer:
        yield np.array(buffer, dtype=np.uint32)


def _read_all(path, kind: LabelKind, fmt: LabelFormat) -> np.ndarray:
    chunks = list(iter_label_chunks(path, kind, fmt))
    if not chunks:
        return np.zeros(0, dtype=np.uint32)
    return np.concatenate(chunks)


def read_labels(path: Union[str, Path], fmt: LabelFormat = LabelFormat.AUTO) -> np.ndarray:
    return _read_all(path, LabelKind.LABELS, fmt)


def read_instances(path: Union[str, Path], fmt: LabelFormat = LabelFormat.AUTO) -> np.ndarray:
    return _read_all(path, LabelKind.INSTANCES, fmt)


def write_labels(path: Union[str, Path], values: Sequence[int],
                 fmt: LabelFormat = LabelFormat.BINARY,
                 kind: LabelKind = LabelKind.LABELS) -> None:
    values = np.asarray(values, dtype=np.int64).ravel()
    if values.size and (values.min() < 0 or values.max() > MAX_VALUE):
        raise WriteError("Label values must fit in an unsigned 32-bit integer", path=str(path))
    if values.size > MAX_VALUE:
        raise WriteError(f"Too many points for one file: {values.size}", path=str(path))

    try:
        if fmt is LabelFormat.TEXT:
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                for start in range(0, values.size, DEFAULT_CHUNK_SIZE):
                    chunk = values[start:start + DEFAULT_CHUNK_SIZE]
                    f.write("\n".join(map(str, chunk.tolist())))
                    f.write("\n")
        else:
            with open(path, "wb") as f:
                f.write(HEADER.pack(kind.magic, values.size))
                f.write(values.astype("<u4").tobytes())
    except OSError as e:
        raise WriteError(f"Cannot write label file: {e.strerror}", path=str(path)) from e
    logger.debug(f"Wrote {values.size} {kind.name.lower()} to {path}")


def write_instances(path: Union[str, Path], values: Sequence[int],
                    fmt: LabelFormat = LabelFormat.BINARY) -> None:
    write_labels(path, values, fmt, LabelKind.INSTANCES)
