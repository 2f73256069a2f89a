"""Feature/label files, IDX images, embeddings and the model archive format.

Archive layout::

    LDFA-ARCHIVE <version> <manifest byte length>\\n
    <manifest: indented JSON, UTF-8>\\n
    <payload: little-endian float64 arrays, in manifest order>

Every array is stored as float64 (integer arrays such as neighbourhood indices
are exact below 2**53), so save/load is bit-exact.
"""

import csv
import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
ARCHIVE_MAGIC = b"LDFA-ARCHIVE"
ARCHIVE_VERSION = 1


class ParseError(ValueError):
    pass


def _open(path, mode="rb"):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)


def is_idx(path):
    with _open(path) as f:
        head = f.read(4)
    return len(head) == 4 and head[:2] == b"\x00\x00" and head[2] == 0x08 and 1 <= head[3] <= 4


def read_idx(path):
    """Unsigned-byte IDX array (MNIST image or label file) as uint8."""
    with _open(path) as f:
        data = f.read()
    if len(data) < 4 or data[:2] != b"\x00\x00" or data[2] != 0x08:
        raise ParseError(f"{path}: not an unsigned-byte IDX file")
    ndim = data[3]
    dims = struct.unpack(f">{ndim}I", data[4 : 4 + 4 * ndim])
    body = np.frombuffer(data, dtype=np.uint8, offset=4 + 4 * ndim)
    if body.size != int(np.prod(dims)):
        raise ParseError(f"{path}: header declares {dims} but payload has {body.size} bytes")
    return body.reshape(dims)


def write_idx(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = bytes([0, 0, 0x08, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    with _open(path, "wb") as f:
        f.write(header + array.tobytes())


def read_csv_table(path):
    """Rectangular numeric CSV, one sample per row, as an (N, D) array."""
    rows = []
    width = None
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not rows:
        return np.zeros((0, 0))
    table = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(table)):
        raise ParseError(f"{path}: non-finite values")
    return table


def read_table(path):
    """Samples as rows. IDX image files are flattened per image."""
    if is_idx(path):
        arr = read_idx(path)
        return arr.reshape(arr.shape[0], -1).astype(np.float64)
    return read_csv_table(path)


def read_labels(path):
    if is_idx(path):
        return [str(int(v)) for v in read_idx(path).ravel()]
    with open(path) as f:
        return [line.strip() for line in f if line.strip()]


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension map ``(raw - lo) / span``; constant dimensions go to 0.5."""

    lo: np.ndarray
    span: np.ndarray

    @classmethod
    def fit_minmax(cls, table):
        lo = table.min(axis=0)
        return cls(lo, table.max(axis=0) - lo)

    @classmethod
    def fixed(cls, dim, lo, hi):
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi - lo)))

    def __call__(self, table):
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[1] != len(self.lo):
            raise ValueError(f"expected {len(self.lo)} features per sample, got shape {table.shape}")
        const = self.span <= 0
        out = (table - self.lo) / np.where(const, 1.0, self.span)
        out[:, const] = 0.5
        return out


def load_features(path, labels_path=None, normalizer=None):
    """Read samples and scale them into [0, 1].

    Returns ``(x, labels, normalizer)`` with ``x`` shaped (D, N). Without a
    given normalizer, IDX pixels are divided by 255 and CSV columns are
    min-max scaled.
    """
    table = read_table(path)
    if normalizer is None:
        if table.shape[0] == 0:
            raise ParseError(f"{path}: no samples")
        normalizer = Normalizer.fixed(table.shape[1], 0, 255) if is_idx(path) else Normalizer.fit_minmax(table)
    if table.shape[0] == 0:
        x = np.zeros((len(normalizer.lo), 0))
    else:
        x = normalizer(table).T
    labels = None
    if labels_path is not None:
        labels = read_labels(labels_path)
        if len(labels) != x.shape[1]:
            raise ParseError(f"{labels_path}: {len(labels)} labels for {x.shape[1]} samples")
    return x, labels, normalizer


def write_embedding(path, h):
    """One sample per row, one embedding dimension per column."""
    np.savetxt(path, np.asarray(h).T.reshape(-1, np.shape(h)[0]), delimiter=",", fmt="%.17g")


def read_embedding(path):
    table = read_csv_table(path)
    return table.T


def save_archive(path, manifest, arrays):
    """Write ``manifest`` (JSON-able dict) and the named ``arrays`` in order."""
    entries = []
    payload = []
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape)})
        payload.append(np.ascontiguousarray(a).tobytes())
    doc = dict(manifest, arrays=entries)
    text = json.dumps(doc, indent=2, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(ARCHIVE_MAGIC + f" {ARCHIVE_VERSION} {len(text)}\n".encode())
        f.write(text + b"\n")
        for chunk in payload:
            f.write(chunk)


def load_archive(path):
    """Inverse of :func:`save_archive`: ``(manifest, {name: array})``."""
    with open(path, "rb") as f:
        first = f.readline()
        parts = first.split()
        if len(parts) != 3 or parts[0] != ARCHIVE_MAGIC:
            raise ParseError(f"{path}: not an LDFA archive")
        if int(parts[1]) != ARCHIVE_VERSION:
            raise ParseError(f"{path}: unsupported archive version {int(parts[1])}")
        manifest = json.loads(f.read(int(parts[2])))
        f.read(1)
        arrays = {}
        for entry in manifest.pop("arrays"):
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * count)
            if len(buf) != 8 * count:
                raise ParseError(f"{path}: truncated payload at array {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
    return manifest, arrays
