"""On-disk formats: fixed-precision CSV, the BRTH binary grid dump and JSON run manifests."""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import ComplexField, build_grid

CSV_FORMAT = "%.16e"
BRTH_MAGIC = b"BRTH"
BRTH_VERSION = 1


class FormatError(ValueError):
    pass


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        if "," in value or "\n" in value:
            raise FormatError(f"CSV text field may not contain separators: {value!r}")
        return value
    return CSV_FORMAT % float(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """One header line, then rows with floats in 17-significant-digit scientific notation."""
    path = Path(path)
    lines = [",".join(header)]
    width = len(header)
    for row in rows:
        if len(row) != width:
            raise FormatError(f"row has {len(row)} fields, header has {width}")
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    text = Path(path).read_text(encoding="ascii").splitlines()
    header = text[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:] if line], dtype=float)
    return header, data.reshape(-1, len(header))


def write_brth(path: Path, fld: ComplexField) -> Path:
    """Little-endian self-describing dump: axes then row-major interleaved re/im doubles."""
    path = Path(path)
    parts = [BRTH_MAGIC, struct.pack("<I", BRTH_VERSION), struct.pack("<I", fld.grid.ndim)]
    for axis in fld.grid.axes:
        name = axis.name.encode("ascii")
        parts.append(struct.pack("<I", len(name)))
        parts.append(name)
        parts.append(struct.pack("<ddq", axis.min, axis.max, axis.count))
    interleaved = np.empty(fld.values.size * 2, dtype="<f8")
    flat = fld.values.reshape(-1)
    interleaved[0::2] = flat.real
    interleaved[1::2] = flat.imag
    parts.append(interleaved.tobytes())
    path.write_bytes(b"".join(parts))
    return path


def read_brth(path: Path, quantity: str = "Psi") -> ComplexField:
    data = Path(path).read_bytes()
    if data[:4] != BRTH_MAGIC:
        raise FormatError("not a BRTH file (bad magic)")
    version, naxes = struct.unpack_from("<II", data, 4)
    if version != BRTH_VERSION:
        raise FormatError(f"unsupported BRTH version {version}")
    pos = 12
    axes = []
    for _ in range(naxes):
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + length].decode("ascii")
        pos += length
        lo, hi, count = struct.unpack_from("<ddq", data, pos)
        pos += 24
        axes.append((name, lo, hi, count))
    grid = build_grid(axes)
    payload = np.frombuffer(data, dtype="<f8", offset=pos)
    if payload.size != 2 * grid.size:
        raise FormatError(f"payload holds {payload.size // 2} values, axes describe {grid.size}")
    values = (payload[0::2] + 1j * payload[1::2]).reshape(grid.shape)
    return ComplexField(grid, values, quantity)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: Path, manifest: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def verify_manifest(path: Path) -> list[str]:
    """Names of listed outputs whose checksum no longer matches (empty when all agree)."""
    path = Path(path)
    manifest = json.loads(path.read_text(encoding="utf-8"))
    bad = []
    for entry in manifest["outputs"]:
        target = path.parent / entry["path"]
        if not target.exists() or sha256_file(target) != entry["sha256"]:
            bad.append(entry["path"])
    return bad
