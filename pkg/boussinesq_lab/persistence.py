"""
Run artifacts on disk

Binary field dumps (magic BSQF, uint32 version, uint32 n, float64 L,
float64 t, then n*n little-endian float64 values in row-major order), the
sha256 manifest, the JSONL NormReport stream and the CSV writers. JSON and
CSV files start with (or contain) the schema version.
"""

import csv
import hashlib
import io
import json
import struct
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import (
    DEFAULT_ENCODING,
    FIELD_MAGIC,
    MANIFEST_NAME,
    RUN_LOG_NAME,
    SCHEMA_VERSION,
)
from .dyadic_analyzer import NormReport
from .exceptions import ChecksumError
from .spectral_core import GridSpec, ScalarField
from .utils import Serializer

PathLike = Union[str, Path]

_HEADER = struct.Struct("<4sIIdd")


def encode_field(f: ScalarField, t: float) -> bytes:
    header = _HEADER.pack(FIELD_MAGIC, SCHEMA_VERSION, f.grid.n, f.grid.length, float(t))
    return header + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def decode_field(data: bytes, name: str = "<bytes>") -> Tuple[ScalarField, float]:
    """Inverse of ``encode_field``

    Raises:
        ChecksumError: Bad magic, version or payload size
    """
    if len(data) < _HEADER.size:
        raise ChecksumError(name, "header", "truncated")
    magic, version, n, length, t = _HEADER.unpack_from(data)
    if magic != FIELD_MAGIC or version != SCHEMA_VERSION:
        raise ChecksumError(name, "BSQF v%d" % SCHEMA_VERSION, f"{magic!r} v{version}")
    payload = data[_HEADER.size :]
    if len(payload) != 8 * n * n:
        raise ChecksumError(name, f"{8 * n * n} payload bytes", f"{len(payload)}")
    values = np.frombuffer(payload, dtype="<f8").reshape(n, n).astype(np.float64)
    return ScalarField(GridSpec(n, length), values), float(t)


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def reports_to_jsonl(reports: Iterable[NormReport]) -> str:
    return "".join(Serializer.dumps(r.to_dict()) + "\n" for r in reports)


def reports_from_jsonl(text: str) -> List[NormReport]:
    return [NormReport.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return "" if value is None else str(value)


def rows_to_csv(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """UTF-8 CSV text with a '# schema_version=N' line above the header"""
    buffer = io.StringIO()
    buffer.write(f"# schema_version={SCHEMA_VERSION}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buffer.getvalue()


def read_csv(path: PathLike) -> Tuple[List[str], List[List[str]]]:
    """Header and rows of a CSV written by ``rows_to_csv``"""
    with open(path, encoding=DEFAULT_ENCODING, newline="") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, [])
    return header, [row for row in reader]


class RunDirectory:
    """Writes the artifacts of one run and keeps their checksums

    Every write goes through ``write_bytes``/``write_text`` so the manifest
    covers it. ``run.log`` is written by a log handler and is not
    checksummed.

    Example:
        >>> run_dir = RunDirectory("runs/euler_disc")
        >>> run_dir.write_json("summary.json", {"passed": True})
        >>> run_dir.write_manifest({"scenario": "euler_disc"})
    """

    def __init__(self, path: PathLike, create: bool = True):
        self.path = Path(path)
        if create:
            self.path.mkdir(parents=True, exist_ok=True)
        self.checksums: Dict[str, str] = {}

    def file(self, name: str) -> Path:
        return self.path / name

    @property
    def log_path(self) -> Path:
        return self.file(RUN_LOG_NAME)

    def write_bytes(self, name: str, data: bytes) -> Path:
        target = self.file(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        self.checksums[name] = hashlib.sha256(data).hexdigest()
        return target

    def write_text(self, name: str, text: str) -> Path:
        return self.write_bytes(name, text.encode(DEFAULT_ENCODING))

    def write_json(self, name: str, obj: Any) -> Path:
        payload = obj
        if isinstance(obj, dict):
            payload = {"schema_version": SCHEMA_VERSION, **obj}
        return self.write_text(name, Serializer.dumps(payload, indent=2) + "\n")

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        return self.write_text(name, rows_to_csv(columns, rows))

    def write_field(self, name: str, f: ScalarField, t: float) -> Path:
        return self.write_bytes(name, encode_field(f, t))

    def write_reports(self, name: str, reports: Iterable[NormReport]) -> Path:
        return self.write_text(name, reports_to_jsonl(reports))

    def write_manifest(self, meta: Optional[Dict[str, Any]] = None) -> Path:
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "files": dict(sorted(self.checksums.items())),
            "meta": meta or {},
        }
        target = self.file(MANIFEST_NAME)
        target.write_text(Serializer.dumps(manifest, indent=2) + "\n", encoding=DEFAULT_ENCODING)
        return target

    def read_manifest(self) -> Dict[str, Any]:
        target = self.file(MANIFEST_NAME)
        if not target.is_file():
            raise ChecksumError(target, "manifest", "missing")
        return json.loads(target.read_text(encoding=DEFAULT_ENCODING))

    def verify(self, names: Optional[Iterable[str]] = None) -> None:
        """Compare files against the manifest

        Raises:
            ChecksumError: Naming the first missing or modified file
        """
        files = self.read_manifest()["files"]
        for name in sorted(files if names is None else names):
            expected = files.get(name)
            target = self.file(name)
            if expected is None or not target.is_file():
                raise ChecksumError(target, expected or "", "missing")
            actual = sha256_file(target)
            if actual != expected:
                raise ChecksumError(target, expected, actual)

    def read_bytes(self, name: str) -> bytes:
        self.verify([name])
        return self.file(name).read_bytes()

    def read_text(self, name: str) -> str:
        return self.read_bytes(name).decode(DEFAULT_ENCODING)

    def read_json(self, name: str) -> Any:
        return json.loads(self.read_text(name))

    def read_field(self, name: str) -> Tuple[ScalarField, float]:
        return decode_field(self.read_bytes(name), str(self.file(name)))

    def read_reports(self, name: str) -> List[NormReport]:
        return reports_from_jsonl(self.read_text(name))

    def exists(self, name: str) -> bool:
        return self.file(name).is_file()
