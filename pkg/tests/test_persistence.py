"""
Tests for run artifacts: binary fields, manifest and CSV/JSONL writers
"""

import json
import math
import struct

import numpy as np
import pytest

from boussinesq_lab.dyadic_analyzer import NormReport
from boussinesq_lab.exceptions import ChecksumError
from boussinesq_lab.persistence import (
    RunDirectory,
    decode_field,
    encode_field,
    read_csv,
    reports_from_jsonl,
    reports_to_jsonl,
    rows_to_csv,
)
from boussinesq_lab.spectral_core import GridSpec, ScalarField

GRID = GridSpec(n=16, length=2.0 * math.pi)


@pytest.fixture
def field(rng):
    return ScalarField(GRID, rng.normal(size=(16, 16)))


class TestFieldCodec:
    def test_header_layout(self, field):
        data = encode_field(field, 0.25)
        magic, version, n, length, t = struct.unpack_from("<4sIIdd", data)
        assert (magic, version, n, t) == (b"BSQF", 1, 16, 0.25)
        assert length == GRID.length
        assert len(data) == 28 + 8 * 16 * 16

    def test_values_are_row_major_little_endian(self, field):
        data = encode_field(field, 0.0)
        assert struct.unpack_from("<d", data, 28)[0] == field.values[0, 0]
        assert struct.unpack_from("<d", data, 36)[0] == field.values[0, 1]

    def test_decode_restores_bits(self, field):
        decoded, t = decode_field(encode_field(field, 1.5))
        assert t == 1.5 and decoded.grid == GRID
        assert np.array_equal(decoded.values, field.values)

    @pytest.mark.parametrize(
        "mangle",
        [
            lambda d: d[:10],
            lambda d: b"XXXX" + d[4:],
            lambda d: d[:-8],
        ],
    )
    def test_rejects_damaged_data(self, field, mangle):
        with pytest.raises(ChecksumError):
            decode_field(mangle(encode_field(field, 0.0)))


class TestCsvAndJsonl:
    def test_schema_line_and_formatting(self, temp_dir):
        text = rows_to_csv(["t", "passed", "p", "note"], [(0.5, True, math.nan, None)])
        lines = text.splitlines()
        assert lines[0] == "# schema_version=1"
        assert lines[1] == "t,passed,p,note"
        assert lines[2] == "0.5,true,nan,"
        path = temp_dir / "x.csv"
        path.write_text(text)
        header, rows = read_csv(path)
        assert header == ["t", "passed", "p", "note"]
        assert rows == [["0.5", "true", "nan", ""]]

    def test_report_lines(self):
        reports = [
            NormReport(0.0, holder={0.5: 1.0}, omega_lp={math.inf: 2.0}, step=0),
            NormReport(0.1, holder={0.5: 1.5}, v_accum=0.2, step=10),
        ]
        text = reports_to_jsonl(reports)
        assert len(text.splitlines()) == 2
        assert json.loads(text.splitlines()[0])["omega_lp.inf"] == 2.0
        restored = reports_from_jsonl(text)
        assert restored[0].omega_lp[math.inf] == 2.0
        assert restored[1].step == 10 and restored[1].v_accum == 0.2


class TestRunDirectory:
    def test_manifest_covers_writes(self, temp_dir, field):
        run_dir = RunDirectory(temp_dir / "run")
        run_dir.write_json("summary.json", {"passed": True})
        run_dir.write_field("fields/omega_0000.bsqf", field, 0.0)
        run_dir.write_manifest({"scenario": "x"})
        manifest = run_dir.read_manifest()
        assert set(manifest["files"]) == {"summary.json", "fields/omega_0000.bsqf"}
        assert manifest["meta"] == {"scenario": "x"}
        run_dir.verify()
        assert run_dir.read_json("summary.json") == {"schema_version": 1, "passed": True}
        decoded, _ = run_dir.read_field("fields/omega_0000.bsqf")
        assert np.array_equal(decoded.values, field.values)

    def test_modified_file(self, temp_dir):
        run_dir = RunDirectory(temp_dir)
        run_dir.write_text("a.txt", "hello")
        run_dir.write_manifest()
        (temp_dir / "a.txt").write_text("hullo")
        reopened = RunDirectory(temp_dir, create=False)
        with pytest.raises(ChecksumError) as info:
            reopened.read_text("a.txt")
        assert info.value.path.endswith("a.txt")

    def test_missing_file_and_manifest(self, temp_dir):
        run_dir = RunDirectory(temp_dir)
        with pytest.raises(ChecksumError):
            run_dir.read_manifest()
        run_dir.write_text("a.txt", "hello")
        run_dir.write_manifest()
        (temp_dir / "a.txt").unlink()
        with pytest.raises(ChecksumError):
            run_dir.verify()
        with pytest.raises(ChecksumError):
            run_dir.read_bytes("never-written.txt")
