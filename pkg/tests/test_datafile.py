# CSD Test Toolkit - data files

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from src.errors import DataFileError
from src.services.datafile import parse_csv, to_frame, write_csv


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseCsv:
    """Test ingestion and validation of data files."""

    def test_two_rows(self, tmp_path):
        data = parse_csv(write(tmp_path, "group,w,z\nY,1.5,0.2\nX,2.5,0.3\n"))
        assert data.ysample.w.tolist() == [1.5]
        assert data.xsample.z.tolist() == [0.3]
        assert data.ysample.index.tolist() == [0]
        assert data.xsample.index.tolist() == [1]
        assert not data.is_rdd

    def test_bad_number_reports_line(self, tmp_path):
        rows = ["group,w,z"] + [f"{'Y' if k % 2 else 'X'},{k},0.{k}" for k in range(5)] + ["Y,1.0,abc"]
        with pytest.raises(DataFileError) as exc:
            parse_csv(write(tmp_path, "\n".join(rows) + "\n"))
        assert exc.value.line == 7
        assert "line 7" in str(exc.value)

    def test_missing_column(self, tmp_path):
        with pytest.raises(DataFileError) as exc:
            parse_csv(write(tmp_path, "group,w\nY,1\n"))
        assert exc.value.line == 1

    def test_missing_value(self, tmp_path):
        with pytest.raises(DataFileError) as exc:
            parse_csv(write(tmp_path, "group,w,z\nY,1,0.1\nX,,0.2\n"))
        assert exc.value.line == 3

    def test_empty_group(self, tmp_path):
        with pytest.raises(DataFileError):
            parse_csv(write(tmp_path, "group,w,z\nY,1,0.1\nY,2,0.2\n"))

    def test_unknown_group(self, tmp_path):
        with pytest.raises(DataFileError) as exc:
            parse_csv(write(tmp_path, "group,w,z\nY,1,0.1\nZ,2,0.2\n"))
        assert exc.value.line == 3

    def test_non_finite_value(self, tmp_path):
        with pytest.raises(DataFileError):
            parse_csv(write(tmp_path, "group,w,z\nY,inf,0.1\nX,2,0.2\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFileError):
            parse_csv(tmp_path / "absent.csv")

    def test_not_utf8(self, tmp_path):
        path = tmp_path / "latin1.csv"
        path.write_bytes(b"group,w,z\nY,1.0,0.5\xff\nX,2.0,0.5\n")
        with pytest.raises(DataFileError, match="UTF-8"):
            parse_csv(path)

    def test_directory_instead_of_file(self, tmp_path):
        with pytest.raises(DataFileError):
            parse_csv(tmp_path)

    def test_rdd_mode(self, tmp_path):
        data = parse_csv(write(tmp_path, "w,z\n1,-0.5\n2,0.5\n"), rdd=True)
        assert data.is_rdd
        assert data.sample.z.tolist() == [-0.5, 0.5]


class TestWriteCsv:
    """Test re-emission of parsed data."""

    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(6)
        lines = ["group,w,z"]
        for k in range(40):
            lines.append(f"{'Y' if k % 3 else 'X'},{rng.standard_normal()!r},{rng.random()!r}")
        original = parse_csv(write(tmp_path, "\n".join(lines) + "\n"))

        copy = parse_csv(write_csv(original, tmp_path / "copy.csv"))
        assert np.array_equal(copy.ysample.w, original.ysample.w)
        assert np.array_equal(copy.xsample.z, original.xsample.z)
        assert np.array_equal(copy.ysample.index, original.ysample.index)

    def test_rows_in_file_order(self, tmp_path):
        data = parse_csv(write(tmp_path, "group,w,z\nX,1,0.1\nY,2,0.2\nX,3,0.3\n"))
        frame = to_frame(data)
        assert frame["group"].tolist() == ["X", "Y", "X"]
        assert frame["w"].tolist() == [1.0, 2.0, 3.0]
