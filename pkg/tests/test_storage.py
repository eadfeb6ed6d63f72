import csv
import json
import struct
import pytest
import numpy as np

from levyflow.core.errors import ArchiveError, OutputError
from levyflow.models.arrays import ResolventEstimate, TimeGrid
from levyflow.models.schemas import VerificationReport
from levyflow.services.kolmogorov import stable_density_1d
from levyflow.services.path_sampler import sample_path
from levyflow.services.pathwise_solver import solve_frozen
from levyflow.storage.artifacts import (
    decode_path,
    encode_path,
    ensure_dir,
    read_json,
    read_path_archive,
    report_fingerprint,
    write_curve_csv,
    write_density_csv,
    write_json_record,
    write_path_archive,
    write_path_csv,
    write_report,
    write_resolvent_csv,
)


def _read_rows(path):
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


@pytest.fixture
def jump_path(tempered_model):
    """A Lévy-Itô path of the tempered model with at least one recorded big jump."""
    grid = TimeGrid.uniform(1.0, 32)
    for index in range(500):
        path = sample_path(tempered_model, grid, seed=9, path_index=index, method="levy_ito", epsilon=0.05)
        if len(path.jump_times):
            return path
    pytest.fail("no path with big jumps among 500 draws")


@pytest.fixture
def report() -> VerificationReport:
    return VerificationReport(
        experiment="verify-lp",
        n_paths=4,
        seeds=[1],
        ratio_max=2.5,
        statistics={"stability_max": 2.5, "missing": float("nan")},
        rows=[{"s": 0.0, "ratio": 2.5, "note": float("inf")}, {"s": 0.5, "ratio": 1.5}],
        **{"pass": True},
    )


class TestPathArchive:
    """Binary LVYP archives."""

    @pytest.mark.storage
    @pytest.mark.unit
    def test_archive_preserves_path(self, jump_path, tmp_path):
        target = write_path_archive(jump_path, tmp_path / "path.lvyp")
        restored = read_path_archive(target)
        np.testing.assert_array_equal(restored.grid.times, jump_path.grid.times)
        np.testing.assert_array_equal(restored.values, jump_path.values)
        np.testing.assert_array_equal(restored.jump_times, jump_path.jump_times)
        np.testing.assert_array_equal(restored.jump_sizes, jump_path.jump_sizes)
        assert restored.seed == jump_path.seed
        assert restored.path_index == jump_path.path_index
        assert restored.model_id == jump_path.model_id
        assert restored.exact_jump_times is True

    @pytest.mark.storage
    @pytest.mark.unit
    def test_bad_magic(self, jump_path):
        payload = bytearray(encode_path(jump_path))
        payload[:4] = b"NOPE"
        with pytest.raises(ArchiveError) as exc_info:
            decode_path(bytes(payload))
        assert "magic" in str(exc_info.value)

    @pytest.mark.storage
    @pytest.mark.unit
    def test_unsupported_version(self, jump_path):
        payload = bytearray(encode_path(jump_path))
        payload[4:6] = struct.pack("<H", 99)
        with pytest.raises(ArchiveError) as exc_info:
            decode_path(bytes(payload))
        assert "version" in str(exc_info.value)

    @pytest.mark.storage
    @pytest.mark.unit
    @pytest.mark.parametrize("keep", [3, -40, -8])
    def test_truncated_archive(self, jump_path, keep):
        with pytest.raises(ArchiveError):
            decode_path(encode_path(jump_path)[:keep])

    @pytest.mark.storage
    @pytest.mark.unit
    def test_trailing_bytes(self, jump_path):
        with pytest.raises(ArchiveError):
            decode_path(encode_path(jump_path) + b"\x00")

    @pytest.mark.storage
    @pytest.mark.unit
    def test_missing_file(self, tmp_path):
        with pytest.raises(ArchiveError):
            read_path_archive(tmp_path / "absent.lvyp")


class TestCsvExports:
    @pytest.mark.storage
    @pytest.mark.unit
    def test_path_csv(self, stable_model, tmp_path):
        path = sample_path(stable_model, TimeGrid.uniform(1.0, 8), seed=1)
        rows = _read_rows(write_path_csv(path, tmp_path / "path.csv"))
        assert rows[0] == ["t", "L_1"]
        assert len(rows) == 10
        assert float(rows[1][1]) == 0.0
        assert float(rows[-1][1]) == path.values[-1, 0]

    @pytest.mark.storage
    @pytest.mark.unit
    def test_curve_csv(self, bump_drift, stable_model, tmp_path):
        path = sample_path(stable_model, TimeGrid.uniform(1.0, 8), seed=1)
        curve = solve_frozen(bump_drift, path, 0.0, [0.5])
        rows = _read_rows(write_curve_csv(curve, tmp_path / "curve.csv"))
        assert rows[0] == ["t", "Y_1", "X_1"]
        assert len(rows) == len(curve.grid.times) + 1
        assert float(rows[1][1]) == 0.5

    @pytest.mark.storage
    @pytest.mark.unit
    def test_density_csv(self, tmp_path):
        table = stable_density_1d(2.0, 1.0, (np.arange(65) - 32) * 0.5)
        rows = _read_rows(write_density_csv(table, tmp_path / "density.csv"))
        assert rows[0] == ["x", "density", "derivative"]
        assert len(rows) == 66

    @pytest.mark.storage
    @pytest.mark.unit
    def test_resolvent_csv(self, tmp_path):
        estimate = ResolventEstimate(
            lam=2.0, x_probe=np.array([[0.0], [1.0]]), u_values=np.array([0.4, 0.3]),
            du_values=np.array([0.0, -0.1]), du_sup=0.1, n_paths=10, seed=3, horizon=6.0,
            u_sigma=np.array([0.01, 0.01]), du_sigma=np.array([0.02, 0.02]),
        )
        rows = _read_rows(write_resolvent_csv([estimate], tmp_path / "resolvent.csv"))
        assert rows[0] == ["lambda", "x", "u", "u_sigma", "du", "du_sigma", "n_paths", "seed"]
        assert rows[2][:3] == ["2.0", "1.0", "0.3"]


class TestReports:
    """JSON and CSV verification reports."""

    @pytest.mark.storage
    @pytest.mark.unit
    def test_json_report(self, report, tmp_path):
        written = write_report(report, tmp_path / "out", fmt="json")
        assert [path.name for path in written] == ["verify-lp.json"]
        text = written[0].read_text(encoding="utf-8")
        payload = json.loads(text)
        assert payload["pass"] is True
        assert "passed" not in payload
        assert payload["statistics"]["missing"] is None
        assert payload["rows"][0]["note"] is None
        assert "NaN" not in text and "Infinity" not in text
        assert list(payload) == sorted(payload)

    @pytest.mark.storage
    @pytest.mark.unit
    def test_csv_report(self, report, tmp_path):
        written = write_report(report, tmp_path, fmt="csv")
        rows = _read_rows(written[0])
        assert rows[0] == ["experiment", "pass", "note", "ratio", "s"]
        assert rows[1] == ["verify-lp", "True", "", "2.5", "0.0"]
        assert len(rows) == 3

    @pytest.mark.storage
    @pytest.mark.unit
    def test_csv_report_without_rows_uses_statistics(self, tmp_path):
        report = VerificationReport(experiment="verify-holder", statistics={"slope": 0.9})
        rows = _read_rows(write_report(report, tmp_path, fmt="csv")[0])
        assert rows[0] == ["experiment", "pass", "slope"]
        assert rows[1] == ["verify-holder", "False", "0.9"]

    @pytest.mark.storage
    @pytest.mark.unit
    def test_both_formats(self, report, tmp_path):
        written = write_report(report, tmp_path)
        assert sorted(path.suffix for path in written) == [".csv", ".json"]

    @pytest.mark.storage
    @pytest.mark.unit
    def test_fingerprint_ignores_timestamp(self, report):
        later = report.model_copy(update={"generated_at": "2099-01-01T00:00:00Z"})
        changed = report.model_copy(update={"failures": 1})
        assert report_fingerprint(report) == report_fingerprint(later)
        assert report_fingerprint(report) != report_fingerprint(changed)

    @pytest.mark.storage
    @pytest.mark.unit
    def test_json_record_round_trip(self, tmp_path):
        target = write_json_record({"lambda0": None, "grid": np.array([1.0, 2.0])}, tmp_path / "record.json")
        assert read_json(target) == {"lambda0": None, "grid": [1.0, 2.0]}


class TestOutputErrors:
    @pytest.mark.storage
    @pytest.mark.unit
    def test_directory_below_a_file(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("x", encoding="utf-8")
        with pytest.raises(OutputError):
            ensure_dir(blocker / "out")

    @pytest.mark.storage
    @pytest.mark.unit
    def test_report_into_unwritable_location(self, report, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("x", encoding="utf-8")
        with pytest.raises(OutputError):
            write_report(report, blocker)
