import numpy as np
import pytest
from astropy.table import Table

from spectrum_demod.config.file_io import (
    closed_loop_to_table,
    estimates_to_table,
    read_trace,
    sanitize_estimate_table,
    sanitize_trace_table,
    trace_to_table,
    write_trace,
)
from spectrum_demod.demod import EstimateRecord
from spectrum_demod.simulator import PhotonTrace, synthesize_trace
from spectrum_demod.tracker import run_closed_loop
from spectrum_demod.util import ConfigError, EstimateFlag, NoiseMode


@pytest.fixture
def trace(params, sweep):
    return synthesize_trace(params, sweep, seed=1, t0=0.5)


@pytest.mark.parametrize("suffix", [".csv", ".bin"])
def test_trace_files(tmp_path, trace, suffix):
    fpath = tmp_path / f"trace{suffix}"
    write_trace(trace, fpath)
    loaded = read_trace(fpath)
    np.testing.assert_array_equal(loaded.counts, trace.counts)
    assert loaded.dwell == pytest.approx(trace.dwell, rel=1e-9)
    assert loaded.n_bins == 500


def test_csv_keeps_start_time(tmp_path, trace):
    write_trace(trace, tmp_path / "trace.csv")
    assert read_trace(tmp_path / "trace.csv").t0 == pytest.approx(0.5)


def test_binary_layout(tmp_path):
    trace = PhotonTrace(dwell=20e-6, counts=np.array([1, 2, 70000]))
    write_trace(trace, tmp_path / "trace.dat")
    data = (tmp_path / "trace.dat").read_bytes()
    assert len(data) == 8 + 8 + 3 * 4
    assert int.from_bytes(data[:8], "little") == 3
    assert np.frombuffer(data[16:], dtype="<u4").tolist() == [1, 2, 70000]


def test_binary_rejects_expectation_values(tmp_path, params, sweep):
    trace = synthesize_trace(params, sweep, noise=NoiseMode.NONE)
    with pytest.raises(ConfigError):
        write_trace(trace, tmp_path / "trace.bin")


def test_binary_length_mismatch(tmp_path, trace):
    fpath = tmp_path / "trace.bin"
    write_trace(trace, fpath)
    fpath.write_bytes(fpath.read_bytes()[:-4])
    with pytest.raises(ConfigError):
        read_trace(fpath)
    fpath.write_bytes(b"\x00" * 5)
    with pytest.raises(ConfigError):
        read_trace(fpath)


def test_missing_trace(tmp_path):
    with pytest.raises(ConfigError):
        read_trace(tmp_path / "missing.csv")


def test_sanitize_trace_table():
    table = sanitize_trace_table(Table({"time": [0.0, 1e-5], "count": [3, 4]}))
    assert table.colnames == ["t_start_s", "counts"]
    with pytest.raises(AssertionError):
        sanitize_trace_table(Table({"x": [0.0, 1e-5], "counts": [3, 4]}))


def test_unequal_bins(tmp_path):
    Table({"t_start_s": [0.0, 1e-5, 3e-5], "counts": [1, 2, 3]}).write(
        tmp_path / "uneven.csv", format="ascii.csv"
    )
    with pytest.raises(ConfigError):
        read_trace(tmp_path / "uneven.csv")


def test_single_bin_table(tmp_path):
    Table({"t_start_s": [0.0], "counts": [1]}).write(tmp_path / "one.csv", format="ascii.csv")
    with pytest.raises(ConfigError):
        read_trace(tmp_path / "one.csv")


def test_trace_table_meta(trace):
    table = trace_to_table(trace)
    assert table.meta["dwell_s"] == trace.dwell
    assert table["t_start_s"][1] - table["t_start_s"][0] == pytest.approx(trace.dwell)


def test_estimate_table_round_trip(tmp_path):
    records = [
        EstimateRecord(f0_hat=1e6, df0=2e3),
        EstimateRecord(
            f0_hat=2e6, flags=frozenset({EstimateFlag.NO_LOCK, EstimateFlag.PERIODS_TRUNCATED})
        ),
    ]
    table = estimates_to_table(records, t=[0.0, 0.01])
    assert table.colnames[0] == "t_s"
    assert "f0_hz" in table.colnames
    table.write(tmp_path / "estimates.csv", format="ascii.csv")
    loaded = sanitize_estimate_table(Table.read(tmp_path / "estimates.csv", format="ascii.csv"))
    assert list(loaded["flags"]) == ["", "no_lock|periods_truncated"]


def test_empty_estimate_table():
    assert len(estimates_to_table([])) == 0


def test_closed_loop_table(params, sweep):
    result = run_closed_loop(params, sweep, None, duration=0.06, noise=NoiseMode.NONE)
    table = closed_loop_to_table(result)
    assert len(table) == 3
    assert set(table["lock"]) <= {0, 1}
    np.testing.assert_allclose(table["window_high_hz"] - table["window_low_hz"], 30e6)
