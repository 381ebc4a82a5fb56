"""Submodule to read and write photon traces.

Two formats are supported: an ascii CSV with the columns (t_start_s, counts)
and a little-endian binary framing

    u64 number of bins | f64 dwell (s) | u32 counts per bin
"""

import struct
from pathlib import Path

import numpy as np
from astropy.table import Table

from ...simulator import PhotonTrace
from ...util import ConfigError

_HEADER = struct.Struct("<Qd")
BINARY_SUFFIXES = (".bin", ".dat")


def sanitize_trace_table(trace_table: Table) -> Table:
    """Unify the column names of a trace table to (t_start_s, counts)."""
    # Alternative column names, unified to our standard
    renames = {"t": "t_start_s", "time": "t_start_s", "t_s": "t_start_s", "count": "counts"}
    for old, new in renames.items():
        if old in trace_table.colnames and new not in trace_table.colnames:
            trace_table.rename_column(old, new)
    for col in ["t_start_s", "counts"]:
        assert col in trace_table.colnames, f"Column {col} not found in trace table."
    return trace_table


def trace_to_table(trace: PhotonTrace) -> Table:
    t_start = trace.t0 + np.arange(trace.n_bins) * trace.dwell
    table = Table({"t_start_s": t_start, "counts": trace.counts})
    table.meta["dwell_s"] = trace.dwell
    return table


def table_to_trace(trace_table: Table) -> PhotonTrace:
    trace_table = sanitize_trace_table(trace_table)
    t_start = np.asarray(trace_table["t_start_s"], dtype=float)
    if len(t_start) < 2:
        raise ConfigError("A trace table needs at least two bins to infer the dwell.")
    steps = np.diff(t_start)
    dwell = float(np.mean(steps))
    if not np.allclose(steps, dwell, rtol=1e-6, atol=0):
        raise ConfigError("The bins of the trace table are not equally spaced.")
    return PhotonTrace(dwell=dwell, counts=np.asarray(trace_table["counts"]), t0=float(t_start[0]))


def write_trace_binary(trace: PhotonTrace, fpath: Path):
    counts = np.asarray(trace.counts)
    if not np.issubdtype(counts.dtype, np.integer):
        raise ConfigError("The binary trace format stores integer counts only.")
    with open(fpath, "wb") as stream:
        stream.write(_HEADER.pack(trace.n_bins, trace.dwell))
        stream.write(counts.astype("<u4").tobytes())


def read_trace_binary(fpath: Path) -> PhotonTrace:
    data = Path(fpath).read_bytes()
    if len(data) < _HEADER.size:
        raise ConfigError(f"{fpath} is too short for a trace header.")
    n_bins, dwell = _HEADER.unpack_from(data)
    expected = _HEADER.size + 4 * n_bins
    if len(data) != expected:
        raise ConfigError(f"{fpath} holds {len(data)} bytes, the header announces {expected}.")
    counts = np.frombuffer(data, dtype="<u4", offset=_HEADER.size).astype(np.int64)
    return PhotonTrace(dwell=dwell, counts=counts)


def write_trace(trace: PhotonTrace, fpath: Path):
    """Write a trace; the suffix selects binary (.bin/.dat) or CSV."""
    fpath = Path(fpath)
    try:
        if fpath.suffix in BINARY_SUFFIXES:
            write_trace_binary(trace, fpath)
        else:
            trace_to_table(trace).write(fpath, format="ascii.csv", overwrite=True)
    except OSError as error:
        raise ConfigError(f"Could not write trace to {fpath}: {error}") from error


def read_trace(fpath: Path) -> PhotonTrace:
    """Read a trace written by `write_trace` (or any CSV with compatible columns)."""
    fpath = Path(fpath)
    try:
        if fpath.suffix in BINARY_SUFFIXES:
            return read_trace_binary(fpath)
        return table_to_trace(Table.read(fpath, format="ascii.csv"))
    except OSError as error:
        raise ConfigError(f"Could not read trace from {fpath}: {error}") from error
