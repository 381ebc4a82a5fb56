"""Submodule turning estimates and tracking runs into tables."""

from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from astropy.table import Table

from ...util import flags_from_str, flags_to_str

if TYPE_CHECKING:
    from ...demod import EstimateRecord
    from ...tracker import ClosedLoopResult


def estimates_to_table(
    records: Sequence["EstimateRecord"], t: Optional[Sequence[float]] = None
) -> Table:
    """One row per estimate with the columns of `EstimateRecord.as_row`."""
    rows = [record.as_row() for record in records]
    table = Table(rows=rows) if rows else Table(names=("f0_hz", "df0_hz"))
    if t is not None:
        table.add_column(np.asarray(t, dtype=float), name="t_s", index=0)
    return table


def sanitize_estimate_table(estimate_table: Table) -> Table:
    """Restore the flags column of a table read back from disk."""
    if "flags" in estimate_table.colnames:
        flags = [flags_from_str(value) for value in estimate_table["flags"]]
        estimate_table["flags"] = [flags_to_str(flag) for flag in flags]
    return estimate_table


def closed_loop_to_table(result: "ClosedLoopResult") -> Table:
    """Per-sample table with the columns t_s, b_true_T, b_est_T, f_c_hz, lock."""
    return Table(
        {
            "t_s": result.t,
            "b_true_T": result.b_true,
            "b_est_T": result.b_est,
            "f_c_hz": result.f_c,
            "lock": result.lock.astype(int),
            "window_low_hz": result.window_low,
            "window_high_hz": result.window_high,
        }
    )
