from .config_setup import SpectrumDemodConfig, read_config_file
from .file_io import (
    closed_loop_to_table,
    estimates_to_table,
    read_trace,
    sanitize_estimate_table,
    sanitize_trace_table,
    trace_to_table,
    write_trace,
)
