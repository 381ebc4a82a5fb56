from .estimate_table import closed_loop_to_table, estimates_to_table, sanitize_estimate_table
from .trace_table import read_trace, sanitize_trace_table, trace_to_table, write_trace
