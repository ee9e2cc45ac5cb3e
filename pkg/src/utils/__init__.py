from .config import Config, get_config
from .reader import read_csv, read_manifest
from .logs import write_manifest
from .output import emit_csv, show_banner
from .statistics import TaskRecord, print_run_stats

__all__ = [
    "Config",
    "get_config",
    "read_csv",
    "read_manifest",
    "write_manifest",
    "emit_csv",
    "show_banner",
    "TaskRecord",
    "print_run_stats",
]
