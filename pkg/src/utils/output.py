import csv
import math
from pathlib import Path
from typing import Optional

from loguru import logger
from rich import box
from rich.console import Console
from rich.table import Table

from src.model.errors import DomainError
from src.model.report import TableReport
from src.utils.constants import CSV_FLOAT_FORMAT, CSV_LINE_TERMINATOR

VERSION = "1.0"


def show_banner(console: Optional[Console] = None, subtitle: str = "") -> None:
    """显示程序名称与版本号。

    Args:
        console: 可选的 rich.console.Console 实例，默认创建新实例。
        subtitle: 额外显示的一行（通常是本次运行的任务）。
    """
    console = console or Console()

    table = Table(
        show_header=False,
        box=box.DOUBLE,
        border_style="bright_cyan",
        pad_edge=False,
        width=49,
    )
    table.add_column("Content", style="bright_cyan", justify="center")

    table.add_row(f"chain-hydro-tools {VERSION}")
    table.add_row("─" * 43)
    table.add_row("Gaussian oscillator chains → hydrodynamics")
    if subtitle:
        table.add_row("")
        table.add_row(subtitle)

    console.print(table, justify="center")


def format_value(value: float) -> str:
    """17 位有效数字；nan 保留（未定义的比值），±inf 拒绝。"""
    if math.isinf(value):
        raise DomainError(f"refusing to write non-finite value {value}")
    return CSV_FLOAT_FORMAT % value


def emit_csv(report: TableReport, path) -> Path:
    """
    把结果表写成 CSV：表头一行，'.' 小数点，17 位有效数字，LF 换行。

    Args:
        report: 结果表。
        path: 输出文件路径，父目录不存在时自动创建。

    Returns:
        写出的文件路径。

    Raises:
        DomainError: 表中含 ±inf。
        OSError: 写文件失败，消息中带路径。
    """
    path = Path(path)
    # 先格式化，出错时不留下半截文件
    rows = [[format_value(v) for v in row] for row in report.rows()]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as file:
            writer = csv.writer(file, lineterminator=CSV_LINE_TERMINATOR)
            writer.writerow(report.columns)
            writer.writerows(rows)
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise OSError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {len(rows)} rows to {path}")
    return path
