from dataclasses import dataclass, field
from typing import List, Tuple

from loguru import logger
from rich import box
from rich.console import Console
from rich.table import Table as RichTable
from tabulate import tabulate


@dataclass
class TaskRecord:
    task: str
    seconds: float
    files: List[str] = field(default_factory=list)
    rows: int = 0
    warnings: Tuple[str, ...] = ()


def print_run_stats(records: List[TaskRecord], console: Console = None, quiet: bool = False) -> str:
    """
    输出本次运行的统计信息：日志中写入纯文本表格，控制台显示彩色表格。

    Args:
        records: 各任务的执行记录。
        console: 可选的 rich 控制台。
        quiet: 为 True 时不在控制台输出。

    Returns:
        纯文本表格（tabulate 生成）。
    """
    if not records:
        logger.info("No task statistics available")
        return ""

    table_data = _prepare_table_data(records)
    total_seconds, total_rows, total_files = _calculate_totals(records)

    headers = ["Task", "Files", "Rows", "Warnings", "Time (s)"]
    plain_table = tabulate(
        table_data,
        headers=headers,
        tablefmt="double_grid",
        colalign=("left", "right", "right", "right", "right"),
    )
    logger.info(f"Run statistics ({len(records)} tasks)\n{plain_table}")

    if not quiet:
        console = console or Console()
        rich_table = RichTable(
            box=box.DOUBLE,
            border_style="bright_cyan",
            header_style="bold bright_cyan",
        )
        for header in headers:
            rich_table.add_column(header, justify="left" if header == "Task" else "right")
        for row in table_data:
            rich_table.add_row(*row)

        console.print(rich_table)
        console.print(f"Total files: {total_files}", style="green")
        console.print(f"Total rows: {total_rows:,}", style="green")
        console.print(f"Wall-clock time: {total_seconds:.3f} s", style="yellow")

    return plain_table


def _prepare_table_data(records: List[TaskRecord]) -> List[List[str]]:
    return [
        [record.task, str(len(record.files)), f"{record.rows:,}", str(len(record.warnings)), f"{record.seconds:.3f}"]
        for record in records
    ]


def _calculate_totals(records: List[TaskRecord]) -> Tuple[float, int, int]:
    """返回 (总耗时, 总行数, 总文件数)。"""
    return (
        sum(record.seconds for record in records),
        sum(record.rows for record in records),
        sum(len(record.files) for record in records),
    )
