from dataclasses import dataclass
from typing import Iterator, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class TableReport:
    """
    通用列式结果表，供 CSV 输出。

    Attributes:
        label: 结果名称，用作默认文件名。
        columns: 列名。
        data: 形状为 (行数, 列数) 的数组。
    """
    label: str
    columns: Tuple[str, ...]
    data: np.ndarray

    def rows(self) -> Iterator[Tuple[float, ...]]:
        for row in np.asarray(self.data, dtype=float).reshape(-1, len(self.columns)):
            yield tuple(float(v) for v in row)


def table_report(label: str, columns: Sequence[str], *series: Sequence[float]) -> TableReport:
    """按列拼装结果表，各列长度必须一致。"""
    data = np.column_stack([np.asarray(s, dtype=float).ravel() for s in series]) if series else np.empty((0, len(columns)))
    if series and data.shape[1] != len(columns):
        raise ValueError(f"{label}: {len(columns)} columns declared, {data.shape[1]} given")
    return TableReport(label=label, columns=tuple(columns), data=data)
