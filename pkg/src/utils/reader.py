import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Tuple

from loguru import logger


def read_csv(path: str) -> Tuple[Tuple[str, ...], List[Tuple[float, ...]]]:
    """
    读取 emit_csv 写出的文件。

    Args:
        path: CSV 文件路径。

    Returns:
        (表头, 数据行)，数值按 float 解析（包括 nan）。

    Raises:
        FileNotFoundError: 如果文件不存在。
        ValueError: 如果某行列数与表头不符。
    """
    file_path = Path(path)
    try:
        with file_path.open("r", encoding="utf-8", newline="") as file:
            reader = csv.reader(file)
            header = tuple(next(reader, ()))
            rows = []
            for line, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise ValueError(f"{file_path}:{line}: expected {len(header)} fields, got {len(row)}")
                rows.append(tuple(float(v) for v in row))
    except FileNotFoundError:
        logger.error(f"File not found: {file_path}")
        raise
    logger.debug(f"Loaded {len(rows)} rows from {file_path}")
    return header, rows


def read_manifest(path: str) -> Dict[str, Any]:
    """
    读取运行清单 manifest.json。

    Raises:
        FileNotFoundError: 如果文件不存在。
        json.JSONDecodeError: 如果 JSON 格式错误。
    """
    file_path = Path(path)
    try:
        with file_path.open("r", encoding="utf-8") as f:
            manifest = json.load(f)
        logger.debug(f"Loaded manifest from {file_path}")
        return manifest
    except FileNotFoundError:
        logger.error(f"Manifest not found: {file_path}")
        raise
    except json.JSONDecodeError as e:
        logger.error(f"Invalid JSON in manifest {file_path}: {e}")
        raise
