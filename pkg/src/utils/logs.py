import json
import threading
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from loguru import logger

from src.utils.constants import MANIFEST_NAME

_manifest_lock = threading.Lock()


def write_manifest(out_dir, files: Sequence[str], config_hash: str, timings: Dict[str, float],
                   extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    在输出目录写入运行清单 manifest.json（键排序、LF 换行）。

    Args:
        out_dir: 输出目录。
        files: 本次运行写出的文件（相对 out_dir 的路径）。
        config_hash: 配置的 SHA-256。
        timings: 各任务的墙钟耗时（秒）。
        extra: 附加字段（任务列表、随机种子等）。

    Returns:
        清单文件路径。

    Raises:
        FileNotFoundError: 清单中列出的文件不存在。
    """
    out_dir = Path(out_dir)
    missing = [name for name in files if not (out_dir / name).is_file()]
    if missing:
        logger.error(f"Manifest references missing files: {missing}")
        raise FileNotFoundError(f"manifest references missing files in {out_dir}: {missing}")

    manifest = {
        "config_hash": config_hash,
        "files": sorted(files),
        "timings": {name: round(float(seconds), 6) for name, seconds in timings.items()},
        **(extra or {}),
    }
    path = out_dir / MANIFEST_NAME
    with _manifest_lock:
        with path.open("w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(manifest, sort_keys=True, indent=2))
            f.write("\n")
    logger.success(f"Manifest with {len(files)} files written to {path}")
    return path
