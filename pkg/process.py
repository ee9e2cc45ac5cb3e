import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from loguru import logger

import src.utils
from src.model.errors import ChainError, NumericalError
from src.model.scenario import Scenario
from src.utils.constants import DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV
from src.utils.logs import write_manifest
from src.utils.output import emit_csv, show_banner
from src.utils.statistics import TaskRecord, print_run_stats


def resolve_output_dir(config: src.utils.config.Config, out_dir: Optional[str] = None) -> Path:
    """输出目录优先级：--out > SETTINGS.OUTPUT_DIR > 环境变量 > 默认值。"""
    chosen = out_dir or config.SETTINGS.OUTPUT_DIR or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR
    return Path(chosen)


def run_scenario(config: src.utils.config.Config, out_dir: Optional[str] = None,
                 tasks: Optional[Sequence[str]] = None, quiet: Optional[bool] = None) -> Dict[str, Any]:
    """
    执行配置中选定的分析，写出 CSV 与运行清单。

    Args:
        config: 场景配置。
        out_dir: 输出目录，缺省时见 resolve_output_dir。
        tasks: 覆盖 ANALYSIS.TASKS 的任务列表。
        quiet: 覆盖 SETTINGS.QUIET。

    Returns:
        写入 manifest.json 的清单内容。

    Raises:
        ChainError: 任务失败（日志中带任务名与配置哈希）；其他未归类异常包装为 NumericalError。
        OSError: 输出目录不可写。
    """
    if tasks:
        config = config.with_tasks(tuple(tasks))
    quiet = config.SETTINGS.QUIET if quiet is None else quiet
    if not quiet:
        show_banner(subtitle=" · ".join(config.ANALYSIS.TASKS))

    target = resolve_output_dir(config, out_dir)
    target.mkdir(parents=True, exist_ok=True)
    config_hash = config.config_hash()
    logger.info(f"Running {list(config.ANALYSIS.TASKS)} -> {target} (config {config_hash[:12]})")

    files: List[str] = []
    timings: Dict[str, float] = {}
    records: List[TaskRecord] = []
    with ThreadPoolExecutor(max_workers=config.SETTINGS.THREADS) as executor:
        scenario = Scenario(config, executor=executor)
        for task in config.ANALYSIS.TASKS:
            started = time.perf_counter()
            try:
                reports = scenario.run(task)
            except (ChainError, OSError) as err:
                logger.error(f"[{task}] failed for config {config_hash[:12]}: {err}")
                raise
            except Exception as err:
                # 未归类的异常按数值失败处理，退出码为 3
                logger.error(f"[{task}] failed for config {config_hash[:12]}: {type(err).__name__}: {err}")
                raise NumericalError(f"{task}: unexpected {type(err).__name__}: {err}") from err

            written = []
            rows = 0
            for report in reports:
                name = f"{task}_{report.label}.csv"
                emit_csv(report, target / name)
                written.append(name)
                rows += report.data.shape[0]
            seconds = time.perf_counter() - started
            timings[task] = seconds
            files.extend(written)
            warnings = tuple(scenario.warnings.get(task, ()))
            records.append(TaskRecord(task=task, seconds=seconds, files=written, rows=rows, warnings=warnings))
            logger.success(f"[{task}] wrote {len(written)} files in {seconds:.3f}s")

    manifest = {
        "config_hash": config_hash,
        "files": sorted(files),
        "seed": config.SETTINGS.SEED,
        "tasks": list(config.ANALYSIS.TASKS),
        "warnings": {task: list(messages) for task, messages in scenario.warnings.items()},
    }
    write_manifest(target, files, config_hash, timings,
                   extra={k: manifest[k] for k in ("seed", "tasks", "warnings")})
    print_run_stats(records, quiet=quiet)
    manifest["timings"] = timings
    return manifest


def start(config_file: str = "config.yaml", out_dir: Optional[str] = None, tasks: Optional[Sequence[str]] = None,
          quiet: Optional[bool] = None) -> Dict[str, Any]:
    """程序入口：加载配置并运行场景。"""
    config = src.utils.get_config(config_file)
    return run_scenario(config, out_dir=out_dir, tasks=tasks, quiet=quiet)
