import argparse
import sys
from typing import List, Optional

from loguru import logger

from src.model.errors import ChainError, ConfigError
from src.utils.constants import (
    DEFAULT_CONFIG_PATH, EXIT_CODE_NAMES, EXIT_CONFIG_ERROR, EXIT_IO_ERROR, EXIT_NUMERICAL_ERROR, EXIT_OK, LOG_FILE, OUTPUT_DIR_ENV,
    TASKS,
)

# 常量定义
CONSOLE_LOG_FORMAT = (
    "<light-cyan>{time:HH:mm:ss}</light-cyan> | "
    "<level>{level: <8}</level> | "
    "<fg #ffffff>{name}:{line}</fg #ffffff> - <bold>{message}</bold>"
)
FILE_LOG_FORMAT = (
    "{time:YYYY-MM-DD HH:mm:ss} | {level} | {name}:{line} - {message}"
)


def configure_logging(quiet: bool = False, log_file: Optional[str] = LOG_FILE):
    """配置日志系统，包含控制台和文件输出；quiet 时控制台只显示警告以上。"""
    logger.remove()  # 移除默认处理器

    # 配置控制台日志
    logger.add(
        sys.stdout,
        colorize=True,
        format=CONSOLE_LOG_FORMAT,
        level="WARNING" if quiet else "INFO"
    )

    # 配置文件日志
    if log_file:
        logger.add(
            log_file,
            rotation="10 MB",
            retention="1 month",
            format=FILE_LOG_FORMAT,
            level="DEBUG"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chain-hydro",
        description="Gaussian oscillator-chain simulator: decoherence, coarse graining and hydrodynamics.",
    )
    subcommands = parser.add_subparsers(dest="command", required=True)
    for name in ("run",) + TASKS:
        helptext = "run the tasks listed in ANALYSIS.TASKS" if name == "run" else f"run the {name} analysis"
        sub = subcommands.add_parser(name, help=helptext)
        sub.add_argument("--config", default=DEFAULT_CONFIG_PATH, help="scenario file (JSON or YAML)")
        sub.add_argument("--out", default=None, help=f"output directory (default: ${OUTPUT_DIR_ENV} or results/)")
        sub.add_argument("--quiet", action="store_true", help="suppress progress output")
        sub.add_argument("--log-file", default=LOG_FILE, help="log file path, empty to disable")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主函数：解析参数、配置日志并运行场景，返回退出码。"""
    args = build_parser().parse_args(argv)
    configure_logging(args.quiet, args.log_file or None)
    tasks = None if args.command == "run" else [args.command]
    code = EXIT_OK
    try:
        from process import start  # 延迟导入，优化启动速度
        start(args.config, out_dir=args.out, tasks=tasks, quiet=True if args.quiet else None)
    except ConfigError as e:
        logger.error(f"配置错误: {e}")
        code = EXIT_CONFIG_ERROR
    except ChainError as e:
        logger.error(f"数值计算失败: {e}")
        code = EXIT_NUMERICAL_ERROR
    except OSError as e:
        logger.error(f"读写失败: {e}")
        code = EXIT_IO_ERROR
    logger.debug(f"{args.command} finished with exit code {code} ({EXIT_CODE_NAMES[code]})")
    return code


if __name__ == "__main__":
    sys.exit(main())
