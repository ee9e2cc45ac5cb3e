from typing import Dict, Tuple

# 退出码
EXIT_OK: int = 0
EXIT_CONFIG_ERROR: int = 2
EXIT_NUMERICAL_ERROR: int = 3
EXIT_IO_ERROR: int = 4

# 可用的分析任务（同时也是命令行子命令）
TASKS: Tuple[str, ...] = ("modes", "evolve", "subsection", "densities", "hydro", "equilibrium", "compare")

# CSV 输出：17 位有效数字足以无损往返 float64
CSV_FLOAT_FORMAT: str = "%.17g"
CSV_LINE_TERMINATOR: str = "\n"

MANIFEST_NAME: str = "manifest.json"
DEFAULT_CONFIG_PATH: str = "config.yaml"
DEFAULT_OUTPUT_DIR: str = "results"
LOG_FILE: str = "logs/app.log"

# 未指定 --out 且配置中没有 OUTPUT_DIR 时使用的环境变量
OUTPUT_DIR_ENV: str = "CHAIN_HYDRO_OUTPUT_DIR"

TIME_SPACINGS: Tuple[str, ...] = ("linear", "log")
STATE_TYPES: Tuple[str, ...] = ("product", "coherent")
DENSITY_OBSERVABLES: Tuple[str, ...] = ("n", "g", "tau")

EXIT_CODE_NAMES: Dict[int, str] = {
    EXIT_OK: "success",
    EXIT_CONFIG_ERROR: "config error",
    EXIT_NUMERICAL_ERROR: "numerical failure",
    EXIT_IO_ERROR: "I/O error",
}
