import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml
from loguru import logger

from src.model.chain import KINDS, ZERO_MODE_POLICIES, WINDOW_EPS, chain_params
from src.model.densities import BAND_EPS, DEFAULT_EPSILON
from src.model.errors import ConfigError, DomainError
from src.model.gaussian import DEFAULT_CLUSTER_SIZE
from src.model.hydro import CLOSED, EQUILIBRIUM_TOLERANCE, N_FLOOR, PERIODIC
from src.utils.constants import DENSITY_OBSERVABLES, STATE_TYPES, TASKS, TIME_SPACINGS


@dataclass(frozen=True)
class SettingsConfig:
    THREADS: int = 1
    SEED: int = 0
    OUTPUT_DIR: Optional[str] = None
    QUIET: bool = False


@dataclass(frozen=True)
class ChainConfig:
    # None 表示无限链
    N_PARTICLES: Optional[int] = 64
    MASS: float = 1.0
    NU2: float = 1.0
    K: float = 0.0
    SPACING: float = 1.0
    HBAR: float = 1.0
    KIND: Optional[str] = None
    ZERO_MODE: str = "limit"


@dataclass(frozen=True)
class StateConfig:
    TYPE: str = "product"
    DQ2: float = 0.5
    DP2: float = 0.5
    SIGMA_QP: float = 0.0
    DRIFT_V0: float = 0.0
    # 每项为实数或 [re, im]
    MODE_AMPLITUDES: Tuple[Any, ...] = ()
    CLUSTER_SIZE: int = DEFAULT_CLUSTER_SIZE
    DISPLACEMENT_AMPLITUDE: float = 0.0
    DISPLACEMENT_WAVELENGTH: Optional[float] = None
    # 无限链上观察窗口的格点数
    SITES: int = 32


@dataclass(frozen=True)
class GridsConfig:
    T_START: float = 0.0
    T_STOP: float = 10.0
    T_COUNT: int = 11
    T_SPACING: str = "linear"
    K_VALUES: Tuple[float, ...] = ()
    K_COUNT: int = 32
    X_COUNT: Optional[int] = None


@dataclass(frozen=True)
class AnalysisConfig:
    TASKS: Tuple[str, ...] = ("modes",)


@dataclass(frozen=True)
class SubsectionConfig:
    M: int = 5
    START: int = 0
    ENERGY: bool = False


@dataclass(frozen=True)
class DensitiesConfig:
    EPSILON: float = DEFAULT_EPSILON
    OBSERVABLES: Tuple[str, ...] = DENSITY_OBSERVABLES
    SAMPLES: int = 0


@dataclass(frozen=True)
class HydroConfig:
    SMEARING_WIDTH: float = 5.0
    BOUNDARY: str = CLOSED
    N_FLOOR: float = N_FLOOR
    WAVELENGTH: float = 50.0
    AMPLITUDE: float = 0.01
    COURANT: float = 0.5


@dataclass(frozen=True)
class TolerancesConfig:
    EQUILIBRIUM: float = EQUILIBRIUM_TOLERANCE
    WINDOW_EPS: float = WINDOW_EPS
    BAND_EPS: float = BAND_EPS


SECTIONS = ("SETTINGS", "CHAIN", "STATE", "GRIDS", "ANALYSIS", "SUBSECTION", "DENSITIES", "HYDRO", "TOLERANCES")


@dataclass(frozen=True)
class Config:
    SETTINGS: SettingsConfig = field(default_factory=SettingsConfig)
    CHAIN: ChainConfig = field(default_factory=ChainConfig)
    STATE: StateConfig = field(default_factory=StateConfig)
    GRIDS: GridsConfig = field(default_factory=GridsConfig)
    ANALYSIS: AnalysisConfig = field(default_factory=AnalysisConfig)
    SUBSECTION: SubsectionConfig = field(default_factory=SubsectionConfig)
    DENSITIES: DensitiesConfig = field(default_factory=DensitiesConfig)
    HYDRO: HydroConfig = field(default_factory=HydroConfig)
    TOLERANCES: TolerancesConfig = field(default_factory=TolerancesConfig)

    @classmethod
    def load(cls, path: str = "config.yaml") -> "Config":
        """
        从 YAML 或 JSON 文件加载场景配置（JSON 是 YAML 的子集，共用一个解析器）。

        Args:
            path: 配置文件路径，默认为 "config.yaml"。

        Returns:
            配置对象实例。

        Raises:
            FileNotFoundError: 如果配置文件不存在。
            ConfigError: 文件无法解析或字段非法。
        """
        config_path = Path(path)
        if not config_path.exists():
            logger.error(f"Configuration file not found: {path}")
            raise FileNotFoundError(f"Configuration file not found: {path}")

        try:
            with config_path.open("r", encoding="utf-8") as file:
                data = yaml.safe_load(file) or {}  # 空文件返回空字典
        except yaml.YAMLError as e:
            logger.error(f"Failed to parse configuration file {path}: {e}")
            raise ConfigError("<document>", f"cannot parse {path}: {e}") from e

        try:
            return cls.from_dict(data)
        except ConfigError as e:
            logger.error(f"Invalid configuration in {path}: {e}")
            raise

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Config":
        """
        由字典构造并校验配置，列表统一转为元组。

        Raises:
            ConfigError: 带字段路径的校验错误。
        """
        if not isinstance(data, dict):
            raise ConfigError("<document>", "top level must be a mapping")
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigError(unknown[0], "unknown section")

        config = cls(
            SETTINGS=_create_settings_config(_section(data, "SETTINGS")),
            CHAIN=_create_chain_config(_section(data, "CHAIN")),
            STATE=_create_state_config(_section(data, "STATE")),
            GRIDS=_create_grids_config(_section(data, "GRIDS")),
            ANALYSIS=_create_analysis_config(_section(data, "ANALYSIS")),
            SUBSECTION=_create_subsection_config(_section(data, "SUBSECTION")),
            DENSITIES=_create_densities_config(_section(data, "DENSITIES")),
            HYDRO=_create_hydro_config(_section(data, "HYDRO")),
            TOLERANCES=_create_tolerances_config(_section(data, "TOLERANCES")),
        )
        _check_consistency(config)
        return config

    def to_dict(self) -> Dict[str, Any]:
        """可直接写成 JSON 的字典，元组转为列表。"""
        return _plain(asdict(self))

    def config_hash(self) -> str:
        """规范 JSON（键排序、紧凑分隔符）的 SHA-256。"""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_tasks(self, tasks: Tuple[str, ...]) -> "Config":
        """返回只替换了 ANALYSIS.TASKS 的副本。"""
        return Config.from_dict({**self.to_dict(), "ANALYSIS": {"TASKS": list(tasks)}})


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _section(data: dict, name: str) -> dict:
    section = data.get(name)
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(name, "must be a mapping")
    return section


def _check_keys(data: dict, name: str, schema) -> None:
    allowed = {f.name for f in fields(schema)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}", "unknown field")


def _number(data: dict, path: str, default, minimum: Optional[float] = None, positive: bool = False,
            optional: bool = False) -> Optional[float]:
    value = data.get(path.split(".")[-1], default)
    if value is None and optional:
        return None
    return _checked_number(value, path, minimum, positive)


def _checked_number(value: Any, path: str, minimum: Optional[float] = None, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    value = float(value)
    if value != value or value in (float("inf"), float("-inf")):
        raise ConfigError(path, "must be finite")
    if positive and not value > 0.0:
        raise ConfigError(path, f"must be positive, got {value:g}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum:g}, got {value:g}")
    return value


def _integer(data: dict, path: str, default, minimum: Optional[int] = None, optional: bool = False) -> Optional[int]:
    key = path.split(".")[-1]
    value = data.get(key, default)
    if value is None and optional:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return int(value)


def _choice(data: dict, path: str, default, choices, optional: bool = False) -> Optional[str]:
    key = path.split(".")[-1]
    value = data.get(key, default)
    if value is None and optional:
        return None
    if value not in choices:
        raise ConfigError(path, f"expected one of {list(choices)}, got {value!r}")
    return value


def _flag(data: dict, path: str, default: bool) -> bool:
    value = data.get(path.split(".")[-1], default)
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected true or false, got {value!r}")
    return value


def _create_settings_config(data: dict) -> SettingsConfig:
    _check_keys(data, "SETTINGS", SettingsConfig)
    output_dir = data.get("OUTPUT_DIR")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigError("SETTINGS.OUTPUT_DIR", "expected a path string")
    return SettingsConfig(
        THREADS=_integer(data, "SETTINGS.THREADS", 1, minimum=1),
        SEED=_integer(data, "SETTINGS.SEED", 0, minimum=0),
        OUTPUT_DIR=output_dir,
        QUIET=_flag(data, "SETTINGS.QUIET", False),
    )


def _create_chain_config(data: dict) -> ChainConfig:
    _check_keys(data, "CHAIN", ChainConfig)
    chain = ChainConfig(
        N_PARTICLES=_integer(data, "CHAIN.N_PARTICLES", 64, minimum=2, optional=True),
        MASS=_number(data, "CHAIN.MASS", 1.0, positive=True),
        NU2=_number(data, "CHAIN.NU2", 1.0, minimum=0.0),
        K=_number(data, "CHAIN.K", 0.0, minimum=0.0),
        SPACING=_number(data, "CHAIN.SPACING", 1.0, minimum=0.0),
        HBAR=_number(data, "CHAIN.HBAR", 1.0, positive=True),
        KIND=_choice(data, "CHAIN.KIND", None, KINDS, optional=True),
        ZERO_MODE=_choice(data, "CHAIN.ZERO_MODE", "limit", ZERO_MODE_POLICIES),
    )
    if chain.NU2 == 0.0 and chain.K == 0.0:
        raise ConfigError("CHAIN.NU2", "NU2 = 0 and K = 0 leave the chain without dynamics")
    try:
        chain_params(chain.N_PARTICLES, chain.MASS, chain.NU2, chain.K, chain.SPACING, chain.HBAR)
    except DomainError as e:
        raise ConfigError("CHAIN", str(e)) from e
    return chain


def _amplitudes(data: dict) -> Tuple[Any, ...]:
    values = data.get("MODE_AMPLITUDES", ())
    if not isinstance(values, (list, tuple)):
        raise ConfigError("STATE.MODE_AMPLITUDES", "expected a list")
    out = []
    for i, value in enumerate(values):
        path = f"STATE.MODE_AMPLITUDES[{i}]"
        if isinstance(value, (list, tuple)):
            if len(value) != 2:
                raise ConfigError(path, "complex amplitudes are written as [re, im]")
            out.append(tuple(_checked_number(v, path) for v in value))
        else:
            out.append(_checked_number(value, path))
    return tuple(out)


def _create_state_config(data: dict) -> StateConfig:
    _check_keys(data, "STATE", StateConfig)
    state = StateConfig(
        TYPE=_choice(data, "STATE.TYPE", "product", STATE_TYPES),
        DQ2=_number(data, "STATE.DQ2", 0.5, positive=True),
        DP2=_number(data, "STATE.DP2", 0.5, positive=True),
        SIGMA_QP=_number(data, "STATE.SIGMA_QP", 0.0),
        DRIFT_V0=_number(data, "STATE.DRIFT_V0", 0.0),
        MODE_AMPLITUDES=_amplitudes(data),
        CLUSTER_SIZE=_integer(data, "STATE.CLUSTER_SIZE", DEFAULT_CLUSTER_SIZE, minimum=0),
        DISPLACEMENT_AMPLITUDE=_number(data, "STATE.DISPLACEMENT_AMPLITUDE", 0.0),
        DISPLACEMENT_WAVELENGTH=_number(data, "STATE.DISPLACEMENT_WAVELENGTH", None, positive=True, optional=True),
        SITES=_integer(data, "STATE.SITES", 32, minimum=1),
    )
    return state


def _create_grids_config(data: dict) -> GridsConfig:
    _check_keys(data, "GRIDS", GridsConfig)
    k_values = data.get("K_VALUES", ())
    if not isinstance(k_values, (list, tuple)):
        raise ConfigError("GRIDS.K_VALUES", "expected a list")
    k_values = tuple(_checked_number(k, f"GRIDS.K_VALUES[{i}]") for i, k in enumerate(k_values))
    if any(b <= a for a, b in zip(k_values, k_values[1:])):
        raise ConfigError("GRIDS.K_VALUES", "k grid must be strictly increasing")

    grids = GridsConfig(
        T_START=_number(data, "GRIDS.T_START", 0.0, minimum=0.0),
        T_STOP=_number(data, "GRIDS.T_STOP", 10.0, minimum=0.0),
        T_COUNT=_integer(data, "GRIDS.T_COUNT", 11, minimum=1),
        T_SPACING=_choice(data, "GRIDS.T_SPACING", "linear", TIME_SPACINGS),
        K_VALUES=k_values,
        K_COUNT=_integer(data, "GRIDS.K_COUNT", 32, minimum=1),
        X_COUNT=_integer(data, "GRIDS.X_COUNT", None, minimum=3, optional=True),
    )
    if grids.T_COUNT > 1 and not grids.T_STOP > grids.T_START:
        raise ConfigError("GRIDS.T_STOP", "time grid must be strictly increasing (T_STOP > T_START)")
    if grids.T_SPACING == "log" and not grids.T_START > 0.0:
        raise ConfigError("GRIDS.T_START", "log spacing needs T_START > 0")
    return grids


def _create_analysis_config(data: dict) -> AnalysisConfig:
    _check_keys(data, "ANALYSIS", AnalysisConfig)
    tasks = data.get("TASKS", ["modes"])
    if isinstance(tasks, str):
        tasks = [tasks]
    if not isinstance(tasks, (list, tuple)) or not tasks:
        raise ConfigError("ANALYSIS.TASKS", "expected a non-empty list of tasks")
    for i, task in enumerate(tasks):
        if task not in TASKS:
            raise ConfigError(f"ANALYSIS.TASKS[{i}]", f"unknown task {task!r}, expected one of {list(TASKS)}")
    return AnalysisConfig(TASKS=tuple(tasks))


def _create_subsection_config(data: dict) -> SubsectionConfig:
    _check_keys(data, "SUBSECTION", SubsectionConfig)
    return SubsectionConfig(
        M=_integer(data, "SUBSECTION.M", 5, minimum=1),
        START=_integer(data, "SUBSECTION.START", 0, minimum=0),
        ENERGY=_flag(data, "SUBSECTION.ENERGY", False),
    )


def _create_densities_config(data: dict) -> DensitiesConfig:
    _check_keys(data, "DENSITIES", DensitiesConfig)
    observables = data.get("OBSERVABLES", list(DENSITY_OBSERVABLES))
    if not isinstance(observables, (list, tuple)):
        raise ConfigError("DENSITIES.OBSERVABLES", "expected a list")
    for i, name in enumerate(observables):
        if name not in DENSITY_OBSERVABLES:
            raise ConfigError(f"DENSITIES.OBSERVABLES[{i}]", f"unknown observable {name!r}")
    return DensitiesConfig(
        EPSILON=_number(data, "DENSITIES.EPSILON", DEFAULT_EPSILON, positive=True),
        OBSERVABLES=tuple(observables),
        SAMPLES=_integer(data, "DENSITIES.SAMPLES", 0, minimum=0),
    )


def _create_hydro_config(data: dict) -> HydroConfig:
    _check_keys(data, "HYDRO", HydroConfig)
    courant = _number(data, "HYDRO.COURANT", 0.5, positive=True)
    if courant > 1.0:
        raise ConfigError("HYDRO.COURANT", f"leapfrog needs a Courant number <= 1, got {courant:g}")
    return HydroConfig(
        SMEARING_WIDTH=_number(data, "HYDRO.SMEARING_WIDTH", 5.0, positive=True),
        BOUNDARY=_choice(data, "HYDRO.BOUNDARY", CLOSED, (CLOSED, PERIODIC)),
        N_FLOOR=_number(data, "HYDRO.N_FLOOR", N_FLOOR, positive=True),
        WAVELENGTH=_number(data, "HYDRO.WAVELENGTH", 50.0, positive=True),
        AMPLITUDE=_number(data, "HYDRO.AMPLITUDE", 0.01),
        COURANT=courant,
    )


def _create_tolerances_config(data: dict) -> TolerancesConfig:
    _check_keys(data, "TOLERANCES", TolerancesConfig)
    return TolerancesConfig(
        EQUILIBRIUM=_number(data, "TOLERANCES.EQUILIBRIUM", EQUILIBRIUM_TOLERANCE, positive=True),
        WINDOW_EPS=_number(data, "TOLERANCES.WINDOW_EPS", WINDOW_EPS, positive=True),
        BAND_EPS=_number(data, "TOLERANCES.BAND_EPS", BAND_EPS, positive=True),
    )


def _check_consistency(config: Config) -> None:
    chain, state = config.CHAIN, config.STATE
    finite = chain.N_PARTICLES is not None
    bound = chain.K > 0.0

    if state.TYPE == "product" and state.DQ2 * state.DP2 - state.SIGMA_QP ** 2 < 0.25 * chain.HBAR ** 2 * (1.0 - 1.0e-12):
        raise ConfigError("STATE.DQ2", "widths violate DQ2*DP2 - SIGMA_QP^2 >= HBAR^2/4")
    if state.TYPE == "coherent":
        if not finite:
            raise ConfigError("STATE.TYPE", "coherent states need a finite chain (CHAIN.N_PARTICLES)")
        if state.MODE_AMPLITUDES and len(state.MODE_AMPLITUDES) != chain.N_PARTICLES:
            raise ConfigError("STATE.MODE_AMPLITUDES", f"expected {chain.N_PARTICLES} amplitudes")

    if chain.KIND is not None:
        expected = "finite-dft" if finite else ("infinite-bound" if bound else "infinite-simple")
        if chain.KIND != expected:
            raise ConfigError("CHAIN.KIND", f"{chain.KIND} does not match the chain, expected {expected}")
    if not finite and bound:
        params = chain_params(None, chain.MASS, chain.NU2, chain.K, chain.SPACING, chain.HBAR)
        if not params.bessel_valid:
            raise ConfigError("CHAIN.K", f"infinite bound chains need gamma < 0.1, got {params.gamma:.4g}")

    size = chain.N_PARTICLES if finite else state.SITES
    block = config.SUBSECTION
    if "subsection" in config.ANALYSIS.TASKS and block.START + block.M > size:
        raise ConfigError("SUBSECTION.M", f"block [{block.START}, {block.START + block.M}) exceeds {size} sites")
    if "subsection" in config.ANALYSIS.TASKS and block.ENERGY and not bound:
        raise ConfigError("SUBSECTION.ENERGY", "subsection energy needs a bound chain (CHAIN.K > 0)")
    if "modes" in config.ANALYSIS.TASKS and not finite:
        raise ConfigError("ANALYSIS.TASKS", "modes need a finite chain")
    if "compare" in config.ANALYSIS.TASKS:
        if not finite or chain.SPACING <= 0.0:
            raise ConfigError("ANALYSIS.TASKS", "compare needs a finite chain with positive spacing")
        if config.GRIDS.T_SPACING != "linear" or config.GRIDS.T_START != 0.0:
            raise ConfigError("GRIDS.T_SPACING", "compare needs a linear time grid starting at 0")


def get_config(path: str = "config.yaml") -> Config:
    """
    获取配置实例，同一路径只加载一次。

    Args:
        path: 配置文件路径，默认为 "config.yaml"。

    Returns:
        配置对象实例。
    """
    if not hasattr(get_config, "_configs"):
        get_config._configs = {}
    key = str(Path(path).resolve())
    if key not in get_config._configs:
        get_config._configs[key] = Config.load(path)
    return get_config._configs[key]
