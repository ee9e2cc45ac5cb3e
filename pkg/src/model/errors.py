from typing import Any, Dict, Optional


class ChainError(Exception):
    """振子链模拟中所有错误的基类。"""


class DomainError(ChainError, ValueError):
    """参数超出函数定义域（非有限值、负参数、违反前置条件）。"""


class UnsupportedTopologyError(ChainError, ValueError):
    """操作不支持当前链拓扑（例如在无限链上求简正模）。"""


class ShapeError(ChainError, ValueError):
    """数组尺寸与链或窗口不匹配。"""


class InvalidStateError(ChainError, ValueError):
    """高斯态违反不确定性关系或协方差不合法。"""


class NoEquilibriumError(ChainError):
    """简单链（K = 0）不存在平衡极限。"""


class NumericalError(ChainError):
    """数值求解失败。"""


class CFLViolationError(NumericalError):
    """时间步长违反 CFL 稳定性条件。"""


class SolverHaltError(NumericalError):
    """流体求解器在 f 或 θ 触底时中止，并携带中止时刻的状态。"""

    def __init__(self, message: str, state_dump: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.state_dump = state_dump or {}


class ConfigError(ChainError):
    """场景配置非法，field_path 指出出错的字段（如 CHAIN.MASS）。"""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path
