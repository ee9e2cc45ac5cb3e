"""
整数阶第一类贝塞尔函数内核。

所有传播子（有限链的离散求和除外）都由这里的 J_n(x) 及其积分给出。
取值策略：
    - 幂级数：仅在各项单调递减的区域 x² < 4(|n|+1) 内使用；
    - 其余区域使用 Miller 向下递推，以 J_0 + 2ΣJ_2k = 1 归一化。
积分 ∫₀ˣ J_n 有两条路径：按零点分段的 Gauss–Legendre 求积（标量），
以及 Neumann 级数 2Σ_k J_{n+2k+1}(x)（整张表，供传播子使用）。

本模块为纯函数，不写日志，可在任意线程中并发调用。
"""

import math
from typing import Tuple, Union

import numpy as np

from src.model.errors import DomainError

ArrayLike = Union[float, np.ndarray]

# Miller 递推的重标定阈值
RESCALE_LIMIT = 1.0e200
RESCALE_FACTOR = 1.0e-200

# 极小参数直接用级数前三项
TINY_ARGUMENT = 1.0e-3

# 分段求积
PANEL_TOLERANCE = 1.0e-14
MAX_BISECTIONS = 20
_NODES_HIGH, _WEIGHTS_HIGH = np.polynomial.legendre.leggauss(20)
_NODES_LOW, _WEIGHTS_LOW = np.polynomial.legendre.leggauss(12)


def _check_argument(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise DomainError("Bessel argument must be finite")
    if np.any(x < 0.0):
        raise DomainError("Bessel argument must be nonnegative")


def miller_start(n_max: int, x_max: float) -> int:
    """
    Miller 递推的起始阶数。

    取 max(n, x) 之上一段 Airy 过渡区宽度 16(x/2)^{1/3} 再加 30 的余量，
    并向上取偶数，使起始阶处的函数值远低于双精度舍入。

    Args:
        n_max: 需要输出的最高阶。
        x_max: 参数最大值。

    Returns:
        偶数起始阶。
    """
    scale = max(float(n_max), float(x_max))
    top = int(math.ceil(scale + 16.0 * (max(scale, 2.0) / 2.0) ** (1.0 / 3.0))) + 30
    return top + (top % 2)


def _series_table(n_max: int, x: np.ndarray) -> np.ndarray:
    # 极小 x：J_n ≈ t_n (1 − z/(n+1) + z²/(2(n+1)(n+2)))，z = (x/2)²
    half = 0.5 * x
    z = half * half
    table = np.empty((n_max + 1, x.size))
    lead = np.ones_like(x)
    for n in range(n_max + 1):
        if n > 0:
            lead = lead * half / n
        table[n] = lead * (1.0 - z / (n + 1) + z * z / (2.0 * (n + 1) * (n + 2)))
    return table


def _miller_table(top: int, store_max: int, x: np.ndarray) -> np.ndarray:
    """从阶 top 向下递推，返回归一化后的 J_0..J_store_max。"""
    table = np.zeros((store_max + 1, x.size))
    two_over_x = 2.0 / x
    upper = np.zeros_like(x)
    current = np.full_like(x, 1.0e-30)
    norm = np.zeros_like(x)

    for k in range(top, 0, -1):
        if k <= store_max:
            table[k] = current
        if k % 2 == 0:
            norm += 2.0 * current
        lower = k * two_over_x * current - upper
        upper, current = current, lower

        big = np.abs(current) > RESCALE_LIMIT
        if big.any():
            current[big] *= RESCALE_FACTOR
            upper[big] *= RESCALE_FACTOR
            norm[big] *= RESCALE_FACTOR
            table[:, big] *= RESCALE_FACTOR

    table[0] = current
    norm += current
    return table / norm


def bessel_j_table(n_max: int, x: ArrayLike) -> np.ndarray:
    """
    一次向下递推给出 J_0(x) .. J_{n_max}(x)。

    Args:
        n_max: 最高阶（≥ 0）。
        x: 标量或任意形状的非负数组。

    Returns:
        形状为 (n_max + 1,) + x.shape 的数组。

    Raises:
        DomainError: x 非有限或为负，或 n_max 为负。
    """
    if n_max < 0:
        raise DomainError(f"n_max must be nonnegative, got {n_max}")
    values = np.asarray(x, dtype=float)
    _check_argument(values)

    flat = values.ravel()
    out = np.zeros((n_max + 1, flat.size))
    out[0, flat == 0.0] = 1.0

    tiny = (flat > 0.0) & (flat < TINY_ARGUMENT)
    if tiny.any():
        out[:, tiny] = _series_table(n_max, flat[tiny])

    regular = flat >= TINY_ARGUMENT
    if regular.any():
        xs = flat[regular]
        top = miller_start(n_max, float(xs.max()))
        out[:, regular] = _miller_table(top, n_max, xs)

    return out.reshape((n_max + 1,) + values.shape)


def signed_orders(table: np.ndarray, orders: np.ndarray) -> np.ndarray:
    """
    按整数阶（可为负）从 bessel_j_table 的结果中取值，负阶用 J_{−n} = (−1)ⁿ J_n。

    Args:
        table: bessel_j_table 返回的表，首轴为阶。
        orders: 整数阶数组，|order| 不超过表的最高阶。

    Returns:
        形状为 orders.shape + table.shape[1:] 的数组。
    """
    orders = np.asarray(orders, dtype=int)
    magnitude = np.abs(orders)
    if magnitude.size and magnitude.max() >= table.shape[0]:
        raise DomainError("requested Bessel order exceeds the table")
    sign = np.where((orders < 0) & (magnitude % 2 == 1), -1.0, 1.0)
    picked = table[magnitude]
    return sign.reshape(sign.shape + (1,) * (picked.ndim - sign.ndim)) * picked


def _power_series(order: int, x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    lead = np.ones_like(x)
    for j in range(1, order + 1):
        lead = lead * half / j
    total = lead.copy()
    term = lead.copy()
    z = half * half
    for k in range(1, 200):
        term = -term * z / (k * (order + k))
        total += term
        if np.all(np.abs(term) <= 1.0e-17 * np.abs(total)):
            break
    return total


def bessel_j(n: int, x: ArrayLike) -> ArrayLike:
    """
    第一类整数阶贝塞尔函数 J_n(x)。

    Args:
        n: 任意整数阶。
        x: 非负有限参数（标量或数组）。

    Returns:
        J_n(x)；标量输入返回 float。

    Raises:
        DomainError: x 非有限或为负。
    """
    values = np.asarray(x, dtype=float)
    _check_argument(values)
    order = abs(int(n))
    sign = -1.0 if (n < 0 and order % 2 == 1) else 1.0

    flat = values.ravel()
    result = np.empty_like(flat)
    series = flat * flat < 4.0 * (order + 1)
    if series.any():
        result[series] = _power_series(order, flat[series])
    if (~series).any():
        result[~series] = bessel_j_table(order, flat[~series])[order]

    result = sign * result.reshape(values.shape)
    return float(result) if result.ndim == 0 else result


def bessel_j_integral_table(n_max: int, x: ArrayLike) -> np.ndarray:
    """
    用 Neumann 级数 ∫₀ˣ J_ν = 2 Σ_{k≥0} J_{ν+2k+1}(x) 给出 ν = 0..n_max 的积分表。

    Args:
        n_max: 最高阶。
        x: 非负参数（标量或数组）。

    Returns:
        形状为 (n_max + 1,) + x.shape 的数组。
    """
    values = np.asarray(x, dtype=float)
    _check_argument(values)
    flat = values.ravel()
    top = miller_start(n_max + 1, float(flat.max()) if flat.size else 0.0)
    table = bessel_j_table(top, flat)

    # 同奇偶的后缀和：tail[m] = J_m + J_{m+2} + ...
    tail = np.zeros_like(table)
    tail[-1] = table[-1]
    tail[-2] = table[-2]
    for m in range(top - 2, -1, -1):
        tail[m] = table[m] + tail[m + 2]
    integrals = 2.0 * tail[1:n_max + 2]
    return integrals.reshape((n_max + 1,) + values.shape)


def bessel_zero_estimate(n: int, s: int) -> float:
    """J_n 第 s 个正零点的 McMahon 估计 (s + n/2 − 1/4)π。"""
    return (s + 0.5 * n - 0.25) * math.pi


def _panel_edges(n: int, x: float) -> np.ndarray:
    first_zero = bessel_zero_estimate(n, 1)
    below = np.arange(0.0, min(first_zero, x), math.pi)
    zeros = []
    s = 1
    while True:
        z = bessel_zero_estimate(n, s)
        if z >= x:
            break
        zeros.append(z)
        s += 1
    edges = np.unique(np.concatenate([below, np.asarray(zeros), [x]]))
    return edges


def _panel_rules(n: int, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes_high = mid[:, None] + half[:, None] * _NODES_HIGH[None, :]
    nodes_low = mid[:, None] + half[:, None] * _NODES_LOW[None, :]
    high = half * (bessel_j(n, nodes_high) @ _WEIGHTS_HIGH)
    low = half * (bessel_j(n, nodes_low) @ _WEIGHTS_LOW)
    return high, low


def bessel_j_integral(n: int, x: float) -> float:
    """
    ∫₀ˣ J_n(y) dy，按估计零点分段的 Gauss–Legendre 求积。

    每段长度不超过 π，20 点规则给出结果，12 点规则估计误差，
    误差超过 PANEL_TOLERANCE 的段二分后重算。

    Args:
        n: 非负整数阶。
        x: 非负积分上限。

    Returns:
        积分值。

    Raises:
        DomainError: n 或 x 为负，或 x 非有限。
    """
    if n < 0:
        raise DomainError(f"integral order must be nonnegative, got {n}")
    _check_argument(np.asarray(x, dtype=float))
    x = float(x)
    if x == 0.0:
        return 0.0

    edges = _panel_edges(n, x)
    lo, hi = edges[:-1], edges[1:]
    accepted = []
    for _ in range(MAX_BISECTIONS):
        high, low = _panel_rules(n, lo, hi)
        good = np.abs(high - low) <= PANEL_TOLERANCE
        accepted.extend(high[good].tolist())
        if good.all():
            break
        mid = 0.5 * (lo[~good] + hi[~good])
        lo, hi = np.concatenate([lo[~good], mid]), np.concatenate([mid, hi[~good]])
    else:
        high, _ = _panel_rules(n, lo, hi)
        accepted.extend(high.tolist())
    return math.fsum(accepted)


def bessel_envelope(x: ArrayLike) -> ArrayLike:
    """大参数渐近包络 (2/πx)^{1/2}。"""
    return np.sqrt(2.0 / (np.pi * np.asarray(x, dtype=float)))


def addition_theorem_residual(n: int, x: float, terms: int) -> float:
    """|J_n(2x) − Σ_{k=−K..K} J_{n−k}(x) J_k(x)|。"""
    top = abs(n) + terms
    table = bessel_j_table(top, x)
    ks = np.arange(-terms, terms + 1)
    products = signed_orders(table, n - ks) * signed_orders(table, ks)
    return abs(bessel_j(n, 2.0 * x) - math.fsum(products.ravel().tolist()))
