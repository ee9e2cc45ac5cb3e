"""
线性振子链：参数、简正模谱、传播子系数 f_r(t), g_r(t) 及一阶矩的演化。

约定：
    - 有限链为环（q_N ≡ q_0），格点编号 0..N−1，格点位置 b_n = n·b；
    - 无限链用下标窗口 [−R, R] 表示，窗口外的系数按零处理；
    - 动力学作用在位移 u_n = q_n − b_n 上，传播子给出
      u_n(t) = Σ_r [f_{r−n}(t) u_r(0) + g_{r−n}(t) p_r(0)/(mΩ)]。
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import circulant, toeplitz

from src.model.errors import DomainError, ShapeError, UnsupportedTopologyError
from src.model.specfun import bessel_j_integral_table, bessel_j_table, signed_orders

FINITE_DFT = "finite-dft"
INFINITE_SIMPLE = "infinite-simple"
INFINITE_BOUND = "infinite-bound"
KINDS = (FINITE_DFT, INFINITE_SIMPLE, INFINITE_BOUND)

ZERO_MODE_POLICIES = ("limit", "drop")

# 束缚链 Bessel 形式的有效性阈值
GAMMA_VALIDITY = 0.1
WINDOW_EPS = 1.0e-12


@dataclass(frozen=True)
class ChainParams:
    """
    链的物理常数与拓扑。

    Attributes:
        n_particles: 粒子数；None 表示无限链。
        mass: 粒子质量 m。
        nu2: 近邻耦合 ν²。
        K: 束缚常数。
        spacing: 格距 b。
        hbar: 约化普朗克常数。
    """
    n_particles: Optional[int]
    mass: float = 1.0
    nu2: float = 1.0
    K: float = 0.0
    spacing: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if self.n_particles is not None and int(self.n_particles) < 1:
            raise DomainError(f"n_particles must be positive, got {self.n_particles}")
        if not self.mass > 0.0:
            raise DomainError(f"mass must be positive, got {self.mass}")
        if self.nu2 < 0.0 or self.K < 0.0:
            raise DomainError("coupling nu2 and binding K must be nonnegative")
        if self.spacing < 0.0:
            raise DomainError(f"spacing must be nonnegative, got {self.spacing}")
        if not self.hbar > 0.0:
            raise DomainError(f"hbar must be positive, got {self.hbar}")

    @property
    def is_finite(self) -> bool:
        return self.n_particles is not None

    @property
    def omega(self) -> float:
        return math.sqrt(self.nu2 / self.mass)

    @property
    def Omega(self) -> float:
        return math.sqrt((self.K + 2.0 * self.nu2) / self.mass)

    @property
    def gamma(self) -> Optional[float]:
        if self.K <= 0.0:
            return None
        return (self.omega / self.Omega) ** 2

    @property
    def bessel_valid(self) -> bool:
        """束缚链 Bessel 形式仅在 γ ≪ 1 时成立。"""
        return self.gamma is not None and self.gamma < GAMMA_VALIDITY

    @property
    def default_kind(self) -> str:
        if self.is_finite:
            return FINITE_DFT
        return INFINITE_SIMPLE if self.K == 0.0 else INFINITE_BOUND

    @property
    def sound_speed(self) -> float:
        """长波声速 c = d ν / √m。"""
        return self.spacing * math.sqrt(self.nu2 / self.mass)

    def sites(self, size: int) -> np.ndarray:
        return np.arange(size, dtype=float) * self.spacing

    def require_dynamics(self) -> None:
        if self.nu2 == 0.0 and self.K == 0.0:
            raise DomainError("nu2 = 0 and K = 0 leave the chain without dynamics")


def chain_params(n_particles: Optional[int], mass: float = 1.0, nu2: float = 1.0, K: float = 0.0,
                 spacing: float = 1.0, hbar: float = 1.0) -> ChainParams:
    """带校验的构造函数，n_particles 为 None 时得到无限链。"""
    return ChainParams(
        n_particles=None if n_particles is None else int(n_particles),
        mass=float(mass), nu2=float(nu2), K=float(K), spacing=float(spacing), hbar=float(hbar),
    )


@dataclass(frozen=True)
class NormalModeSpectrum:
    """
    简正模频率，frequencies[α−1] = ω_α，α = 1..N。
    """
    frequencies: np.ndarray
    zero_mode_indices: Tuple[int, ...]

    @property
    def size(self) -> int:
        return self.frequencies.size

    def fft_order(self) -> np.ndarray:
        """按 FFT 下标 k = 0..N−1 排列（k = 0 对应 α = N）。"""
        return np.roll(self.frequencies, 1)


def normal_mode_frequencies(params: ChainParams) -> NormalModeSpectrum:
    """
    ω_α = (K/m + (4ν²/m) sin²(πα/N))^{1/2}，α = 1..N。

    Raises:
        UnsupportedTopologyError: 无限链没有离散简正模。
    """
    if not params.is_finite:
        raise UnsupportedTopologyError("normal modes require a finite chain")
    n = params.n_particles
    alpha = np.arange(1, n + 1)
    squared = params.K / params.mass + (4.0 * params.nu2 / params.mass) * np.sin(np.pi * alpha / n) ** 2
    frequencies = np.sqrt(np.clip(squared, 0.0, None))
    # sin(π) 的舍入残差不算频率
    scale = math.sqrt(max(params.K + 4.0 * params.nu2, 1.0e-300) / params.mass)
    zeros = tuple(int(a) for a in alpha[frequencies <= 1.0e-12 * scale])
    frequencies[frequencies <= 1.0e-12 * scale] = 0.0
    return NormalModeSpectrum(frequencies=frequencies, zero_mode_indices=zeros)


@dataclass(frozen=True)
class Propagator:
    """
    传播子系数表，形状均为 (len(times), len(offsets))。

    有限链的 offsets 为 0..N−1（按模 N 取下标），无限链为 −R..R。
    """
    kind: str
    params: ChainParams
    times: np.ndarray
    offsets: np.ndarray
    f: np.ndarray
    g: np.ndarray
    fdot: np.ndarray
    gdot: np.ndarray
    window: Optional[int]
    zero_mode: str = "limit"
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def is_periodic(self) -> bool:
        return self.kind == FINITE_DFT

    def time_index(self, t: float) -> int:
        matches = np.flatnonzero(np.isclose(self.times, t, rtol=1.0e-12, atol=1.0e-14))
        if matches.size == 0:
            raise DomainError(f"time {t} is not on the propagator grid")
        return int(matches[0])

    def coefficients(self, name: str, r: Sequence[int], t_index: int) -> np.ndarray:
        """按有符号偏移 r 取某一系数族，窗口外为零。"""
        table = getattr(self, name)[t_index]
        r = np.asarray(r, dtype=int)
        if self.is_periodic:
            return table[np.mod(r, self.offsets.size)]
        inside = np.abs(r) <= self.window
        values = np.zeros(r.shape)
        values[inside] = table[r[inside] + self.window]
        return values


def _check_time_grid(t_grid: Sequence[float]) -> np.ndarray:
    times = np.asarray(t_grid, dtype=float).ravel()
    if not np.all(np.isfinite(times)):
        raise DomainError("time grid must be finite")
    if np.any(times < 0.0):
        raise DomainError("time grid must be nonnegative")
    return times


def _finite_dft_tables(params: ChainParams, times: np.ndarray, zero_mode: str, method: str):
    n = params.n_particles
    if n < 2:
        raise DomainError("finite-dft propagator needs at least 2 particles")
    omega = normal_mode_frequencies(params).fft_order()
    zero = omega == 0.0
    safe = np.where(zero, 1.0, omega)

    phase = np.outer(times, omega)
    cos_part = np.cos(phase)
    sin_over = np.sin(phase) / safe
    if zero.any():
        # 零模：sin(ωt)/ω 的极限是 t
        sin_over[:, zero] = times[:, None] if zero_mode == "limit" else 0.0
    fdot_part = -omega * np.sin(phase)

    if method == "fft":
        transform = lambda a: np.fft.ifft(a, axis=1).real
    else:
        k = np.arange(n)
        basis = np.cos(2.0 * np.pi * np.outer(k, k) / n) / n
        transform = lambda a: a @ basis

    f = transform(cos_part)
    g = params.Omega * transform(sin_over)
    fdot = transform(fdot_part)
    gdot = params.Omega * f
    return np.arange(n), f, g, fdot, gdot


def required_window(params: ChainParams, kind: str, t_max: float, eps: float = WINDOW_EPS) -> int:
    """
    使窗口外 |f_r|、|g_r|/Ω 均小于 eps 的最小 R。

    Args:
        params: 链参数。
        kind: infinite-simple 或 infinite-bound。
        t_max: 最大时间。
        eps: 截断阈值。

    Returns:
        窗口半宽 R（至少为 1）。
    """
    if kind == INFINITE_SIMPLE:
        x = 2.0 * params.omega * t_max
        top = int(math.ceil(x + 16.0 * (max(x, 2.0) / 2.0) ** (1.0 / 3.0))) + 40
        values = np.abs(bessel_j_table(top, x))
        # g_r/Ω = ∫₀ˣ J_2r / (2ω)
        integrals = np.abs(bessel_j_integral_table(top, x)) / (2.0 * params.omega)
        big = np.flatnonzero((values[0::2] >= eps) | (integrals[0::2] >= eps))
        return int(big.max()) + 1 if big.size else 1
    if kind == INFINITE_BOUND:
        x = params.gamma * params.Omega * t_max
        top = int(math.ceil(x + 16.0 * (max(x, 2.0) / 2.0) ** (1.0 / 3.0))) + 40
        values = np.abs(bessel_j_table(top, x))
        big = np.flatnonzero(values >= eps)
        return int(big.max()) + 1 if big.size else 1
    raise UnsupportedTopologyError(f"window only applies to infinite chains, got {kind}")


def _infinite_simple_tables(params: ChainParams, times: np.ndarray, window: int):
    omega, Omega = params.omega, params.Omega
    offsets = np.arange(-window, window + 1)
    x = 2.0 * omega * times
    table = bessel_j_table(2 * window + 1, x)
    integrals = bessel_j_integral_table(2 * window, x)

    orders = 2 * offsets
    f = signed_orders(table, orders).T
    fdot = omega * (signed_orders(table, orders - 1) - signed_orders(table, orders + 1)).T
    g = (Omega / (2.0 * omega)) * integrals[np.abs(orders)].T
    gdot = Omega * f
    return offsets, f, g, fdot, gdot


def _infinite_bound_tables(params: ChainParams, times: np.ndarray, window: int):
    Omega, gamma = params.Omega, params.gamma
    offsets = np.arange(-window, window + 1)
    x = gamma * Omega * times
    table = bessel_j_table(window + 1, x)

    values = signed_orders(table, offsets).T
    slope = 0.5 * (signed_orders(table, offsets - 1) - signed_orders(table, offsets + 1)).T
    phase = Omega * times[:, None] - 0.5 * np.pi * offsets[None, :]
    cos_p, sin_p = np.cos(phase), np.sin(phase)

    f = values * cos_p
    g = values * sin_p
    fdot = gamma * Omega * slope * cos_p - Omega * values * sin_p
    gdot = gamma * Omega * slope * sin_p + Omega * values * cos_p
    return offsets, f, g, fdot, gdot


def propagator(params: ChainParams, t_grid: Sequence[float], kind: Optional[str] = None,
               window: Optional[int] = None, zero_mode: str = "limit", method: str = "fft") -> Propagator:
    """
    在给定时间网格上构造传播子系数表。

    Args:
        params: 链参数。
        t_grid: 时间网格（允许非均匀）。
        kind: finite-dft / infinite-simple / infinite-bound，默认按参数推断。
        window: 无限链窗口 R，默认按最大时间自动选取。
        zero_mode: 有限链 K = 0 时零模在 g 中的处理，"limit"（贡献 t）或 "drop"。
        method: 有限链求和方式，"fft" 或 "direct"，结果一致。

    Returns:
        Propagator；窗口不足时 warnings 中带截断提示。

    Raises:
        DomainError: 参数不满足前置条件。
    """
    params.require_dynamics()
    kind = kind or params.default_kind
    if kind not in KINDS:
        raise DomainError(f"unknown propagator kind: {kind}")
    if zero_mode not in ZERO_MODE_POLICIES:
        raise DomainError(f"unknown zero-mode policy: {zero_mode}")
    if method not in ("fft", "direct"):
        raise DomainError(f"unknown summation method: {method}")
    times = _check_time_grid(t_grid)
    t_max = float(np.abs(times).max()) if times.size else 0.0

    warnings = []
    if kind == FINITE_DFT:
        if not params.is_finite:
            raise UnsupportedTopologyError("finite-dft propagator needs a finite chain")
        offsets, f, g, fdot, gdot = _finite_dft_tables(params, times, zero_mode, method)
        window = None
    else:
        if kind == INFINITE_SIMPLE and params.K != 0.0:
            raise DomainError("infinite-simple propagator requires K = 0")
        if kind == INFINITE_BOUND:
            if params.K == 0.0:
                raise DomainError("infinite-bound propagator requires K > 0")
            if not params.bessel_valid:
                raise DomainError(f"bound-chain Bessel forms need gamma < {GAMMA_VALIDITY}, got {params.gamma:.4g}")
        needed = required_window(params, kind, t_max)
        if window is None:
            window = needed
        elif window < needed:
            message = f"window R={window} truncates support at t={t_max:.6g}; need R>={needed}"
            logger.warning(message)
            warnings.append(message)
        builder = _infinite_simple_tables if kind == INFINITE_SIMPLE else _infinite_bound_tables
        offsets, f, g, fdot, gdot = builder(params, times, window)
        logger.debug(f"{kind} propagator: window R={window}, {times.size} times")

    return Propagator(
        kind=kind, params=params, times=times, offsets=offsets,
        f=f, g=g, fdot=fdot, gdot=gdot, window=window,
        zero_mode=zero_mode, warnings=tuple(warnings),
    )


def propagation_matrix(prop: Propagator, t_index: int, size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    稠密传播矩阵 F[n, r] = f_{r−n} 等。

    有限链为循环矩阵（size 必须等于 N），无限链为窗口外置零的 Toeplitz 矩阵。

    Returns:
        (F, G, Fdot, Gdot)
    """
    blocks = []
    for name in ("f", "g", "fdot", "gdot"):
        if prop.is_periodic:
            if size != prop.offsets.size:
                raise ShapeError(f"finite chain has {prop.offsets.size} sites, got {size}")
            row = getattr(prop, name)[t_index]
            # f_{r−n}：circulant(c)[n, r] = c[(n − r) mod N]，故对 c 取反序
            blocks.append(circulant(np.roll(row[::-1], 1)))
        else:
            lags = np.arange(size)
            blocks.append(toeplitz(prop.coefficients(name, -lags, t_index),
                                   prop.coefficients(name, lags, t_index)))
    return tuple(blocks)


def evolve_means(params: ChainParams, prop: Propagator, q0: Sequence[float], p0: Sequence[float],
                 t: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    一阶矩演化：q_n(t) = b_n + Σ_r [f_{r−n} (q_r(0) − b_r) + g_{r−n} p_r(0)/(mΩ)]，p_n = m q̇_n。

    Args:
        params: 链参数。
        prop: 覆盖时刻 t 的传播子。
        q0: 初始位置均值。
        p0: 初始动量均值。
        t: 目标时间（必须在传播子网格上）。

    Returns:
        (q̄(t), p̄(t))

    Raises:
        ShapeError: 数组尺寸不一致或与有限链不符。
    """
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if q0.ndim != 1 or q0.shape != p0.shape:
        raise ShapeError(f"mean arrays must be 1-D and equal, got {q0.shape} and {p0.shape}")
    if params.is_finite and q0.size != params.n_particles:
        raise ShapeError(f"expected {params.n_particles} sites, got {q0.size}")

    index = prop.time_index(t)
    F, G, Fdot, Gdot = propagation_matrix(prop, index, q0.size)
    lattice = params.sites(q0.size)
    u0 = q0 - lattice
    m, Omega = params.mass, params.Omega
    q = lattice + F @ u0 + G @ p0 / (m * Omega)
    p = m * (Fdot @ u0) + Gdot @ p0 / Omega
    return q, p


def neighbour_differences(params: ChainParams, q: np.ndarray) -> np.ndarray:
    """位移差 u_n − u_{n−1}；有限链按环处理，无限链窗口只取内部的键。"""
    u = np.asarray(q, dtype=float) - params.sites(len(q))
    if params.is_finite:
        return u - np.roll(u, 1)
    return np.diff(u)


def mean_energy(params: ChainParams, q: Sequence[float], p: Sequence[float]) -> float:
    """Σ[p̄²/2m + (ν²/2)(Δū)² + (K/2)ū²]，ū = q̄ − b。"""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    u = q - params.sites(q.size)
    kinetic = np.sum(p * p) / (2.0 * params.mass)
    coupling = 0.5 * params.nu2 * np.sum(neighbour_differences(params, q) ** 2)
    binding = 0.5 * params.K * np.sum(u * u)
    return float(kinetic + coupling + binding)
