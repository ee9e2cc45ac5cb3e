"""
链子段的粗粒化量：M 个粒子的总动量与能量，它们的方差以及峰化比 (ΔQ)²/⟨Q⟩²。
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from loguru import logger

from src.model.chain import FINITE_DFT, ChainParams, Propagator
from src.model.errors import DomainError, ShapeError, UnsupportedTopologyError
from src.model.gaussian import GaussianChainState, correlation_coefficients, evolve_trajectory
from src.model.report import TableReport, table_report


@dataclass(frozen=True)
class PeakingReport:
    """
    一个粗粒化量随时间的峰化情况。

    squared_mean 为 0 的时刻 ratio 记为 nan，并在 undefined 中标出。
    A_M 与 Ã_M 仅在闭式路径下给出。
    """
    label: str
    block_size: int
    times: np.ndarray
    variance: np.ndarray
    squared_mean: np.ndarray
    ratio: np.ndarray
    undefined: np.ndarray
    lag_sum_a: Optional[np.ndarray] = None
    fluctuating: Optional[np.ndarray] = None

    @property
    def columns(self):
        base = ("t", "variance", "squared_mean", "ratio")
        if self.fluctuating is None:
            return base
        return base + ("A_M", "A_M_fluct")

    def to_table(self) -> TableReport:
        series = [self.times, self.variance, self.squared_mean, self.ratio]
        if self.fluctuating is not None:
            series += [self.lag_sum_a, self.fluctuating]
        return table_report(self.label, self.columns, *series)

    def settling(self, t_from: float) -> TableReport:
        """t ≥ t_from 上 Ã_M 的均值、均方根与最大绝对值，用来检查振荡部分的稳定幅度。"""
        if self.fluctuating is None:
            raise DomainError("settling statistics need the closed-form A_M")
        late = self.times >= t_from
        if not late.any():
            raise ShapeError(f"no times at or after t={t_from:g}")
        tail = self.fluctuating[late]
        return table_report("settling", ("t_from", "mean", "rms", "max_abs"), [t_from], [float(tail.mean())],
                            [float(np.sqrt(np.mean(tail * tail)))], [float(np.abs(tail).max())])


@dataclass(frozen=True)
class MomentumSource:
    """闭式路径的输入：无关联均匀初态的宽度与漂移速度 v₀。"""
    params: ChainParams
    dq2: float
    dp2: float
    sigma_qp: float = 0.0
    v0: float = 0.0
    kind: Optional[str] = None


def _peaking(label: str, block: int, times, variance, squared_mean, **extra) -> PeakingReport:
    variance = np.asarray(variance, dtype=float)
    squared_mean = np.asarray(squared_mean, dtype=float)
    undefined = ~(squared_mean > 0.0)
    ratio = np.full(variance.shape, np.nan)
    np.divide(variance, squared_mean, out=ratio, where=~undefined)
    if undefined.any():
        logger.debug(f"{label}: ratio undefined at {int(undefined.sum())} times (zero mean)")
    return PeakingReport(
        label=label, block_size=block, times=np.asarray(times, dtype=float),
        variance=variance, squared_mean=squared_mean, ratio=ratio, undefined=undefined, **extra,
    )


def lag_sum(M: int, values_by_lag: np.ndarray) -> np.ndarray:
    """
    Σ_{n,m=1..M} v(n−m) = Σ_d (M − |d|) v(d)。

    Args:
        M: 子段长度。
        values_by_lag: 首轴按 d = −(M−1)..(M−1) 排列的值。

    Returns:
        沿首轴加权求和的结果。
    """
    values = np.asarray(values_by_lag, dtype=float)
    if values.shape[0] != 2 * M - 1:
        raise ShapeError(f"expected {2 * M - 1} lags for M={M}, got {values.shape[0]}")
    lags = np.arange(-(M - 1), M)
    weights = (M - np.abs(lags)).astype(float)
    return np.tensordot(weights, values, axes=(0, 0))


def _check_block(M: int, start: int, size: Optional[int] = None) -> None:
    if M < 1:
        raise DomainError(f"block size M must be at least 1, got {M}")
    if size is not None and (start < 0 or start + M > size):
        raise ShapeError(f"block [{start}, {start + M}) exceeds state of size {size}")


def subsection_momentum_closed_form(params: ChainParams, dq2: float, dp2: float, v0: float, M: int,
                                    t_grid: Sequence[float], sigma_qp: float = 0.0,
                                    kind: Optional[str] = None) -> PeakingReport:
    """
    无限链均匀无关联初态下 P_M 的方差，(ΔP_M)² = C_M Δq² + 2B_M σ + A_M Δp²。

    均值 ⟨P_M⟩ = M m v₀ cos(√(K/m) t)；Ã_M = A_M − M/2 为 a_nm 去掉静态 δ 项后的振荡部分。

    Raises:
        UnsupportedTopologyError: 有限链（应走稠密路径）。
    """
    _check_block(M, 0)
    kind = kind or params.default_kind
    if kind == FINITE_DFT:
        raise UnsupportedTopologyError("closed-form subsection sums need an infinite chain")
    lags = np.arange(-(M - 1), M)
    times = np.asarray(t_grid, dtype=float).ravel()

    variance = np.empty(times.size)
    full_a = np.empty(times.size)
    for i, t in enumerate(times):
        co = correlation_coefficients(params, kind, lags, t)
        A = lag_sum(M, co.a)
        B = lag_sum(M, co.b)
        C = lag_sum(M, co.c)
        variance[i] = C * dq2 + 2.0 * B * sigma_qp + A * dp2
        full_a[i] = A

    drift = M * params.mass * v0 * np.cos(np.sqrt(params.K / params.mass) * times)
    return _peaking("momentum", M, times, variance, drift ** 2,
                    lag_sum_a=full_a, fluctuating=full_a - 0.5 * M)


def _momentum_from_states(states: Sequence[GaussianChainState], M: int, start: int, times) -> PeakingReport:
    block = slice(start, start + M)
    variance, squared_mean = [], []
    for state in states:
        _check_block(M, start, state.size)
        variance.append(float(state.pp[block, block].sum()))
        squared_mean.append(float(state.p[block].sum()) ** 2)
    return _peaking("momentum", M, times, variance, squared_mean)


def subsection_momentum_stats(source: Union[MomentumSource, GaussianChainState, Sequence[GaussianChainState]],
                              M: int, t_grid: Sequence[float], prop: Optional[Propagator] = None,
                              start: int = 0) -> PeakingReport:
    """
    子段总动量 P_M = Σ_{j<M} p_{start+j} 的峰化报告。

    Args:
        source: MomentumSource 走闭式路径；单个初态（需配合 prop）或已演化的轨迹走稠密路径。
        M: 子段长度。
        t_grid: 时间网格。
        prop: 单个初态时使用的传播子。
        start: 子段起点。

    Returns:
        PeakingReport。

    Raises:
        ShapeError: M 超出态的尺寸。
    """
    _check_block(M, start)
    if isinstance(source, MomentumSource):
        return subsection_momentum_closed_form(
            source.params, source.dq2, source.dp2, source.v0, M, t_grid,
            sigma_qp=source.sigma_qp, kind=source.kind,
        )
    if isinstance(source, GaussianChainState):
        if prop is None:
            raise DomainError("dense subsection statistics need a propagator")
        _check_block(M, start, source.size)
        states = evolve_trajectory(source, prop, t_grid, path="dense")
    else:
        states = list(source)
    times = np.asarray(t_grid, dtype=float).ravel()
    if len(states) != times.size:
        raise ShapeError(f"{len(states)} states for {times.size} times")
    return _momentum_from_states(states, M, start, times)


def _square_covariance(cov: np.ndarray, mean_x: np.ndarray, mean_y: np.ndarray) -> np.ndarray:
    # Gaussian: Cov(X², Y²) = 2C² + 4μxμyC
    return 2.0 * cov ** 2 + 4.0 * np.outer(mean_x, mean_y) * cov


def _energy_block(state: GaussianChainState, M: int, start: int):
    params = state.params
    block = slice(start, start + M)
    u = state.displacements[block]
    p = state.p[block]
    qq = state.qq[block, block]
    pp = state.pp[block, block]
    qp = state.qp[block, block]

    a = 1.0 / (2.0 * params.mass)
    b = 0.5 * params.K
    pp_sq = _square_covariance(pp, p, p)
    qq_sq = _square_covariance(qq, u, u)
    # Cov(p_j², u_n²) 用 σ(u_n, p_j)
    pq_sq = _square_covariance(qp.T, p, u)
    cross = pq_sq + pq_sq.T
    # 对称序下同一格点 p²、q² 的协方差比经典值少 ħ²/2
    cross -= np.eye(M) * params.hbar ** 2

    covariance = a * a * pp_sq + a * b * cross + b * b * qq_sq
    mean = a * (p * p + np.diag(pp)) + b * (u * u + np.diag(qq))
    return float(covariance.sum()), float(mean.sum())


def subsection_energy_stats(source: Union[GaussianChainState, Sequence[GaussianChainState]], M: int,
                            t_grid: Sequence[float], prop: Optional[Propagator] = None,
                            start: int = 0) -> PeakingReport:
    """
    紧束缚近似下子段能量 h_M = Σ_j [p_j²/2m + ½K u_j²] 的峰化报告。

    四阶矩用高斯恒等式 σ(X², Y²) = 2σ(X,Y)² + 4⟨X⟩⟨Y⟩σ(X,Y) 展开，
    同一格点的 p–q 项带对称序修正 −Kħ²/(4m)，使谐振子基态的能量方差为零。

    Args:
        source: 单个初态（需配合 prop）或已演化的轨迹。
        M: 子段长度。
        t_grid: 时间网格。
        prop: 单个初态时使用的传播子。
        start: 子段起点。

    Returns:
        PeakingReport。

    Raises:
        DomainError: K = 0（没有束缚势，近似不成立）。
    """
    _check_block(M, start)
    if isinstance(source, GaussianChainState):
        params = source.params
        if params.K == 0.0:
            raise DomainError("subsection energy proxy needs a bound chain (K > 0)")
        if prop is None:
            raise DomainError("subsection energy statistics need a propagator")
        states = evolve_trajectory(source, prop, t_grid, path="dense")
    else:
        states = list(source)
        if states and states[0].params.K == 0.0:
            raise DomainError("subsection energy proxy needs a bound chain (K > 0)")

    times = np.asarray(t_grid, dtype=float).ravel()
    if len(states) != times.size:
        raise ShapeError(f"{len(states)} states for {times.size} times")
    variance, squared_mean = [], []
    for state in states:
        _check_block(M, start, state.size)
        var, mean = _energy_block(state, M, start)
        variance.append(var)
        squared_mean.append(mean ** 2)
    return _peaking("energy", M, times, variance, squared_mean)
