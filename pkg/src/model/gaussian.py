"""
振子链的高斯态：构造、协方差的精确演化、无关联初态的闭式相关系数与平衡极限。

协方差按 (q_0..q_{L−1}, p_0..p_{L−1}) 排列成 2L×2L 矩阵，
三个块 Σqq、Σqp、Σpp 分别存储。
"""

from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import circulant

from src.model.chain import (
    FINITE_DFT, INFINITE_BOUND, INFINITE_SIMPLE, ChainParams, Propagator,
    evolve_means, normal_mode_frequencies, propagation_matrix,
)
from src.model.errors import (
    DomainError, InvalidStateError, NoEquilibriumError, ShapeError, UnsupportedTopologyError,
)
from src.model.report import TableReport, table_report
from src.model.specfun import bessel_j_integral_table, bessel_j_table, signed_orders

DEFAULT_CLUSTER_SIZE = 3
UNCERTAINTY_RTOL = 1.0e-12


@dataclass(frozen=True)
class HomogeneousDescriptor:
    """无关联初态的逐格点宽度；slowly_varying 表示宽度随格点缓变。"""
    dq2: np.ndarray
    dp2: np.ndarray
    sigma_qp: np.ndarray
    slowly_varying: bool


@dataclass(frozen=True)
class GaussianChainState:
    """
    链的高斯态。

    Attributes:
        params: 链参数。
        q, p: 一阶矩。
        qq, qp, pp: 协方差块，qp[n, m] = σ(q_n, p_m)。
        descriptor: 无关联初态的宽度描述，演化后的态为 None。
        representation: "dense" 或 "homogeneous"（由闭式系数得到）。
        time: 态所处的时刻。
    """
    params: ChainParams
    q: np.ndarray
    p: np.ndarray
    qq: np.ndarray
    qp: np.ndarray
    pp: np.ndarray
    descriptor: Optional[HomogeneousDescriptor] = None
    representation: str = "dense"
    time: float = 0.0
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def size(self) -> int:
        return self.q.size

    @property
    def variance_q(self) -> np.ndarray:
        return np.diag(self.qq).copy()

    @property
    def variance_p(self) -> np.ndarray:
        return np.diag(self.pp).copy()

    @property
    def sigma_qp(self) -> np.ndarray:
        return np.diag(self.qp).copy()

    @property
    def displacements(self) -> np.ndarray:
        return self.q - self.params.sites(self.size)

    def covariance(self) -> np.ndarray:
        return np.block([[self.qq, self.qp], [self.qp.T, self.pp]])


@dataclass(frozen=True)
class CorrelationCoefficients:
    """无关联初态下的相关系数 a..k，按 n − m 取值。"""
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray
    k: np.ndarray


@dataclass(frozen=True)
class EquilibriumLimits:
    sigma_pp: float
    sigma_qq: float
    kT: float


def _broadcast(values, size: int, name: str) -> np.ndarray:
    array = np.broadcast_to(np.asarray(values, dtype=float), (size,)).astype(float)
    if not np.all(np.isfinite(array)):
        raise InvalidStateError(f"{name} must be finite")
    return array


def product_state(params: ChainParams, q: Sequence[float], p: Sequence[float], dq2, dp2,
                  sigma_qp=0.0) -> GaussianChainState:
    """
    无关联（乘积）高斯态。

    Args:
        params: 链参数。
        q, p: 各格点均值。
        dq2, dp2, sigma_qp: 各格点宽度，可为标量。

    Returns:
        对角协方差块的高斯态，保留宽度描述。

    Raises:
        InvalidStateError: 宽度非正或违反 Δq²Δp² − σ² ≥ ħ²/4。
        ShapeError: 与有限链粒子数不符。
    """
    q = np.asarray(q, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    if q.shape != p.shape:
        raise ShapeError(f"mean arrays differ: {q.shape} vs {p.shape}")
    size = q.size
    if params.is_finite and size != params.n_particles:
        raise ShapeError(f"expected {params.n_particles} sites, got {size}")

    dq2 = _broadcast(dq2, size, "dq2")
    dp2 = _broadcast(dp2, size, "dp2")
    sigma = _broadcast(sigma_qp, size, "sigma_qp")
    if np.any(dq2 <= 0.0) or np.any(dp2 <= 0.0):
        raise InvalidStateError("position and momentum variances must be positive")
    bound = 0.25 * params.hbar ** 2
    determinant = dq2 * dp2 - sigma ** 2
    if np.any(determinant < bound * (1.0 - UNCERTAINTY_RTOL)):
        worst = int(np.argmin(determinant))
        raise InvalidStateError(
            f"uncertainty violated at site {worst}: {determinant[worst]:.6g} < hbar^2/4 = {bound:.6g}"
        )

    varying = not (np.ptp(dq2) == 0.0 and np.ptp(dp2) == 0.0 and np.ptp(sigma) == 0.0)
    descriptor = HomogeneousDescriptor(dq2=dq2, dp2=dp2, sigma_qp=sigma, slowly_varying=varying)
    return GaussianChainState(
        params=params, q=q, p=p,
        qq=np.diag(dq2), qp=np.diag(sigma), pp=np.diag(dp2),
        descriptor=descriptor,
    )


def excluded_modes(n: int, cluster_size: int) -> np.ndarray:
    """
    K = 0 时需要剔除的模 α ∈ {N−c+1, .., N} 及其镜像 N − α（掩码按 α−1 排列）。
    """
    mask = np.zeros(n, dtype=bool)
    for alpha in range(n - cluster_size + 1, n + 1):
        if alpha < 1:
            continue
        mask[alpha - 1] = True
        mirror = (n - alpha) % n
        mask[(mirror or n) - 1] = True
    return mask


def normal_mode_coherent_state(params: ChainParams, mode_amplitudes: Optional[Sequence[complex]] = None,
                               cluster_size: int = DEFAULT_CLUSTER_SIZE) -> GaussianChainState:
    """
    简正模相干态。

    Σqq[n,m] = (1/N) Σ_α (ħ/2mω_α) cos(2πα(n−m)/N)，Σpp 用 ħmω_α/2，Σqp = 0。
    K = 0 时零模附近的一小簇模（及镜像）同时从两个求和中剔除，协方差保持定态，
    被剔除的模上态退化为零宽度。

    Args:
        params: 有限链参数。
        mode_amplitudes: 复振幅 A_α（按 α = 1..N 排列），默认全零。
        cluster_size: K = 0 时剔除的簇大小。

    Returns:
        协方差在演化下不变的高斯态。

    Raises:
        UnsupportedTopologyError: 无限链。
    """
    if not params.is_finite:
        raise UnsupportedTopologyError("normal-mode coherent states need a finite chain")
    n = params.n_particles
    spectrum = normal_mode_frequencies(params)
    omega = spectrum.frequencies
    m, hbar = params.mass, params.hbar

    keep = omega > 0.0
    if params.K == 0.0:
        keep &= ~excluded_modes(n, cluster_size)
    safe = np.where(omega > 0.0, omega, 1.0)
    weight_q = np.where(keep, hbar / (2.0 * m * safe), 0.0)
    weight_p = np.where(keep, 0.5 * hbar * m * omega, 0.0)

    # 按 FFT 顺序做逆变换得到按滞后 d 的相关
    qq_lag = np.fft.ifft(np.roll(weight_q, 1)).real
    pp_lag = np.fft.ifft(np.roll(weight_p, 1)).real

    amplitudes = np.zeros(n, dtype=complex)
    warnings = []
    if mode_amplitudes is not None:
        amplitudes = np.asarray(mode_amplitudes, dtype=complex).ravel()
        if amplitudes.size != n:
            raise ShapeError(f"expected {n} mode amplitudes, got {amplitudes.size}")
        zero = (omega == 0.0) & (amplitudes != 0.0)
        if zero.any():
            message = f"zero-mode amplitude ignored for alpha={[int(a) for a in np.flatnonzero(zero) + 1]}"
            logger.warning(message)
            warnings.append(message)
            amplitudes = np.where(omega == 0.0, 0.0, amplitudes)

    alpha = np.arange(1, n + 1)
    sites = np.arange(n)
    phases = np.exp(2j * np.pi * np.outer(sites, alpha) / n) / np.sqrt(n)
    u = (phases @ amplitudes).real
    p = (phases @ (-1j * omega * m * amplitudes)).real

    return GaussianChainState(
        params=params,
        q=params.sites(n) + u,
        p=p,
        qq=circulant(qq_lag),
        qp=np.zeros((n, n)),
        pp=circulant(pp_lag),
        warnings=tuple(warnings),
    )


def thermal_state(params: ChainParams, kT: float) -> GaussianChainState:
    """
    有限束缚链的经典平衡态：每个模能量均分，Σqq 用 kT/(mω_α²)，Σpp = m kT δ。

    Raises:
        NoEquilibriumError: K = 0。
    """
    if not params.is_finite:
        raise UnsupportedTopologyError("thermal reference state needs a finite chain")
    if params.K == 0.0:
        raise NoEquilibriumError("This is not an equilibrium distribution: K = 0 has no thermal state")
    n = params.n_particles
    omega = normal_mode_frequencies(params).fft_order()
    qq_lag = np.fft.ifft(kT / (params.mass * omega ** 2)).real
    return GaussianChainState(
        params=params,
        q=params.sites(n),
        p=np.zeros(n),
        qq=circulant(qq_lag),
        qp=np.zeros((n, n)),
        pp=params.mass * kT * np.eye(n),
    )


def symplectic_eigenvalues(state: GaussianChainState) -> np.ndarray:
    """协方差的辛本征值（升序），取 |eig(iJΣ)| 成对值中的一个。"""
    size = state.size
    J = np.block([[np.zeros((size, size)), np.eye(size)], [-np.eye(size), np.zeros((size, size))]])
    values = np.abs(np.linalg.eigvals(1j * J @ state.covariance()))
    return np.sort(values)[::2]


def _dense_step(params: ChainParams, blocks, u: np.ndarray, p: np.ndarray, cov: np.ndarray):
    F, G, Fdot, Gdot = blocks
    m, Omega = params.mass, params.Omega
    S = np.block([[F, G / (m * Omega)], [m * Fdot, Gdot / Omega]])
    u_t = F @ u + G @ p / (m * Omega)
    p_t = m * (Fdot @ u) + Gdot @ p / Omega
    return u_t, p_t, S @ cov @ S.T


def _split(cov: np.ndarray, size: int):
    qq = cov[:size, :size]
    qp = cov[:size, size:]
    pp = cov[size:, size:]
    return 0.5 * (qq + qq.T), qp, 0.5 * (pp + pp.T)


def _evolve_dense(state: GaussianChainState, prop: Propagator, t: float) -> GaussianChainState:
    params = state.params
    index = prop.time_index(t)
    size = state.size
    if prop.is_periodic:
        blocks = propagation_matrix(prop, index, size)
        u, p, cov = _dense_step(params, blocks, state.displacements, state.p, state.covariance())
        qq, qp, pp = _split(cov, size)
        return GaussianChainState(params=params, q=params.sites(size) + u, p=p, qq=qq, qp=qp, pp=pp,
                                  time=state.time + t, warnings=prop.warnings)

    # 无限链：两侧各补 R 个格点，宽度沿用边缘值，均值处于静止
    pad = prop.window
    full = size + 2 * pad
    cov = np.zeros((2 * full, 2 * full))
    inner = slice(pad, pad + size)
    q_idx = np.arange(full)
    p_idx = q_idx + full
    cov[np.ix_(q_idx[inner], q_idx[inner])] = state.qq
    cov[np.ix_(q_idx[inner], p_idx[inner])] = state.qp
    cov[np.ix_(p_idx[inner], q_idx[inner])] = state.qp.T
    cov[np.ix_(p_idx[inner], p_idx[inner])] = state.pp
    for side, edge in ((range(pad), 0), (range(pad + size, full), size - 1)):
        for j in side:
            cov[j, j] = state.qq[edge, edge]
            cov[full + j, full + j] = state.pp[edge, edge]
            cov[j, full + j] = cov[full + j, j] = state.qp[edge, edge]
    u = np.zeros(full)
    p = np.zeros(full)
    u[inner] = state.displacements
    p[inner] = state.p

    blocks = propagation_matrix(prop, index, full)
    u_t, p_t, cov_t = _dense_step(params, blocks, u, p, cov)
    qq, qp, pp = _split(cov_t, full)
    return GaussianChainState(
        params=params, q=params.sites(size) + u_t[inner], p=p_t[inner],
        qq=qq[inner, inner], qp=qp[inner, inner], pp=pp[inner, inner],
        time=state.time + t, warnings=prop.warnings,
    )


def correlation_coefficients(params: ChainParams, kind: str, lag, t: float) -> CorrelationCoefficients:
    """
    无限链无关联初态的闭式相关系数。

    束缚链：2a = δ + J_d(2γΩt)cos(2Ωt − dπ/2)，2b = −mΩ J_d sin(·)，
    2c = (mΩ)²δ − (mΩ)²J_d cos(·)，d = (mΩ)⁻⁴c，e = −(mΩ)⁻²b，k = −(mΩ)⁻²c。
    简单链（x = 4ωt）：2a = δ + J_2d，2b = mω(J_{2d−1} − J_{2d+1})，c 含 J_{2d±2}，
    d、e 由 ∫₀ˣ J 给出，k = ½(J_2d − δ)。

    Args:
        params: 链参数。
        kind: infinite-simple 或 infinite-bound。
        lag: n − m（整数或整数数组）。
        t: 时间。

    Returns:
        与 lag 同形的系数。
    """
    lag = np.asarray(lag, dtype=int)
    m = params.mass
    delta = (lag == 0).astype(float)
    t = float(t)

    if kind == INFINITE_BOUND:
        if not params.bessel_valid:
            raise DomainError("bound-chain closed forms need K > 0 and gamma < 0.1")
        mO = m * params.Omega
        x = 2.0 * params.gamma * params.Omega * t
        table = bessel_j_table(int(np.abs(lag).max()) if lag.size else 0, x)
        J = signed_orders(table, lag)
        theta = 2.0 * params.Omega * t - 0.5 * np.pi * lag
        a = 0.5 * (delta + J * np.cos(theta))
        b = -0.5 * mO * J * np.sin(theta)
        c = 0.5 * mO ** 2 * (delta - J * np.cos(theta))
        return CorrelationCoefficients(a=a, b=b, c=c, d=c / mO ** 4, e=-b / mO ** 2, k=-c / mO ** 2)

    if kind == INFINITE_SIMPLE:
        if params.K != 0.0:
            raise DomainError("simple-chain closed forms need K = 0")
        omega = params.omega
        x = 4.0 * omega * t
        top = 2 * (int(np.abs(lag).max()) if lag.size else 0) + 2
        table = bessel_j_table(top, x)
        integrals = bessel_j_integral_table(top, x)
        orders = 2 * lag
        J = signed_orders(table, orders)
        Jm1 = signed_orders(table, orders - 1)
        Jp1 = signed_orders(table, orders + 1)
        Jm2 = signed_orders(table, orders - 2)
        Jp2 = signed_orders(table, orders + 2)
        neighbour = (np.abs(lag) == 1).astype(float)

        odd_sums = np.concatenate([[0.0], np.cumsum(integrals[1:top:2])])
        a = 0.5 * (delta + J)
        b = 0.5 * m * omega * (Jm1 - Jp1)
        c = 0.5 * (m * omega) ** 2 * (Jp2 + Jm2 - 2.0 * J - neighbour + 2.0 * delta)
        d = (t / (2.0 * omega * m ** 2)) * (integrals[0] - table[1]) \
            - odd_sums[np.abs(lag)] / (2.0 * omega * m) ** 2
        e = integrals[np.abs(orders)] / (4.0 * omega * m)
        k = 0.5 * (J - delta)
        return CorrelationCoefficients(a=a, b=b, c=c, d=d, e=e, k=k)

    raise UnsupportedTopologyError(f"closed-form coefficients need an infinite chain, got {kind}")


def homogeneous_covariance(params: ChainParams, kind: str, dq2, dp2, sigma_qp, lag, t: float):
    """
    由闭式系数组装 (Σqq, Σqp, Σpp)，宽度可以是与 lag 同形的数组（缓变情形取中点值）。
    """
    co = correlation_coefficients(params, kind, lag, t)
    qq = co.a * dq2 + 2.0 * co.e * sigma_qp + co.d * dp2
    qp = co.b * dq2 + (co.a + co.k) * sigma_qp + co.e * dp2
    pp = co.c * dq2 + 2.0 * co.b * sigma_qp + co.a * dp2
    return qq, qp, pp


def _evolve_homogeneous(state: GaussianChainState, prop: Propagator, t: float) -> GaussianChainState:
    params = state.params
    desc = state.descriptor
    size = state.size
    n = np.arange(size)
    lag = n[:, None] - n[None, :]
    if desc.slowly_varying:
        mid = (n[:, None] + n[None, :]) // 2
        dq2, dp2, sigma = desc.dq2[mid], desc.dp2[mid], desc.sigma_qp[mid]
    else:
        dq2, dp2, sigma = desc.dq2[0], desc.dp2[0], desc.sigma_qp[0]
    qq, qp, pp = homogeneous_covariance(params, prop.kind, dq2, dp2, sigma, lag, t)
    q, p = evolve_means(params, prop, state.q, state.p, t)
    return GaussianChainState(params=params, q=q, p=p, qq=qq, qp=qp, pp=pp,
                              representation="homogeneous", time=state.time + t, warnings=prop.warnings)


def evolve_state(state: GaussianChainState, prop: Propagator, t: float, path: str = "auto") -> GaussianChainState:
    """
    把态演化时间 t。

    有限链总是走稠密路径 Σ(t) = S Σ Sᵀ；无限链在无关联初态上默认走闭式路径，
    也可指定 path="dense"（两侧补窗口后做稠密演化）。

    Args:
        state: 初态。
        prop: 覆盖时刻 t 的传播子。
        t: 演化时长（在传播子网格上）。
        path: "auto"、"dense" 或 "homogeneous"。

    Returns:
        新的高斯态。

    Raises:
        ShapeError: 尺寸不匹配。
        InvalidStateError: 闭式路径要求无关联初态。
    """
    if prop.params != state.params:
        raise ShapeError("state and propagator belong to different chains")
    if path not in ("auto", "dense", "homogeneous"):
        raise DomainError(f"unknown evolution path: {path}")
    if prop.kind == FINITE_DFT:
        if path == "homogeneous":
            raise UnsupportedTopologyError("closed-form path applies to infinite chains only")
        return _evolve_dense(state, prop, t)

    closed_ok = state.descriptor is not None
    if path == "homogeneous" and not closed_ok:
        raise InvalidStateError("closed-form path needs an uncorrelated product state")
    if path == "homogeneous" or (path == "auto" and closed_ok):
        return _evolve_homogeneous(state, prop, t)
    return _evolve_dense(state, prop, t)


def evolve_trajectory(state: GaussianChainState, prop: Propagator, t_grid: Sequence[float], path: str = "auto",
                      executor: Optional[Executor] = None) -> List[GaussianChainState]:
    """
    在整条时间网格上演化，结果按网格顺序返回。

    Args:
        state: 初态。
        prop: 覆盖整条网格的传播子。
        t_grid: 时间网格。
        path: 见 evolve_state。
        executor: 可选的线程池，各时刻互相独立。

    Returns:
        各时刻的态。
    """
    times = [float(t) for t in t_grid]
    step = lambda t: evolve_state(state, prop, t, path=path)
    if executor is None:
        return [step(t) for t in times]
    return list(executor.map(step, times))


def equilibrium_limits(params: ChainParams, dq2: float, dp2: float) -> EquilibriumLimits:
    """
    束缚链长时极限：Σqq∞ = ½(Δq² + Δp²/(m²Ω²))，Σpp∞ = ½(m²Ω²Δq² + Δp²)，
    kT = (m²Ω²Δq² + Δp²)/(2m)。

    Raises:
        NoEquilibriumError: K = 0。
    """
    if params.K == 0.0:
        raise NoEquilibriumError("This is not an equilibrium distribution: the simple chain diffuses")
    mO2 = (params.mass * params.Omega) ** 2
    return EquilibriumLimits(
        sigma_pp=0.5 * (mO2 * dq2 + dp2),
        sigma_qq=0.5 * (dq2 + dp2 / mO2),
        kT=(mO2 * dq2 + dp2) / (2.0 * params.mass),
    )


def snapshot_report(state: GaussianChainState, label: str = "state") -> TableReport:
    """(site, q, p, dq2, dp2, sigma_qp) 列式快照。"""
    return table_report(
        label, ("site", "q", "p", "dq2", "dp2", "sigma_qp"),
        np.arange(state.size), state.q, state.p, state.variance_q, state.variance_p, state.sigma_qp,
    )
