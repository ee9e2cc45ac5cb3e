"""
Fourier 空间的局域密度 n(k)、g(k)、τ(k)：均值、方差、峰化比以及退相干尺度扫描。

所有期望值都通过高斯特征函数恒等式
⟨exp(iΣ[α(q−⟨q⟩) + β(p−⟨p⟩)])⟩ = exp(−Σ[½αασ(q,q) + αβσ(q,p) + ½ββσ(p,p)]) 得到，
φ_j = ⟨e^{ikq_j}⟩ = exp(ik⟨q_j⟩ − ½k²Δq_j²)。
"""

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.model.errors import DomainError, ShapeError
from src.model.gaussian import GaussianChainState
from src.model.report import TableReport, table_report

BAND_EPS = 1.0e-14
DEFAULT_EPSILON = 1.0e-3
SAMPLE_CHUNKS = 100


@dataclass(frozen=True)
class DensityStats:
    """单个密度在 k 网格上的均值、方差与比值 var/|mean|²（均值为零处为 nan）。"""
    label: str
    k: np.ndarray
    mean: np.ndarray
    variance: Optional[np.ndarray] = None

    @property
    def ratio(self) -> Optional[np.ndarray]:
        if self.variance is None:
            return None
        power = np.abs(self.mean) ** 2
        ratio = np.full(self.k.shape, np.nan)
        np.divide(self.variance, power, out=ratio, where=power > 0.0)
        return ratio

    def to_table(self) -> TableReport:
        if self.variance is None:
            return table_report(self.label, ("k", "re_mean", "im_mean"), self.k, self.mean.real, self.mean.imag)
        return table_report(
            self.label, ("k", "re_mean", "im_mean", "variance", "ratio"),
            self.k, self.mean.real, self.mean.imag, self.variance, self.ratio,
        )


@dataclass(frozen=True)
class DensityObservables:
    k: np.ndarray
    number: Optional[DensityStats]
    momentum: Optional[DensityStats]
    stress: Optional[DensityStats]
    correlation_length: float

    def tables(self) -> List[TableReport]:
        return [s.to_table() for s in (self.number, self.momentum, self.stress) if s is not None]


@dataclass(frozen=True)
class DecoherenceScan:
    """
    退相干扫描结果。

    Attributes:
        k: 波数网格（升序）。
        times: 轨迹各态的时刻。
        ratio: 形状 (len(times), len(k)) 的数密度比值。
        max_ratio: 每个 k 上比值的时间最大值。
        k_crit: 从小 k 起连续满足 max_ratio < ε 的最大 k，没有则为 nan。
        correlation_lengths: 各时刻的关联长度（格点数）。
    """
    k: np.ndarray
    times: np.ndarray
    ratio: np.ndarray
    max_ratio: np.ndarray
    k_crit: float
    epsilon: float
    correlation_lengths: np.ndarray

    def to_table(self) -> TableReport:
        return table_report("decoherence", ("k", "max_ratio"), self.k, self.max_ratio)


class SampledVariance(NamedTuple):
    value: float
    standard_error: float


def _k_array(k_grid) -> np.ndarray:
    k = np.atleast_1d(np.asarray(k_grid, dtype=float)).ravel()
    if not np.all(np.isfinite(k)):
        raise DomainError("k grid must be finite")
    return k


def characteristic_phases(state: GaussianChainState, k_grid) -> np.ndarray:
    """φ_j(k) = exp(ik⟨q_j⟩ − ½k²Δq_j²)，形状 (len(k), L)。"""
    k = _k_array(k_grid)[:, None]
    return np.exp(1j * k * state.q[None, :] - 0.5 * k * k * state.variance_q[None, :])


def _pair_distance(state: GaussianChainState, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    distance = np.abs(rows - cols)
    if state.params.is_finite:
        distance = np.minimum(distance, state.size - distance)
    return distance


def band_width(state: GaussianChainState, eps: float = BAND_EPS) -> int:
    """格点距离（有限链按环距离）超过 W 时协方差三个块都低于 eps（相对于对角尺度）的最小 W。"""
    scale = max(float(np.abs(state.qq).max()), float(np.abs(state.pp).max()), float(np.abs(state.qp).max()), 1.0e-300)
    large = (np.abs(state.qq) > eps * scale) | (np.abs(state.pp) > eps * scale) | (np.abs(state.qp) > eps * scale)
    rows, cols = np.nonzero(large)
    return int(_pair_distance(state, rows, cols).max()) if rows.size else 0


def band_pairs(state: GaussianChainState, eps: float = BAND_EPS) -> Tuple[np.ndarray, np.ndarray]:
    """
    带内的有序下标对 (j, n)，每对恰好出现一次，共 O(L·W) 个。

    有限环上按环距离取对角线 n = j + d (mod N)，|d| ≤ W；无限链窗口取不越界的对角线。
    """
    size = state.size
    width = band_width(state, eps)
    index = np.arange(size)
    if state.params.is_finite:
        offsets = np.arange(size) if 2 * width + 1 >= size else np.arange(-width, width + 1)
        rows = np.repeat(index, offsets.size)
        return rows, (rows + np.tile(offsets, size)) % size
    offsets = np.arange(-width, width + 1)
    rows = np.repeat(index, offsets.size)
    cols = rows + np.tile(offsets, size)
    inside = (cols >= 0) & (cols < size)
    return rows[inside], cols[inside]


def number_density_stats(state: GaussianChainState, k_grid, band_eps: float = BAND_EPS) -> DensityStats:
    """
    ⟨n(k)⟩ = Σ_j φ_j，(Δn(k))² = Σ_{jn} φ_j φ̄_n (e^{k²σ(q_j,q_n)} − 1)。

    双重求和限制在协方差带宽内，带外的项按零处理。

    Args:
        state: 高斯态。
        k_grid: 波数。
        band_eps: 带宽截断阈值。

    Returns:
        DensityStats，k = 0 时均值为 L、方差为 0。
    """
    k = _k_array(k_grid)
    phases = characteristic_phases(state, k)
    rows, cols = band_pairs(state, band_eps)
    qq = state.qq[rows, cols]
    variance = np.empty(k.size)
    for i, kk in enumerate(k):
        kernel = np.expm1(kk * kk * qq)
        variance[i] = float(np.real(np.sum(phases[i, rows] * kernel * np.conj(phases[i, cols]))))
    return DensityStats(label="number_density", k=k, mean=phases.sum(axis=1), variance=variance)


def momentum_density_stats(state: GaussianChainState, k_grid, band_eps: float = BAND_EPS) -> DensityStats:
    """
    动量密度 g(k) = Σ_j p_j e^{ikq_j}。

    ⟨g(k)⟩ = Σ_j (⟨p_j⟩ + ikσ(q_j,p_j)) φ_j，
    (Δg(k))² = Σ_{jn} φ_j φ̄_n {[σ(p_j,p_n) + A_jn B_jn] e^{k²σ(q_j,q_n)} − α_j ᾱ_n}，
    其中 A_jn = ⟨p_j⟩ + ik[σ(q_j,p_j) − σ(q_n,p_j)]，
    B_jn = ⟨p_n⟩ − ik[σ(q_n,p_n) − σ(q_j,p_n)]，α_j = ⟨p_j⟩ + ikσ(q_j,p_j)。

    Args:
        state: 高斯态。
        k_grid: 波数。
        band_eps: 带宽截断阈值。

    Returns:
        DensityStats；k = 0 时方差为总动量方差。
    """
    k = _k_array(k_grid)
    phases = characteristic_phases(state, k)
    rows, cols = band_pairs(state, band_eps)
    p = state.p
    same = state.sigma_qp
    qq, pp = state.qq[rows, cols], state.pp[rows, cols]
    qp_nj, qp_jn = state.qp[cols, rows], state.qp[rows, cols]

    mean = np.empty(k.size, dtype=complex)
    variance = np.empty(k.size)
    for i, kk in enumerate(k):
        alpha = p + 1j * kk * same
        mean[i] = np.sum(alpha * phases[i])
        # 带内每一对 (j, n) 上的 A_jn 与 B_jn
        A = alpha[rows] - 1j * kk * qp_nj
        B = np.conj(alpha[cols]) + 1j * kk * qp_jn
        inner = (pp + A * B) * np.exp(kk * kk * qq) - alpha[rows] * np.conj(alpha[cols])
        variance[i] = float(np.real(np.sum(phases[i, rows] * inner * np.conj(phases[i, cols]))))
    return DensityStats(label="momentum_density", k=k, mean=mean, variance=variance)


def _bonds(state: GaussianChainState):
    """相邻键：(q_{j+1} − q_j, 右邻下标, 环绕平移)。有限链为环，无限窗口只取内部键。"""
    params = state.params
    size = state.size
    if params.is_finite:
        right = np.roll(np.arange(size), -1)
        shift = np.zeros(size)
        shift[-1] = size * params.spacing
        left_sites = np.arange(size)
    else:
        right = np.arange(1, size)
        shift = np.zeros(size - 1)
        left_sites = np.arange(size - 1)
    stretch = state.q[right] + shift - state.q[left_sites]
    return left_sites, right, shift, stretch


def _shifted_phases(phases: np.ndarray, right: np.ndarray, shift: np.ndarray, k: np.ndarray) -> np.ndarray:
    return phases[:, right] * np.exp(1j * np.outer(k, shift))


def _difference_quotient(k: np.ndarray, left, right_phases, q_left, q_right) -> np.ndarray:
    # (φ_j − φ_{j+1})/(ik)，k = 0 时取极限 q_j − q_{j+1}
    out = np.empty(right_phases.shape, dtype=complex)
    nonzero = k != 0.0
    out[nonzero] = (left[nonzero] - right_phases[nonzero]) / (1j * k[nonzero, None])
    out[~nonzero] = (q_left - q_right)[None, :]
    return out


def stress_components(state: GaussianChainState, k_grid):
    """
    ⟨τ(k)⟩ 的两部分 (τ_p, τ_q)。

    τ_p = Σ_j [(⟨p_j⟩ + ikσ(q_j,p_j))²/m + C_j] φ_j，
    C_j = Δp_j²/m + ν²[σ(q_{j+1},q_j) − 2Δq_j² + σ(q_j,q_{j−1})]；
    τ_q = ν² Σ_j (⟨q_{j+1}⟩ − ⟨q_j⟩)(φ_j − φ_{j+1})/(ik)，即二阶差分形式分部求和后的写法，
    在 k → 0 处有限。
    """
    params = state.params
    k = _k_array(k_grid)
    phases = characteristic_phases(state, k)
    m, nu2 = params.mass, params.nu2
    c_terms = stress_offsets(state)

    sigma = state.sigma_qp
    amplitude = (state.p[None, :] + 1j * k[:, None] * sigma[None, :]) ** 2 / m + c_terms[None, :]
    tau_p = np.sum(amplitude * phases, axis=1)

    left_sites, right, shift, stretch = _bonds(state)
    right_phases = _shifted_phases(phases, right, shift, k)
    quotient = _difference_quotient(k, phases[:, left_sites], right_phases,
                                    state.q[left_sites], state.q[right] + shift)
    tau_q = nu2 * np.sum(stretch[None, :] * quotient, axis=1)
    return tau_p, tau_q


def stress_mean(state: GaussianChainState, k_grid) -> DensityStats:
    """⟨τ(k)⟩ = τ_p + τ_q，见 stress_components。"""
    k = _k_array(k_grid)
    tau_p, tau_q = stress_components(state, k)
    return DensityStats(label="stress", k=k, mean=tau_p + tau_q)


def stress_offsets(state: GaussianChainState) -> np.ndarray:
    """各格点的 C_j；简正模相干态下全为零。"""
    params = state.params
    size = state.size
    index = np.arange(size)
    if params.is_finite:
        up, down = np.roll(index, -1), np.roll(index, 1)
    else:
        up = np.minimum(index + 1, size - 1)
        down = np.maximum(index - 1, 0)
        # 窗口边缘缺一侧邻居，用另一侧代替
        up[-1], down[0] = down[-1], up[0]
    return state.variance_p / params.mass + params.nu2 * (
        state.qq[up, index] - 2.0 * state.variance_q + state.qq[index, down]
    )


def displacement_density(state: GaussianChainState, k_grid) -> np.ndarray:
    """线性化的数密度扰动 n₁(k) = ik Σ_j u_j e^{ikjd}。"""
    k = _k_array(k_grid)
    sites = state.params.sites(state.size)
    return 1j * k * (np.exp(1j * np.outer(k, sites)) @ state.displacements)


def energy_density_mean(state: GaussianChainState, k_grid) -> np.ndarray:
    """
    均值构型上的能量密度 h(k) = Σ_j [p_j²/2m + ½ν²(q_j − q_{j−1})² + ½K u_j²] e^{ikq_j}。
    """
    params = state.params
    k = _k_array(k_grid)
    q, p, u = state.q, state.p, state.displacements
    backward = _backward_stretch(state)
    density = p * p / (2.0 * params.mass) + 0.5 * params.nu2 * backward ** 2 + 0.5 * params.K * u * u
    return np.exp(1j * np.outer(k, q)) @ density


def _backward_stretch(state: GaussianChainState) -> np.ndarray:
    params = state.params
    q = state.q
    if params.is_finite:
        previous = np.roll(q, 1)
        previous[0] -= state.size * params.spacing
        return q - previous
    stretch = np.zeros(q.size)
    stretch[1:] = np.diff(q)
    return stretch


def current_mean(state: GaussianChainState, k_grid) -> np.ndarray:
    """
    均值构型上的能流
    j(k) = Σ_j (p_j/m)[p_j²/2m + ½K u_j² + ½ν²(q_j − q_{j−1})²] e^{ikq_j}
         + ν² Σ_j (p_j/m)(q_{j+1} − q_j)(e^{ikq_j} − e^{ikq_{j+1}})/(ik)。

    沿经典轨迹满足 ∂_t h(k) = ik j(k)。
    """
    params = state.params
    k = _k_array(k_grid)
    q, p, u = state.q, state.p, state.displacements
    m = params.mass
    velocity = p / m
    local = velocity * (p * p / (2.0 * m) + 0.5 * params.K * u * u + 0.5 * params.nu2 * _backward_stretch(state) ** 2)
    waves = np.exp(1j * np.outer(k, q))
    first = waves @ local

    left_sites, right, shift, stretch = _bonds(state)
    right_waves = _shifted_phases(waves, right, shift, k)
    quotient = _difference_quotient(k, waves[:, left_sites], right_waves, q[left_sites], q[right] + shift)
    second = params.nu2 * np.sum((velocity[left_sites] * stretch)[None, :] * quotient, axis=1)
    return first + second


def correlation_length(state: GaussianChainState) -> float:
    """
    |σ(q_n, q_{n+d})|/√(Δq_n²Δq_{n+d}²) 对 n 平均后首次低于 1/e 的滞后 d（线性插值，单位为格点）。

    有限链按环距离取 d ≤ N/2；剖面始终不低于 1/e 时返回 inf。
    """
    size = state.size
    diag = np.sqrt(np.clip(state.variance_q, 1.0e-300, None))
    index = np.arange(size)
    periodic = state.params.is_finite
    max_lag = size // 2 if periodic else size - 1
    profile = np.empty(max_lag + 1)
    for d in range(max_lag + 1):
        if periodic:
            other = (index + d) % size
            rows = index
        else:
            rows = index[: size - d]
            other = rows + d
        profile[d] = np.mean(np.abs(state.qq[rows, other]) / (diag[rows] * diag[other]))

    threshold = math.exp(-1.0)
    below = np.flatnonzero(profile < threshold)
    if below.size == 0:
        logger.debug("correlation profile stays above 1/e over the whole window")
        return math.inf
    d = int(below[0])
    if d == 0:
        return 0.0
    hi, lo = profile[d - 1], profile[d]
    return float(d - 1 + (hi - threshold) / (hi - lo))


def default_k_grid(state: GaussianChainState, count: int = 32) -> np.ndarray:
    """从 2π/(L b) 到 π/Δq 的对数网格；b = 0 时以 Δq 代替格距。"""
    width = math.sqrt(float(state.variance_q.max()))
    if width <= 0.0:
        raise DomainError("default k grid needs a nonzero position width")
    spacing = state.params.spacing or width
    k_min = 2.0 * math.pi / (state.size * spacing)
    k_max = math.pi / width
    if k_max <= k_min:
        k_max = 10.0 * k_min
    return np.geomspace(k_min, k_max, count)


def density_observables(state: GaussianChainState, k_grid, observables: Sequence[str] = ("n", "g", "tau"),
                        band_eps: float = BAND_EPS) -> DensityObservables:
    """按需计算 n、g、τ 三种密度，并附上关联长度。"""
    unknown = set(observables) - {"n", "g", "tau"}
    if unknown:
        raise DomainError(f"unknown density observables: {sorted(unknown)}")
    k = _k_array(k_grid)
    return DensityObservables(
        k=k,
        number=number_density_stats(state, k, band_eps) if "n" in observables else None,
        momentum=momentum_density_stats(state, k, band_eps) if "g" in observables else None,
        stress=stress_mean(state, k) if "tau" in observables else None,
        correlation_length=correlation_length(state),
    )


def decoherence_scan(trajectory: Sequence[GaussianChainState], k_grid, epsilon: float = DEFAULT_EPSILON,
                     band_eps: float = BAND_EPS) -> DecoherenceScan:
    """
    沿轨迹扫描数密度的峰化比，找出最大的退相干波数。

    Args:
        trajectory: 时间网格上的态序列。
        k_grid: 波数网格，会按升序排列。
        epsilon: 比值阈值 ε。
        band_eps: 带宽截断阈值。

    Returns:
        DecoherenceScan；k = 0 处比值按 0 计。
    """
    if not trajectory:
        raise ShapeError("decoherence scan needs at least one state")
    k = np.sort(_k_array(k_grid))
    surface = np.empty((len(trajectory), k.size))
    lengths = np.empty(len(trajectory))
    for i, state in enumerate(trajectory):
        stats = number_density_stats(state, k, band_eps)
        ratio = stats.ratio
        ratio[k == 0.0] = 0.0
        surface[i] = ratio
        lengths[i] = correlation_length(state)

    max_ratio = np.nanmax(surface, axis=0) if surface.size else np.empty(0)
    passing = max_ratio < epsilon
    failed = np.flatnonzero(~passing)
    prefix = failed[0] if failed.size else k.size
    k_crit = float(k[prefix - 1]) if prefix > 0 else math.nan
    logger.debug(f"decoherence scan: k_crit={k_crit:.6g} at epsilon={epsilon:g}")
    return DecoherenceScan(
        k=k, times=np.array([s.time for s in trajectory]), ratio=surface, max_ratio=max_ratio,
        k_crit=k_crit, epsilon=epsilon, correlation_lengths=lengths,
    )


def _phase_space_samples(state: GaussianChainState, samples: int, rng: np.random.Generator):
    mean = np.concatenate([state.q, state.p])
    draws = rng.multivariate_normal(mean, state.covariance(), size=samples, method="eigh")
    return draws[:, : state.size], draws[:, state.size:]


def _sampled_variance(state: GaussianChainState, samples: int, rng: np.random.Generator, observable) -> SampledVariance:
    if samples < 2 * SAMPLE_CHUNKS:
        raise DomainError(f"need at least {2 * SAMPLE_CHUNKS} samples, got {samples}")
    per_chunk = samples // SAMPLE_CHUNKS
    estimates = np.empty(SAMPLE_CHUNKS)
    for c in range(SAMPLE_CHUNKS):
        q, p = _phase_space_samples(state, per_chunk, rng)
        values = observable(q, p)
        estimates[c] = np.sum(np.abs(values - values.mean()) ** 2) / (values.size - 1)
    return SampledVariance(
        value=float(estimates.mean()),
        standard_error=float(estimates.std(ddof=1) / math.sqrt(SAMPLE_CHUNKS)),
    )


def sample_number_density_variance(state: GaussianChainState, k: float, samples: int,
                                   rng: np.random.Generator) -> SampledVariance:
    """从相空间高斯分布抽样估计 (Δn(k))²，按分块给出标准误差。"""
    return _sampled_variance(state, samples, rng, lambda q, p: np.exp(1j * k * q).sum(axis=1))


def sample_momentum_density_variance(state: GaussianChainState, k: float, samples: int,
                                     rng: np.random.Generator) -> SampledVariance:
    """从相空间高斯分布抽样估计 (Δg(k))²。"""
    return _sampled_variance(state, samples, rng, lambda q, p: (p * np.exp(1j * k * q)).sum(axis=1))
