"""
流体层：从微观均值提取场、局域平衡诊断、两套流体方程求解器，以及微观与流体演化的对比。

    - wave_solve：n₁ 的线性波动方程，蛙跳格式；
    - euler_solve：谐振势中 (f, v, θ) 的一维流体方程，线方法 + RK4；
    - compare_micro_hydro：同一初场分别走微观演化与波动方程，给出相对误差与实测声速。
"""

import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.model.chain import FINITE_DFT, ChainParams, evolve_means, propagator
from src.model.errors import CFLViolationError, DomainError, ShapeError, SolverHaltError
from src.model.gaussian import GaussianChainState, EquilibriumLimits, equilibrium_limits, evolve_trajectory, product_state
from src.model.report import TableReport, table_report

N_FLOOR = 1.0e-8
HALT_FLOOR = 1.0e-14
UPWIND_THRESHOLD = 0.3
EQUILIBRIUM_TOLERANCE = 0.05
PERIODIC = "periodic"
REFLECTING = "reflecting"
CLOSED = "closed"
# 测速脉冲的初始中心（环长的比例）
PULSE_CENTRE = 0.25


@dataclass(frozen=True)
class HydroFields:
    """
    空间网格上的流体场，v、θ 在 n 低于阈值处为 nan（mask 为 True）。
    """
    x: np.ndarray
    n: np.ndarray
    n0: np.ndarray
    n1: np.ndarray
    g: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    f: np.ndarray
    mask: np.ndarray
    time: float = 0.0

    def to_table(self, label: str = "fields") -> TableReport:
        return table_report(label, ("x", "n", "n1", "v", "theta"), self.x, self.n, self.n1, self.v, self.theta)


@dataclass(frozen=True)
class WaveSolution:
    x: np.ndarray
    times: np.ndarray
    n1: np.ndarray
    energy: np.ndarray
    mass: np.ndarray
    dt: float
    courant: float


@dataclass(frozen=True)
class EulerSolution:
    x: np.ndarray
    times: np.ndarray
    f: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    steps: int

    def snapshot(self, index: int, mass: float = 1.0, norm: float = 1.0) -> HydroFields:
        """第 index 个输出时刻的场，n₀ 取初始时刻的 n。"""
        f = self.f[index]
        n = norm * f
        n0 = norm * self.f[0]
        return HydroFields(
            x=self.x, n=n, n0=n0, n1=n - n0, g=mass * self.v[index] * n, v=self.v[index], theta=self.theta[index],
            f=f, mask=np.zeros(n.shape, dtype=bool), time=float(self.times[index]),
        )


@dataclass(frozen=True)
class EquilibriumMetric:
    """
    局域平衡诊断，各分量均非负。

    Attributes:
        correlation: max_j |σ(q_j,p_j)|/√(Δq_j²Δp_j²)。
        flatness: Δp_j² 相邻格点的最大相对差。
        distance: (Δq², Δp²) 与平衡极限的最大相对距离，K = 0 时为 inf。
        converged_at: 三者首次都低于容差的时刻，未收敛为 nan。
    """
    times: np.ndarray
    correlation: np.ndarray
    flatness: np.ndarray
    distance: np.ndarray
    tolerance: float
    converged_at: float

    def to_table(self) -> TableReport:
        return table_report("equilibrium", ("t", "correlation", "flatness", "distance"),
                            self.times, self.correlation, self.flatness, self.distance)


@dataclass(frozen=True)
class HydroScenario:
    """
    微观与流体对比的场景：有限环形链上的正弦位移初态。

    Attributes:
        params: 有限链参数。
        wavelength: 位移波长 λ。
        amplitude: 位移振幅，以格距 d 为单位。
        smearing_width: 平滑宽度 w。
        dq2, dp2: 初态宽度，默认取对应 Ω 的最小不确定态。
        x_count: 空间网格点数。
        courant: 波动方程的 Courant 数。
    """
    params: ChainParams
    wavelength: float
    amplitude: float
    smearing_width: float
    dq2: Optional[float] = None
    dp2: Optional[float] = None
    x_count: Optional[int] = None
    courant: float = 0.5

    def initial_state(self) -> GaussianChainState:
        params = self.params
        n = params.n_particles
        mO = params.mass * params.Omega
        dq2 = self.dq2 if self.dq2 is not None else params.hbar / (2.0 * mO)
        dp2 = self.dp2 if self.dp2 is not None else 0.5 * params.hbar * mO
        sites = params.sites(n)
        kappa = 2.0 * math.pi / self.wavelength
        q = sites + self.amplitude * params.spacing * np.sin(kappa * sites)
        return product_state(params, q, np.zeros(n), dq2, dp2)


@dataclass(frozen=True)
class MicroHydroComparison:
    times: np.ndarray
    l2: np.ndarray
    linf: np.ndarray
    speed: float
    expected_speed: float
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    def to_table(self) -> TableReport:
        return table_report("comparison", ("t", "L2", "Linf"), self.times, self.l2, self.linf)


def _minimum_image(delta: np.ndarray, period: Optional[float]) -> np.ndarray:
    if period is None:
        return delta
    return (delta + 0.5 * period) % period - 0.5 * period


def smearing_kernel(x: np.ndarray, centres: np.ndarray, width: float, period: Optional[float] = None) -> np.ndarray:
    """归一化高斯核 K_w(x_i − c_j)，给定周期时取最小像距离。"""
    if not width > 0.0:
        raise DomainError(f"smearing width must be positive, got {width}")
    delta = _minimum_image(np.subtract.outer(np.asarray(x, dtype=float), np.asarray(centres, dtype=float)), period)
    return np.exp(-0.5 * (delta / width) ** 2) / (math.sqrt(2.0 * math.pi) * width)


def _chain_period(state: GaussianChainState) -> Optional[float]:
    params = state.params
    if params.is_finite and params.spacing > 0.0:
        return params.n_particles * params.spacing
    return None


def extract_fields(state: GaussianChainState, grid: Sequence[float], width: float, n_floor: float = N_FLOOR,
                   norm: float = 1.0) -> HydroFields:
    """
    从高斯态的均值与动量宽度构造平滑场。

    n = Σ_j K_w(x − ⟨q_j⟩)，g = Σ_j ⟨p_j⟩K_w，v = g/(m n)，θ = Σ_j Δp_j² K_w/(m n)，
    n₀ 为格点位置平滑后的背景。有限链按环处理。

    Args:
        state: 高斯态。
        grid: 空间网格。
        width: 平滑宽度 w。
        n_floor: n 低于此值处 v、θ 置为 nan。
        norm: n = norm · f 中的归一化常数。

    Returns:
        HydroFields。

    Raises:
        DomainError: w 小于最大粒子间距的 3 倍。
    """
    x = np.asarray(grid, dtype=float).ravel()
    params = state.params
    period = _chain_period(state)
    ordered = np.sort(state.q)
    if ordered.size > 1:
        gaps = np.diff(ordered)
        if period is not None:
            gaps = np.append(gaps, ordered[0] + period - ordered[-1])
        if width < 3.0 * gaps.max():
            raise DomainError(f"smearing width {width:g} below 3x the largest particle gap {gaps.max():.6g}")

    kernel = smearing_kernel(x, state.q, width, period)
    background = smearing_kernel(x, params.sites(state.size), width, period)
    n = kernel.sum(axis=1)
    n0 = background.sum(axis=1)
    g = kernel @ state.p
    spread = kernel @ state.variance_p

    mask = n <= n_floor
    safe = np.where(mask, 1.0, n)
    v = np.where(mask, np.nan, g / (params.mass * safe))
    theta = np.where(mask, np.nan, spread / (params.mass * safe))
    if mask.any():
        logger.warning(f"{int(mask.sum())} grid points below n_floor={n_floor:g}; v and theta masked there")
    return HydroFields(x=x, n=n, n0=n0, n1=n - n0, g=g, v=v, theta=theta, f=n / norm, mask=mask, time=state.time)


def local_equilibrium_distribution(p, f, v, theta, mass: float) -> np.ndarray:
    """单粒子局域平衡分布 w = f exp(−(p − m v)²/(2 m θ))，参数按广播规则组合。"""
    p = np.asarray(p, dtype=float)
    return np.asarray(f) * np.exp(-((p - mass * np.asarray(v)) ** 2) / (2.0 * mass * np.asarray(theta)))


def local_equilibrium_moments(x, f, v, theta, mass: float, K: float, norm: float = 1.0) -> Dict[str, np.ndarray]:
    """
    忽略相互作用、b_j = 0 时局域平衡态下的平均密度与流。

    Returns:
        包含 n、g、h、tau、j 的字典。
    """
    x, f, v, theta = (np.asarray(a, dtype=float) for a in (x, f, v, theta))
    n = norm * f
    g = mass * v * n
    return {
        "n": n,
        "g": g,
        "h": (0.5 * mass * v * v + 0.5 * theta + 0.5 * K * x * x) * n,
        "tau": (mass * v * v + theta) * n,
        "j": (1.5 * v * theta + 0.5 * mass * v ** 3) * n + (K / (2.0 * mass)) * x * x * g,
    }


def _uniform_grid(x: np.ndarray) -> float:
    if x.size < 3:
        raise ShapeError("spatial grid needs at least 3 points")
    steps = np.diff(x)
    if not np.allclose(steps, steps[0], rtol=1.0e-9, atol=0.0) or steps[0] <= 0.0:
        raise DomainError("spatial grid must be uniform and increasing")
    return float(steps[0])


def _uniform_times(t_grid: Sequence[float]) -> np.ndarray:
    times = np.asarray(t_grid, dtype=float).ravel()
    if times.size == 0 or times[0] != 0.0:
        raise DomainError("time grid must start at t = 0")
    if times.size > 1:
        steps = np.diff(times)
        if np.any(steps <= 0.0) or not np.allclose(steps, steps[0], rtol=1.0e-9, atol=0.0):
            raise DomainError("time grid must be uniform and strictly increasing")
    return times


def _laplacian(u: np.ndarray, boundary: str) -> np.ndarray:
    if boundary == PERIODIC:
        return np.roll(u, -1) - 2.0 * u + np.roll(u, 1)
    lap = np.empty_like(u)
    lap[1:-1] = u[2:] - 2.0 * u[1:-1] + u[:-2]
    # Neumann：镜像虚点 u_{−1} = u_1
    lap[0] = 2.0 * (u[1] - u[0])
    lap[-1] = 2.0 * (u[-2] - u[-1])
    return lap


def wave_energy(u_prev: np.ndarray, u_next: np.ndarray, c: float, dx: float, dt: float, boundary: str = PERIODIC) -> float:
    """
    两个相邻时间层之间的交错离散能量 ½Σ[((u^{n+1} − u^n)/dt)² + c²(D⁺u^{n+1})(D⁺u^n)]dx，蛙跳格式下严格守恒。
    """
    velocity = (u_next - u_prev) / dt
    if boundary == PERIODIC:
        grad_next = (np.roll(u_next, -1) - u_next) / dx
        grad_prev = (np.roll(u_prev, -1) - u_prev) / dx
        weights = np.ones_like(u_next)
    else:
        grad_next = np.diff(u_next) / dx
        grad_prev = np.diff(u_prev) / dx
        weights = np.ones_like(u_next)
        weights[[0, -1]] = 0.5
    return float(0.5 * dx * (np.sum(weights * velocity ** 2) + c * c * np.sum(grad_next * grad_prev)))


def _wave_mass(u: np.ndarray, dx: float, boundary: str) -> float:
    if boundary == PERIODIC:
        return float(u.sum() * dx)
    return float((u.sum() - 0.5 * (u[0] + u[-1])) * dx)


def wave_solve(x: Sequence[float], n1: Sequence[float], dn1: Sequence[float], c: float, t_grid: Sequence[float],
               boundary: str = PERIODIC, courant: float = 0.5) -> WaveSolution:
    """
    用蛙跳格式求解 ∂²n₁/∂t² = c²∂²n₁/∂x²。

    周期网格不含右端点；反射边界的网格包含两端点，用镜像虚点实现 Neumann 条件。
    首步使用 u¹ = u⁰ + dt·∂t u⁰ + ½C²Δu⁰。

    Args:
        x: 均匀空间网格。
        n1: 初始 n₁。
        dn1: 初始 ∂t n₁。
        c: 波速。
        t_grid: 从 0 开始的均匀输出时间。
        boundary: periodic 或 reflecting。
        courant: Courant 数上限 C = c dt/dx，实际步长不超过它。

    Returns:
        WaveSolution，包含各输出时刻的解、离散能量与 ∫n₁dx。

    Raises:
        CFLViolationError: C > 1。
    """
    if boundary not in (PERIODIC, REFLECTING):
        raise DomainError(f"unknown wave boundary: {boundary}")
    if courant > 1.0:
        raise CFLViolationError(f"Courant number {courant:g} > 1: leapfrog is unstable")
    if not courant > 0.0 or c < 0.0:
        raise DomainError("courant must be positive and c nonnegative")
    x = np.asarray(x, dtype=float).ravel()
    dx = _uniform_grid(x)
    u0 = np.asarray(n1, dtype=float).ravel().copy()
    v0 = np.asarray(dn1, dtype=float).ravel()
    if u0.shape != x.shape or v0.shape != x.shape:
        raise ShapeError("initial fields must match the spatial grid")
    times = _uniform_times(t_grid)

    interval = float(times[1] - times[0]) if times.size > 1 else 0.0
    if interval > 0.0 and c > 0.0:
        substeps = max(1, int(math.ceil(interval * c / (courant * dx) - 1.0e-9)))
    else:
        substeps = 1
    dt = interval / substeps if interval > 0.0 else courant * dx / max(c, 1.0e-300)
    C2 = (c * dt / dx) ** 2
    logger.debug(f"wave_solve: dx={dx:.6g}, dt={dt:.6g}, C={math.sqrt(C2):.6g}, {substeps} steps per output")

    prev = u0
    curr = u0 + dt * v0 + 0.5 * C2 * _laplacian(u0, boundary)
    history = [u0.copy()]
    energies = [wave_energy(prev, curr, c, dx, dt, boundary)]
    masses = [_wave_mass(u0, dx, boundary)]
    step = 1
    for i in range(1, times.size):
        target = i * substeps
        while step < target:
            prev, curr = curr, 2.0 * curr - prev + C2 * _laplacian(curr, boundary)
            step += 1
        history.append(curr.copy())
        nxt = 2.0 * curr - prev + C2 * _laplacian(curr, boundary)
        energies.append(wave_energy(curr, nxt, c, dx, dt, boundary))
        masses.append(_wave_mass(curr, dx, boundary))

    return WaveSolution(x=x, times=times, n1=np.array(history), energy=np.array(energies),
                        mass=np.array(masses), dt=dt, courant=math.sqrt(C2))


def centroid_speed(x: Sequence[float], n1_history: np.ndarray, times: Sequence[float]) -> float:
    """
    右行脉冲的传播速度：初始质心右侧 n₁ 正部分的质心对时间做最小二乘拟合，只用后一半时刻（两脉冲已分离）。
    """
    x = np.asarray(x, dtype=float)
    times = np.asarray(times, dtype=float)
    history = np.asarray(n1_history, dtype=float)
    weight0 = np.abs(history[0])
    origin = float(np.sum(x * weight0) / np.sum(weight0))
    right = x >= origin
    centroids = []
    for row in history:
        positive = np.clip(row[right], 0.0, None)
        centroids.append(np.sum(x[right] * positive) / np.sum(positive))
    half = times.size // 2
    slope, _ = np.polyfit(times[half:], np.asarray(centroids)[half:], 1)
    return float(slope)


def _ddx(a: np.ndarray, dx: float, boundary: str) -> np.ndarray:
    if boundary == PERIODIC:
        return (np.roll(a, -1) - np.roll(a, 1)) / (2.0 * dx)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - a[:-2]) / (2.0 * dx)
    out[0] = (-3.0 * a[0] + 4.0 * a[1] - a[2]) / (2.0 * dx)
    out[-1] = (3.0 * a[-1] - 4.0 * a[-2] + a[-3]) / (2.0 * dx)
    return out


def _upwind(a: np.ndarray, velocity: np.ndarray, dx: float, boundary: str) -> np.ndarray:
    if boundary == PERIODIC:
        backward = (a - np.roll(a, 1)) / dx
        forward = (np.roll(a, -1) - a) / dx
    else:
        backward = np.empty_like(a)
        forward = np.empty_like(a)
        backward[1:] = np.diff(a) / dx
        forward[:-1] = np.diff(a) / dx
        backward[0] = forward[0]
        forward[-1] = backward[-1]
    return np.where(velocity > 0.0, backward, forward)


def _advect(a: np.ndarray, velocity: np.ndarray, dx: float, dt: float, boundary: str) -> np.ndarray:
    centred = _ddx(a, dx, boundary)
    fast = np.abs(velocity) * dt / dx > UPWIND_THRESHOLD
    if not fast.any():
        return velocity * centred
    return velocity * np.where(fast, _upwind(a, velocity, dx, boundary), centred)


def _mass_flux_divergence(f: np.ndarray, v: np.ndarray, dx: float, dt: float, boundary: str) -> np.ndarray:
    # 有限体积：界面通量 F_{i+½}，闭合边界处通量为零
    if boundary == PERIODIC:
        f_right, v_right = np.roll(f, -1), np.roll(v, -1)
    else:
        f_right, v_right = np.append(f[1:], f[-1]), np.append(v[1:], v[-1])
    v_face = 0.5 * (v + v_right)
    f_face = 0.5 * (f + f_right)
    fast = np.abs(v_face) * dt / dx > UPWIND_THRESHOLD
    if fast.any():
        f_face = np.where(fast, np.where(v_face > 0.0, f, f_right), f_face)
    flux = v_face * f_face
    if boundary != PERIODIC:
        flux[-1] = 0.0
        flux_left = np.concatenate([[0.0], flux[:-1]])
    else:
        flux_left = np.roll(flux, 1)
    return (flux - flux_left) / dx


def _euler_rhs(f, v, theta, x, mass, K, dx, dt, boundary):
    dv = _ddx(v, dx, boundary)
    df = -_mass_flux_divergence(f, v, dx, dt, boundary)
    dv_dt = (-_advect(v, v, dx, dt, boundary)
             - _ddx(theta, dx, boundary) / mass
             - theta * _ddx(np.log(f), dx, boundary) / mass
             - K * x / mass)
    dtheta = -_advect(theta, v, dx, dt, boundary) - 2.0 * theta * dv
    return df, dv_dt, dtheta


def _halt_check(t: float, x, f, v, theta, floor: float) -> None:
    bad_f = ~(f > floor)
    bad_theta = ~(theta > floor)
    if bad_f.any() or bad_theta.any():
        where = "f" if bad_f.any() else "theta"
        index = int(np.flatnonzero(bad_f if bad_f.any() else bad_theta)[0])
        message = f"euler solver halted at t={t:.6g}: {where} reached the floor {floor:g} at x={x[index]:.6g}"
        logger.error(message)
        raise SolverHaltError(message, state_dump={"t": t, "x": x.copy(), "f": f.copy(), "v": v.copy(),
                                                   "theta": theta.copy()})


def euler_energy(x, f, v, theta, mass: float, K: float, dx: float) -> float:
    """∫ f(½mv² + ½θ + ½Kx²) dx。"""
    return float(np.sum(f * (0.5 * mass * v * v + 0.5 * theta + 0.5 * K * x * x)) * dx)


def euler_solve(x: Sequence[float], f: Sequence[float], v: Sequence[float], theta: Sequence[float],
                mass: float, K: float, t_grid: Sequence[float], boundary: str = CLOSED, cfl: float = 0.4,
                floor: float = HALT_FLOOR) -> EulerSolution:
    """
    求解谐振势中的一维流体方程
        ∂t f + ∂x(f v) = 0，
        ∂t v + v∂x v = −(1/m)∂x θ − (θ/m)∂x ln f − Kx/m，
        ∂t θ + v∂x θ = −2θ∂x v。

    f 用有限体积通量形式（总量守恒），v、θ 用中心差分，|v|dt/dx > 0.3 处改用迎风差分；
    闭合边界用二阶单侧差分且壁面通量为零。时间推进为 RK4，步长受 c_s = √(3θ/m) 的 CFL 限制。

    Args:
        x: 均匀网格（单元中心）。
        f, v, theta: 初始场。
        mass: 粒子质量。
        K: 束缚常数。
        t_grid: 从 0 开始的均匀输出时间。
        boundary: closed 或 periodic。
        cfl: CFL 系数。
        floor: f 或 θ 的下限，触及即中止。

    Returns:
        EulerSolution。

    Raises:
        SolverHaltError: f 或 θ 触及下限，附带当前状态。
    """
    if boundary not in (CLOSED, PERIODIC):
        raise DomainError(f"unknown fluid boundary: {boundary}")
    if K < 0.0 or not mass > 0.0:
        raise DomainError("fluid solver needs K >= 0 and m > 0")
    x = np.asarray(x, dtype=float).ravel()
    dx = _uniform_grid(x)
    f = np.asarray(f, dtype=float).ravel().copy()
    v = np.asarray(v, dtype=float).ravel().copy()
    theta = np.asarray(theta, dtype=float).ravel().copy()
    if not (f.shape == v.shape == theta.shape == x.shape):
        raise ShapeError("fluid fields must match the spatial grid")
    times = _uniform_times(t_grid)
    _halt_check(0.0, x, f, v, theta, floor)

    out_f, out_v, out_theta = [f.copy()], [v.copy()], [theta.copy()]
    masses = [float(f.sum() * dx)]
    energies = [euler_energy(x, f, v, theta, mass, K, dx)]
    steps = 0
    t = 0.0
    for target in times[1:]:
        while t < target - 1.0e-12 * max(1.0, abs(target)):
            speed = float(np.max(np.abs(v) + np.sqrt(3.0 * theta / mass)))
            dt = min(cfl * dx / max(speed, 1.0e-300), target - t)
            k1 = _euler_rhs(f, v, theta, x, mass, K, dx, dt, boundary)
            k2 = _euler_rhs(*(a + 0.5 * dt * b for a, b in zip((f, v, theta), k1)), x, mass, K, dx, dt, boundary)
            k3 = _euler_rhs(*(a + 0.5 * dt * b for a, b in zip((f, v, theta), k2)), x, mass, K, dx, dt, boundary)
            k4 = _euler_rhs(*(a + dt * b for a, b in zip((f, v, theta), k3)), x, mass, K, dx, dt, boundary)
            f, v, theta = (a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                           for a, b1, b2, b3, b4 in zip((f, v, theta), k1, k2, k3, k4))
            t += dt
            steps += 1
            _halt_check(t, x, f, v, theta, floor)
        t = float(target)
        out_f.append(f.copy())
        out_v.append(v.copy())
        out_theta.append(theta.copy())
        masses.append(float(f.sum() * dx))
        energies.append(euler_energy(x, f, v, theta, mass, K, dx))

    logger.debug(f"euler_solve: {steps} RK4 steps on {x.size} cells")
    return EulerSolution(x=x, times=times, f=np.array(out_f), v=np.array(out_v), theta=np.array(out_theta),
                         mass=np.array(masses), energy=np.array(energies), steps=steps)


def linear_mode_frequencies(x: Sequence[float], f: Sequence[float], v: Sequence[float], theta: Sequence[float],
                            mass: float, K: float, boundary: str = CLOSED, relative_step: float = 1.0e-7) -> np.ndarray:
    """
    在给定（静态）场附近数值线性化右端项，返回本征频率 |Im λ|（升序，去掉零频）。
    """
    x = np.asarray(x, dtype=float).ravel()
    dx = _uniform_grid(x)
    base = np.concatenate([np.asarray(a, dtype=float).ravel() for a in (f, v, theta)])
    size = x.size

    def rhs(state):
        fs, vs, ts = state[:size], state[size:2 * size], state[2 * size:]
        # dt = 0 保持中心差分，不触发迎风切换
        return np.concatenate(_euler_rhs(fs, vs, ts, x, mass, K, dx, 0.0, boundary))

    reference = rhs(base)
    jacobian = np.empty((base.size, base.size))
    for i in range(base.size):
        h = relative_step * max(abs(base[i]), 1.0)
        shifted = base.copy()
        shifted[i] += h
        jacobian[:, i] = (rhs(shifted) - reference) / h
    eigenvalues = np.linalg.eigvals(jacobian)
    frequencies = np.abs(eigenvalues.imag)
    frequencies = frequencies[frequencies > 1.0e-6]
    return np.unique(np.round(np.sort(frequencies), 10))


def local_equilibrium_metric(trajectory: Sequence[GaussianChainState], limits: Optional[EquilibriumLimits] = None,
                             tolerance: float = EQUILIBRIUM_TOLERANCE) -> EquilibriumMetric:
    """
    沿轨迹计算局域平衡诊断。

    Args:
        trajectory: 时间网格上的态。
        limits: 平衡极限；缺省时若首态带宽度描述且 K > 0，则由平均宽度计算。
        tolerance: 收敛判据。

    Returns:
        EquilibriumMetric；K = 0 时 distance 恒为 inf，不会收敛。
    """
    if not trajectory:
        raise ShapeError("equilibrium metric needs at least one state")
    first = trajectory[0]
    params = first.params
    if limits is None and params.K > 0.0 and first.descriptor is not None:
        limits = equilibrium_limits(params, float(first.descriptor.dq2.mean()), float(first.descriptor.dp2.mean()))

    times, correlation, flatness, distance = [], [], [], []
    for state in trajectory:
        dq2, dp2, sigma = state.variance_q, state.variance_p, state.sigma_qp
        times.append(state.time)
        scale = np.sqrt(np.clip(dq2 * dp2, 1.0e-300, None))
        correlation.append(float(np.max(np.abs(sigma) / scale)))
        mean_dp2 = float(np.mean(dp2))
        flatness.append(float(np.max(np.abs(np.diff(dp2))) / mean_dp2) if dp2.size > 1 and mean_dp2 > 0.0 else 0.0)
        if limits is None or params.K == 0.0:
            distance.append(math.inf)
        else:
            distance.append(float(max(np.max(np.abs(dq2 - limits.sigma_qq)) / limits.sigma_qq,
                                      np.max(np.abs(dp2 - limits.sigma_pp)) / limits.sigma_pp)))

    correlation, flatness, distance = (np.array(a) for a in (correlation, flatness, distance))
    ok = (correlation < tolerance) & (flatness < tolerance) & (distance < tolerance)
    hits = np.flatnonzero(ok)
    converged = float(times[hits[0]]) if hits.size else math.nan
    return EquilibriumMetric(times=np.array(times), correlation=correlation, flatness=flatness, distance=distance,
                             tolerance=tolerance, converged_at=converged)


def oscillation_frequency(times: Sequence[float], signal: Sequence[float]) -> float:
    """
    由符号变化（线性插值定位）估计振荡角频率 π·(过零次数 − 1)/(末次 − 首次过零时刻)。

    信号需已减去平衡值；过零少于两次时返回 nan。
    """
    times = np.asarray(times, dtype=float)
    s = np.asarray(signal, dtype=float)
    index = np.flatnonzero(s[:-1] * s[1:] < 0.0)
    if index.size < 2:
        return math.nan
    crossings = times[index] - s[index] * (times[index + 1] - times[index]) / (s[index + 1] - s[index])
    return float(math.pi * (crossings.size - 1) / (crossings[-1] - crossings[0]))


def _pulse_speed(scenario: HydroScenario, prop, times: np.ndarray, x: np.ndarray) -> Tuple[float, Optional[str]]:
    # 右行高斯位移脉冲 u = A exp(−s²/2σ²)，σ = λ/2π，p = −m c ∂x u；n₁ 只依赖均值
    params = scenario.params
    n = params.n_particles
    length = n * params.spacing
    c = params.sound_speed
    if c * times[-1] > 0.5 * length:
        return math.nan, "pulse would wrap around the ring before the last time; speed not measured"
    sites = params.sites(n)
    width = scenario.wavelength / (2.0 * math.pi)
    offset = _minimum_image(sites - PULSE_CENTRE * length, length)
    u = scenario.amplitude * params.spacing * np.exp(-0.5 * (offset / width) ** 2)
    q0 = sites + u
    p0 = params.mass * c * offset / width ** 2 * u
    background = smearing_kernel(x, sites, scenario.smearing_width, length).sum(axis=1)
    history = []
    for t in times:
        q, _ = evolve_means(params, prop, q0, p0, t)
        history.append(smearing_kernel(x, q, scenario.smearing_width, length).sum(axis=1) - background)
    return centroid_speed(x, np.array(history), times), None


def compare_micro_hydro(scenario: HydroScenario, t_grid: Sequence[float],
                        executor: Optional[Executor] = None) -> MicroHydroComparison:
    """
    微观演化与波动方程的对比。

    微观侧用 evolve_state 演化整个高斯态并提取 n₁(x, t)；流体侧从同一 n₁(x, 0) 与
    ∂t n₁ = −∂x g/m 出发求解波动方程（c = d ν/√m）。误差相对初始 n₁ 的范数，
    初始场为零时给出绝对误差。声速另由一个右行高斯位移脉冲（宽 λ/2π，中心在环长 1/4 处）
    的 n₁ 质心追踪给出，脉冲只经一阶矩演化；ct 超过半个环长时不测速。

    Args:
        scenario: 对比场景。
        t_grid: 从 0 开始的均匀时间网格。
        executor: 可选线程池，用于微观演化。

    Returns:
        MicroHydroComparison；违反长波前提时带 warnings。
    """
    params = scenario.params
    if not params.is_finite or params.spacing <= 0.0:
        raise DomainError("micro-hydro comparison needs a finite chain with positive spacing")
    times = _uniform_times(t_grid)
    state = scenario.initial_state()
    n, d = params.n_particles, params.spacing
    length = n * d
    kappa = 2.0 * math.pi / scenario.wavelength
    c = params.sound_speed

    warnings: List[str] = []
    dq2 = float(state.variance_q.max())
    if kappa * kappa * dq2 > 0.01:
        warnings.append(f"kappa^2 dq^2 = {kappa * kappa * dq2:.3g} > 0.01: long-wavelength expansion is poor")
    if kappa * d > 0.5:
        warnings.append(f"kappa d = {kappa * d:.3g} > 0.5: lattice dispersion is significant")
    if scenario.wavelength < 4.0 * scenario.smearing_width:
        warnings.append(f"wavelength {scenario.wavelength:g} < 4w: smearing distorts the mode")
    if abs(length / scenario.wavelength - round(length / scenario.wavelength)) > 1.0e-9:
        warnings.append("wavelength does not divide the ring length: the mode is not periodic")
    for message in warnings:
        logger.warning(message)

    x_count = scenario.x_count or 2 * n
    x = np.arange(x_count) * (length / x_count)
    prop = propagator(params, times, kind=FINITE_DFT)
    trajectory = evolve_trajectory(state, prop, times, path="dense", executor=executor)
    micro = np.array([extract_fields(s, x, scenario.smearing_width).n1 for s in trajectory])

    initial = extract_fields(state, x, scenario.smearing_width)
    dn1 = -_ddx(initial.g, length / x_count, PERIODIC) / params.mass
    wave = wave_solve(x, micro[0], dn1, c, times, boundary=PERIODIC, courant=scenario.courant)

    reference_l2 = float(np.linalg.norm(micro[0]))
    reference_inf = float(np.max(np.abs(micro[0])))
    diff = wave.n1 - micro
    l2 = np.linalg.norm(diff, axis=1) / (reference_l2 if reference_l2 > 0.0 else 1.0)
    linf = np.max(np.abs(diff), axis=1) / (reference_inf if reference_inf > 0.0 else 1.0)

    speed = math.nan
    if scenario.amplitude != 0.0:
        speed, message = _pulse_speed(scenario, prop, times, x)
        if message:
            logger.warning(message)
            warnings.append(message)

    logger.info(f"micro vs hydro: max L2={float(l2.max()):.3g}, speed={speed:.6g} (c={c:.6g})")
    return MicroHydroComparison(times=times, l2=l2, linf=linf, speed=speed, expected_speed=c, warnings=tuple(warnings))
