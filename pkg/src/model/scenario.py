from concurrent.futures import Executor
from typing import Callable, Dict, List, Optional

import numpy as np
from loguru import logger

from src.model.chain import (
    FINITE_DFT, ChainParams, Propagator, chain_params, mean_energy, normal_mode_frequencies,
    propagator, required_window,
)
from src.model.coarse import MomentumSource, subsection_energy_stats, subsection_momentum_stats
from src.model.densities import (
    correlation_length, decoherence_scan, default_k_grid, density_observables, momentum_density_stats,
    number_density_stats, sample_momentum_density_variance, sample_number_density_variance,
)
from src.model.gaussian import (
    GaussianChainState, equilibrium_limits, evolve_trajectory, normal_mode_coherent_state, product_state,
    snapshot_report,
)
from src.model.hydro import (
    HydroScenario, compare_micro_hydro, euler_solve, extract_fields, local_equilibrium_metric,
    local_equilibrium_moments,
)
from src.model.report import TableReport, table_report
from src.utils.config import Config

# 格距为零时平滑网格覆盖 ±SPAN·w
ZERO_SPACING_SPAN = 4.0
ZERO_SPACING_POINTS = 101
# Ã_M 的稳定统计从 t = SETTLE_AFTER/ω 开始
SETTLE_AFTER = 20.0


class Scenario:
    def __init__(self, config: Config, executor: Optional[Executor] = None):
        """
        按配置构造链、初态与网格，并执行各分析任务。

        Args:
            config: 场景配置。
            executor: 可选线程池，用于按时刻并行的演化。
        """
        self.config = config
        self.executor = executor
        chain = config.CHAIN
        self.params: ChainParams = chain_params(chain.N_PARTICLES, chain.MASS, chain.NU2, chain.K,
                                                chain.SPACING, chain.HBAR)
        self.kind = chain.KIND or self.params.default_kind
        self.times = self._time_grid()
        self.warnings: Dict[str, List[str]] = {}
        self._state: Optional[GaussianChainState] = None
        self._prop: Optional[Propagator] = None
        self._trajectory: Optional[List[GaussianChainState]] = None

    def _time_grid(self) -> np.ndarray:
        grids = self.config.GRIDS
        if grids.T_SPACING == "log":
            return np.geomspace(grids.T_START, grids.T_STOP, grids.T_COUNT)
        return np.linspace(grids.T_START, grids.T_STOP, grids.T_COUNT)

    @property
    def state(self) -> GaussianChainState:
        """t = 0 的初态（惰性构造）。"""
        if self._state is None:
            self._state = self._build_state()
        return self._state

    def _build_state(self) -> GaussianChainState:
        cfg = self.config.STATE
        params = self.params
        if cfg.TYPE == "coherent":
            amplitudes = None
            if cfg.MODE_AMPLITUDES:
                amplitudes = [complex(*a) if isinstance(a, tuple) else complex(a) for a in cfg.MODE_AMPLITUDES]
            return normal_mode_coherent_state(params, amplitudes, cluster_size=cfg.CLUSTER_SIZE)

        size = params.n_particles if params.is_finite else cfg.SITES
        sites = params.sites(size)
        q = sites.copy()
        if cfg.DISPLACEMENT_AMPLITUDE and cfg.DISPLACEMENT_WAVELENGTH:
            q += cfg.DISPLACEMENT_AMPLITUDE * np.sin(2.0 * np.pi * np.arange(size) / cfg.DISPLACEMENT_WAVELENGTH)
        p = np.full(size, params.mass * cfg.DRIFT_V0)
        return product_state(params, q, p, cfg.DQ2, cfg.DP2, cfg.SIGMA_QP)

    @property
    def propagator(self) -> Propagator:
        if self._prop is None:
            window = None
            if self.kind != FINITE_DFT:
                t_max = float(self.times.max())
                window = required_window(self.params, self.kind, t_max, self.config.TOLERANCES.WINDOW_EPS)
            self._prop = propagator(self.params, self.times, kind=self.kind, window=window,
                                    zero_mode=self.config.CHAIN.ZERO_MODE)
        return self._prop

    @property
    def trajectory(self) -> List[GaussianChainState]:
        """整条时间网格上的态，多个任务共用。"""
        if self._trajectory is None:
            logger.info(f"Evolving {self.state.size}-site state over {self.times.size} times ({self.kind})")
            self._trajectory = evolve_trajectory(self.state, self.propagator, self.times, executor=self.executor)
        return self._trajectory

    def k_grid(self) -> np.ndarray:
        grids = self.config.GRIDS
        if grids.K_VALUES:
            return np.asarray(grids.K_VALUES, dtype=float)
        return default_k_grid(self.state, grids.K_COUNT)

    def run(self, task: str) -> List[TableReport]:
        """
        执行单个分析任务。

        Args:
            task: 任务名称。

        Returns:
            该任务产生的结果表。
        """
        task_handlers: Dict[str, Callable[[], List[TableReport]]] = {
            "modes": self._modes_task,
            "evolve": self._evolve_task,
            "subsection": self._subsection_task,
            "densities": self._densities_task,
            "hydro": self._hydro_task,
            "equilibrium": self._equilibrium_task,
            "compare": self._compare_task,
        }

        handler = task_handlers.get(task.lower())
        if handler is None:
            logger.warning(f"Unknown task: {task}")
            return []
        reports = [self._bounded(task, report) for report in handler()]
        if self._prop is not None and self._prop.warnings:
            self._warn(task, *self._prop.warnings)
        return reports

    def _bounded(self, task: str, report: TableReport) -> TableReport:
        """无界值（关联长度超出窗口、K = 0 的平衡距离）按 nan 写出并记一条警告。"""
        unbounded = np.isinf(report.data)
        if not unbounded.any():
            return report
        columns = [name for name, hit in zip(report.columns, unbounded.any(axis=0)) if hit]
        self._warn(task, f"{report.label}: unbounded values in {columns} written as nan")
        return TableReport(label=report.label, columns=report.columns,
                           data=np.where(unbounded, np.nan, report.data))

    def _warn(self, task: str, *messages: str) -> None:
        bucket = self.warnings.setdefault(task, [])
        for message in messages:
            if message not in bucket:
                bucket.append(message)

    def _modes_task(self) -> List[TableReport]:
        spectrum = normal_mode_frequencies(self.params)
        if spectrum.zero_mode_indices:
            logger.info(f"Zero modes at alpha={list(spectrum.zero_mode_indices)}")
        alpha = np.arange(1, spectrum.size + 1)
        return [table_report("modes", ("alpha", "omega"), alpha, spectrum.frequencies)]

    def _evolve_task(self) -> List[TableReport]:
        trajectory = self.trajectory
        params = self.params
        summary = table_report(
            "evolution",
            ("t", "energy", "momentum", "momentum_variance", "mean_dq2", "mean_dp2", "correlation_length"),
            self.times,
            [mean_energy(params, s.q, s.p) for s in trajectory],
            [float(s.p.sum()) for s in trajectory],
            [float(s.pp.sum()) for s in trajectory],
            [float(s.variance_q.mean()) for s in trajectory],
            [float(s.variance_p.mean()) for s in trajectory],
            [correlation_length(s) for s in trajectory],
        )
        return [summary, snapshot_report(trajectory[0], "initial"), snapshot_report(trajectory[-1], "final")]

    def _subsection_task(self) -> List[TableReport]:
        cfg = self.config
        block = cfg.SUBSECTION
        state = self.state
        closed_form = (not self.params.is_finite and state.descriptor is not None
                       and not state.descriptor.slowly_varying and not cfg.STATE.DISPLACEMENT_AMPLITUDE)
        if closed_form:
            source = MomentumSource(self.params, cfg.STATE.DQ2, cfg.STATE.DP2, cfg.STATE.SIGMA_QP,
                                    cfg.STATE.DRIFT_V0, kind=self.kind)
            momentum = subsection_momentum_stats(source, block.M, self.times)
        else:
            momentum = subsection_momentum_stats(self.trajectory, block.M, self.times, start=block.START)
        reports = [momentum.to_table()]
        if closed_form and self.params.omega > 0.0:
            t_from = SETTLE_AFTER / self.params.omega
            if self.times[-1] >= t_from:
                reports.append(momentum.settling(t_from))
            else:
                logger.debug(f"time grid ends before t={t_from:.6g}; no settling summary")
        if block.ENERGY:
            energy = subsection_energy_stats(self.trajectory, block.M, self.times, start=block.START)
            reports.append(energy.to_table())
        return reports

    def _densities_task(self) -> List[TableReport]:
        cfg = self.config
        k = self.k_grid()
        trajectory = self.trajectory
        final = trajectory[-1]
        band_eps = cfg.TOLERANCES.BAND_EPS

        observables = density_observables(final, k, cfg.DENSITIES.OBSERVABLES, band_eps)
        scan = decoherence_scan(trajectory, k, cfg.DENSITIES.EPSILON, band_eps)
        logger.info(f"Decoherence scan: k_crit={scan.k_crit:.6g}, "
                    f"correlation length {observables.correlation_length:.4g} sites")
        reports = observables.tables() + [
            scan.to_table(),
            table_report("correlation", ("t", "correlation_length"), scan.times, scan.correlation_lengths),
        ]
        if cfg.DENSITIES.SAMPLES > 0:
            reports.append(self._sampling_report(final, k))
        return reports

    def _sampling_report(self, state: GaussianChainState, k: np.ndarray) -> TableReport:
        samples = self.config.DENSITIES.SAMPLES
        rng = np.random.default_rng(self.config.SETTINGS.SEED)
        number = number_density_stats(state, k, self.config.TOLERANCES.BAND_EPS)
        momentum = momentum_density_stats(state, k, self.config.TOLERANCES.BAND_EPS)
        sampled_n = [sample_number_density_variance(state, kk, samples, rng) for kk in k]
        sampled_g = [sample_momentum_density_variance(state, kk, samples, rng) for kk in k]
        logger.info(f"Sampled density variances at {k.size} k-points with {samples} draws each")
        return table_report(
            "sampling", ("k", "n_variance", "n_sampled", "n_se", "g_variance", "g_sampled", "g_se"),
            k, number.variance, [s.value for s in sampled_n], [s.standard_error for s in sampled_n],
            momentum.variance, [s.value for s in sampled_g], [s.standard_error for s in sampled_g],
        )

    def _spatial_grid(self) -> np.ndarray:
        params = self.params
        grids, hydro = self.config.GRIDS, self.config.HYDRO
        size = self.state.size
        if params.spacing > 0.0:
            count = grids.X_COUNT or 2 * size
            if params.is_finite:
                length = size * params.spacing
                return np.arange(count) * (length / count)
            return np.linspace(0.0, (size - 1) * params.spacing, count)
        centre = float(self.state.q.mean())
        half = ZERO_SPACING_SPAN * hydro.SMEARING_WIDTH
        return np.linspace(centre - half, centre + half, grids.X_COUNT or ZERO_SPACING_POINTS)

    def _hydro_task(self) -> List[TableReport]:
        hydro = self.config.HYDRO
        params = self.params
        x = self._spatial_grid()
        snapshots = [extract_fields(s, x, hydro.SMEARING_WIDTH, hydro.N_FLOOR) for s in self.trajectory]
        if any(f.mask.any() for f in snapshots):
            self._warn("hydro", f"fields masked below n_floor={hydro.N_FLOOR:g}")

        fields_table = table_report(
            "fields", ("t", "x", "n", "n1", "g", "v", "theta"),
            np.repeat(self.times, x.size),
            *(np.concatenate([getattr(f, name) for f in snapshots]) for name in ("x", "n", "n1", "g", "v", "theta")),
        )
        initial = snapshots[0]
        moments = local_equilibrium_moments(x, initial.f, initial.v, initial.theta, params.mass, params.K)
        moments_table = table_report("moments", ("x", "n", "g", "h", "tau", "j"), x,
                                     *(moments[name] for name in ("n", "g", "h", "tau", "j")))
        reports = [fields_table, moments_table]

        if params.spacing == 0.0 and params.K > 0.0:
            reports += self._euler_reports(initial)
        return reports

    def _euler_reports(self, initial) -> List[TableReport]:
        params = self.params
        if initial.mask.any():
            self._warn("hydro", "euler solver skipped: initial fields are masked")
            return []
        times = self.times
        steps = np.diff(times)
        if times[0] != 0.0 or (steps.size and not np.allclose(steps, steps[0], rtol=1.0e-9, atol=0.0)):
            self._warn("hydro", "euler solver skipped: it needs a uniform time grid starting at 0")
            return []
        solution = euler_solve(initial.x, initial.f, initial.v, initial.theta, params.mass, params.K, times,
                               boundary=self.config.HYDRO.BOUNDARY)
        logger.info(f"Euler solver finished in {solution.steps} steps")
        return [
            table_report("euler", ("t", "mass", "energy"), solution.times, solution.mass, solution.energy),
            solution.snapshot(len(times) - 1, mass=params.mass).to_table("euler_final"),
        ]

    def _equilibrium_task(self) -> List[TableReport]:
        cfg = self.config
        limits = None
        reports = []
        if self.params.K > 0.0 and cfg.STATE.TYPE == "product":
            limits = equilibrium_limits(self.params, cfg.STATE.DQ2, cfg.STATE.DP2)
            reports.append(table_report("limits", ("sigma_pp", "sigma_qq", "kT"),
                                        [limits.sigma_pp], [limits.sigma_qq], [limits.kT]))
        elif self.params.K == 0.0:
            self._warn("equilibrium", "K = 0: the simple chain has no equilibrium limit, distance is written as nan")
            logger.warning("K = 0: the simple chain has no equilibrium limit")

        metric = local_equilibrium_metric(self.trajectory, limits, cfg.TOLERANCES.EQUILIBRIUM)
        logger.info(f"Local equilibrium reached at t={metric.converged_at:.6g}")
        return [metric.to_table()] + reports

    def _compare_task(self) -> List[TableReport]:
        cfg = self.config
        product = cfg.STATE.TYPE == "product"
        scenario = HydroScenario(
            params=self.params,
            wavelength=cfg.HYDRO.WAVELENGTH,
            amplitude=cfg.HYDRO.AMPLITUDE,
            smearing_width=cfg.HYDRO.SMEARING_WIDTH,
            dq2=cfg.STATE.DQ2 if product else None,
            dp2=cfg.STATE.DP2 if product else None,
            x_count=cfg.GRIDS.X_COUNT,
            courant=cfg.HYDRO.COURANT,
        )
        comparison = compare_micro_hydro(scenario, self.times, executor=self.executor)
        if comparison.warnings:
            self._warn("compare", *comparison.warnings)
        speed = table_report("speed", ("speed", "expected_speed"), [comparison.speed], [comparison.expected_speed])
        return [comparison.to_table(), speed]
