"""Run orchestration: single paths, Monte Carlo ensembles, rate studies.

All outputs (CSV per path, ensemble summary, rate tables, VTK snapshots)
are pure functions of the configuration: paths are computed independently
from (config, path_id), workers only change wall time, and files are
written sequentially in path order after the parallel section.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import diagnostics, noise as noise_mod
from .config import ConfigError, RunConfig, write_config
from .diagnostics import CSV_COLUMNS, PathSummary, StepReport
from .fem import FemOperators, assemble
from .mesh import TriMesh, build_unit_square
from .potentials import Potentials
from .stepper import NumericalError, SavState, StepFailure, Stepper, initial_state
from .vtkio import write_vtk


@dataclass(frozen=True)
class Problem:
    """Mesh, operators, potentials and noise model shared by all paths."""

    mesh: TriMesh
    ops: FemOperators
    pot: Potentials
    noise: noise_mod.NoiseModel


def build_problem(cfg: RunConfig) -> Problem:
    mesh = build_unit_square(cfg.nx)
    ops = assemble(mesh)
    pot = Potentials(gamma=cfg.gamma, gamma_fs_1=cfg.gamma_fs_1, gamma_fs_2=cfg.gamma_fs_2)
    model = noise_mod.build_noise_model(
        mesh,
        noise_scale=cfg.noise_scale,
        sigma_decay=cfg.sigma_decay,
        k_max_cap=cfg.k_max_cap,
        rho_kind=cfg.rho_kind,
        rho0=cfg.rho0,
        rv_kind=cfg.rv_kind,
        seed=cfg.seed,
    )
    return Problem(mesh=mesh, ops=ops, pot=pot, noise=model)


def _initial_state(cfg: RunConfig, prob: Problem) -> SavState:
    return initial_state(
        prob.ops,
        prob.pot,
        cfg.phi0_kind,
        value=cfg.phi0_value,
        center=(cfg.phi0_center_x, cfg.phi0_center_y),
        radius=cfg.phi0_radius,
        width=cfg.phi0_width,
    )


def simulate_path(
    cfg: RunConfig,
    prob: Problem,
    path_id: int,
    n_steps: int | None = None,
    increments: np.ndarray | None = None,
) -> tuple[list[SavState], list[StepReport]]:
    """Advance one path for n_steps and collect per-step reports.

    increments, when given, is an (n_steps, n_modes) array of scaled
    per-mode increments replacing the sampled stream (used by the coupled
    refinement study).
    """
    n = n_steps if n_steps is not None else cfg.n_steps
    tau = cfg.T_final / n
    stepper = Stepper(prob.ops, prob.pot, tau)
    state = _initial_state(cfg, prob)

    trajectory = [state]
    reports = [diagnostics.initial_report(prob.ops, prob.pot, state)]
    for step in range(1, n + 1):
        if increments is not None:
            u = increments[step - 1]
        else:
            u = noise_mod.sample_increment(prob.noise, path_id, step, tau)
        w, w_g = noise_mod.noise_field(prob.noise, state.phi, u)
        try:
            coupling = stepper.build_coupling(state, w, w_g)
            new = stepper.step(state, coupling)
        except (StepFailure, NumericalError) as exc:
            raise type(exc)(f"path {path_id}, step {step}/{n}: {exc}") from exc
        xi_O, xi_G = stepper.correction_terms(new, coupling)
        reports.append(
            diagnostics.report(prob.ops, prob.pot, state, new, coupling, xi_O, xi_G, tau, step)
        )
        trajectory.append(new)
        state = new
    return trajectory, reports


def write_steps_csv(path: str, reports: list[StepReport]) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for rep in reports:
        lines.append(",".join(_fmt(getattr(rep, col)) for col in CSV_COLUMNS))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.17g}"


def run_path(cfg: RunConfig, path_id: int = 0, out_dir: str | None = None):
    """Single-path run; writes steps.csv and optional VTK snapshots."""
    prob = build_problem(cfg)
    trajectory, reports = simulate_path(cfg, prob, path_id)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_config(cfg, os.path.join(out_dir, "config.txt"))
        write_steps_csv(os.path.join(out_dir, "steps.csv"), reports)
        if cfg.snapshot_stride > 0:
            for step, state in enumerate(trajectory):
                if step % cfg.snapshot_stride == 0:
                    write_vtk(
                        os.path.join(out_dir, f"snapshot_{step:06d}.vtk"),
                        prob.mesh,
                        {"phi": state.phi, "mu": state.mu},
                    )
    return trajectory, reports


def worker_count(n_jobs: int) -> int:
    """Thread pool size: min(jobs, cpus), capped by SAVCH_THREADS."""
    workers = os.cpu_count() or 1
    env = os.environ.get("SAVCH_THREADS")
    if env:
        try:
            workers = min(workers, max(1, int(env)))
        except ValueError:
            raise ConfigError(f"SAVCH_THREADS must be an integer, got {env!r}")
    return max(1, min(workers, n_jobs))


@dataclass(frozen=True)
class McResult:
    summaries: list[PathSummary]
    failures: list[tuple[int, str]]
    means: dict[str, float]
    stderrs: dict[str, float]

    @property
    def complete(self) -> bool:
        return not self.failures


def _reduce_summaries(summaries: list[PathSummary]) -> tuple[dict[str, float], dict[str, float]]:
    means: dict[str, float] = {}
    stderrs: dict[str, float] = {}
    if not summaries:
        return means, stderrs
    keys = [name for name, _ in summaries[0].as_rows()]
    table = {name: [] for name in keys}
    for summary in summaries:
        for name, value in summary.as_rows():
            table[name].append(value)
    for name in keys:
        vals = np.asarray(table[name])
        means[name] = float(np.mean(vals))
        if len(vals) > 1:
            stderrs[name] = float(np.std(vals, ddof=1) / np.sqrt(len(vals)))
        else:
            stderrs[name] = 0.0
    return means, stderrs


def mc_run(cfg: RunConfig, out_dir: str | None = None) -> McResult:
    """Monte Carlo ensemble over cfg.paths independent paths."""
    if cfg.paths < 2:
        raise ConfigError(f"mc mode needs paths >= 2, got {cfg.paths}")
    prob = build_problem(cfg)
    tau = cfg.tau

    def one(path_id: int):
        trajectory, reports = simulate_path(cfg, prob, path_id)
        summary = diagnostics.path_statistics(prob.ops, reports, trajectory, tau)
        return reports, summary

    results: list = [None] * cfg.paths
    failures: list[tuple[int, str]] = []
    with ThreadPoolExecutor(max_workers=worker_count(cfg.paths)) as pool:
        futures = {pid: pool.submit(one, pid) for pid in range(cfg.paths)}
    for pid in range(cfg.paths):
        try:
            results[pid] = futures[pid].result()
        except Exception as exc:  # noqa: BLE001 - path failures are data
            failures.append((pid, f"{type(exc).__name__}: {exc}"))

    summaries = [res[1] for res in results if res is not None]
    means, stderrs = _reduce_summaries(summaries)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_config(cfg, os.path.join(out_dir, "config.txt"))
        for pid in range(cfg.paths):
            if results[pid] is not None:
                write_steps_csv(os.path.join(out_dir, f"path_{pid:04d}.csv"), results[pid][0])
        lines = ["statistic,mean,stderr"]
        lines.append(f"paths_requested,{cfg.paths},0")
        lines.append(f"paths_completed,{len(summaries)},0")
        for name in means:
            lines.append(f"{name},{_fmt(means[name])},{_fmt(stderrs[name])}")
        with open(os.path.join(out_dir, "summary.csv"), "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
        if failures:
            with open(os.path.join(out_dir, "failures.txt"), "w", encoding="utf-8") as fh:
                for pid, msg in failures:
                    fh.write(f"path {pid}: {msg}\n")
    return McResult(summaries=summaries, failures=failures, means=means, stderrs=stderrs)


def fit_rate(taus: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Least-squares slope and R^2 of log2(value) against log2(tau)."""
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0) or np.any(~np.isfinite(values)):
        return float("nan"), float("nan")
    x = np.log2(taus)
    y = np.log2(values)
    coeffs = np.polyfit(x, y, 1)
    fit = np.polyval(coeffs, x)
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return float(coeffs[0]), r2


STUDY_STATS = ("max_drift_r", "max_drift_s", "sum_tau_xi_O_sq", "sum_tau_xi_G_sq")


@dataclass(frozen=True)
class ConvergenceResult:
    """Rate study over dyadic time steps with coupled noise."""

    n_steps: list[int]
    taus: list[float]
    level_means: dict[str, list[float]]
    level_stderrs: dict[str, list[float]]
    pair_diffs: np.ndarray  # (levels - 1, paths): |phi_tau - phi_{tau/2}|_{h,O} at T
    slopes: dict[str, tuple[float, float]]


def coupled_increments(prob: Problem, path_id: int, n_levels: int, n_coarsest: int, T: float):
    """Scaled increments for every level, finest sampled, coarser aggregated.

    Returns a list indexed by level (0 = coarsest); entry j has shape
    (n_coarsest * 2^j, n_modes).  Each coarse increment is the sum of its
    two children on the next finer level, summed fine-to-coarse so the
    aggregation is bit-reproducible.
    """
    n_fine = n_coarsest * 2 ** (n_levels - 1)
    tau_fine = T / n_fine
    fine = np.empty((n_fine, prob.noise.n_modes))
    for step in range(1, n_fine + 1):
        fine[step - 1] = noise_mod.sample_increment(prob.noise, path_id, step, tau_fine)
    per_level = [fine]
    for _ in range(n_levels - 1):
        finer = per_level[-1]
        per_level.append(finer[0::2] + finer[1::2])
    per_level.reverse()  # index 0 = coarsest
    return per_level


def convergence_study(cfg: RunConfig, out_dir: str | None = None) -> ConvergenceResult:
    """Coupled-noise refinement study across cfg.levels dyadic tau levels."""
    if cfg.levels < 3:
        raise ConfigError(f"convergence mode needs levels >= 3, got {cfg.levels}")
    if cfg.rv_kind == "rademacher":
        raise ConfigError(
            "convergence mode requires gaussian increments: aggregating "
            "rademacher increments does not preserve their distribution"
        )
    prob = build_problem(cfg)
    levels = cfg.levels
    n_list = [cfg.n_steps * 2**j for j in range(levels)]
    taus = [cfg.T_final / n for n in n_list]
    if taus[0] >= 1.0:
        raise ConfigError(f"coarsest tau {taus[0]} must be < 1")

    def one(path_id: int):
        incs = coupled_increments(prob, path_id, levels, cfg.n_steps, cfg.T_final)
        stats = []
        finals = []
        for j in range(levels):
            trajectory, reports = simulate_path(
                cfg, prob, path_id, n_steps=n_list[j], increments=incs[j]
            )
            stats.append(
                diagnostics.path_statistics(prob.ops, reports, trajectory, taus[j])
            )
            finals.append(trajectory[-1].phi)
        diffs = []
        for j in range(levels - 1):
            d = finals[j] - finals[j + 1]
            diffs.append(float(np.sqrt(d @ (prob.ops.m * d))))
        return stats, diffs

    results: list = [None] * cfg.paths
    with ThreadPoolExecutor(max_workers=worker_count(cfg.paths)) as pool:
        futures = {pid: pool.submit(one, pid) for pid in range(cfg.paths)}
    for pid in range(cfg.paths):
        results[pid] = futures[pid].result()

    level_means: dict[str, list[float]] = {name: [] for name in STUDY_STATS}
    level_stderrs: dict[str, list[float]] = {name: [] for name in STUDY_STATS}
    for j in range(levels):
        for name in STUDY_STATS:
            vals = np.array([getattr(results[pid][0][j], name) for pid in range(cfg.paths)])
            level_means[name].append(float(np.mean(vals)))
            level_stderrs[name].append(
                float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
            )
    pair_diffs = np.array([[results[pid][1][j] for pid in range(cfg.paths)] for j in range(levels - 1)])

    slopes = {
        name: fit_rate(np.array(taus), np.array(level_means[name])) for name in STUDY_STATS
    }

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_config(cfg, os.path.join(out_dir, "config.txt"))
        lines = ["level,n_steps,tau," + ",".join(
            f"mean_{n},stderr_{n}" for n in STUDY_STATS
        )]
        for j in range(levels):
            cells = [str(j), str(n_list[j]), _fmt(taus[j])]
            for name in STUDY_STATS:
                cells += [_fmt(level_means[name][j]), _fmt(level_stderrs[name][j])]
            lines.append(",".join(cells))
        with open(os.path.join(out_dir, "levels.csv"), "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")

        lines = ["pair,tau_coarse,path,phi_diff_T"]
        for j in range(levels - 1):
            for pid in range(cfg.paths):
                lines.append(f"{j},{_fmt(taus[j])},{pid},{_fmt(pair_diffs[j, pid])}")
        with open(os.path.join(out_dir, "pairs.csv"), "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")

        lines = ["statistic,slope,r2"]
        for name, (slope, r2) in slopes.items():
            lines.append(f"{name},{_fmt(slope)},{_fmt(r2)}")
        with open(os.path.join(out_dir, "slopes.csv"), "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")

    return ConvergenceResult(
        n_steps=n_list,
        taus=taus,
        level_means=level_means,
        level_stderrs=level_stderrs,
        pair_diffs=pair_diffs,
        slopes=slopes,
    )
