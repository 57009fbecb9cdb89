"""Quantitative validation: relative RMSE, log-log fit, beta sweeps, marginal reports."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .metrics import density, BinaryNetwork
from .model import ReconstructionProblem
from .solver import SolutionReport, SolverConfig, solve_ridge

DEFAULT_BETA_GRID = (0.0, 1.0, 5.0, 10.0, 25.0, 50.0, 100.0, 200.0)


def worker_count() -> int:
    """Worker cap from ENTRENET_THREADS (defaults to 1)."""
    raw = os.environ.get("ENTRENET_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class FitReport:
    beta: float
    objective: float
    rmse: float
    slope_a: float
    intercept_b: float
    n_pairs: int
    density_data: float
    density_reconstructed: float
    converged: bool


def rmse(reconstructed: np.ndarray, data: np.ndarray) -> float:
    """Root mean squared relative error over cells with positive data value."""
    reconstructed = np.asarray(reconstructed, dtype=float)
    data = np.asarray(data, dtype=float)
    if reconstructed.shape != data.shape:
        raise ValueError("shape mismatch")
    mask = data > 0
    if not mask.any():
        raise ValueError("no positive data cells")
    rel = (reconstructed[mask] - data[mask]) / data[mask]
    return float(np.sqrt((rel**2).mean()))


def loglog_fit(reconstructed: np.ndarray, data: np.ndarray) -> tuple[float, float]:
    """OLS fit of log10(reconstructed) on log10(data) over jointly positive cells."""
    reconstructed = np.asarray(reconstructed, dtype=float)
    data = np.asarray(data, dtype=float)
    mask = (reconstructed > 0) & (data > 0)
    if mask.sum() < 2:
        raise ValueError("need at least 2 jointly positive cells")
    x = np.log10(data[mask])
    y = np.log10(reconstructed[mask])
    if np.ptp(x) == 0:
        raise ValueError("zero variance in regressor")
    a, b = np.polyfit(x, y, 1)
    return float(a), float(b)


def _matrix_density(weights: np.ndarray) -> float:
    from .model import NodeInfo

    nodes = [NodeInfo(id=f"n{i}", name=f"n{i}") for i in range(weights.shape[0])]
    return density(BinaryNetwork(nodes, (weights > 0).astype(int)))


def fit_report(solution: SolutionReport, data: np.ndarray, beta: float) -> FitReport:
    rec = solution.t.weights
    a, b = loglog_fit(rec, data)
    mask = (rec > 0) & (data > 0)
    return FitReport(
        beta=beta,
        objective=solution.objective,
        rmse=rmse(rec, data),
        slope_a=a,
        intercept_b=b,
        n_pairs=int(mask.sum()),
        density_data=_matrix_density(np.asarray(data)),
        density_reconstructed=_matrix_density(rec),
        converged=solution.converged,
    )


def beta_sweep(
    problem: ReconstructionProblem,
    beta_grid,
    data: np.ndarray,
    config: SolverConfig | None = None,
) -> list[FitReport]:
    """Solve the problem once per beta and report fit quality, sorted by beta."""
    betas = sorted(float(b) for b in beta_grid)
    if not betas:
        raise ValueError("empty beta grid")

    def run(beta: float) -> FitReport:
        solution = solve_ridge(problem.with_beta(beta), config)
        return fit_report(solution, data, beta)

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, betas))
    return [run(b) for b in betas]


def marginal_report(solution: SolutionReport, problem: ReconstructionProblem) -> dict:
    """Per-node data vs reconstructed aggregates, plus the max relative deviation."""
    t = solution.t.weights
    out_rec = t.sum(axis=1)
    in_rec = t.sum(axis=0)
    out_data = problem.marginals.out_strength
    in_data = problem.marginals.in_strength
    devs = []
    for data_vec, rec_vec in ((out_data, out_rec), (in_data, in_rec)):
        pos = data_vec > 0
        if pos.any():
            devs.append(np.abs(rec_vec[pos] - data_vec[pos]) / data_vec[pos])
        zero = ~pos
        if zero.any():
            devs.append(np.abs(rec_vec[zero]) / problem.marginals.total)
    return {
        "labels": solution.t.labels,
        "out_data": out_data,
        "out_reconstructed": out_rec,
        "in_data": in_data,
        "in_reconstructed": in_rec,
        "max_relative_deviation": float(np.concatenate(devs).max()),
    }
