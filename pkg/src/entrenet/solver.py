"""Ridge entropy maximization solver.

Maximizes  -sum p log p - beta * sum p^2  over the simplex subject to row-sum,
column-sum and group-sum equalities plus hard-zero cells.  The algorithm is
block-coordinate dual ascent (cyclic Bregman projection onto each affine
constraint): each block update solves, by safeguard-free Newton, for the single
dual shift that makes its constraint hold exactly, with the primal recovered
cell-wise from  log p + 2*beta*p = c  (strictly monotone, solved in log space).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from .model import FlowMatrix, NodeInfo, ReconstructionProblem


class InfeasibleProblemError(RuntimeError):
    """The equality constraints admit no nonnegative solution."""


@dataclass
class SolverConfig:
    """Solver settings. `beta` overrides the problem's beta when set."""

    beta: float | None = None
    tolerance: float = 1e-8
    max_iterations: int = 10000

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class SolutionReport:
    p: FlowMatrix
    t: FlowMatrix
    objective: float
    kkt_residual: float
    constraint_residual: float
    iterations: int
    converged: bool


def maxent_baseline(marginals) -> np.ndarray:
    """Closed-form product solution t_ij = s_i^out * s_j^in / G."""
    if marginals.total <= 0:
        raise ValueError("total must be positive")
    return np.outer(marginals.out_strength, marginals.in_strength) / marginals.total


# --- constraint system -------------------------------------------------------


@dataclass
class _System:
    """Normalized constraint system over the free (non-eliminated) cells."""

    n: int
    free: np.ndarray  # (n, n) bool mask
    b_row: np.ndarray  # row targets, s_out / G
    b_col: np.ndarray  # column targets, s_in / G
    groups: list[tuple[np.ndarray, float]]  # (mask over free cells, Q / G)
    row_active: np.ndarray  # rows with at least one free cell
    col_active: np.ndarray


def _build_system(problem: ReconstructionProblem) -> _System:
    n = problem.n
    G = problem.marginals.total
    b_row = problem.marginals.out_strength / G
    b_col = problem.marginals.in_strength / G

    free = np.ones((n, n), dtype=bool)
    for i, j in problem.zero_cells:
        free[i, j] = False
    # zero marginals force whole rows / columns to zero
    free[b_row == 0.0, :] = False
    free[:, b_col == 0.0] = False

    row_active = free.any(axis=1)
    col_active = free.any(axis=0)
    if np.any((b_row > 0) & ~row_active) or np.any((b_col > 0) & ~col_active):
        raise InfeasibleProblemError(
            "a node with positive strength has all its cells eliminated"
        )

    groups = []
    for gc in problem.group_constraints:
        mask = np.zeros((n, n), dtype=bool)
        src = np.fromiter(gc.source_group, dtype=int)
        dst = np.fromiter(gc.target_group, dtype=int)
        mask[np.ix_(src, dst)] = True
        mask &= free
        if not mask.any():
            raise InfeasibleProblemError(
                "group constraint with positive amount has no free cells"
            )
        groups.append((mask, gc.amount / G))
    return _System(n, free, b_row, b_col, groups, row_active, col_active)


def _constraint_matrix(sys: _System) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Equality system A x = b over the flattened free cells.

    Returns (A, b, fi, fj) where fi/fj are the free-cell index vectors.
    """
    fi, fj = np.nonzero(sys.free)
    n_free = len(fi)
    rows = []
    rhs = []
    for i in np.nonzero(sys.row_active)[0]:
        rows.append((fi == i).astype(float))
        rhs.append(sys.b_row[i])
    for j in np.nonzero(sys.col_active)[0]:
        rows.append((fj == j).astype(float))
        rhs.append(sys.b_col[j])
    for mask, q in sys.groups:
        rows.append(mask[fi, fj].astype(float))
        rhs.append(q)
    A = np.array(rows, dtype=float).reshape(len(rows), n_free)
    return A, np.array(rhs, dtype=float), fi, fj


def _check_feasible(sys: _System) -> None:
    A, b, _, _ = _constraint_matrix(sys)
    res = linprog(c=np.zeros(A.shape[1]), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if not res.success:
        raise InfeasibleProblemError(f"constraint system infeasible: {res.message}")


# --- scalar prox -------------------------------------------------------------


def _phi_inv(c: np.ndarray, beta: float) -> np.ndarray:
    """Solve log p + 2*beta*p = c element-wise for p > 0."""
    c = np.asarray(c, dtype=float)
    if beta == 0.0:
        return np.exp(np.minimum(c, 700.0))
    # start from an upper bound on the root: p <= e^c and p <= c / (2 beta)
    u = np.where(
        c > 0,
        np.minimum(c, np.log(np.maximum(c, 1e-300) / (2.0 * beta))),
        c,
    )
    for _ in range(60):
        e = 2.0 * beta * np.exp(u)
        g = u + e - c
        if np.all(np.abs(g) <= 1e-14 * (1.0 + np.abs(c))):
            break
        u = u - g / (1.0 + e)
    return np.exp(u)


def _objective(p: np.ndarray, beta: float) -> float:
    pos = p[p > 0]
    return float(-(pos * np.log(pos)).sum() - beta * (pos**2).sum())


# --- main solve --------------------------------------------------------------


def solve_ridge(problem: ReconstructionProblem, config: SolverConfig | None = None) -> SolutionReport:
    config = config or SolverConfig()
    beta = problem.beta if config.beta is None else config.beta
    tol = config.tolerance
    sys = _build_system(problem)
    _check_feasible(sys)

    n = sys.n
    free = sys.free
    lam_row = np.zeros(n)
    lam_col = np.zeros(n)
    lam_grp = np.zeros(len(sys.groups))
    inner_tol = tol * 1e-2

    def group_field() -> np.ndarray:
        out = np.zeros((n, n))
        for k, (mask, _) in enumerate(sys.groups):
            out[mask] += lam_grp[k]
        return out

    def primal() -> np.ndarray:
        c = -(1.0 + lam_row[:, None] + lam_col[None, :] + group_field())
        p = np.zeros((n, n))
        p[free] = _phi_inv(c[free], beta)
        return p

    def block_newton(c_masked, axis_targets, active):
        """Exact dual shift per row: solve sum_j phi_inv(c_ij - d_i) = target_i."""
        d = np.zeros(len(axis_targets))
        sel = ~np.isneginf(c_masked)
        for _ in range(80):
            p = np.zeros_like(c_masked)
            shifted = c_masked - d[:, None]
            p[sel] = _phi_inv(shifted[sel], beta)
            f = p.sum(axis=1) - axis_targets
            if np.all(np.abs(f[active]) <= inner_tol):
                break
            deriv = -(p / (1.0 + 2.0 * beta * p)).sum(axis=1)
            step = np.zeros_like(d)
            step[active] = f[active] / deriv[active]
            d = d - step
        return d

    neg_inf = np.full((n, n), -np.inf)
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        # rows
        c = np.where(free, -(1.0 + lam_col[None, :] + group_field()), neg_inf)
        lam_row = block_newton(c, sys.b_row, sys.row_active)
        # columns
        c = np.where(free, -(1.0 + lam_row[:, None] + group_field()), neg_inf)
        lam_col = block_newton(c.T, sys.b_col, sys.col_active)
        # groups, one at a time
        for k, (mask, q) in enumerate(sys.groups):
            others = group_field()
            others[mask] -= lam_grp[k]
            c = -(1.0 + lam_row[:, None] + lam_col[None, :] + others)
            cells = c[mask]
            d = 0.0
            for _ in range(80):
                p_cells = _phi_inv(cells - d, beta)
                f = p_cells.sum() - q
                if abs(f) <= inner_tol:
                    break
                deriv = -(p_cells / (1.0 + 2.0 * beta * p_cells)).sum()
                d -= f / deriv
            lam_grp[k] += d

        p = primal()
        viol = _max_violation(p, sys)
        if viol <= tol:
            converged = True
            break

    p = primal()
    return _report(problem, p, beta, iterations, converged, sys)


def _max_violation(p: np.ndarray, sys: _System) -> float:
    viol = max(
        np.abs(p.sum(axis=1) - sys.b_row).max(),
        np.abs(p.sum(axis=0) - sys.b_col).max(),
        abs(p.sum() - 1.0),
    )
    for mask, q in sys.groups:
        viol = max(viol, abs(p[mask].sum() - q))
    return viol


def _report(problem, p, beta, iterations, converged, sys) -> SolutionReport:
    nodes = _problem_nodes(problem)
    G = problem.marginals.total
    residual = _max_violation(p, sys)
    kkt = kkt_residual(problem, p, beta=beta) if residual <= 1e-6 else float("nan")
    return SolutionReport(
        p=FlowMatrix(nodes, p),
        t=FlowMatrix(nodes, p * G),
        objective=_objective(p, beta),
        kkt_residual=kkt,
        constraint_residual=residual,
        iterations=iterations,
        converged=converged,
    )


def _problem_nodes(problem) -> list[NodeInfo]:
    nodes = getattr(problem, "nodes", None)
    if nodes is not None:
        return list(nodes)
    return [NodeInfo(id=f"n{i}", name=f"n{i}") for i in range(problem.n)]


def kkt_residual(problem: ReconstructionProblem, p: np.ndarray, beta: float | None = None) -> float:
    """Stationarity residual of a feasible point.

    Fits multipliers for the active equality constraints by least squares and
    returns the max absolute gap between the objective gradient and the fitted
    linear combination over free cells. Zero at the exact optimum.
    """
    if beta is None:
        beta = problem.beta
    p = np.asarray(p, dtype=float)
    sys = _build_system(problem)
    if _max_violation(np.where(sys.free, p, 0.0), sys) > 1e-6:
        raise ValueError("point violates constraints beyond 1e-6")
    A, _, fi, fj = _constraint_matrix(sys)
    pf = np.maximum(p[fi, fj], 1e-300)
    grad = -np.log(pf) - 1.0 - 2.0 * beta * pf
    coeff, *_ = np.linalg.lstsq(A.T, grad, rcond=None)
    return float(np.abs(grad - A.T @ coeff).max())


# --- independent oracle ------------------------------------------------------


def oracle_grid_search(
    problem: ReconstructionProblem,
    resolution: float = 1e-6,
    points_per_dim: int = 21,
) -> SolutionReport:
    """Brute-force optimum on the feasible polytope, for tiny instances only.

    Parametrizes the feasible set by the null space of the equality system
    (at most 3 dimensions), grid-searches the bounding box, and repeatedly
    shrinks the grid around the best feasible point until the spacing drops
    below `resolution`.
    """
    beta = problem.beta
    sys = _build_system(problem)
    A, b, fi, fj = _constraint_matrix(sys)

    res = linprog(c=np.zeros(A.shape[1]), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if not res.success:
        raise InfeasibleProblemError(f"constraint system infeasible: {res.message}")
    x0 = res.x
    N = null_space(A)
    dof = N.shape[1]
    if dof > 3:
        raise ValueError(f"too many free dimensions for the oracle: {dof}")

    if dof == 0:
        best = np.clip(x0, 0.0, None)
    else:
        lo = np.empty(dof)
        hi = np.empty(dof)
        for d in range(dof):
            c_dir = np.zeros(dof)
            c_dir[d] = 1.0
            for sign, store in ((1.0, lo), (-1.0, hi)):
                r = linprog(
                    c=sign * c_dir,
                    A_ub=-N,
                    b_ub=x0,
                    bounds=[(None, None)] * dof,
                    method="highs",
                )
                if not r.success:
                    raise InfeasibleProblemError("polytope bounding failed")
                store[d] = r.x[d]

        def evaluate(X: np.ndarray) -> np.ndarray:
            P = x0[:, None] + N @ X  # (n_free, K)
            ok = (P >= -1e-12).all(axis=0)
            P = np.clip(P, 0.0, None)
            with np.errstate(divide="ignore", invalid="ignore"):
                ent = np.where(P > 0, -P * np.log(P), 0.0)
            z = ent.sum(axis=0) - beta * (P**2).sum(axis=0)
            z[~ok] = -np.inf
            return z

        center = (lo + hi) / 2.0
        half = (hi - lo) / 2.0
        half = np.maximum(half, 1e-15)
        while True:
            axes = [np.linspace(center[d] - half[d], center[d] + half[d], points_per_dim) for d in range(dof)]
            grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(dof, -1)
            z = evaluate(grid)
            k = int(np.argmax(z))
            center = grid[:, k]
            spacing = 2.0 * half / (points_per_dim - 1)
            if np.all(spacing <= resolution):
                break
            half = 2.0 * spacing
            center = np.clip(center, lo, hi)
        best = np.clip(x0 + N @ center, 0.0, None)

    p = np.zeros((sys.n, sys.n))
    p[fi, fj] = best
    nodes = _problem_nodes(problem)
    G = problem.marginals.total
    residual = _max_violation(p, sys)
    return SolutionReport(
        p=FlowMatrix(nodes, p),
        t=FlowMatrix(nodes, p * G),
        objective=_objective(p, beta),
        kkt_residual=float("nan"),
        constraint_residual=residual,
        iterations=0,
        converged=residual <= 1e-6,
    )
