"""Command-line pipeline: reconstruct, analyze, validate, sweep."""

from __future__ import annotations

import functools
import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .data import (
    DataError,
    TradeDataset,
    build_bank_problem,
    build_trade_problem,
    load_balance_sheets,
    load_trade_matrix,
    make_q2_cut,
    read_matrix_csv,
    synthetic_trade_matrix,
    write_matrix_csv,
)
from .evaluation import (
    DEFAULT_BETA_GRID,
    beta_sweep,
    fit_report,
    marginal_report,
)
from .metrics import (
    degree_ccdf,
    degree_preserved_randomize,
    density,
    metrics_report,
    truncate_percentile,
    truncate_to_density,
)
from .solver import InfeasibleProblemError, SolverConfig, solve_ridge

EXIT_DATA = 3
EXIT_INFEASIBLE = 4
EXIT_NO_CONVERGENCE = 5


def _fail(kind: str, message: str, code: int):
    click.echo(json.dumps({"error": kind, "message": message}), err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InfeasibleProblemError as exc:
            _fail("infeasible", str(exc), EXIT_INFEASIBLE)
        except (DataError, ValueError) as exc:
            _fail("data_validation", str(exc), EXIT_DATA)

    return wrapper


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _provenance(config: dict, inputs: list[Path]) -> dict:
    canonical = json.dumps(config, sort_keys=True, default=str)
    return {
        "artifact_version": __version__,
        "config": config,
        "config_hash": hashlib.sha256(canonical.encode()).hexdigest(),
        "inputs": {str(p): _digest(p) for p in inputs},
    }


def _provenance_lines(prov: dict) -> list[str]:
    lines = [f"artifact_version: {prov['artifact_version']}", f"config_hash: {prov['config_hash']}"]
    lines += [f"input {p}: {d}" for p, d in prov["inputs"].items()]
    return lines


def _merged_config(ctx: click.Context, config_path: str | None, **flags) -> dict:
    """Flags override config-file values; config-file values override defaults."""
    merged = dict(flags)
    if config_path:
        try:
            from_file = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"bad config file {config_path}: {exc}") from None
        if not isinstance(from_file, dict):
            raise DataError(f"config file {config_path} must hold a JSON object")
        for key, value in from_file.items():
            key = key.replace("-", "_")
            if key not in merged:
                raise DataError(f"unknown config key {key!r}")
            source = ctx.get_parameter_source(key)
            if source is not None and source.name != "COMMANDLINE":
                merged[key] = value
    return merged


def _require_input(path_str: str | None) -> Path:
    if path_str is None:
        raise click.UsageError("missing --input")
    path = Path(path_str)
    if not path.exists():
        raise click.UsageError(f"input path {path} does not exist")
    return path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonify) + "\n")


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


@click.group()
@click.version_option(__version__)
def main():
    """Network reconstruction by ridge entropy maximization, plus validation tools."""


@main.command()
@click.option("--input", "input_path", type=str, default=None, help="Balance-sheet CSV.")
@click.option("--year", type=int, default=None, help="Year to reconstruct.")
@click.option("--beta", type=float, default=100.0, show_default=True)
@click.option("--tolerance", type=float, default=1e-8, show_default=True)
@click.option("--out", "out_dir", type=str, default="out", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--config", "config_path", type=str, default=None, help="JSON config file; flags override it.")
@click.pass_context
@handle_errors
def reconstruct(ctx, input_path, year, beta, tolerance, out_dir, fmt, config_path):
    """Reconstruct a weighted interbank network from balance-sheet marginals."""
    cfg = _merged_config(
        ctx, config_path,
        input_path=input_path, year=year, beta=beta, tolerance=tolerance,
        out_dir=out_dir, fmt=fmt,
    )
    path = _require_input(cfg["input_path"])
    if cfg["year"] is None:
        raise click.UsageError("missing --year")
    records = load_balance_sheets(path, cfg["year"])
    bank = build_bank_problem(records, beta=cfg["beta"])
    solution = solve_ridge(bank.problem, SolverConfig(tolerance=cfg["tolerance"]))
    if not solution.converged:
        _fail("non_convergence",
              f"solver stopped after {solution.iterations} iterations with "
              f"constraint residual {solution.constraint_residual:.3e}",
              EXIT_NO_CONVERGENCE)

    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(cfg, [path])
    header = _provenance_lines(prov)
    with open(out / "solution_t.csv", "w") as fh:
        write_matrix_csv(fh, solution.t, header)
    with open(out / "solution_p.csv", "w") as fh:
        write_matrix_csv(fh, solution.p, header)
    _write_json(out / "solution_report.json", {
        "objective": solution.objective,
        "kkt_residual": solution.kkt_residual,
        "constraint_residual": solution.constraint_residual,
        "iterations": solution.iterations,
        "converged": solution.converged,
        "provenance": prov,
    })
    report = marginal_report(solution, bank.problem)
    with open(out / "marginal_report.csv", "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("node,out_data,out_reconstructed,in_data,in_reconstructed\n")
        for lab, od, orc, idt, irc in zip(
            report["labels"], report["out_data"], report["out_reconstructed"],
            report["in_data"], report["in_reconstructed"],
        ):
            fh.write(f"{lab},{od!r},{orc!r},{idt!r},{irc!r}\n")
    click.echo(f"wrote reconstruction to {out}")


@main.command()
@click.option("--input", "input_path", type=str, default=None, help="Reconstructed weight matrix CSV.")
@click.option("--percentile", type=float, default=80.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--samples", "n_samples", type=int, default=1000, show_default=True)
@click.option("--out", "out_dir", type=str, default="out", show_default=True)
@click.option("--config", "config_path", type=str, default=None)
@click.pass_context
@handle_errors
def analyze(ctx, input_path, percentile, seed, n_samples, out_dir, config_path):
    """Truncate a weight matrix and compute the network metrics panel."""
    cfg = _merged_config(
        ctx, config_path,
        input_path=input_path, percentile=percentile, seed=seed,
        n_samples=n_samples, out_dir=out_dir,
    )
    path = _require_input(cfg["input_path"])
    flow = read_matrix_csv(path)
    net = truncate_percentile(flow, cfg["percentile"])
    report = metrics_report(net, seed=cfg["seed"])
    ensemble = degree_preserved_randomize(
        net, n_samples=cfg["n_samples"], seed=cfg["seed"]
    )

    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(cfg, [path])
    header = _provenance_lines(prov)

    with open(out / "edges.csv", "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("source,target\n")
        for i, j in zip(*np.nonzero(net.adjacency)):
            fh.write(f"{net.nodes[i].id},{net.nodes[j].id}\n")

    pos_links = int((flow.weights > 0).sum())
    observed = {
        "avg_shortest_path": report.avg_shortest_path,
        "clustering": report.clustering_transitivity,
        "assortativity": report.degree_assortativity,
    }
    _write_json(out / "metrics.json", {
        "avg_shortest_path": report.avg_shortest_path,
        "clustering_transitivity": report.clustering_transitivity,
        "degree_assortativity": report.degree_assortativity,
        "modularity": report.modularity,
        "density": report.density,
        "positive_link_count": pos_links,
        "retained_link_count": net.n_edges,
        "notes": report.notes,
        "ensemble": {
            "n_samples": ensemble.n_samples,
            "seed": ensemble.seed,
            "swaps_per_edge": ensemble.swaps_per_edge,
            "means": ensemble.means,
            "stds": ensemble.stds,
            "z_scores": {
                k: ensemble.z_score(k, v)
                for k, v in observed.items() if v is not None
            },
        },
        "provenance": prov,
    })

    with open(out / "communities.csv", "w") as fh:
        fh.write("node,community\n")
        for lab, comm in sorted(report.communities.items()):
            fh.write(f"{lab},{comm}\n")

    with open(out / "ccdf.csv", "w") as fh:
        fh.write("quantity,value,ccdf\n")
        for name, values in (
            ("in_degree", report.in_degree),
            ("out_degree", report.out_degree),
            ("pagerank", report.pagerank),
        ):
            vals, cc = degree_ccdf(values)
            for v, c in zip(vals, cc):
                fh.write(f"{name},{v!r},{c!r}\n")
    click.echo(f"wrote analysis to {out}")


def _load_or_synthesize(input_path: str | None) -> tuple[TradeDataset, list]:
    if input_path is None:
        return synthetic_trade_matrix(), []
    path = _require_input(input_path)
    return load_trade_matrix(path), [path]


@main.command()
@click.option("--input", "input_path", type=str, default=None,
              help="Trade matrix CSV; a bundled synthetic matrix is used when omitted.")
@click.option("--beta", type=float, default=100.0, show_default=True)
@click.option("--target-density", type=float, default=None,
              help="Also truncate the linked 2Q-cut reconstruction to this density.")
@click.option("--out", "out_dir", type=str, default="out", show_default=True)
@click.option("--config", "config_path", type=str, default=None)
@click.pass_context
@handle_errors
def validate(ctx, input_path, beta, target_density, out_dir, config_path):
    """Run the four verification scenarios: {no-cut, 2Q-cut} x {with, without} link constraints."""
    cfg = _merged_config(
        ctx, config_path,
        input_path=input_path, beta=beta, target_density=target_density, out_dir=out_dir,
    )
    dataset, inputs = _load_or_synthesize(cfg["input_path"])
    q2 = make_q2_cut(dataset)

    scenarios = {}
    densities = {"trade_data": {}, "reconstruction_no_link": {}, "reconstruction_with_link": {}}
    for variant_name, variant in (("no_cut", dataset), ("q2_cut", q2)):
        data = variant.matrix.weights
        n = data.shape[0]
        offdiag = n * (n - 1)
        densities["trade_data"][variant_name] = float(
            ((data > 0) & ~np.eye(n, dtype=bool)).sum() / offdiag
        )
        for link_name, with_links in (("no_link", False), ("with_link", True)):
            problem = build_trade_problem(variant, beta=cfg["beta"], with_link_constraints=with_links)
            solution = solve_ridge(problem)
            report = fit_report(solution, data, cfg["beta"])
            scenarios[f"{variant_name}_{link_name}"] = report
            key = "reconstruction_with_link" if with_links else "reconstruction_no_link"
            densities[key][variant_name] = report.density_reconstructed

    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(cfg, inputs)
    with open(out / "density_table.csv", "w") as fh:
        for line in _provenance_lines(prov):
            fh.write(f"# {line}\n")
        fh.write("item,no_cut,q2_cut\n")
        for item, row in densities.items():
            fh.write(f"{item},{row['no_cut']!r},{row['q2_cut']!r}\n")
    payload = {
        "scenarios": {k: vars(v) for k, v in scenarios.items()},
        "densities": densities,
        "provenance": prov,
    }
    if cfg["target_density"] is not None:
        problem = build_trade_problem(q2, beta=cfg["beta"], with_link_constraints=True)
        solution = solve_ridge(problem)
        net, fraction = truncate_to_density(solution.t, cfg["target_density"])
        payload["target_density"] = {
            "target": cfg["target_density"],
            "achieved": density(net),
            "fraction_of_max": fraction,
        }
    _write_json(out / "fit_reports.json", payload)
    click.echo(f"wrote validation to {out}")


@main.command()
@click.option("--input", "input_path", type=str, default=None,
              help="Trade matrix CSV; a bundled synthetic matrix is used when omitted.")
@click.option("--betas", type=str, default=",".join(str(b) for b in DEFAULT_BETA_GRID),
              show_default=True, help="Comma-separated beta grid.")
@click.option("--link-constraints/--no-link-constraints", default=False, show_default=True)
@click.option("--q2-cut/--no-q2-cut", default=False, show_default=True)
@click.option("--out", "out_dir", type=str, default="out", show_default=True)
@click.option("--config", "config_path", type=str, default=None)
@click.pass_context
@handle_errors
def sweep(ctx, input_path, betas, link_constraints, q2_cut, out_dir, config_path):
    """Emit objective, RMSE, intercept and slope per beta as CSV."""
    cfg = _merged_config(
        ctx, config_path,
        input_path=input_path, betas=betas, link_constraints=link_constraints,
        q2_cut=q2_cut, out_dir=out_dir,
    )
    try:
        grid = [float(x) for x in str(cfg["betas"]).split(",") if x.strip() != ""]
    except ValueError:
        raise click.UsageError(f"bad beta grid {cfg['betas']!r}")
    if not grid:
        raise click.UsageError("empty beta grid")
    dataset, inputs = _load_or_synthesize(cfg["input_path"])
    if cfg["q2_cut"]:
        dataset = make_q2_cut(dataset)
    data = dataset.matrix.weights
    problem = build_trade_problem(dataset, with_link_constraints=cfg["link_constraints"])
    reports = beta_sweep(problem, grid, data)

    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(cfg, inputs)
    with open(out / "sweep.csv", "w") as fh:
        for line in _provenance_lines(prov):
            fh.write(f"# {line}\n")
        fh.write("beta,objective,rmse,slope_a,intercept_b,density\n")
        for r in reports:
            fh.write(
                f"{r.beta!r},{r.objective!r},{r.rmse!r},{r.slope_a!r},"
                f"{r.intercept_b!r},{r.density_reconstructed!r}\n"
            )
    click.echo(f"wrote sweep to {out}")


if __name__ == "__main__":
    main()
