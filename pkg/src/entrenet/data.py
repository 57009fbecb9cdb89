"""Loading balance-sheet and trade-matrix data and building reconstruction problems."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    BANK_DEFAULT_RULES,
    Category,
    CategoryRuleSet,
    FlowMatrix,
    NodeInfo,
    ReconstructionProblem,
    SlackPolicy,
    add_slack_node,
    as_category,
    assemble_category_rules,
)


class DataError(ValueError):
    """Malformed or inconsistent input data."""


BALANCE_SHEET_HEADER = ["year", "bank_id", "bank_name", "category", "call_loan", "call_money"]


@dataclass(frozen=True)
class BalanceSheetRecord:
    year: int
    bank_id: str
    bank_name: str
    category: Category
    call_loan: float
    call_money: float


class TradeVariant(str, enum.Enum):
    NO_CUT = "no_cut"
    Q2_CUT = "q2_cut"


@dataclass
class TradeDataset:
    matrix: FlowMatrix
    variant: TradeVariant = TradeVariant.NO_CUT
    link_constraints_enabled: bool = False


def load_balance_sheets(path, year: int) -> list[BalanceSheetRecord]:
    """Read and validate balance-sheet records for one year.

    Expects a UTF-8 CSV with header year,bank_id,bank_name,category,call_loan,call_money.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_balance_sheets(fh, year, name=str(path))


def parse_balance_sheets(fh, year: int, name: str = "<stream>") -> list[BalanceSheetRecord]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{name}: no records") from None
    if [h.strip() for h in header] != BALANCE_SHEET_HEADER:
        raise DataError(f"{name}: bad header {header!r}")
    records = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(BALANCE_SHEET_HEADER):
            raise DataError(f"{name}:{lineno}: expected {len(BALANCE_SHEET_HEADER)} fields")
        try:
            rec = BalanceSheetRecord(
                year=int(row[0]),
                bank_id=row[1].strip(),
                bank_name=row[2].strip(),
                category=as_category(row[3].strip()),
                call_loan=float(row[4]),
                call_money=float(row[5]),
            )
        except ValueError as exc:
            raise DataError(f"{name}:{lineno}: {exc}") from None
        if rec.call_loan < 0 or rec.call_money < 0:
            raise DataError(f"{name}:{lineno}: negative amount for bank {rec.bank_id!r}")
        if not (np.isfinite(rec.call_loan) and np.isfinite(rec.call_money)):
            raise DataError(f"{name}:{lineno}: non-finite amount for bank {rec.bank_id!r}")
        key = (rec.year, rec.bank_id)
        if key in seen:
            raise DataError(f"{name}:{lineno}: duplicate (year, bank_id) {key!r}")
        seen.add(key)
        if rec.year == year:
            records.append(rec)
    if not records:
        raise DataError(f"{name}: no records for year {year}")
    return records


def category_census(records: list[BalanceSheetRecord]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for rec in records:
        counts[rec.category.value] = counts.get(rec.category.value, 0) + 1
    return counts


@dataclass
class BankProblem:
    """A ReconstructionProblem plus the node list that produced it."""

    problem: ReconstructionProblem
    nodes: list[NodeInfo]


def build_bank_problem(
    records: list[BalanceSheetRecord],
    rules: CategoryRuleSet = BANK_DEFAULT_RULES,
    beta: float = 100.0,
    forbid_diagonal: bool = True,
    slack: SlackPolicy = SlackPolicy(),
) -> BankProblem:
    """Assemble a per-year problem: marginals from call loan / call money,
    slack node appended, category zero-blocks applied."""
    years = {rec.year for rec in records}
    if len(years) != 1:
        raise DataError(f"records span multiple years {sorted(years)}; one problem per year")
    s_out = np.array([rec.call_loan for rec in records])
    s_in = np.array([rec.call_money for rec in records])
    marginals, slack_node = add_slack_node(s_out, s_in, slack)
    nodes = [
        NodeInfo(id=rec.bank_id, name=rec.bank_name, category=rec.category)
        for rec in records
    ] + [slack_node]
    groups, zero_cells = assemble_category_rules(nodes, rules, forbid_diagonal=forbid_diagonal)
    slack_idx = len(nodes) - 1
    zero_cells.add((slack_idx, slack_idx))
    problem = ReconstructionProblem(
        marginals=marginals,
        group_constraints=groups,
        zero_cells=zero_cells,
        beta=beta,
        forbid_diagonal=forbid_diagonal,
    )
    problem.nodes = nodes  # picked up by solver reports for labeling
    return BankProblem(problem=problem, nodes=nodes)


# --- trade matrices ----------------------------------------------------------


def load_trade_matrix(path) -> TradeDataset:
    """Read a dense labeled CSV trade matrix (rows: exporters, columns: importers)."""
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_trade_matrix(fh, name=str(path))


def parse_trade_matrix(fh, name: str = "<stream>") -> TradeDataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{name}: empty file") from None
    labels = [h.strip() for h in header[1:]]
    if len(labels) < 2:
        raise DataError(f"{name}: need at least 2 countries")
    rows = []
    row_labels = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(labels) + 1:
            raise DataError(f"{name}:{lineno}: ragged row")
        row_labels.append(row[0].strip())
        try:
            rows.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise DataError(f"{name}:{lineno}: {exc}") from None
    if len(rows) != len(labels) or row_labels != labels:
        raise DataError(f"{name}: matrix is not square with matching labels")
    weights = np.array(rows)
    if np.any(weights < 0):
        raise DataError(f"{name}: negative entry")
    nodes = [NodeInfo(id=lab, name=lab, category=Category.GENERIC) for lab in labels]
    return TradeDataset(matrix=FlowMatrix(nodes, weights))


def write_matrix_csv(fh, flow: FlowMatrix, header_lines: list[str] | None = None) -> None:
    """Write a labeled dense matrix; `header_lines` become leading '#' comments."""
    for line in header_lines or []:
        fh.write(f"# {line}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([""] + flow.labels)
    for label, row in zip(flow.labels, flow.weights):
        writer.writerow([label] + [repr(float(x)) for x in row])


def read_matrix_csv(path) -> FlowMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        text = "".join(line for line in fh if not line.startswith("#"))
    return parse_trade_matrix(io.StringIO(text), name=str(path)).matrix


def make_q2_cut(dataset: TradeDataset) -> TradeDataset:
    """Zero out entries strictly below the median of the strictly-positive entries.

    An even positive count uses the midpoint of the two central values.
    """
    weights = dataset.matrix.weights
    pos = weights[weights > 0]
    if pos.size == 0:
        raise DataError("no positive entries to cut")
    median = float(np.median(pos))
    cut = np.where(weights < median, 0.0, weights)
    cut[weights == 0] = 0.0
    return TradeDataset(
        matrix=FlowMatrix(dataset.matrix.nodes, cut),
        variant=TradeVariant.Q2_CUT,
        link_constraints_enabled=dataset.link_constraints_enabled,
    )


def build_trade_problem(
    dataset: TradeDataset,
    beta: float = 100.0,
    with_link_constraints: bool = False,
) -> ReconstructionProblem:
    """Problem from a trade matrix: marginals are row/column sums (balanced by
    construction); link constraints zero every cell that is zero in the data."""
    from .model import Marginals

    weights = dataset.matrix.weights
    total = float(weights.sum())
    if total <= 0:
        raise DataError("trade matrix has zero total")
    marginals = Marginals(
        out_strength=weights.sum(axis=1),
        in_strength=weights.sum(axis=0),
        total=total,
    )
    zero_cells: set[tuple[int, int]] = set()
    if with_link_constraints:
        zero_cells = {(int(i), int(j)) for i, j in zip(*np.nonzero(weights == 0))}
    problem = ReconstructionProblem(
        marginals=marginals,
        zero_cells=zero_cells,
        beta=beta,
        forbid_diagonal=False,
    )
    problem.nodes = list(dataset.matrix.nodes)
    return problem


def synthetic_trade_matrix(
    n: int = 20, seed: int = 7, sigma: float = 0.7, scale_spread: float = 2.0
) -> TradeDataset:
    """Dense log-normal test matrix with zero diagonal, used when no real
    trade data is supplied.

    Entries are gravity-structured, exp(a_i + b_j + sigma * Z_ij), so their
    heterogeneity resembles real country-level trade flows.
    """
    rng = np.random.default_rng(seed)
    exporter = rng.lognormal(0.0, scale_spread, n)
    importer = rng.lognormal(0.0, scale_spread, n)
    weights = np.outer(exporter, importer) * rng.lognormal(0.0, sigma, (n, n))
    np.fill_diagonal(weights, 0.0)
    nodes = [NodeInfo(id=f"C{i:02d}", name=f"C{i:02d}", category=Category.GENERIC) for i in range(n)]
    return TradeDataset(matrix=FlowMatrix(nodes, weights))
