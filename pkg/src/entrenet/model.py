"""Domain types and constraint assembly shared by the solver, analysis and I/O layers."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

BALANCE_RTOL = 1e-12


class Category(str, enum.Enum):
    """Node categories. `OTHER` is reserved for the slack node, `GENERIC` for non-bank data."""

    MAJOR = "major"
    TRUST = "trust"
    LEADING_REGIONAL = "leading_regional"
    SECOND_TIER_REGIONAL = "second_tier_regional"
    OTHER = "other"
    GENERIC = "generic"


def as_category(value) -> Category:
    if isinstance(value, Category):
        return value
    try:
        return Category(str(value))
    except ValueError:
        raise ValueError(f"unknown category {value!r}") from None


@dataclass(frozen=True)
class NodeInfo:
    id: str
    name: str
    category: Category = Category.GENERIC


@dataclass
class FlowMatrix:
    """Dense nonnegative weighted directed matrix with node labels."""

    nodes: list[NodeInfo]
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.weights.shape[1]:
            raise ValueError(f"weights must be square, got shape {self.weights.shape}")
        if len(self.nodes) != self.weights.shape[0]:
            raise ValueError("node list length does not match matrix size")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        ids = [node.id for node in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def labels(self) -> list[str]:
        return [node.id for node in self.nodes]

    def row_sums(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def total(self) -> float:
        return float(self.weights.sum())


@dataclass
class Marginals:
    """Out-/in-strength vectors plus the shared total."""

    out_strength: np.ndarray
    in_strength: np.ndarray
    total: float

    def __post_init__(self):
        self.out_strength = np.asarray(self.out_strength, dtype=float)
        self.in_strength = np.asarray(self.in_strength, dtype=float)
        if self.out_strength.shape != self.in_strength.shape or self.out_strength.ndim != 1:
            raise ValueError("out/in strengths must be 1-D vectors of equal length")
        if np.any(self.out_strength < 0) or np.any(self.in_strength < 0):
            raise ValueError("strengths must be nonnegative")
        if not (np.isfinite(self.total) and self.total > 0):
            raise ValueError(f"total must be positive, got {self.total}")
        scale = max(abs(self.total), 1.0)
        # balance check is a hard invariant: problems must be slack-balanced first
        for name, vec in (("out", self.out_strength), ("in", self.in_strength)):
            if abs(vec.sum() - self.total) > BALANCE_RTOL * scale * max(len(vec), 1):
                raise ValueError(
                    f"{name}-strength sum {vec.sum()} does not match total {self.total}"
                )

    @property
    def n(self) -> int:
        return len(self.out_strength)


@dataclass(frozen=True)
class GroupConstraint:
    """Known total amount of flow from one node group into another."""

    source_group: frozenset[int]
    target_group: frozenset[int]
    amount: float

    def __post_init__(self):
        object.__setattr__(self, "source_group", frozenset(self.source_group))
        object.__setattr__(self, "target_group", frozenset(self.target_group))
        if not self.source_group or not self.target_group:
            raise ValueError("group constraint with empty group")
        if self.amount < 0:
            raise ValueError("group amount must be nonnegative")

    def cells(self):
        return itertools.product(sorted(self.source_group), sorted(self.target_group))


@dataclass
class ReconstructionProblem:
    """A fully assembled reconstruction instance.

    Group constraints with amount 0 are normalized into ``zero_cells`` on
    construction, so downstream code only ever sees positive-amount equalities
    plus hard-zero cells.
    """

    marginals: Marginals
    group_constraints: list[GroupConstraint] = field(default_factory=list)
    zero_cells: set[tuple[int, int]] = field(default_factory=set)
    beta: float = 100.0
    forbid_diagonal: bool = False

    def __post_init__(self):
        n = self.marginals.n
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        zeros = set(self.zero_cells)
        positive = []
        for gc in self.group_constraints:
            bad = [i for i in gc.source_group | gc.target_group if not 0 <= i < n]
            if bad:
                raise ValueError(f"group constraint references invalid indices {bad}")
            if gc.amount > self.marginals.total:
                raise ValueError("group amount exceeds problem total")
            if gc.amount == 0.0:
                zeros.update(gc.cells())
            else:
                positive.append(gc)
        for i, j in zeros:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"zero cell ({i}, {j}) out of range")
        if self.forbid_diagonal:
            zeros.update((i, i) for i in range(n))
        self.group_constraints = positive
        self.zero_cells = zeros

    @property
    def n(self) -> int:
        return self.marginals.n

    def with_beta(self, beta: float) -> "ReconstructionProblem":
        return replace(self, beta=beta)


@dataclass
class CategoryRuleSet:
    """Category-pair rules: which blocks are forbidden, which have known totals."""

    forbidden: set[tuple[Category, Category]] = field(default_factory=set)
    totals: dict[tuple[Category, Category], float] = field(default_factory=dict)

    def __post_init__(self):
        self.forbidden = {(as_category(a), as_category(b)) for a, b in self.forbidden}
        self.totals = {
            (as_category(a), as_category(b)): float(v) for (a, b), v in self.totals.items()
        }


#: §5-style sparsity rules: no trading inside any bank category except major.
BANK_DEFAULT_RULES = CategoryRuleSet(
    forbidden={
        (Category.TRUST, Category.TRUST),
        (Category.LEADING_REGIONAL, Category.LEADING_REGIONAL),
        (Category.SECOND_TIER_REGIONAL, Category.SECOND_TIER_REGIONAL),
    }
)


def assemble_category_rules(
    nodes: list[NodeInfo],
    rules: CategoryRuleSet,
    forbid_diagonal: bool = False,
) -> tuple[list[GroupConstraint], set[tuple[int, int]]]:
    """Expand category-level rules into index-level constraints.

    Returns the group constraints for every known category-pair total and the
    deduplicated set of zero cells (forbidden blocks, plus the diagonal when
    `forbid_diagonal` is set). Zero-amount totals become zero cells directly.
    """
    by_category: dict[Category, list[int]] = {}
    for idx, node in enumerate(nodes):
        by_category.setdefault(node.category, []).append(idx)

    def members(cat: Category) -> list[int]:
        got = by_category.get(cat, [])
        if not got:
            raise ValueError(f"rule references empty category {cat.value!r}")
        return got

    zero_cells: set[tuple[int, int]] = set()
    for src, dst in rules.forbidden:
        # a ban on an absent category is vacuously satisfied
        src_idx = by_category.get(src, [])
        dst_idx = by_category.get(dst, [])
        zero_cells.update(itertools.product(src_idx, dst_idx))

    constraints: list[GroupConstraint] = []
    for (src, dst), amount in rules.totals.items():
        src_idx, dst_idx = members(src), members(dst)
        if amount == 0.0:
            zero_cells.update(itertools.product(src_idx, dst_idx))
        else:
            constraints.append(
                GroupConstraint(frozenset(src_idx), frozenset(dst_idx), amount)
            )

    if forbid_diagonal:
        zero_cells.update((i, i) for i in range(len(nodes)))
    return constraints, zero_cells


@dataclass(frozen=True)
class SlackPolicy:
    id: str = "other"
    name: str = "other"


def add_slack_node(
    out_strength: np.ndarray,
    in_strength: np.ndarray,
    policy: SlackPolicy = SlackPolicy(),
) -> tuple[Marginals, NodeInfo]:
    """Append one slack node absorbing the aggregate lending/borrowing imbalance.

    The slack node gets out-strength max(0, sum_in - sum_out) and in-strength
    max(0, sum_out - sum_in); the balanced total is max of the two aggregate
    sums. Idempotent on balanced input (both slack strengths zero).
    """
    s_out = np.asarray(out_strength, dtype=float)
    s_in = np.asarray(in_strength, dtype=float)
    if np.any(s_out < 0) or np.any(s_in < 0):
        raise ValueError("strengths must be nonnegative")
    total_out, total_in = float(s_out.sum()), float(s_in.sum())
    if total_out == 0.0 and total_in == 0.0:
        raise ValueError("degenerate problem: both aggregate strengths are zero")
    slack_out = max(0.0, total_in - total_out)
    slack_in = max(0.0, total_out - total_in)
    marginals = Marginals(
        out_strength=np.append(s_out, slack_out),
        in_strength=np.append(s_in, slack_in),
        total=max(total_out, total_in),
    )
    node = NodeInfo(id=policy.id, name=policy.name, category=Category.OTHER)
    return marginals, node
