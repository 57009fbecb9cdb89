import numpy as np
import pytest
from hypothesis import given, strategies as st

from entrenet.model import (
    BANK_DEFAULT_RULES,
    Category,
    CategoryRuleSet,
    FlowMatrix,
    GroupConstraint,
    Marginals,
    NodeInfo,
    ReconstructionProblem,
    add_slack_node,
    assemble_category_rules,
)


def make_nodes(categories):
    return [NodeInfo(id=f"b{i}", name=f"bank {i}", category=c) for i, c in enumerate(categories)]


class TestFlowMatrix:
    def test_rejects_negative(self):
        nodes = make_nodes([Category.GENERIC] * 2)
        with pytest.raises(ValueError, match="nonnegative"):
            FlowMatrix(nodes, np.array([[0.0, -1.0], [0.0, 0.0]]))

    def test_rejects_non_square(self):
        nodes = make_nodes([Category.GENERIC] * 2)
        with pytest.raises(ValueError, match="square"):
            FlowMatrix(nodes, np.zeros((2, 3)))

    def test_rejects_duplicate_ids(self):
        nodes = [NodeInfo("x", "x"), NodeInfo("x", "y")]
        with pytest.raises(ValueError, match="unique"):
            FlowMatrix(nodes, np.zeros((2, 2)))


class TestMarginals:
    def test_balanced_ok(self):
        m = Marginals(np.array([2.0, 1.0]), np.array([1.5, 1.5]), 3.0)
        assert m.n == 2

    def test_unbalanced_rejected(self):
        with pytest.raises(ValueError, match="does not match total"):
            Marginals(np.array([2.0, 1.0]), np.array([1.0, 1.0]), 3.0)


class TestAssembleCategoryRules:
    def test_trust_block(self):
        nodes = make_nodes([Category.TRUST, Category.TRUST])
        rules = CategoryRuleSet(forbidden={(Category.TRUST, Category.TRUST)})
        _, zeros = assemble_category_rules(nodes, rules)
        assert zeros == {(0, 0), (0, 1), (1, 0), (1, 1)}
        _, zeros_diag = assemble_category_rules(nodes, rules, forbid_diagonal=True)
        assert zeros_diag == zeros  # diagonal already covered by the block

    def test_default_bank_rules_spare_major(self):
        cats = [Category.MAJOR, Category.MAJOR, Category.TRUST, Category.TRUST,
                Category.LEADING_REGIONAL, Category.SECOND_TIER_REGIONAL]
        nodes = make_nodes(cats)
        _, zeros = assemble_category_rules(nodes, BANK_DEFAULT_RULES)
        assert (0, 1) not in zeros and (1, 0) not in zeros  # major-major allowed
        assert (2, 3) in zeros and (3, 2) in zeros
        # single-member categories still get their self cell banned
        assert (4, 4) in zeros and (5, 5) in zeros

    def test_known_total_becomes_group_constraint(self):
        nodes = make_nodes([Category.LEADING_REGIONAL, Category.MAJOR])
        rules = CategoryRuleSet(
            totals={(Category.LEADING_REGIONAL, Category.MAJOR): 7.4e12}
        )
        groups, zeros = assemble_category_rules(nodes, rules)
        assert len(groups) == 1
        assert groups[0].amount == 7.4e12
        assert groups[0].source_group == frozenset({0})
        assert groups[0].target_group == frozenset({1})
        assert zeros == set()

    def test_zero_total_becomes_zero_block(self):
        nodes = make_nodes([Category.TRUST, Category.MAJOR])
        rules = CategoryRuleSet(totals={(Category.TRUST, Category.MAJOR): 0.0})
        groups, zeros = assemble_category_rules(nodes, rules)
        assert groups == []
        assert zeros == {(0, 1)}

    def test_forbidden_rule_on_absent_category_is_vacuous(self):
        nodes = make_nodes([Category.MAJOR])
        rules = CategoryRuleSet(forbidden={(Category.TRUST, Category.TRUST)})
        groups, zeros = assemble_category_rules(nodes, rules)
        assert groups == [] and zeros == set()

    def test_total_on_empty_category_rejected(self):
        nodes = make_nodes([Category.MAJOR])
        rules = CategoryRuleSet(totals={(Category.TRUST, Category.MAJOR): 1.0})
        with pytest.raises(ValueError, match="empty category"):
            assemble_category_rules(nodes, rules)

    def test_unknown_category_rejected(self):
        with pytest.raises(ValueError, match="unknown category"):
            CategoryRuleSet(forbidden={("bogus", "major")})

    def test_relabeling_equivariance(self):
        cats = [Category.TRUST, Category.MAJOR, Category.TRUST]
        nodes = make_nodes(cats)
        rules = CategoryRuleSet(forbidden={(Category.TRUST, Category.TRUST)})
        _, zeros = assemble_category_rules(nodes, rules)
        perm = [2, 0, 1]  # position of old index i in the new ordering
        nodes_perm = [nodes[1], nodes[2], nodes[0]]
        _, zeros_perm = assemble_category_rules(nodes_perm, rules)
        assert zeros_perm == {(perm[i], perm[j]) for i, j in zeros}


class TestAddSlackNode:
    def test_out_surplus(self):
        m, node = add_slack_node(np.array([6.0, 4.0]), np.array([5.0, 3.0]))
        assert node.category is Category.OTHER
        assert m.total == 10.0
        assert m.in_strength[-1] == 2.0
        assert m.out_strength[-1] == 0.0

    def test_balanced_isolated_slack(self):
        m, _ = add_slack_node(np.array([2.0, 3.0]), np.array([4.0, 1.0]))
        assert m.out_strength[-1] == 0.0 and m.in_strength[-1] == 0.0
        assert m.total == 5.0

    def test_balance_sheet_2005_aggregates(self):
        # category-level call loan vs call money: 5.1e12 out, 11.6e12 in
        call_loan = np.array([1.5, 0.5, 2.7, 0.4]) * 1e12
        call_money = np.array([9.4, 0.6, 1.5, 0.1]) * 1e12
        m, _ = add_slack_node(call_loan, call_money)
        assert m.out_strength[-1] == pytest.approx(6.5e12)
        assert m.in_strength[-1] == 0.0
        assert m.total == pytest.approx(11.6e12)

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            add_slack_node(np.zeros(3), np.zeros(3))

    @given(
        st.lists(st.floats(0, 1e6), min_size=1, max_size=12),
        st.lists(st.floats(0, 1e6), min_size=1, max_size=12),
    )
    def test_always_balances(self, out_list, in_list):
        k = min(len(out_list), len(in_list))
        s_out, s_in = np.array(out_list[:k]), np.array(in_list[:k])
        if s_out.sum() == 0 and s_in.sum() == 0:
            return
        m, _ = add_slack_node(s_out, s_in)
        assert m.out_strength.sum() == pytest.approx(m.total, rel=1e-12)
        assert m.in_strength.sum() == pytest.approx(m.total, rel=1e-12)


class TestReconstructionProblem:
    def test_zero_amount_group_normalized(self):
        m = Marginals(np.array([0.5, 0.5]), np.array([0.5, 0.5]), 1.0)
        prob = ReconstructionProblem(
            marginals=m,
            group_constraints=[GroupConstraint(frozenset({0}), frozenset({1}), 0.0)],
        )
        assert prob.group_constraints == []
        assert prob.zero_cells == {(0, 1)}

    def test_forbid_diagonal_adds_cells(self):
        m = Marginals(np.array([0.5, 0.5]), np.array([0.5, 0.5]), 1.0)
        prob = ReconstructionProblem(marginals=m, forbid_diagonal=True)
        assert {(0, 0), (1, 1)} <= prob.zero_cells

    def test_out_of_range_zero_cell(self):
        m = Marginals(np.array([0.5, 0.5]), np.array([0.5, 0.5]), 1.0)
        with pytest.raises(ValueError, match="out of range"):
            ReconstructionProblem(marginals=m, zero_cells={(0, 5)})

    def test_negative_beta_rejected(self):
        m = Marginals(np.array([1.0]), np.array([1.0]), 1.0)
        with pytest.raises(ValueError, match="beta"):
            ReconstructionProblem(marginals=m, beta=-1.0)
