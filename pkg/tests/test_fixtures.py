"""
Unit tests for the hand-sized chains, parametrised families and the brute-force quotient search.
"""

import os
import sys
import unittest
from fractions import Fraction
from itertools import combinations_with_replacement

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "application"))
sys.path.insert(0, os.path.dirname(__file__))

import fixtures
from approx_refine import lump_average
from errors import TooLarge, ValidationError
from lmc import Partition, chains_close, exact_quotient
from oracle import greatest_eps_bisim
from test_config import BaseTestCase
from witness import min_epsilon_for_partition


def subset_sum_instances(max_items=4, max_total=8):
    """Every (p, n) with at most `max_items` values summing to at most `max_total`, and 0 <= n <= sum(p)."""
    for size in range(1, max_items + 1):
        for p in combinations_with_replacement(range(1, max_total + 1), size):
            if sum(p) <= max_total:
                for n in range(sum(p) + 1):
                    yield list(p), n


class TestWorkedExamples(BaseTestCase):
    """Rows of the hand-drawn chains"""

    def test_fig1(self):
        """Test the rows and labels of fig1"""
        chain = fixtures.fig1(0.1)
        self.assertEqual(chain.names(), ("s1", "s2", "t1", "t2"))
        self.assertRowsClose(chain.rows[0].as_dict(), {0: 0.5, 1: 0.5}, tol=0)
        self.assertRowsClose(chain.rows[2].as_dict(), {2: 0.6, 3: 0.4}, tol=0)
        self.assertEqual(chain.labels[0], chain.labels[2])
        self.assertNotEqual(chain.labels[0], chain.labels[1])

    def test_fig1_range(self):
        """Test that fig1 needs 0 <= eps < 1/2"""
        with self.assertRaises(ValidationError):
            fixtures.fig1(0.5)
        with self.assertRaises(ValidationError):
            fixtures.fig1(-0.1)

    def test_fig4(self):
        """Test the skewed row of fig4"""
        chain = fixtures.fig4(0.01)
        self.assertRowsClose(chain.rows[2].as_dict(), {2: 0.76, 3: 0.24}, tol=0)

    def test_fig8(self):
        """Test the s2 row of fig8"""
        chain = fixtures.fig8()
        self.assertRowsClose(chain.rows[1].as_dict(), {0: 0.54, 3: 0.46}, tol=0)

    def test_fig5_are_averaged_quotients_of_fig4(self):
        """Test that the three fig5 chains average fig4's merges"""
        chain = fixtures.fig4(0.01)
        merges = {"a": [[0, 2], [1], [3]], "b": [[0], [1, 2], [3]], "c": [[0, 1, 2], [3]]}
        for variant, blocks in merges.items():
            merged = lump_average(chain, Partition.from_blocks(blocks, 4))
            self.assertTrue(chains_close(merged, fixtures.fig5(0.01, variant)), variant)
        with self.assertRaises(ValidationError):
            fixtures.fig5(0.01, "d")

    def test_fig12_sides(self):
        """Test both fig12 chains and an unknown side"""
        self.assertEqual(fixtures.fig12("left").n_states, 3)
        self.assertEqual(fixtures.fig12("right").n_states, 2)
        with self.assertRaises(ValidationError):
            fixtures.fig12("middle")

    def test_example5_negative_entry_rejected(self):
        """Test that example5 rejects an eps that makes a row negative"""
        with self.assertRaises(ValidationError):
            fixtures.example5(0.2)

    def test_parameters_are_read_as_decimals(self):
        """Test that parameters become exact fractions through their decimal form"""
        self.assertEqual(fixtures.exact(0.1), Fraction(1, 10))
        self.assertEqual(fixtures.exact("1/3"), Fraction(1, 3))

    def test_every_row_is_stochastic(self):
        """Test that every catalog row sums to one"""
        chains = [
            fixtures.fig1(0.1),
            fixtures.fig4(0.01),
            fixtures.fig7b(0.1),
            fixtures.fig8(),
            fixtures.example5(0.1),
            fixtures.herman(5),
            fixtures.family_m("even", 3, 0.001),
        ]
        for chain in chains:
            for row in chain.rows:
                self.assertDistribution(row, tol=1e-12)


class TestSubsetSum(BaseTestCase):
    """The reduction from subset sum"""

    def test_shape(self):
        """Test the size, budget and b-labelled states of the reduction"""
        chain, eps, k = fixtures.subset_sum_chain([1, 2, 3], 3)
        self.assertEqual(chain.n_states, 11)
        self.assertEqual(eps, 1 / 12)
        self.assertEqual(k, 5)
        b_states = [chain.name(s) for s in range(chain.n_states) if chain.labels[s].key == "b"]
        self.assertEqual(b_states, ["sb", "tb"])

    def test_invalid_instances(self):
        """Test that empty, negative or unreachable instances are rejected"""
        with self.assertRaises(ValidationError):
            fixtures.subset_sum_chain([], 0)
        with self.assertRaises(ValidationError):
            fixtures.subset_sum_chain([1, -2], 1)
        with self.assertRaises(ValidationError):
            fixtures.subset_sum_chain([1, 2], 4)

    def test_documented_instances(self):
        """Test one solvable and one unsolvable instance"""
        chain, eps, k = fixtures.subset_sum_chain([1, 2, 3], 3)
        self.assertTrue(fixtures.brute_force_k_quotient(chain, eps, k))
        chain, eps, k = fixtures.subset_sum_chain([2, 4], 3)
        self.assertFalse(fixtures.brute_force_k_quotient(chain, eps, k))

    def test_brute_force_agrees_with_subset_enumeration(self):
        """Exhaustive over small instances; only a total of two disagrees"""
        checked = 0
        disagreements = []
        for p, n in subset_sum_instances():
            chain, eps, k = fixtures.subset_sum_chain(p, n)
            if fixtures.brute_force_k_quotient(chain, eps, k) != fixtures.subset_sum_solvable(p, n):
                disagreements.append((tuple(p), n))
            checked += 1
        self.assertEqual(checked, 367)
        self.assertEqual(disagreements, [((2,), 1)])

    def test_total_of_two_admits_a_quotient_without_a_subset(self):
        """Test the instance where the reduction answers yes without a subset"""
        chain, eps, k = fixtures.subset_sum_chain([2], 1)
        self.assertFalse(fixtures.subset_sum_solvable([2], 1))
        self.assertTrue(fixtures.brute_force_k_quotient(chain, eps, k))


class TestFamilyM(BaseTestCase):
    """Chains where transitive closure of epsilon-bisimilarity overshoots"""

    def test_state_counts(self):
        """Test the sizes of the odd and even families"""
        self.assertEqual(fixtures.family_m("odd", 1, 0.1).n_states, 4)
        self.assertEqual(fixtures.family_m("odd", 3, 0.01).n_states, 8)
        self.assertEqual(fixtures.family_m("even", 1, 0.1).n_states, 5)
        self.assertEqual(fixtures.family_m("even", 3, 0.01).n_states, 9)

    def test_only_x_has_its_own_label(self):
        """Test that x is the only state with its own label"""
        chain = fixtures.family_m("even", 2, 0.01)
        x = chain.index_of("x")
        for s in range(chain.n_states):
            if s != x:
                self.assertEqual(chain.labels[s], chain.labels[0])
        self.assertNotEqual(chain.labels[x], chain.labels[0])

    def test_epsilon_range(self):
        """Test the parameter checks of the families"""
        with self.assertRaises(ValidationError):
            fixtures.family_m("odd", 1, 0.2)
        with self.assertRaises(ValidationError):
            fixtures.family_m("odd", 1, 0)
        with self.assertRaises(ValidationError):
            fixtures.family_m("mixed", 1, 0.1)
        with self.assertRaises(ValidationError):
            fixtures.family_m("odd", 0, 0.1)

    def test_closure_merge_costs_more_than_epsilon(self):
        """Test that merging the closure class costs a multiple of eps"""
        cases = (("odd", 1, 0.1, 2), ("odd", 2, 0.01, 4), ("odd", 3, 0.01, 6), ("even", 1, 0.1, 3))
        for kind, n, eps, factor in cases:
            chain = fixtures.family_m(kind, n, eps)
            relation = greatest_eps_bisim(chain, eps)
            x = chain.index_of("x")
            others = [s for s in range(chain.n_states) if s != x]
            self.assertBlocks(relation.classes(), [others, [x]])
            self.assertIn((chain.index_of("s"), chain.index_of("t")), relation)
            merged = relation.classes()
            self.assertGreaterEqual(min_epsilon_for_partition(chain, merged), factor * eps - 1e-7)
            self.assertGreater(min_epsilon_for_partition(chain, merged), n * eps)


class TestHerman(BaseTestCase):
    """Herman's self-stabilising ring"""

    def test_sizes(self):
        """Test the number of ring configurations"""
        self.assertEqual(fixtures.herman(3).n_states, 8)
        self.assertEqual(fixtures.herman(5).n_states, 32)

    def test_even_or_small_rings_rejected(self):
        """Test that rings must be odd and at least three long"""
        for n in (1, 2, 4):
            with self.assertRaises(ValidationError):
                fixtures.herman(n)

    def test_stable_states_stay_stable(self):
        """Test that stable configurations only reach stable ones"""
        chain = fixtures.herman(5)
        for s in range(chain.n_states):
            if chain.labels[s].key == "stable":
                for target in chain.rows[s].support():
                    self.assertEqual(chain.labels[target].key, "stable")


class TestBruteForce(BaseTestCase):
    """Enumeration of small epsilon-quotients"""

    def test_partition_counts(self):
        """Test partition counts against Stirling and Bell numbers"""
        self.assertEqual(len(list(fixtures.partitions_with_k_blocks(4, 2))), 7)
        self.assertEqual(sum(len(list(fixtures.partitions_with_k_blocks(5, k))) for k in range(1, 6)), 52)

    def test_exact_quotient_size_at_zero(self):
        """Test that eps = 0 finds the exact quotient size"""
        for chain in (fixtures.fig1(0), fixtures.fig8(), fixtures.fig4(0.01)):
            k = exact_quotient(chain).quotient.n_states
            self.assertTrue(fixtures.brute_force_k_quotient(chain, 0.0, k))

    def test_fig1_two_states_need_the_skew(self):
        """Test that fig1 has a two-state quotient only at its own eps"""
        chain = fixtures.fig1(0.1)
        self.assertTrue(fixtures.brute_force_k_quotient(chain, 0.1, 2))
        self.assertFalse(fixtures.brute_force_k_quotient(chain, 0.05, 2))

    def test_out_of_range_k(self):
        """Test that impossible block counts answer no"""
        self.assertFalse(fixtures.brute_force_k_quotient(fixtures.fig8(), 0.1, 0))
        self.assertFalse(fixtures.brute_force_k_quotient(fixtures.fig8(), 0.1, 5))

    def test_guard(self):
        """Test that large chains are refused"""
        with self.assertRaises(TooLarge):
            fixtures.brute_force_k_quotient(fixtures.herman(5), 0.1, 2)


if __name__ == "__main__":
    unittest.main()
