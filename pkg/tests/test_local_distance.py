"""
Unit tests for the local bisimilarity distance and greedy pairwise merging.
"""

import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "application"))
sys.path.insert(0, os.path.dirname(__file__))

import fixtures
from errors import LabelMismatch, SameState, ValidationError
from lmc import chains_close, exact_quotient, l1_distance
from local_distance import (
    all_distances,
    closest_pair,
    local_distance,
    local_partition,
    merge_pair,
    minimise_local,
)
from test_config import BaseTestCase, random_chain
from witness import local_merge_witness, verify_epsilon_quotient


class TestLocalDistance(BaseTestCase):
    """Local partitions and distances of the worked examples"""

    def test_fig1_pairs_are_half_apart(self):
        """Test that the fig1 pairs are half apart"""
        chain = fixtures.fig1(0.1)
        report = local_distance(chain, 0, 2)
        self.assertAlmostEqual(report.distance, 0.5, delta=1e-12)
        self.assertEqual(report.partition.blocks, ((0, 2), (1,), (3,)))
        self.assertAlmostEqual(local_distance(chain, 1, 3).distance, 0.5, delta=1e-12)

    def test_fig8_distances(self):
        """Test the local distances of every fig8 pair"""
        chain = fixtures.fig8()
        distances = {report.pair: report.distance for report in all_distances(chain)}
        self.assertEqual(set(distances), {(0, 1), (0, 2), (1, 2)})
        self.assertAlmostEqual(distances[(0, 1)], 0.54, delta=1e-12)
        self.assertAlmostEqual(distances[(0, 2)], 0.04, delta=1e-12)
        self.assertAlmostEqual(distances[(1, 2)], 0.54, delta=1e-12)

    def test_fig12_left_distance(self):
        """Test the remaining distance after the first fig8 merge"""
        chain = fixtures.fig12("left")
        self.assertAlmostEqual(local_distance(chain, 0, 1).distance, 0.06, delta=1e-12)

    def test_partition_puts_pair_together(self):
        """Test that the local partition joins the pair"""
        chain = fixtures.fig8()
        partition = local_partition(chain, 1, 2)
        self.assertTrue(partition.same_block(1, 2))
        self.assertBlocks(partition, [[0], [1, 2], [3]])

    def test_same_state_rejected(self):
        """Test that a pair of one state is rejected"""
        with self.assertRaises(SameState):
            local_distance(fixtures.fig8(), 1, 1)

    def test_label_mismatch_rejected(self):
        """Test that differently labelled states are rejected"""
        with self.assertRaises(LabelMismatch):
            local_distance(fixtures.fig8(), 0, 3)

    def test_unknown_state_rejected(self):
        """Test that an out of range state is rejected"""
        with self.assertRaises(ValidationError):
            local_distance(fixtures.fig8(), 0, 9)

    def test_bisimilar_states_have_zero_distance(self):
        """Test that bisimilar states are at distance zero"""
        chain = fixtures.fig1(0)
        self.assertEqual(local_distance(chain, 0, 2).distance, 0.0)

    def test_distance_is_symmetric(self):
        """Test that swapping the pair keeps the distance"""
        rng = np.random.default_rng(7)
        for _ in range(20):
            chain = random_chain(rng, 6)
            for report in all_distances(chain):
                s, t = report.pair
                self.assertAlmostEqual(report.distance, local_distance(chain, t, s).distance, delta=1e-12)
                self.assertLessEqual(report.distance, 1.0)


class TestMerging(BaseTestCase):
    """Merging one pair and the witness that justifies it"""

    def test_merge_gives_fig12_left(self):
        """Test that merging fig8 states 0 and 2 gives fig12 left"""
        chain = fixtures.fig8()
        report = local_distance(chain, 0, 2)
        merged = merge_pair(chain, 0, 2, report.partition)
        self.assertTrue(chains_close(merged, fixtures.fig12("left")))
        self.assertEqual(merged.names(), ("s1", "s2", "v"))

    def test_merge_needs_pair_in_one_block(self):
        """Test that merging needs the pair in one block"""
        chain = fixtures.fig8()
        report = local_distance(chain, 0, 2)
        with self.assertRaises(ValidationError):
            merge_pair(chain, 0, 1, report.partition)

    def test_witness_moves_only_the_pair(self):
        """Test that the merge witness changes only the pair's rows"""
        chain = fixtures.fig8()
        proof = local_merge_witness(chain, 0, 2)
        deviations = proof.deviations()
        self.assertEqual(deviations[1], 0.0)
        self.assertEqual(deviations[3], 0.0)
        self.assertAlmostEqual(deviations[0], 0.04, delta=1e-12)
        self.assertAlmostEqual(deviations[2], 0.04, delta=1e-12)
        self.assertEqual(proof.problems(), [])

    def test_closest_pair_respects_budget(self):
        """Test that no pair is returned above the budget"""
        chain = fixtures.fig8()
        self.assertIsNone(closest_pair(chain, 0.03))
        self.assertEqual(closest_pair(chain, 0.04).pair, (0, 2))


class TestMinimiseLocal(BaseTestCase):
    """The greedy minimisation loop"""

    def test_fig8_two_iterations(self):
        """Test the two merges of fig8 at budget 0.1"""
        trace = minimise_local(fixtures.fig8(), 0.1)
        self.assertEqual(trace.iterations, 2)
        self.assertEqual(trace.sizes(), [4, 3, 2])
        self.assertEqual(trace.merged_pairs, [(0, 2), (0, 1)])
        self.assertAlmostEqual(trace.steps[0].distance, 0.04, delta=1e-12)
        self.assertAlmostEqual(trace.steps[1].distance, 0.06, delta=1e-12)
        self.assertChainRows(trace.final, [{0: 0.51, 1: 0.49}, {1: 1.0}], tol=1e-12)
        self.assertTrue(chains_close(trace.final, fixtures.fig12("right")))
        self.assertAlmostEqual(trace.bound, 0.2)
        self.assertAlmostEqual(trace.realized_budget, 0.1, delta=1e-12)
        self.assertEqual(trace.mapping(), (0, 0, 0, 1))

    def test_fig8_small_budget_stops_after_one_merge(self):
        """Test that a small budget stops after one merge"""
        trace = minimise_local(fixtures.fig8(), 0.05)
        self.assertEqual(trace.iterations, 1)
        self.assertTrue(chains_close(trace.final, fixtures.fig12("left")))

    def test_zero_budget_returns_exact_quotient(self):
        """Test that budget zero gives the exact quotient"""
        for chain in (fixtures.fig8(), fixtures.fig1(0), fixtures.fig4(0.01)):
            trace = minimise_local(chain, 0.0)
            self.assertEqual(trace.iterations, 0)
            self.assertTrue(chains_close(trace.final, exact_quotient(chain).quotient))

    def test_every_step_verifies(self):
        """Test that every greedy step has a valid witness"""
        rng = np.random.default_rng(11)
        for _ in range(10):
            chain = random_chain(rng, 7)
            trace = minimise_local(chain, 0.2)
            for step, source in zip(trace.steps, trace.quotients):
                self.assertIs(step.certificate.source, source)
                self.assertLessEqual(step.budget, 0.2 + 1e-12)
                self.assertTrue(verify_epsilon_quotient(step.certificate).passed)
                worst = max(l1_distance(a, b) for a, b in zip(step.certificate.witness.rows, source.rows))
                self.assertLessEqual(worst, step.budget + 1e-9)

    def test_negative_budget_rejected(self):
        """Test that a negative budget is rejected"""
        with self.assertRaises(ValidationError):
            minimise_local(fixtures.fig8(), -0.1)


if __name__ == "__main__":
    unittest.main()
