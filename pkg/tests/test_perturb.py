"""
Unit tests for sampled and perturbed chains and planted-structure generators.
"""

import os
import sys
import unittest

import numpy as np
from pydantic import ValidationError as PydanticValidationError

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "application"))
sys.path.insert(0, os.path.dirname(__file__))

import fixtures
from errors import ValidationError
from lmc import Partition, exact_quotient, max_abs_diff
from perturb import (
    PerturbModel,
    SamplingPlan,
    perturb_chain,
    planted_chain,
    row_deviations,
    sample_chain,
    sample_size,
)
from test_config import BaseTestCase, count, random_chain


class TestSampleSize(BaseTestCase):
    """Per-state sample counts"""

    def test_formula(self):
        """Test the sample count formula"""
        self.assertEqual(sample_size(2, 0.05, 0.05), 877)
        self.assertEqual(sample_size(1, 0.1, 0.1), 150)

    def test_grows_with_support(self):
        """Test that larger supports need more samples"""
        self.assertLess(sample_size(2, 0.01, 0.01), sample_size(20, 0.01, 0.01))

    def test_invalid_arguments(self):
        """Test that out of range arguments are rejected"""
        for args in ((0, 0.1, 0.1), (2, 0.0, 0.1), (2, 0.1, 1.0), (2, 1.5, 0.1)):
            with self.assertRaises(ValidationError):
                sample_size(*args)

    def test_plan_for_chain(self):
        """Test the per-state counts of a plan"""
        chain = fixtures.fig8()
        plan = SamplingPlan.for_chain(chain, 0.05, 0.05)
        self.assertEqual(plan.counts, [877, 877, 877, sample_size(1, 0.05, 0.05)])

    def test_plan_needs_positive_counts(self):
        """Test that a zero count is rejected"""
        with self.assertRaises(PydanticValidationError):
            SamplingPlan(epsilon=0.1, delta=0.1, counts=[3, 0])


class TestSampleChain(BaseTestCase):
    """Empirical estimates of every row"""

    def setUp(self):
        self.truth = fixtures.fig1(0)
        self.plan = SamplingPlan.for_chain(self.truth, 0.05, 0.05)

    def test_deterministic_per_seed(self):
        """Test that the same seed gives the same chain"""
        a = sample_chain(self.truth, self.plan, seed=3)
        b = sample_chain(self.truth, self.plan, seed=3)
        self.assertEqual(a.rows, b.rows)
        c = sample_chain(self.truth, self.plan, seed=4)
        self.assertNotEqual(a.rows, c.rows)

    def test_support_and_labels_kept(self):
        """Test that sampling keeps supports and labels"""
        sampled = sample_chain(self.truth, self.plan, seed=0)
        self.assertEqual(sampled.labels, self.truth.labels)
        for row, truth_row in zip(sampled.rows, self.truth.rows):
            self.assertDistribution(row)
            self.assertTrue(set(row.support()) <= set(truth_row.support()))

    def test_plan_size_checked(self):
        """Test that a plan of the wrong size is rejected"""
        with self.assertRaises(ValidationError):
            sample_chain(self.truth, SamplingPlan(epsilon=0.1, delta=0.1, counts=[5]), seed=0)

    def test_entries_within_epsilon_with_high_probability(self):
        """Test that estimates fall within epsilon often enough"""
        epsilon, delta = 0.05, 0.05
        close = total = 0
        for seed in range(count("sampling_seeds")):
            sampled = sample_chain(self.truth, self.plan, seed=seed)
            for row, truth_row in zip(sampled.rows, self.truth.rows):
                total += 1
                close += max_abs_diff(row, truth_row) <= epsilon
        self.assertGreaterEqual(close / total, 1 - delta)

    def test_few_samples_give_large_deviations(self):
        """Test that few samples give large deviations"""
        few = SamplingPlan(epsilon=0.5, delta=0.5, counts=[10] * self.truth.n_states)
        worst = [max(row_deviations(self.truth, sample_chain(self.truth, few, seed=seed))) for seed in range(20)]
        self.assertGreater(float(np.mean(worst)), 0.05)


class TestPerturbChain(BaseTestCase):
    """Support-preserving noise with an L1 envelope"""

    def test_zero_epsilon_returns_truth(self):
        """Test that zero noise returns the chain unchanged"""
        truth = fixtures.fig8()
        self.assertIs(perturb_chain(truth, PerturbModel(epsilon=0, delta=0.1)), truth)

    def test_deterministic_per_seed(self):
        """Test that the same seed gives the same chain"""
        truth = fixtures.herman(5)
        model = PerturbModel(epsilon=0.01, delta=0.1, seed=2)
        self.assertEqual(perturb_chain(truth, model).rows, perturb_chain(truth, model).rows)
        self.assertNotEqual(perturb_chain(truth, model).rows, perturb_chain(truth, model, seed=3).rows)

    def test_envelope(self):
        """Test that noise stays inside its envelope"""
        rng = np.random.default_rng(6)
        truth = random_chain(rng, 60, max_support=4)
        epsilon, delta = 0.01, 0.05
        within = total = 0
        for seed in range(20):
            perturbed = perturb_chain(truth, PerturbModel(epsilon=epsilon, delta=delta, seed=seed))
            self.assertEqual(perturbed.labels, truth.labels)
            for row, truth_row, deviation in zip(perturbed.rows, truth.rows, row_deviations(truth, perturbed)):
                self.assertDistribution(row)
                self.assertTrue(set(row.support()) <= set(truth_row.support()))
                self.assertLessEqual(deviation, 2 * epsilon + 1e-12)
                total += 1
                within += deviation <= epsilon + 1e-12
        self.assertGreaterEqual(within / total, 0.9)

    def test_single_successor_rows_stay(self):
        """Test that rows with one successor are not perturbed"""
        truth = fixtures.fig8()
        perturbed = perturb_chain(truth, PerturbModel(epsilon=0.1, delta=0.5, seed=1))
        self.assertEqual(perturbed.rows[3], truth.rows[3])

    def test_model_validation(self):
        """Test that invalid noise models are rejected"""
        with self.assertRaises(PydanticValidationError):
            PerturbModel(epsilon=0.1, delta=0)
        with self.assertRaises(PydanticValidationError):
            PerturbModel(epsilon=-0.1, delta=0.1)


class TestPlantedChain(BaseTestCase):
    """Random chains with a known exact quotient"""

    def test_quotient_has_planted_size(self):
        """Test that the exact quotient has the planted size"""
        for seed in range(5):
            chain, mapping = planted_chain(4, 24, 3, seed=seed)
            self.assertEqual(chain.n_states, 24)
            self.assertEqual(len(mapping), 24)
            result = exact_quotient(chain)
            self.assertEqual(result.quotient.n_states, 4)
            self.assertBlocks(result.partition, Partition.from_block_of(mapping).blocks)

    def test_deterministic_per_seed(self):
        """Test that the same seed gives the same chain"""
        a, mapping_a = planted_chain(3, 10, 2, seed=8)
        b, mapping_b = planted_chain(3, 10, 2, seed=8)
        self.assertEqual(a.rows, b.rows)
        self.assertEqual(mapping_a, mapping_b)

    def test_single_block(self):
        """Test planting a single block"""
        chain, mapping = planted_chain(1, 5, 2, seed=0)
        self.assertEqual(set(mapping), {0})
        self.assertEqual(exact_quotient(chain).quotient.n_states, 1)

    def test_invalid_sizes(self):
        """Test that impossible sizes are rejected"""
        with self.assertRaises(ValidationError):
            planted_chain(5, 4, 2, seed=0)
        with self.assertRaises(ValidationError):
            planted_chain(2, 4, 0, seed=0)


if __name__ == "__main__":
    unittest.main()
