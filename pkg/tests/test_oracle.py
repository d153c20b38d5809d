"""
Unit tests for epsilon-liftings and the greatest epsilon-bisimulation.
"""

import os
import sys
import unittest

import numpy as np
from scipy.optimize import linprog

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "application"))
sys.path.insert(0, os.path.dirname(__file__))

import fixtures
from approx_refine import RefinementConfig, minimise_apr
from errors import ChainMismatch, ValidationError
from local_distance import minimise_local
from oracle import StateRelation, check_prop1, greatest_eps_bisim, lifting_feasible, transitive_classes
from test_config import BaseTestCase, count, random_chain, random_row
from witness import EpsQuotientCertificate


def coupling_optimum(mu, nu, relation):
    """Largest mass a coupling of mu and nu can put on `relation`, by a transportation LP."""
    sources, targets = sorted(mu), sorted(nu)
    pairs = [(u, v) for u in sources for v in targets]
    objective = np.array([-1.0 if (u, v) in relation else 0.0 for u, v in pairs])
    a_eq = []
    b_eq = []
    for u in sources:
        a_eq.append([1.0 if x == u else 0.0 for x, _ in pairs])
        b_eq.append(mu[u])
    for v in targets:
        a_eq.append([1.0 if y == v else 0.0 for _, y in pairs])
        b_eq.append(nu[v])
    result = linprog(objective, A_eq=np.array(a_eq), b_eq=np.array(b_eq), bounds=(0, None), method="highs")
    return -float(result.fun)


class TestStateRelation(BaseTestCase):
    """Reflexive symmetric relations"""

    def test_reflexive_and_symmetric(self):
        """Test that relations are closed under reflexivity and symmetry"""
        relation = StateRelation.from_pairs(3, [(2, 0)])
        self.assertIn((0, 2), relation)
        self.assertIn((2, 0), relation)
        self.assertIn((1, 1), relation)
        self.assertNotIn((0, 1), relation)
        self.assertEqual(relation.pairs(), {(0, 0), (1, 1), (2, 2), (0, 2), (2, 0)})

    def test_out_of_range_rejected(self):
        """Test that pairs outside the state range are rejected"""
        with self.assertRaises(ValidationError):
            StateRelation.from_pairs(2, [(0, 2)])

    def test_classes_of_transitive_closure(self):
        """Test the classes of the transitive closure"""
        relation = StateRelation.from_pairs(5, [(0, 2), (2, 1)])
        self.assertBlocks(transitive_classes(relation), [[0, 1, 2], [3], [4]])

    def test_issubset(self):
        """Test relation inclusion"""
        small = StateRelation.from_pairs(3, [(0, 1)])
        large = StateRelation.from_pairs(3, [(0, 1), (1, 2)])
        self.assertTrue(small.issubset(large))
        self.assertFalse(large.issubset(small))


class TestLifting(BaseTestCase):
    """Coupling feasibility by maximum flow"""

    def test_example5_pairs(self):
        """Test lifting the example5 rows at 0.1 and 0.05"""
        chain = fixtures.example5(0.1)
        relation = StateRelation.from_pairs(5, [(0, 1), (2, 1), (0, 3)])
        self.assertTrue(lifting_feasible(chain, chain.rows[0], chain.rows[1], relation, 0.1))
        self.assertFalse(lifting_feasible(chain, chain.rows[0], chain.rows[1], relation, 0.05))

    def test_identity_relation_on_equal_rows(self):
        """Test lifting under the identity relation"""
        chain = fixtures.fig8()
        relation = StateRelation.from_pairs(4, [])
        self.assertTrue(lifting_feasible(chain, chain.rows[1], chain.rows[1], relation, 0.0))
        self.assertFalse(lifting_feasible(chain, chain.rows[1], chain.rows[2], relation, 0.5))

    def test_agrees_with_transportation_program(self):
        """Max-flow feasibility matches the coupling LP on small supports"""
        rng = np.random.default_rng(21)
        chain = random_chain(rng, 6)
        for _ in range(40):
            mu, nu = random_row(rng, 6), random_row(rng, 6)
            pairs = [(s, t) for s in range(6) for t in range(s + 1, 6) if rng.random() < 0.3]
            relation = StateRelation.from_pairs(6, pairs)
            slack = 1.0 - coupling_optimum(mu, nu, relation)
            self.assertTrue(lifting_feasible(chain, mu, nu, relation, min(1.0, slack + 1e-6)))
            if slack > 1e-6:
                self.assertFalse(lifting_feasible(chain, mu, nu, relation, slack - 1e-6))

    def test_fig4_coupling(self):
        """s1 and s3 of fig4 lift with exactly epsilon of mass off the relation"""
        eps = 0.01
        chain = fixtures.fig4(eps)
        s1, s2, s3, x = range(4)
        relation = StateRelation.from_pairs(4, [(s1, s3), (s3, s2)])
        coupling = {(s1, s3): 0.5, (s2, s3): 0.25, (x, x): 0.25 - eps, (x, s3): eps}
        for u in range(4):
            self.assertAlmostEqual(sum(w for (a, _), w in coupling.items() if a == u), chain.rows[s1][u], delta=1e-12)
            self.assertAlmostEqual(sum(w for (_, b), w in coupling.items() if b == u), chain.rows[s3][u], delta=1e-12)
        on_relation = sum(w for pair, w in coupling.items() if pair in relation)
        self.assertAlmostEqual(on_relation, 1 - eps, delta=1e-12)
        optimum = coupling_optimum(chain.rows[s1].as_dict(), chain.rows[s3].as_dict(), relation)
        self.assertAlmostEqual(optimum, 1 - eps, delta=1e-9)
        self.assertTrue(lifting_feasible(chain, chain.rows[s1], chain.rows[s3], relation, eps))
        self.assertFalse(lifting_feasible(chain, chain.rows[s1], chain.rows[s3], relation, eps / 2))

    def test_unknown_state_rejected(self):
        """Test that rows over unknown states are rejected"""
        chain = fixtures.fig8()
        with self.assertRaises(ValidationError):
            lifting_feasible(chain, {7: 1.0}, {0: 1.0}, StateRelation.from_pairs(4, []), 0.1)


class TestGreatestEpsBisim(BaseTestCase):
    """Pair deletion down to the greatest epsilon-bisimulation"""

    def test_fig4_is_not_transitive(self):
        """Test that the fig4 relation is not transitive"""
        chain = fixtures.fig4(0.01)
        relation = greatest_eps_bisim(chain, 0.01)
        self.assertIn((0, 2), relation)
        self.assertIn((2, 1), relation)
        self.assertNotIn((0, 1), relation)
        self.assertBlocks(relation.classes(), [[0, 1, 2], [3]])

    def test_fig4_at_twice_epsilon(self):
        """Test that s1 and s2 of fig4 relate at twice epsilon"""
        relation = greatest_eps_bisim(fixtures.fig4(0.01), 0.02)
        self.assertIn((0, 1), relation)

    def test_zero_epsilon_is_bisimilarity(self):
        """Test that budget zero gives probabilistic bisimilarity"""
        relation = greatest_eps_bisim(fixtures.fig1(0), 0.0)
        self.assertEqual(relation.unordered, frozenset({(0, 2), (1, 3)}))
        self.assertEqual(greatest_eps_bisim(fixtures.fig1(0.1), 0.0).unordered, frozenset())

    def test_sweep_order_does_not_matter(self):
        """Test that the deletion order does not change the result"""
        rng = np.random.default_rng(4)
        for _ in range(5):
            chain = random_chain(rng, 6, quantum=10)
            self.assertEqual(greatest_eps_bisim(chain, 0.1), greatest_eps_bisim(chain, 0.1, shuffle_seed=9))

    def test_monotone_in_epsilon(self):
        """Test that larger budgets give larger relations"""
        chain = fixtures.example5(0.1)
        previous = greatest_eps_bisim(chain, 0.0)
        for epsilon in (0.05, 0.1, 0.2, 0.5, 1.0):
            current = greatest_eps_bisim(chain, epsilon)
            self.assertTrue(previous.issubset(current))
            previous = current

    def test_epsilon_range_checked(self):
        """Test that budgets above 1 are rejected"""
        with self.assertRaises(ValidationError):
            greatest_eps_bisim(fixtures.fig8(), 1.5)


class TestCheckProp1(BaseTestCase):
    """States stay half-epsilon-bisimilar to their images"""

    def test_fig8_local_steps(self):
        """Test that every fig8 merge keeps states close to their images"""
        trace = minimise_local(fixtures.fig8(), 0.1)
        for step, source in zip(trace.steps, trace.quotients):
            self.assertTrue(check_prop1(source, step.certificate))

    def test_fig1_apr_step(self):
        """Test the first refinement step on fig1"""
        chain = fixtures.fig1(0.1)
        trace = minimise_apr(chain, RefinementConfig(eps2=0.2))
        self.assertTrue(check_prop1(trace.quotients[0], trace.steps[0].certificate))

    def test_exact_certificate(self):
        """Test that exact quotients keep states bisimilar to their images"""
        chain = fixtures.fig1(0)
        self.assertTrue(check_prop1(chain, EpsQuotientCertificate.exact(chain)))

    def test_seeded_minimisation_runs(self):
        """Test both minimisers against the relation on random chains"""
        rng = np.random.default_rng(12)
        for run in range(count("oracle_runs")):
            chain = random_chain(rng, int(rng.integers(3, 9)))
            if run % 2:
                trace = minimise_local(chain, 0.2)
            else:
                trace = minimise_apr(chain, RefinementConfig(eps2=0.2))
            for step, source in zip(trace.steps, trace.quotients):
                self.assertTrue(check_prop1(source, step.certificate))

    def test_mismatched_chain_rejected(self):
        """Test that a certificate for another chain is rejected"""
        certificate = EpsQuotientCertificate.exact(fixtures.fig1(0))
        with self.assertRaises(ChainMismatch):
            check_prop1(fixtures.fig8(), certificate)


if __name__ == "__main__":
    unittest.main()
