import unittest

import numpy as np
from scipy import stats

from endonav.exceptions import DegenerateSampleError, HarnessError, LengthMismatchError
from endonav.harness import paired_t_test


class TestPairedTTest(unittest.TestCase):
    def test_known_values(self):
        result = paired_t_test([1, 2, 3, 4, 5], [2, 2, 5, 4, 7])
        self.assertAlmostEqual(-2.2361, result.t, places=4)
        self.assertAlmostEqual(0.0890, result.p, places=4)
        self.assertEqual(4, result.df)

    def test_matches_scipy(self):
        rng = np.random.default_rng(0)
        for n in (2, 5, 30):
            x = rng.normal(50, 10, n)
            y = x + rng.normal(1, 3, n)
            ours = paired_t_test(x, y)
            reference = stats.ttest_rel(x, y)
            self.assertAlmostEqual(reference.statistic, ours.t, places=10)
            self.assertAlmostEqual(reference.pvalue, ours.p, places=10)

    def test_symmetric(self):
        x, y = [10.0, 12.5, 9.0, 14.0], [11.0, 12.0, 11.5, 15.0]
        forward, backward = paired_t_test(x, y), paired_t_test(y, x)
        self.assertAlmostEqual(forward.t, -backward.t)
        self.assertAlmostEqual(forward.p, backward.p)

    def test_p_in_range(self):
        result = paired_t_test([100, 100, 100.5], [0, 0.1, 0])
        self.assertGreater(result.p, 0)
        self.assertLess(result.p, 1e-3)

    def test_degenerate(self):
        with self.assertRaises(DegenerateSampleError):
            paired_t_test([1, 2, 3], [0, 1, 2])
        with self.assertRaises(DegenerateSampleError):
            paired_t_test([1], [2])

    def test_length_mismatch(self):
        with self.assertRaises(LengthMismatchError):
            paired_t_test([1, 2, 3], [1, 2])
        with self.assertRaises(HarnessError):
            paired_t_test([[1, 2]], [[1, 3]])
