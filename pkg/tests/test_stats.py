#!/usr/bin/env python
"""
Tests of the error metrics
"""
import unittest
# Execute tests in order: https://stackoverflow.com/a/22317851/4075339
unittest.TestLoader.sortTestMethodsUsing = None

import numpy as np
import torch

import m2m.utils.stats
from m2m.analysis.fields import Field
from m2m.utils.exceptions import ShapeError

class TestStats(unittest.TestCase):
    """Test the error metrics"""

    def setUp(self):
        rng = np.random.default_rng(0)
        self.truth = rng.normal(size=(4,1,8,8))
        self.pred = self.truth + 0.1*rng.normal(size=(4,1,8,8))

    def test_identity(self):
        stats = m2m.utils.stats
        np.testing.assert_equal(stats.relative_l2(self.truth,self.truth),0)
        np.testing.assert_equal(stats.rmse(self.truth,self.truth),0)
        np.testing.assert_equal(stats.mae(self.truth,self.truth),0)

    def test_per_sample(self):
        """ Relative error is averaged over samples, not pooled. """
        truth = np.array([[1.,0.],[10.,0.]])
        pred = np.array([[1.,1.],[10.,1.]])
        np.testing.assert_allclose(m2m.utils.stats.relative_l2(pred,truth),0.5*(1 + 0.1))

    def test_values(self):
        stats = m2m.utils.stats
        diff = self.pred - self.truth
        np.testing.assert_allclose(stats.rmse(self.pred,self.truth),np.sqrt(np.mean(diff**2)))
        np.testing.assert_allclose(stats.mae(self.pred,self.truth),np.mean(np.abs(diff)))

    def test_inputs(self):
        """ Tensors and Fields are accepted. """
        stats = m2m.utils.stats
        expected = stats.rmse(self.pred,self.truth)
        pred = torch.from_numpy(self.pred).requires_grad_()
        np.testing.assert_allclose(stats.rmse(pred,Field(self.truth)),expected)

    def test_errors(self):
        stats = m2m.utils.stats
        with self.assertRaises(ShapeError):
            stats.rmse(self.pred,self.truth[:2])
        with self.assertRaises(ValueError):
            stats.relative_l2(self.pred,np.zeros_like(self.truth))

if __name__ == "__main__":
    unittest.main()
