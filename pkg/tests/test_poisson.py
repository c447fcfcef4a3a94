#!/usr/bin/env python
"""
Tests of the multi-scale Poisson generator.
"""
import numpy as np
import pytest

from m2m.simulation.poisson import (PoissonConfig, laplacian, solve_block, poisson_solve,
                                    residual, source_term, block_sources, sample_mu,
                                    make_multiscale_sample, generate_poisson_dataset)
from m2m.utils.exceptions import ConfigError, SolverError
from m2m.utils.logger import logger
logger.setLevel(logger.WARN)

def manufactured(n):
    """ u = sin(pi x) sin(pi y) solves laplacian(u) = -2 pi^2 u with u = 0 on the boundary. """
    x = np.linspace(0,1,n)
    xx,yy = np.meshgrid(x,x,indexing='ij')
    u = np.sin(np.pi*xx)*np.sin(np.pi*yy)
    return u, -2*np.pi**2*u

def max_error(n, method=None):
    u,f = manufactured(n)
    return np.max(np.abs(solve_block(f,method=method) - u))

def test_manufactured():
    assert max_error(64) < 1e-3
    assert max_error(64,method='cg') < 1e-3

def test_convergence():
    ratio = max_error(33)/max_error(65)
    assert 3.5 <= ratio <= 4.5

def test_residual():
    u,f = manufactured(32)
    sol = solve_block(f)
    assert residual(sol,f) < 1e-8
    np.testing.assert_equal(sol[0],0)
    np.testing.assert_equal(sol[:,-1],0)

def test_laplacian():
    A = laplacian(5)
    np.testing.assert_equal(A.shape,(9,9))
    # Symmetric with a negative diagonal
    np.testing.assert_allclose((A - A.T).toarray(),0)
    assert np.all(A.diagonal() < 0)

def test_solver_errors():
    u,f = manufactured(32)
    with pytest.raises(SolverError):
        solve_block(f,method='cg',maxiter=1)
    with pytest.raises(ValueError):
        solve_block(f,method='multigrid')
    with pytest.raises(ValueError):
        solve_block(np.zeros((2,2)))
    with pytest.raises(ValueError):
        poisson_solve(np.zeros((16,16)),(5,5))

def test_source():
    np.testing.assert_allclose(source_term(0.5,0.5,1,1.0),1.0)
    f = block_sources(1.0,grid=16,blocks=2)
    # Block (1,1) uses k = 4
    x = np.linspace(0,1,8)
    np.testing.assert_allclose(f[8:,8:],source_term(x[:,None],x[None,:],4,1.0))

def test_blocks():
    f = block_sources(1.0,grid=32,blocks=2)
    u = poisson_solve(f,(16,16))
    for i in (0,16):
        for j in (0,16):
            blk = u[i:i+16,j:j+16]
            np.testing.assert_equal(blk[0],0)
            np.testing.assert_equal(blk[-1],0)
            assert residual(blk,f[i:i+16,j:j+16]) < 1e-8

def test_mu():
    cfg = PoissonConfig(n_samples=10000,seed=3)
    mu = sample_mu(cfg)
    np.testing.assert_allclose(mu.mean(),1.0,atol=0.01)
    np.testing.assert_allclose(mu.std(),0.1,atol=0.01)
    np.testing.assert_equal(mu,sample_mu(cfg))

def test_sample():
    sample = make_multiscale_sample(1.0,grid=16,blocks=2,factor=7)
    np.testing.assert_equal(sample.input.shape,(1,16,16))
    np.testing.assert_equal(sample.target.shape,(1,16,16))
    np.testing.assert_equal(sample.meta['mu'],1.0)
    with pytest.raises(ValueError):
        make_multiscale_sample(-1.0,grid=16)

def test_dataset():
    cfg = PoissonConfig(grid=16,blocks=2,n_samples=5,train_split=3,seed=1)
    samples = generate_poisson_dataset(cfg)
    np.testing.assert_equal(samples.inputs.shape,(5,1,16,16))
    np.testing.assert_equal(len(samples.train),3)
    np.testing.assert_equal(len(samples.test),2)
    again = generate_poisson_dataset(cfg)
    np.testing.assert_array_equal(samples.targets,again.targets)

    with pytest.raises(ConfigError):
        PoissonConfig(grid=15,blocks=2)
    with pytest.raises(ConfigError):
        PoissonConfig(n_samples=10,train_split=20)
