#!/usr/bin/env python
"""
Custom multi-scale Poisson dataset.

The full grid is divided into blocks x blocks sub-domains. On every
block the problem

    laplacian(u) = f    with u = 0 on the block boundary

is solved with the 5-point finite-difference stencil in local
coordinates x, y in [0, 1] (nodes x_i = i/(n-1)). Block (i, j) uses the
source

    f(x, y) = sin(pi k mu x) sin(pi k mu y),   k = i*blocks + j + 1

and the target repeats the construction with frequency k * factor * mu.
"""
import functools
from collections import OrderedDict as odict
from multiprocessing import Pool

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from m2m.analysis.model import Model, Parameter
from m2m.observation.dataset import Sample, SampleSet
from m2m.utils.logger import logger
from m2m.utils.exceptions import SolverError, ConfigError

# Largest interior system solved with a direct factorization
DIRECT_MAX = 256**2

class PoissonConfig(Model):
    _params = odict([
        ('grid',            Parameter(128, [3, 16384])),
        ('blocks',          Parameter(2, [1, 256])),
        ('mu_mean',         Parameter(1.0)),
        ('mu_std',          Parameter(0.1, [0, np.inf])),
        ('n_samples',       Parameter(1000, [1, 1e8])),
        ('train_split',     Parameter(700, [0, 1e8])),
        ('high_freq_factor',Parameter(7, [0, np.inf])),
        ('seed',            Parameter(0)),
        ('nprocs',          Parameter(1, [1, 1024])),
    ])

    def _validate(self):
        if self.grid % self.blocks:
            msg = "Grid %i not divisible into %i blocks"%(self.grid,self.blocks)
            raise ConfigError(msg)
        if self.grid // self.blocks < 3:
            msg = "Blocks need at least 3 nodes per axis; found %i"%(self.grid//self.blocks)
            raise ConfigError(msg)
        if self.train_split > self.n_samples:
            msg = "Training split %i exceeds %i samples"%(self.train_split,self.n_samples)
            raise ConfigError(msg)

    @property
    def block(self):
        return self.grid // self.blocks

def laplacian(n, m=None):
    """
    5-point Laplacian on the (n-2) x (m-2) interior nodes of an n x m
    block of the unit square with homogeneous Dirichlet boundary.
    Interior unknowns are ordered row-major.
    """
    m = n if m is None else m
    hx,hy = 1./(n-1),1./(m-1)
    def second(k,h):
        return scipy.sparse.diags([1.,-2.,1.],[-1,0,1],shape=(k,k))/h**2
    Ix,Iy = scipy.sparse.identity(n-2),scipy.sparse.identity(m-2)
    return (scipy.sparse.kron(second(n-2,hx),Iy) +
            scipy.sparse.kron(Ix,second(m-2,hy))).tocsc()

@functools.lru_cache(maxsize=8)
def _factorized(n, m):
    return scipy.sparse.linalg.factorized(laplacian(n,m))

def _cg(A, b, tol, maxiter):
    try:
        return scipy.sparse.linalg.cg(A,b,rtol=tol,atol=0.0,maxiter=maxiter)
    except TypeError:
        # scipy < 1.12
        return scipy.sparse.linalg.cg(A,b,tol=tol,atol=0.0,maxiter=maxiter)

def solve_block(f, method=None, tol=1e-10, maxiter=None):
    """
    Solve laplacian(u) = f on one block with u = 0 on its boundary.

    Parameters:
    -----------
    f       : source [n, m] sampled on all nodes (boundary values are unused)
    method  : 'direct', 'cg', or None to choose by size
    tol     : relative tolerance of the iterative solve
    maxiter : iteration cap of the iterative solve

    Returns:
    --------
    u       : solution [n, m]
    """
    f = np.asarray(f,dtype=float)
    n,m = f.shape
    if n < 3 or m < 3:
        msg = "Block must have at least 3x3 nodes; found %ix%i"%(n,m)
        raise ValueError(msg)
    if not np.isfinite(f).all():
        raise ValueError("Non-finite source term")

    b = f[1:-1,1:-1].ravel()
    if method is None:
        method = 'direct' if b.size <= DIRECT_MAX else 'cg'

    if method == 'direct':
        x = _factorized(n,m)(b)
    elif method == 'cg':
        # The negated Laplacian is symmetric positive definite
        maxiter = 10*b.size if maxiter is None else maxiter
        x,info = _cg(-laplacian(n,m),-b,tol,maxiter)
        if info != 0:
            msg = "Conjugate gradient did not converge (info=%i) on %ix%i block"%(info,n,m)
            raise SolverError(msg)
    else:
        msg = "Unrecognized solver method: %s"%method
        raise ValueError(msg)

    u = np.zeros((n,m))
    u[1:-1,1:-1] = x.reshape(n-2,m-2)
    return u

def poisson_solve(f, block=None, **kwargs):
    """
    Solve laplacian(u) = f independently on every block of f.

    Parameters:
    -----------
    f     : source on the full grid [H, W]
    block : (H_b, W_b) block shape; default is the whole grid
    kwargs: passed to solve_block

    Returns:
    --------
    u     : solution [H, W], zero on every block boundary
    """
    f = np.asarray(f,dtype=float)
    H,W = f.shape
    hb,wb = (H,W) if block is None else block
    if H % hb or W % wb:
        msg = "Grid %ix%i not divisible into %ix%i blocks"%(H,W,hb,wb)
        raise ValueError(msg)
    u = np.zeros_like(f)
    for i in range(H//hb):
        for j in range(W//wb):
            sl = (slice(i*hb,(i+1)*hb),slice(j*wb,(j+1)*wb))
            u[sl] = solve_block(f[sl],**kwargs)
    return u

def residual(u, f):
    """ Max-norm of laplacian_h(u) - f on the interior nodes of one block. """
    u = np.asarray(u,dtype=float)
    n,m = u.shape
    lap = laplacian(n,m).dot(u[1:-1,1:-1].ravel())
    return np.max(np.abs(lap - np.asarray(f,dtype=float)[1:-1,1:-1].ravel()))

def source_term(x, y, k, mu):
    """ sin(pi k mu x) sin(pi k mu y) """
    return np.sin(np.pi*k*mu*x)*np.sin(np.pi*k*mu*y)

def block_sources(mu, grid=128, blocks=2, factor=1):
    """ Source on the full grid, block (i,j) with frequency (i*blocks+j+1)*factor*mu. """
    n = grid//blocks
    x = np.linspace(0,1,n)
    xx,yy = np.meshgrid(x,x,indexing='ij')
    f = np.zeros((grid,grid))
    for i in range(blocks):
        for j in range(blocks):
            k = i*blocks + j + 1
            f[i*n:(i+1)*n,j*n:(j+1)*n] = source_term(xx,yy,k*factor,mu)
    return f

def make_multiscale_sample(mu, grid=128, blocks=2, factor=7):
    """
    Low-frequency solution (input) and high-frequency solution (target)
    for one frequency parameter mu.

    Returns:
    --------
    sample : Sample with input/target [1, grid, grid] and meta {'mu': mu}
    """
    mu = float(mu)
    if not mu > 0:
        msg = "Frequency parameter must be positive: %s"%mu
        raise ValueError(msg)
    n = grid//blocks
    u = poisson_solve(block_sources(mu,grid,blocks,1),(n,n))
    v = poisson_solve(block_sources(mu,grid,blocks,factor),(n,n))
    return Sample(u[None],v[None],dict(mu=mu))

def sample_mu(cfg):
    """ Frequency parameters drawn from N(mu_mean, mu_std^2) under the seed. """
    rng = np.random.default_rng(cfg.seed)
    return rng.normal(cfg.mu_mean,cfg.mu_std,size=int(cfg.n_samples))

def _make(args):
    return make_multiscale_sample(*args)

def generate_poisson_dataset(cfg=None, **kwargs):
    """
    Generate the Poisson dataset.

    Parameters:
    -----------
    cfg    : PoissonConfig
    kwargs : parameter overrides

    Returns:
    --------
    samples : SampleSet, first `train_split` samples for training
    """
    cfg = cfg.copy() if cfg is not None else PoissonConfig()
    cfg.set_attributes(**kwargs)
    cfg._validate()

    mus = sample_mu(cfg)
    args = [(mu,cfg.grid,cfg.blocks,cfg.high_freq_factor) for mu in mus]
    logger.info("Generating %i Poisson samples on a %ix%i grid..."%(len(args),cfg.grid,cfg.grid))

    if cfg.nprocs > 1:
        with Pool(cfg.nprocs) as pool:
            samples = pool.map(_make,args)
    else:
        samples = []
        for i,a in enumerate(args):
            if i and i % 100 == 0: logger.info("  %i/%i"%(i,len(args)))
            samples.append(_make(a))

    return SampleSet.from_samples(samples,kind='poisson',n_train=cfg.train_split,
                                  seed=cfg.seed,config=dict(cfg.todict()))
