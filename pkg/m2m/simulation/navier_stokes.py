#!/usr/bin/env python
"""
Pseudo-spectral solver for 2D incompressible Navier-Stokes in
vorticity form on the periodic unit square:

    dw/dt + u . grad(w) = nu laplacian(w) + f,    div(u) = 0

The streamfunction solves -laplacian(psi) = w and u = (dpsi/dy, -dpsi/dx).
Diffusion is integrated with Crank-Nicolson and advection with a Heun
predictor-corrector; the nonlinear term is dealiased with the 2/3 rule.
Arrays are indexed [x, y].
"""
from collections import OrderedDict as odict
from multiprocessing import Pool

import numpy as np
import scipy.fft

from m2m.analysis.model import Model, Parameter
from m2m.observation.dataset import Sample, SampleSet
from m2m.utils.logger import logger
from m2m.utils.exceptions import CFLError, ConfigError

class NSConfig(Model):
    _params = odict([
        ('source',           Parameter('generate', choices=['load','generate'])),
        ('grid',             Parameter(64, [4, 8192])),
        ('viscosity',        Parameter(1e-5, [0, np.inf])),
        ('t_in',             Parameter(10, [1, 10000])),
        ('t_out',            Parameter(10, [1, 10000])),
        ('n_samples',        Parameter(20, [1, 1e8])),
        ('train_split',      Parameter(16, [0, 1e8])),
        ('dt',               Parameter(1e-4, [0, np.inf])),
        ('record_stride',    Parameter(100, [1, 1e9])),
        ('burn_in',          Parameter(0, [0, 1e9])),
        ('forcing_amplitude',Parameter(0.1)),
        ('ic_alpha',         Parameter(2.5, [0, np.inf])),
        ('ic_tau',           Parameter(7.0, [0, np.inf])),
        ('cfl_max',          Parameter(1.0, [0, np.inf])),
        ('seed',             Parameter(0)),
        ('nprocs',           Parameter(1, [1, 1024])),
    ])

    def _validate(self):
        n = int(self.grid)
        if n & (n-1):
            msg = "Spectral grid must be a power of two: %i"%n
            raise ConfigError(msg)
        if not self.dt > 0:
            msg = "Time step must be positive: %g"%self.dt
            raise ConfigError(msg)
        if self.train_split > self.n_samples:
            msg = "Training split %i exceeds %i samples"%(self.train_split,self.n_samples)
            raise ConfigError(msg)

class SpectralGrid(object):
    """ Wavenumbers and dealiasing mask of an N x N periodic grid. """
    def __init__(self, n):
        self.n = n
        k = 2*np.pi*scipy.fft.fftfreq(n,d=1./n)
        # Nyquist mode carries no odd derivative
        kd = k.copy()
        kd[n//2] = 0
        self.kx,self.ky = np.meshgrid(kd,kd,indexing='ij')
        kx,ky = np.meshgrid(k,k,indexing='ij')
        self.k2 = kx**2 + ky**2
        self.k2_inv = np.zeros_like(self.k2)
        self.k2_inv[self.k2 > 0] = 1./self.k2[self.k2 > 0]
        kmax = np.abs(k).max()
        self.dealias = (np.abs(kx) < 2./3.*kmax) & (np.abs(ky) < 2./3.*kmax)
        x = np.arange(n)/n
        self.x,self.y = np.meshgrid(x,x,indexing='ij')

    @property
    def spacing(self):
        return 1./self.n

def _ifft(a):
    return np.real(scipy.fft.ifft2(a))

def streamfunction(w_hat, grid):
    return w_hat*grid.k2_inv

def velocity_from_vorticity(w, grid=None):
    """
    Velocity (u, v) from the vorticity w [N, N] via the streamfunction.
    """
    grid = grid if grid is not None else SpectralGrid(w.shape[-1])
    psi_hat = streamfunction(scipy.fft.fft2(w),grid)
    u = _ifft(1j*grid.ky*psi_hat)
    v = _ifft(-1j*grid.kx*psi_hat)
    return u,v

def spectral_divergence(u, v, grid=None):
    """ Max-norm of du/dx + dv/dy computed spectrally. """
    grid = grid if grid is not None else SpectralGrid(u.shape[-1])
    div = _ifft(1j*grid.kx*scipy.fft.fft2(u) + 1j*grid.ky*scipy.fft.fft2(v))
    return np.max(np.abs(div))

def kinetic_energy(w, grid=None):
    """ 0.5 <u^2 + v^2> over the domain. """
    u,v = velocity_from_vorticity(w,grid)
    return 0.5*np.mean(u**2 + v**2)

def enstrophy(w):
    """ 0.5 <w^2> over the domain. """
    return 0.5*np.mean(np.asarray(w)**2)

def forcing(grid, amplitude=0.1):
    """ amplitude * (sin(2 pi (x+y)) + cos(2 pi (x+y))) """
    arg = 2*np.pi*(grid.x + grid.y)
    return amplitude*(np.sin(arg) + np.cos(arg))

def random_vorticity(n, rng, alpha=2.5, tau=7.0):
    """
    Gaussian random field with covariance (-laplacian + tau^2)^(-alpha)
    and zero mean.
    """
    grid = SpectralGrid(n)
    sigma = tau**(0.5*(2*alpha - 2))
    sqrt_eig = n**2*np.sqrt(2.)*sigma*(grid.k2 + tau**2)**(-alpha/2.)
    sqrt_eig[0,0] = 0
    coeff = sqrt_eig*(rng.standard_normal((n,n)) + 1j*rng.standard_normal((n,n)))
    return _ifft(coeff)

def _advection(w_hat, grid):
    psi_hat = streamfunction(w_hat,grid)
    u = _ifft(1j*grid.ky*psi_hat)
    v = _ifft(-1j*grid.kx*psi_hat)
    wx = _ifft(1j*grid.kx*w_hat)
    wy = _ifft(1j*grid.ky*w_hat)
    nonlin = grid.dealias*scipy.fft.fft2(-(u*wx + v*wy))
    return nonlin, max(np.abs(u).max(),np.abs(v).max())

def integrate_vorticity(w0, steps, dt=1e-4, viscosity=1e-5, f=None,
                        record_stride=None, cfl_max=1.0):
    """
    Advance the vorticity w0 [N, N].

    Parameters:
    -----------
    w0            : initial vorticity
    steps         : number of time steps
    dt            : time step
    viscosity     : kinematic viscosity nu
    f             : forcing field [N, N] (None for no forcing)
    record_stride : record every `record_stride` steps (None: final state only)
    cfl_max       : abort when max|u| dt / h exceeds this

    Returns:
    --------
    w             : final vorticity [N, N], or recorded frames [steps//stride, N, N]
    """
    n = w0.shape[-1]
    grid = SpectralGrid(n)
    w_hat = grid.dealias*scipy.fft.fft2(w0)
    f_hat = scipy.fft.fft2(f) if f is not None else 0.
    lap = -grid.k2
    cn_plus = 1 + 0.5*dt*viscosity*lap
    cn_minus = 1 - 0.5*dt*viscosity*lap

    frames = []
    for i in range(int(steps)):
        nonlin,umax = _advection(w_hat,grid)
        cfl = umax*dt/grid.spacing
        if cfl > cfl_max:
            msg = "CFL number %.3g exceeds %.3g at step %i (dt=%g)"%(cfl,cfl_max,i,dt)
            raise CFLError(msg)
        # Heun predictor-corrector on advection, Crank-Nicolson on diffusion
        w_pred = (cn_plus*w_hat + dt*(nonlin + f_hat))/cn_minus
        nonlin_pred,_ = _advection(w_pred,grid)
        w_hat = (cn_plus*w_hat + 0.5*dt*(nonlin + nonlin_pred) + dt*f_hat)/cn_minus

        if record_stride and (i+1) % record_stride == 0:
            frames.append(_ifft(w_hat))

    if record_stride: return np.array(frames)
    return _ifft(w_hat)

def ns_sample(cfg, index):
    """ One (input, target) window pair from an independent trajectory. """
    rng = np.random.default_rng(cfg.seed + index)
    grid = SpectralGrid(cfg.grid)
    w0 = random_vorticity(cfg.grid,rng,cfg.ic_alpha,cfg.ic_tau)
    nframes = cfg.burn_in + cfg.t_in + cfg.t_out
    frames = integrate_vorticity(w0,nframes*cfg.record_stride,cfg.dt,cfg.viscosity,
                                 forcing(grid,cfg.forcing_amplitude),
                                 cfg.record_stride,cfg.cfl_max)
    frames = frames[cfg.burn_in:]
    return Sample(frames[:cfg.t_in],frames[cfg.t_in:cfg.t_in+cfg.t_out],
                  dict(seed=int(cfg.seed + index)))

def _make(args):
    return ns_sample(*args)

def ns_generate(cfg=None, n_samples=None, seed=None, **kwargs):
    """
    Generate vorticity windows [t_in, N, N] -> [t_out, N, N].

    Parameters:
    -----------
    cfg       : NSConfig
    n_samples : overrides cfg.n_samples
    seed      : overrides cfg.seed (sample i uses seed + i)

    Returns:
    --------
    samples   : SampleSet of kind 'ns'
    """
    cfg = cfg.copy() if cfg is not None else NSConfig()
    if n_samples is not None: kwargs['n_samples'] = n_samples
    if seed is not None: kwargs['seed'] = seed
    cfg.set_attributes(**kwargs)
    cfg._validate()
    if cfg.source != 'generate':
        msg = "NS source is '%s'; load the benchmark file instead"%cfg.source
        raise ConfigError(msg)

    args = [(cfg,i) for i in range(int(cfg.n_samples))]
    logger.info("Generating %i vorticity trajectories on a %ix%i grid..."%(len(args),cfg.grid,cfg.grid))
    if cfg.nprocs > 1:
        with Pool(cfg.nprocs) as pool:
            samples = pool.map(_make,args)
    else:
        samples = []
        for a in args:
            logger.debug("  trajectory %i"%a[1])
            samples.append(_make(a))

    return SampleSet.from_samples(samples,kind='ns',n_train=cfg.train_split,
                                  seed=cfg.seed,config=dict(cfg.todict()))
