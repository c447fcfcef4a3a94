#!/usr/bin/env python
"""
Nonlinear PI scheduler for the router-loss weight lambda(t).

Each step takes the training loss L(t) and updates

    e(t)      = L(t) - target
    P(t)      = kp / (1 + exp(e(t)))
    I(t)      = I(t-1) - ki * e(t)     (only while the previous
                                        pre-clamp lambda was inside the bounds)
    lambda(t) = clamp(P(t) + I(t) + lambda_min, lambda_min, lambda_max)

The first step always integrates.
"""
from collections import OrderedDict as odict

import numpy as np
import scipy.special

from m2m.analysis.model import Model, Parameter
from m2m.utils.logger import logger
from m2m.utils.exceptions import ConfigError, DivergenceError
from m2m.utils import fileio

TRACE_COLUMNS = ['t','loss','e','P','I','lambda']
# Epoch signals the controller can track: training RMSE, mean router-phase
# objective, or mean KL of the routing to the smoothed prior
FEEDBACK = ['rmse','total_loss','kl']

class ControllerState(Model):
    _params = odict([
        ('lam',        Parameter(0.0)),
        ('integral',   Parameter(0.0)),
        ('kp',         Parameter(1e-3, [0, np.inf])),
        ('ki',         Parameter(1e-3, [0, np.inf])),
        ('lambda_min', Parameter(0.0)),
        ('lambda_max', Parameter(1.0)),
        ('target',     Parameter(0.0)),
        ('error',      Parameter(0.0)),
        ('proportional',Parameter(0.0)),
        ('previous',   Parameter(None)),  # pre-clamp lambda of the last step
        ('t',          Parameter(0, [0, np.inf])),
    ])
    _mapping = odict([
        ('lambda', 'lam'),
        ('lambda0','lam'),
    ])

    def _validate(self):
        if not self.lambda_min < self.lambda_max:
            msg = "Require lambda_min < lambda_max; found [%g, %g]"%(self.lambda_min,self.lambda_max)
            raise ConfigError(msg)
        if not self.kp > 0:
            msg = "Proportional gain must be positive: %g"%self.kp
            raise ConfigError(msg)
        if not (self.lambda_min <= self.lam <= self.lambda_max):
            msg = "Initial lambda %g outside [%g, %g]"%(self.lam,self.lambda_min,self.lambda_max)
            raise ConfigError(msg)

def step(state, loss):
    """
    Advance the controller by one epoch.

    Parameters:
    -----------
    state : ControllerState (not modified)
    loss  : training loss L(t)

    Returns:
    --------
    state, lam : the new state and lambda(t)
    """
    loss = float(loss)
    if not np.isfinite(loss):
        msg = "Non-finite loss fed to controller: %s"%loss
        raise DivergenceError(msg)

    lmin,lmax = state.lambda_min,state.lambda_max
    e = loss - state.target
    P = state.kp*scipy.special.expit(-e)

    if state.t == 0:
        inside = True
    else:
        prev = state.previous if state.previous is not None else state.lam
        inside = lmin < prev < lmax
    I = state.integral - state.ki*e if inside else state.integral

    raw = P + I + lmin
    lam = float(np.clip(raw,lmin,lmax))

    new = state.copy()
    new.set_attributes(lam=lam,integral=I,error=e,proportional=P,
                       previous=raw,t=state.t+1)
    return new, lam

class PIController(object):
    """
    Owner of a ControllerState. With `enabled=False` lambda stays fixed
    at its initial value; the trace is recorded either way. `feedback`
    names the epoch signal fed to `update` (one of FEEDBACK).
    """
    def __init__(self, state=None, enabled=True, feedback='rmse'):
        self.state = state if state is not None else ControllerState()
        self.enabled = bool(enabled)
        if feedback not in FEEDBACK:
            msg = "Unrecognized controller feedback: %s"%feedback
            raise ConfigError(msg)
        self.feedback = feedback
        self.trace = []

    @classmethod
    def from_config(cls, section):
        section = dict(section)
        state = ControllerState.from_config(section)
        return cls(state,enabled=section.get('enabled',True),
                   feedback=section.get('feedback','rmse'))

    @property
    def lam(self):
        return self.state.lam

    def update(self, loss):
        """ Feed one loss value; returns the lambda for the next epoch. """
        if self.enabled:
            self.state, lam = step(self.state,loss)
        else:
            loss = float(loss)
            if not np.isfinite(loss):
                raise DivergenceError("Non-finite loss fed to controller: %s"%loss)
            s = self.state
            s.set_attributes(error=loss-s.target,proportional=0.0,t=s.t+1)
            lam = s.lam
        s = self.state
        self.trace.append(odict([('t',s.t),('loss',float(loss)),('e',s.error),
                                 ('P',s.proportional),('I',s.integral),('lambda',lam)]))
        logger.debug("Controller t=%i: e=%.4g P=%.4g I=%.4g lambda=%.4g"%(
            s.t,s.error,s.proportional,s.integral,lam))
        return lam

    def write(self, filename):
        """ Write the trace as a csv table (t, loss, e, P, I, lambda). """
        dtype = [('t',int)] + [(n,float) for n in TRACE_COLUMNS[1:]]
        data = np.array([tuple(r.values()) for r in self.trace],dtype=dtype)
        fileio.write_table(filename,data)
