#!/usr/bin/env python
"""
Tests of the PI scheduler for the router-loss weight.
"""
import os

import numpy as np
import pytest

from m2m.analysis.controller import (ControllerState, PIController, step, TRACE_COLUMNS,
                                     FEEDBACK)
from m2m.utils.exceptions import ConfigError, DivergenceError
from m2m.utils import fileio

def test_proportional_midpoint():
    state = ControllerState(kp=0.001,ki=0.0)
    new,lam = step(state,0.0)
    np.testing.assert_allclose(new.proportional,0.0005,atol=1e-15)
    np.testing.assert_allclose(lam,0.0005,atol=1e-15)
    # Input state is untouched
    np.testing.assert_equal(state.t,0)

def test_hand_trace():
    state = ControllerState(lam=0.0,integral=0.0,kp=0.001,ki=0.001,
                            lambda_min=0.0,lambda_max=1.0,target=0.0)
    new,lam = step(state,0.5)
    P = 0.001/(1 + np.exp(0.5))
    np.testing.assert_allclose(P,3.7754e-4,atol=1e-8)
    np.testing.assert_allclose(new.error,0.5,atol=1e-12)
    np.testing.assert_allclose(new.proportional,P,atol=1e-12)
    np.testing.assert_allclose(new.integral,-5e-4,atol=1e-12)
    np.testing.assert_allclose(new.previous,P - 5e-4,atol=1e-12)
    np.testing.assert_allclose(new.previous,-1.2246e-4,atol=1e-8)
    np.testing.assert_equal(lam,0.0)
    np.testing.assert_equal(new.t,1)

def test_anti_windup():
    rng = np.random.default_rng(0)
    state = ControllerState(lam=1.0,integral=0.3,kp=0.01,ki=0.01,t=5,previous=1.0)
    for loss in rng.uniform(-10,10,size=20):
        new,lam = step(state,loss)
        np.testing.assert_equal(new.integral,state.integral)

    # Random loss sequences: the integral only moves while the previous
    # pre-clamp lambda is strictly inside the bounds
    for seed in range(10):
        rng = np.random.default_rng(seed)
        state = ControllerState(kp=rng.uniform(0,1),ki=rng.uniform(0,0.5))
        for t,loss in enumerate(rng.normal(0,2,size=200)):
            new,lam = step(state,loss)
            if t > 0 and not (state.lambda_min < state.previous < state.lambda_max):
                np.testing.assert_equal(new.integral,state.integral)
            assert state.lambda_min <= lam <= state.lambda_max
            state = new

def test_plant():
    """ Bounded lambda over a long run with a loss that responds to lambda. """
    state = ControllerState(lam=0.5,kp=0.1,ki=0.01,lambda_min=0.0,lambda_max=1.0,target=0.1)
    lam = state.lam
    rng = np.random.default_rng(1)
    lams = []
    for i in range(int(1e4)):
        loss = 0.5*np.exp(-2*lam) + 0.01*rng.standard_normal()
        state,lam = step(state,loss)
        lams.append(lam)
    lams = np.array(lams)
    assert np.all((lams >= 0) & (lams <= 1))
    assert np.all(np.isfinite(lams))
    np.testing.assert_equal(state.t,int(1e4))

def test_proportional_bounds():
    kp = 0.01
    errors = np.linspace(-30,30,201)
    P = np.array([step(ControllerState(kp=kp,ki=0.0),e)[0].proportional for e in errors])
    assert np.all((P > 0) & (P < kp))
    assert np.all(np.diff(P) < 0)

def test_closed_loop():
    """ L(t+1) = L(t) - c*lambda(t)*L(t) never increases. """
    for c in (0.1,0.5,1.0):
        state = ControllerState(kp=0.5,ki=1e-3,lambda_min=0.0,lambda_max=1.0,target=0.0)
        loss = 1.0
        losses,lams = [loss],[]
        for i in range(int(1e4)):
            state,lam = step(state,loss)
            loss = loss - c*lam*loss
            losses.append(loss)
            lams.append(lam)
        losses,lams = np.array(losses),np.array(lams)
        assert np.all(np.diff(losses) <= 0)
        assert np.all((lams >= 0) & (lams <= 1))
        assert losses[-1] < losses[0]

def test_divergence():
    with pytest.raises(DivergenceError):
        step(ControllerState(),np.nan)
    with pytest.raises(DivergenceError):
        PIController(enabled=False).update(np.inf)

def test_state_config():
    with pytest.raises(ConfigError):
        ControllerState(lambda_min=1.0,lambda_max=0.5)
    with pytest.raises(ConfigError):
        ControllerState(kp=0.0)
    with pytest.raises(ConfigError):
        ControllerState(lam=2.0)

    state = ControllerState.from_config(dict(enabled=True,lambda0=0.25,kp=0.1,feedback='rmse'))
    np.testing.assert_equal(state.lam,0.25)

def test_controller(tmp_path):
    section = dict(enabled=False,lambda0=0.2,kp=1e-3,ki=1e-3,lambda_min=0.0,
                   lambda_max=1.0,target=0.0,feedback='rmse')
    controller = PIController.from_config(section)
    for loss in [1.0,0.5,0.25]:
        np.testing.assert_equal(controller.update(loss),0.2)
    np.testing.assert_equal(len(controller.trace),3)

    filename = os.path.join(str(tmp_path),'controller.csv')
    controller.write(filename)
    trace = fileio.read_table(filename)
    np.testing.assert_equal(list(trace.dtype.names),TRACE_COLUMNS)
    np.testing.assert_allclose(trace['loss'],[1.0,0.5,0.25])
    np.testing.assert_allclose(trace['lambda'],0.2)

    section['enabled'] = True
    controller = PIController.from_config(section)
    lams = [controller.update(loss) for loss in [1.0,0.5,0.25]]
    assert lams[0] != 0.2

    with pytest.raises(ConfigError):
        PIController(feedback='accuracy')
    for feedback in FEEDBACK:
        np.testing.assert_equal(PIController(feedback=feedback).feedback,feedback)
