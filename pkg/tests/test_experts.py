#!/usr/bin/env python
"""
Tests of the spectral experts.
"""
import numpy as np
import pytest
import torch

from m2m.analysis.experts import (ExpertSpec, SpectralExpert, SpectralConv2d, spectral_conv,
                                  specs_from_config, build_ensemble, count_params, max_modes,
                                  expert_forward)
from m2m.utils.exceptions import ModeOverflowError, ShapeError, ConfigError

def small_spec(**kwargs):
    params = dict(modes=4,hidden_channels=4,num_layers=2,projection_channels=8)
    params.update(kwargs)
    return ExpertSpec(**params)

def test_spec():
    spec = small_spec(modes=16)
    np.testing.assert_equal(spec.name,'FNO16')
    with pytest.raises(ValueError):
        small_spec(activation='tanh')
    with pytest.raises(ValueError):
        small_spec(num_layers=0)

    specs = specs_from_config(dict(modes=[32,128,64,16],hidden_channels=6))
    np.testing.assert_equal([s.name for s in specs],['FNO32','FNO128','FNO64','FNO16'])
    np.testing.assert_equal([s.hidden_channels for s in specs],[6]*4)

def test_forward_shape():
    torch.manual_seed(0)
    expert = SpectralExpert(small_spec(in_channels=10,out_channels=10))
    x = torch.randn(2,10,32,32)
    np.testing.assert_equal(tuple(expert(x).shape),(2,10,32,32))
    np.testing.assert_equal(tuple(expert_forward(expert,x[:1,:,:16,:24]).shape),(1,10,16,24))
    with pytest.raises(ShapeError):
        expert(torch.randn(2,3,32,32))

def test_deterministic():
    torch.manual_seed(0)
    expert = SpectralExpert(small_spec()).eval()
    x = torch.randn(1,1,16,16)
    with torch.no_grad():
        assert torch.equal(expert(x),expert(x))

def test_band_limit():
    torch.manual_seed(1)
    modes,H,W = 5,32,32
    x = torch.randn(2,3,H,W,dtype=torch.float64)
    weights = torch.randn(3,4,modes,modes,2,dtype=torch.float64)
    out = spectral_conv(x,weights,modes)
    np.testing.assert_equal(tuple(out.shape),(2,4,H,W))

    spec = torch.fft.rfft2(out).abs()
    total = spec.sum().item()
    # Retained block is [:modes, :modes] plus its Hermitian image in column 0
    outside = spec[...,modes:].sum() + spec[...,modes:H-modes+1,:].sum()
    assert outside.item()/total < 1e-6

def test_mode_overflow():
    H = W = 32
    np.testing.assert_equal(max_modes((H,W)),(17,17))
    x = torch.randn(1,2,H,W)
    weights = torch.randn(2,2,20,20,2)
    with pytest.raises(ModeOverflowError):
        spectral_conv(x,weights,20)
    out = spectral_conv(x,weights,20,clip=True)
    np.testing.assert_equal(tuple(out.shape),(1,2,H,W))

    layer = SpectralConv2d(2,2,20,clip=True)
    np.testing.assert_equal(tuple(layer(x).shape),(1,2,H,W))

def test_ensemble():
    specs = [small_spec(modes=m) for m in (2,8,4)]
    experts = build_ensemble(specs)
    np.testing.assert_equal([e.name for e in experts],['FNO2','FNO8','FNO4'])
    counts = [count_params(e) for e in experts]
    assert counts[0] < counts[2] < counts[1]

    with pytest.raises(ConfigError):
        build_ensemble([])
    with pytest.raises(ConfigError):
        build_ensemble([small_spec(),small_spec(out_channels=2)])

def test_zero_input():
    weights = torch.randn(2,3,4,4,2,dtype=torch.float64)
    out = spectral_conv(torch.zeros(1,2,16,16,dtype=torch.float64),weights,4)
    np.testing.assert_equal(out.numpy(),0)

    # All weights and biases zero
    expert = SpectralExpert(small_spec())
    for p in expert.parameters():
        torch.nn.init.zeros_(p)
    with torch.no_grad():
        np.testing.assert_equal(expert(torch.randn(1,1,16,16)).numpy(),0)

def test_identity_mode():
    """ A single retained mode passes through identity weights unchanged. """
    H = W = 16
    modes = 3
    x = torch.arange(H,dtype=torch.float64)[:,None]/H
    y = torch.arange(W,dtype=torch.float64)[None,:]/W
    weights = torch.zeros(2,2,modes,modes,2,dtype=torch.float64)
    weights[0,0,...,0] = weights[1,1,...,0] = 1

    fields = [torch.cos(2*np.pi*y).expand(H,W),
              torch.cos(2*np.pi*(2*x + y)),
              torch.ones(H,W,dtype=torch.float64)]
    for f in fields:
        inp = torch.stack([f,3*f])[None]
        out = spectral_conv(inp,weights,modes)
        err = (out - inp).abs().max()/inp.abs().max()
        assert err.item() < 1e-6

    # Frequencies above the retained block on both axes are removed
    f = torch.cos(2*np.pi*(5*x + 6*y))
    inp = torch.stack([f,f])[None]
    out = spectral_conv(inp,weights,modes)
    assert out.abs().max().item() < 1e-6*inp.abs().max().item()

def test_count_params():
    expert = SpectralExpert(ExpertSpec(modes=16,hidden_channels=6))
    count = count_params(expert)
    assert 0.02e6 <= count <= 0.10e6

    # Spectral weights of a layer are [hidden, hidden, modes, modes] complex
    small = sum(p.numel() for p in SpectralExpert(small_spec(modes=4)).spectral.parameters())
    large = sum(p.numel() for p in SpectralExpert(small_spec(modes=8)).spectral.parameters())
    np.testing.assert_equal(large,4*small)

def test_duplicate_specs():
    torch.manual_seed(2)
    spec = small_spec()
    experts = build_ensemble([spec,spec])
    np.testing.assert_equal(count_params(experts[0]),count_params(experts[1]))
    for p,q in zip(experts[0].parameters(),experts[1].parameters()):
        assert p is not q
        assert p.data_ptr() != q.data_ptr()
    w0 = experts[0].spectral[0].weights
    w1 = experts[1].spectral[0].weights
    assert not torch.equal(w0,w1)
    # Updating one expert leaves the other untouched
    before = w1.detach().clone()
    with torch.no_grad():
        w0.add_(1.0)
    assert torch.equal(w1,before)
