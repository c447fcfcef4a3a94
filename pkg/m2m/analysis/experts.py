#!/usr/bin/env python
"""
Fourier-spectral expert operators.

Each expert lifts its input (T_in channels plus the two grid
coordinates) to `hidden_channels`, applies `num_layers` layers of
spectral convolution plus a pointwise bypass, and projects back to
T_out channels. The spectral weights act on the low-frequency corner
[:modes, :modes] of the real-input (half) spectrum.
"""
from collections import OrderedDict as odict

import torch
import torch.nn as nn
import torch.nn.functional as F

from m2m.analysis.model import Model, Parameter
from m2m.utils.logger import logger
from m2m.utils.exceptions import ModeOverflowError, ShapeError, ConfigError

ACTIVATIONS = odict([
    ('gelu', F.gelu),
    ('relu', F.relu),
])

class ExpertSpec(Model):
    """ Architecture descriptor of one spectral expert. """
    _params = odict([
        ('modes',              Parameter(16, [1, 4096])),
        ('hidden_channels',    Parameter(6, [1, 4096])),
        ('num_layers',         Parameter(4, [1, 128])),
        ('projection_channels',Parameter(128, [1, 8192])),
        ('in_channels',        Parameter(1, [1, 1024])),
        ('out_channels',       Parameter(1, [1, 1024])),
        ('activation',         Parameter('gelu', choices=list(ACTIVATIONS))),
        ('clip_modes',         Parameter(False, choices=[True,False])),
    ])

    def _cache(self, name=None):
        self.name = 'FNO%i'%self.modes

def specs_from_config(section):
    """
    One ExpertSpec per entry of `section['modes']`, sharing the rest of
    the section. The list order is the router's column order.
    """
    section = dict(section)
    modes = section.pop('modes')
    if isinstance(modes,int): modes = [modes]
    return [ExpertSpec.from_config(section,modes=int(m)) for m in modes]

def max_modes(shape):
    """ Largest representable mode count per axis for spatial shape (H, W). """
    H,W = shape[-2:]
    return H//2+1, W//2+1

def spectral_conv(x, weights, modes, clip=False):
    """
    Spectral convolution of x [B, C_in, H, W].

    Parameters:
    -----------
    x       : input tensor
    weights : complex [C_in, C_out, modes, modes], or real with a trailing
              axis of 2 holding (real, imag)
    modes   : retained modes per axis
    clip    : truncate modes above the representable spectrum instead of raising

    Returns:
    --------
    out     : [B, C_out, H, W] with no energy outside the retained corner
    """
    H,W = x.shape[-2:]
    mh,mw = max_modes((H,W))
    kx,ky = modes,modes
    if modes > mh or modes > mw:
        if not clip:
            msg = "Modes %i exceed the representable spectrum (%i, %i) of a %ix%i grid"
            msg = msg%(modes,mh,mw,H,W)
            raise ModeOverflowError(msg)
        kx,ky = min(modes,mh),min(modes,mw)

    w = weights if weights.is_complex() else torch.view_as_complex(weights)
    x_ft = torch.fft.rfft2(x)
    out_ft = torch.zeros(x.shape[0],w.shape[1],H,W//2+1,
                         dtype=x_ft.dtype,device=x.device)
    out_ft[:,:,:kx,:ky] = torch.einsum('bixy,ioxy->boxy',
                                       x_ft[:,:,:kx,:ky],w[:,:,:kx,:ky])
    return torch.fft.irfft2(out_ft,s=(H,W))

class SpectralConv2d(nn.Module):
    """ Spectral convolution layer with learnable corner weights. """
    def __init__(self, in_channels, out_channels, modes, clip=False):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.modes = modes
        self.clip = clip
        self._warned = False
        # Stored as real pairs so that dtype casts act on them
        scale = 1./(in_channels*out_channels)
        self.weights = nn.Parameter(scale*torch.rand(in_channels,out_channels,modes,modes,2))

    def extra_repr(self):
        return 'in=%i, out=%i, modes=%i'%(self.in_channels,self.out_channels,self.modes)

    def forward(self, x):
        if self.clip and not self._warned and self.modes > min(max_modes(x.shape)):
            logger.warning("Clipping %i modes to the %ix%i grid"%(self.modes,x.shape[-2],x.shape[-1]))
            self._warned = True
        return spectral_conv(x,self.weights,self.modes,clip=self.clip)

def grid_coordinates(x):
    """ Node coordinates on the unit square, [B, 2, H, W]. """
    B,_,H,W = x.shape
    gx = torch.linspace(0,1,H,dtype=x.dtype,device=x.device)
    gy = torch.linspace(0,1,W,dtype=x.dtype,device=x.device)
    gx,gy = torch.meshgrid(gx,gy,indexing='ij')
    return torch.stack([gx,gy])[None].expand(B,2,H,W)

class SpectralExpert(nn.Module):
    """
    A single Fourier neural operator E_j mapping [B, T_in, H, W] to
    [B, T_out, H, W].
    """
    def __init__(self, spec=None, **kwargs):
        super().__init__()
        self.spec = spec.copy() if spec is not None else ExpertSpec(**kwargs)
        s = self.spec
        self.activation = ACTIVATIONS[s.activation]

        self.lift = nn.Conv2d(s.in_channels+2,s.hidden_channels,1)
        self.spectral = nn.ModuleList([
            SpectralConv2d(s.hidden_channels,s.hidden_channels,s.modes,s.clip_modes)
            for i in range(s.num_layers)])
        self.pointwise = nn.ModuleList([
            nn.Conv2d(s.hidden_channels,s.hidden_channels,1)
            for i in range(s.num_layers)])
        self.fc1 = nn.Conv2d(s.hidden_channels,s.projection_channels,1)
        self.fc2 = nn.Conv2d(s.projection_channels,s.out_channels,1)

    @property
    def name(self):
        return self.spec.name

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            msg = "%s expects [B, %i, H, W]; found %s"
            msg = msg%(self.name,self.spec.in_channels,list(x.shape))
            raise ShapeError(msg)

        x = self.lift(torch.cat([x,grid_coordinates(x)],dim=1))
        nlayers = len(self.spectral)
        for i,(conv,w) in enumerate(zip(self.spectral,self.pointwise)):
            x = conv(x) + w(x)
            if i < nlayers - 1: x = self.activation(x)

        x = self.activation(self.fc1(x))
        return self.fc2(x)

def expert_forward(expert, patch):
    """ Advance a patch [B, T_in, H, W] one output window. """
    return expert(patch)

def build_ensemble(specs):
    """
    Build the ordered expert list; index j is the router's column j.

    Parameters:
    -----------
    specs : list of ExpertSpec

    Returns:
    --------
    experts : nn.ModuleList of independently initialized SpectralExpert
    """
    specs = list(specs)
    if not len(specs):
        msg = "At least one expert is required"
        raise ConfigError(msg)
    channels = set((s.in_channels,s.out_channels) for s in specs)
    if len(channels) > 1:
        msg = "Experts disagree on (in, out) channels: %s"%sorted(channels)
        raise ConfigError(msg)
    experts = nn.ModuleList([SpectralExpert(s) for s in specs])
    logger.debug("Built experts: %s"%', '.join(e.name for e in experts))
    return experts

def count_params(module):
    """ Number of trainable scalars (complex weights count as two). """
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
