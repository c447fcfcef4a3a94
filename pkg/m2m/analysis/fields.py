#!/usr/bin/env python
"""
Grid containers and the multi-scale segmentation pipeline.

A field of shape [B, T, H, W] is split into S x S non-overlapping
patches, each patch is resampled back to the full H x W resolution
for the experts, and expert outputs are resampled down again and
tiled back together. Patches are always ordered row-major:
patch (i,j) has index i*S + j.
"""
from collections import OrderedDict as odict

import numpy as np
import torch
import torch.nn.functional as F

from m2m.analysis.model import Model, Parameter
from m2m.utils.exceptions import ShapeError, IndivisibleError, ConfigError

def _values(field):
    if isinstance(field,Field): return field.values
    return torch.as_tensor(field)

def _as4d(x):
    """ Collapse leading axes so that x is [N, C, H, W]. """
    shape = x.shape
    if x.ndim == 4: return x, shape
    if x.ndim < 2:
        msg = "Expected at least 2 dimensions; found %i"%x.ndim
        raise ShapeError(msg)
    return x.reshape((-1,1)+tuple(shape[-2:])), shape

def _factors(small, large, what='target'):
    """ Integer ratios large/small per axis. """
    small,large = tuple(small),tuple(large)
    if any(s < 1 for s in small) or any(l % s for s,l in zip(small,large)):
        msg = "%s %s is not an integer multiple of %s"%(what.capitalize(),large,small)
        raise ShapeError(msg)
    return large[0]//small[0], large[1]//small[1]

class ResampleSpec(Model):
    """ Up/down sampling methods between patch and full resolution. """
    _params = odict([
        ('up_method',   Parameter('bilinear', choices=['nearest','bilinear'])),
        ('down_method', Parameter('area', choices=['nearest','area'])),
        ('matched',     Parameter(False, choices=[True,False])),
    ])
    _mapping = odict([
        ('up',  'up_method'),
        ('down','down_method'),
    ])

    def _validate(self):
        if self.matched and (self.up_method,self.down_method) != ('nearest','nearest'):
            msg = "Matched resampling requires (nearest, nearest); found (%s, %s)"
            msg = msg%(self.up_method,self.down_method)
            raise ConfigError(msg)

class Field(object):
    """
    A discretized space-time solution block [B, T, H, W] on the unit
    square. A single sample [T, H, W] is promoted to a batch of one.
    """
    def __init__(self, values):
        values = torch.as_tensor(values)
        if values.ndim == 3: values = values[None]
        self.values = values
        self.check()

    def __repr__(self):
        return "Field(%s, %s)"%(list(self.shape),self.values.dtype)

    def __len__(self):
        return len(self.values)

    @property
    def shape(self):
        return tuple(self.values.shape)

    @property
    def grid_spacing(self):
        return 1.0/(self.shape[-2]-1)

    def check(self):
        if self.values.ndim != 4:
            msg = "Field must be [B, T, H, W]; found %s"%(list(self.shape),)
            raise ShapeError(msg)
        B,T,H,W = self.shape
        if H < 2 or W < 2 or T < 1:
            msg = "Field requires H, W >= 2 and T >= 1; found %s"%(list(self.shape),)
            raise ShapeError(msg)
        if not torch.isfinite(self.values).all():
            msg = "Field contains non-finite values"
            raise ValueError(msg)

    def numpy(self):
        return self.values.detach().cpu().numpy()

class PatchBatch(object):
    """
    The S^2 upsampled patches of a field, [B, S^2, T, H, W].
    """
    def __init__(self, patches, scale):
        self.patches = patches
        self.scale = int(scale)
        if patches.ndim != 5 or patches.shape[1] != self.scale**2:
            msg = "Expected [B, %i, T, H, W] patches; found %s"
            msg = msg%(self.scale**2,list(patches.shape))
            raise ShapeError(msg)

    def __len__(self):
        return self.scale**2

    @property
    def shape(self):
        return tuple(self.patches.shape)

    @property
    def layout(self):
        """ Patch index map [S, S]: layout[i,j] = i*S + j """
        return np.arange(self.scale**2).reshape(self.scale,self.scale)

    def index(self, i, j):
        if not (0 <= i < self.scale and 0 <= j < self.scale):
            raise IndexError("Patch (%i,%i) outside %ix%i grid"%(i,j,self.scale,self.scale))
        return i*self.scale + j

    def coords(self, p):
        if not (0 <= p < self.scale**2):
            raise IndexError("Patch index %i outside [0,%i)"%(p,self.scale**2))
        return divmod(int(p),self.scale)

    def flatten(self):
        """ Patches as a single batch [B*S^2, T, H, W], patch index fastest. """
        B,P = self.shape[:2]
        return self.patches.reshape((B*P,)+self.shape[2:])

def segment(field, scale):
    """
    Split a field into S^2 non-overlapping sub-fields.

    Parameters:
    -----------
    field : Field or array [B, T, H, W]
    scale : patches per axis (S)

    Returns:
    --------
    patches : list of S^2 views [B, T, H/S, W/S] in row-major order
    """
    x = _values(field)
    scale = int(scale)
    if scale < 1:
        msg = "Scale must be a positive integer: %s"%scale
        raise ValueError(msg)
    H,W = x.shape[-2:]
    if H % scale or W % scale:
        msg = "Dimensions (%i, %i) not divisible by scale %i"%(H,W,scale)
        raise IndivisibleError(msg)
    h,w = H//scale, W//scale
    return [x[...,i*h:(i+1)*h,j*w:(j+1)*w]
            for i in range(scale) for j in range(scale)]

def interpolate_up(patch, target, spec=None):
    """
    Resample a patch [..., h, w] to the target (H, W), an integer
    multiple of the patch size.
    """
    spec = spec if spec is not None else ResampleSpec()
    x = _values(patch)
    fh,fw = _factors(x.shape[-2:],target)
    if (fh,fw) == (1,1): return x

    if spec.up_method == 'nearest':
        return x.repeat_interleave(fh,dim=-2).repeat_interleave(fw,dim=-1)

    x4,shape = _as4d(x)
    out = F.interpolate(x4,size=tuple(target),mode='bilinear',align_corners=False)
    return out.reshape(tuple(shape[:-2])+tuple(target))

def downsample(full_patch, target, spec=None):
    """
    Resample a full-resolution patch [..., H, W] down to target (h, w);
    (H, W) must be an integer multiple of the target.
    """
    spec = spec if spec is not None else ResampleSpec()
    x = _values(full_patch)
    fh,fw = _factors(target,x.shape[-2:],what='source')
    if (fh,fw) == (1,1): return x

    if spec.down_method == 'nearest':
        return x[...,::fh,::fw]

    x4,shape = _as4d(x)
    out = F.avg_pool2d(x4,kernel_size=(fh,fw))
    return out.reshape(tuple(shape[:-2])+tuple(target))

def aggregate(patches, scale):
    """
    Tile S^2 row-major patches [..., h, w] back into one [..., S*h, S*w]
    array. Exact inverse of `segment`.
    """
    scale = int(scale)
    patches = [_values(p) for p in patches]
    if len(patches) != scale**2:
        msg = "Expected %i patches; found %i"%(scale**2,len(patches))
        raise ShapeError(msg)
    shapes = set(tuple(p.shape) for p in patches)
    if len(shapes) != 1:
        msg = "Inconsistent patch shapes: %s"%sorted(shapes)
        raise ShapeError(msg)
    if scale == 1: return patches[0]
    rows = [torch.cat(patches[i*scale:(i+1)*scale],dim=-1) for i in range(scale)]
    return torch.cat(rows,dim=-2)

def partition(field, scale, spec=None):
    """
    Segment a field and upsample every patch to full resolution.

    Parameters:
    -----------
    field : Field or array [B, T, H, W]
    scale : patches per axis (S)
    spec  : ResampleSpec

    Returns:
    --------
    batch : PatchBatch [B, S^2, T, H, W]
    """
    x = _values(field)
    target = tuple(x.shape[-2:])
    ups = [interpolate_up(p,target,spec) for p in segment(x,scale)]
    return PatchBatch(torch.stack(ups,dim=1),scale)
