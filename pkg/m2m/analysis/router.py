#!/usr/bin/env python
"""
Gate router assigning each patch a probability row over the experts.

Rows of every routing matrix are patches (patch index fastest within
a batch, i.e. row n = b*S^2 + p) and columns are experts in ensemble
order.
"""
from collections import OrderedDict as odict
import copy

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from m2m.analysis.model import Model, Parameter
from m2m.analysis.fields import downsample, aggregate
from m2m.analysis.experts import expert_forward
from m2m.utils.exceptions import PriorError, ConfigError

class RouterConfig(Model):
    _params = odict([
        ('embed_dim',    Parameter(128, [1, 8192])),
        ('num_heads',    Parameter(4, [1, 256])),
        ('num_layers',   Parameter(2, [1, 64])),
        ('pooling',      Parameter('mean', choices=['mean','cls'])),
        ('pool_size',    Parameter(16, [1, 4096])),
        ('num_experts',  Parameter(4, [1, 1024])),
        ('in_channels',  Parameter(1, [1, 1024])),
        ('epsilon_prior',Parameter(1e-3, [0, 0.1])),
    ])

    def _validate(self):
        if self.embed_dim % self.num_heads:
            msg = "embed_dim (%i) not divisible by num_heads (%i)"%(self.embed_dim,self.num_heads)
            raise ConfigError(msg)
        eps = self.epsilon_prior
        if not (0 < eps < 0.1) or eps*self.num_experts >= 1:
            msg = "epsilon_prior must lie in (0, min(0.1, 1/M)); found %g"%eps
            raise ConfigError(msg)

class PriorSpec(Model):
    """
    Prior over experts. The weights are a vector [M] or a per-patch
    matrix [S^2, M]; all-zero (or missing) weights mean no prior.
    """
    _params = odict([
        ('mode',    Parameter('none', choices=['none','soft','hard'])),
        ('weights', Parameter(None)),
    ])

    def _validate(self):
        if self.weights is not None and np.any(np.asarray(self.weights,dtype=float) < 0):
            msg = "Prior weights must be nonnegative: %s"%(self.weights,)
            raise PriorError(msg)

    def matrix(self, num_experts, num_patches=1):
        """ Normalized prior weights [num_patches, M]; zero rows become uniform. """
        M = int(num_experts)
        if self.mode == 'none' or self.weights is None:
            return np.full((num_patches,M),1./M)
        w = np.atleast_2d(np.asarray(self.weights,dtype=float))
        if w.shape[-1] != M:
            msg = "Prior has %i entries; router has %i experts"%(w.shape[-1],M)
            raise PriorError(msg)
        if len(w) not in (1,num_patches):
            msg = "Prior has %i rows; expected 1 or %i patches"%(len(w),num_patches)
            raise PriorError(msg)
        w = np.broadcast_to(w,(num_patches,M)).copy()
        total = w.sum(axis=1)
        w[total == 0] = 1.
        return w/w.sum(axis=1,keepdims=True)

    def smoothed(self, num_experts, epsilon, num_patches=1):
        """ (1 - eps*M) * P + eps, rows on the simplex and strictly positive. """
        return smooth_prior(self.matrix(num_experts,num_patches),epsilon)

    def mask(self, num_experts, num_patches=1):
        """ Boolean [num_patches, M], True where a hard prior forbids the expert. """
        if self.mode != 'hard' or self.weights is None:
            return np.zeros((num_patches,num_experts),dtype=bool)
        w = np.atleast_2d(np.asarray(self.weights,dtype=float))
        w = np.broadcast_to(w,(num_patches,num_experts))
        allowed = w > 0
        # Rows with no allowed expert carry no prior
        allowed[~allowed.any(axis=1)] = True
        return ~allowed

def smooth_prior(weights, epsilon):
    weights = np.asarray(weights,dtype=float)
    M = weights.shape[-1]
    return (1 - epsilon*M)*weights + epsilon

class RoutingOutput(object):
    """
    Per-patch routing.

    Parameters:
    -----------
    probs        : [N, M] rows on the simplex
    logits       : [N, M] raw router scores
    scale        : patches per axis (N = B*S^2)
    topk_indices : [N, k] selected experts (descending probability)
    topk_weights : [N, k] renormalized weights of the selected experts
    """
    def __init__(self, probs, logits=None, scale=1, topk_indices=None, topk_weights=None):
        self.probs = probs
        self.logits = logits if logits is not None else torch.log(probs)
        self.scale = int(scale)
        self.topk_indices = topk_indices
        self.topk_weights = topk_weights

    def __len__(self):
        return len(self.probs)

    @property
    def num_experts(self):
        return self.probs.shape[-1]

    @property
    def num_patches(self):
        return self.scale**2

    def copy(self):
        return copy.copy(self)

    def matrix(self):
        """ Batch-mean probabilities per patch, [S^2, M]. """
        P = self.num_patches
        return self.probs.detach().reshape(-1,P,self.num_experts).mean(0)

class Router(nn.Module):
    """
    Transformer classifier over patches. Each patch [T, H, W] is
    average-pooled to pool_size x pool_size and every time channel
    becomes one token.
    """
    def __init__(self, config=None, **kwargs):
        super().__init__()
        self.config = config.copy() if config is not None else RouterConfig(**kwargs)
        c = self.config
        ntokens = c.in_channels + (c.pooling == 'cls')

        self.embed = nn.Linear(c.pool_size**2,c.embed_dim)
        self.position = nn.Parameter(torch.zeros(1,ntokens,c.embed_dim))
        if c.pooling == 'cls':
            self.cls = nn.Parameter(torch.zeros(1,1,c.embed_dim))
        layer = nn.TransformerEncoderLayer(c.embed_dim,c.num_heads,
                                           dim_feedforward=4*c.embed_dim,
                                           dropout=0.0,activation='gelu',
                                           batch_first=True)
        self.encoder = nn.TransformerEncoder(layer,c.num_layers,
                                             enable_nested_tensor=False)
        self.head = nn.Linear(c.embed_dim,c.num_experts)

    def forward(self, x):
        """ Logits [N, M] for patches x [N, T, H, W]. """
        c = self.config
        tokens = F.adaptive_avg_pool2d(x,c.pool_size).flatten(2)
        tokens = self.embed(tokens)
        if c.pooling == 'cls':
            tokens = torch.cat([self.cls.expand(len(x),-1,-1),tokens],dim=1)
        h = self.encoder(tokens + self.position)
        h = h[:,0] if c.pooling == 'cls' else h.mean(1)
        return self.head(h)

def _prior_tensor(array, like, batch):
    t = torch.as_tensor(array,dtype=like.dtype,device=like.device)
    return t.repeat(batch,1)

def combine(logits, prior=None, scale=1, epsilon=1e-3):
    """
    Combine router logits [N, M] with a prior into routing probabilities.

    none : softmax(logits)
    soft : softmax(logits + log(smoothed prior))
    hard : forbidden experts are masked before the softmax and the
           result is smoothed, so each forbidden expert carries exactly eps
    """
    prior = prior if prior is not None else PriorSpec()
    N,M = logits.shape
    P = int(scale)**2
    if N % P:
        msg = "%i routing rows is not a multiple of %i patches"%(N,P)
        raise PriorError(msg)
    batch = N//P

    if prior.mode == 'none':
        probs = torch.softmax(logits,dim=-1)
    elif prior.mode == 'soft':
        logq = _prior_tensor(np.log(prior.smoothed(M,epsilon,P)),logits,batch)
        probs = torch.softmax(logits + logq,dim=-1)
    else:
        logq = _prior_tensor(np.log(prior.smoothed(M,epsilon,P)),logits,batch)
        mask = _prior_tensor(prior.mask(M,P),logits,batch).bool()
        p = torch.softmax((logits + logq).masked_fill(mask,float('-inf')),dim=-1)
        probs = (1 - epsilon*M)*p + epsilon
    return RoutingOutput(probs,logits,scale)

def route(router, patches, prior=None):
    """
    Route every patch of a PatchBatch.

    Parameters:
    -----------
    router  : Router
    patches : PatchBatch [B, S^2, T, H, W]
    prior   : PriorSpec

    Returns:
    --------
    out     : RoutingOutput with [B*S^2, M] probabilities
    """
    logits = router(patches.flatten())
    return combine(logits,prior,patches.scale,router.config.epsilon_prior)

def select_topk(out, k):
    """
    Keep the k most probable experts per patch; ties go to the lower
    expert index. Kept weights are renormalized to sum to one.
    """
    M = out.num_experts
    k = int(k)
    if not (1 <= k <= M):
        msg = "k must lie in [1, %i]; found %i"%(M,k)
        raise ValueError(msg)
    order = torch.sort(out.probs.detach(),dim=-1,descending=True,stable=True)[1]
    indices = order[:,:k]
    mask = torch.zeros_like(out.probs).scatter(1,indices,1.0)
    norm = (out.probs*mask).sum(-1,keepdim=True)
    weights = out.probs.gather(1,indices)/norm

    ret = out.copy()
    ret.topk_indices = indices
    ret.topk_weights = weights
    return ret

def dispatch_weights(out, strategy='topk', k=2):
    """ Dense weight matrix [N, M] and boolean selection mask [N, M]. """
    if strategy == 'dense':
        weights = out.probs/out.probs.sum(-1,keepdim=True)
        return weights, torch.ones_like(out.probs,dtype=torch.bool)
    elif strategy == 'topk':
        sel = out
        if sel.topk_indices is None or sel.topk_indices.shape[-1] != k:
            sel = select_topk(out,k)
        weights = torch.zeros_like(out.probs).scatter(1,sel.topk_indices,sel.topk_weights)
        mask = torch.zeros_like(out.probs,dtype=torch.bool).scatter(1,sel.topk_indices,True)
        return weights, mask
    else:
        msg = "Unrecognized strategy: %s"%strategy
        raise ValueError(msg)

class DispatchResult(object):
    """
    Output of a dispatch.

    prediction : aggregated field [B, T_out, H, W]
    weights    : [N, M] dispatch weights (zero for unselected experts)
    outputs    : per expert, (rows, native-resolution outputs [n, T_out, h, w])
    scale      : patches per axis
    """
    def __init__(self, prediction, weights, outputs, scale):
        self.prediction = prediction
        self.weights = weights
        self.outputs = outputs
        self.scale = scale

def dispatch(patches, experts, out, strategy='topk', k=2, spec=None, evaluate_all=False):
    """
    Evaluate the experts on their patches and combine with the routing weights.

    Parameters:
    -----------
    patches      : PatchBatch [B, S^2, T_in, H, W]
    experts      : ordered expert list (router column order)
    out          : RoutingOutput
    strategy     : 'topk' (only selected experts run) or 'dense'
    k            : experts kept per patch for 'topk'
    spec         : ResampleSpec for the downsampling step
    evaluate_all : also run unselected experts (weight zero) on every patch

    Returns:
    --------
    result       : DispatchResult
    """
    if len(experts) != out.num_experts:
        msg = "Routing has %i columns for %i experts"%(out.num_experts,len(experts))
        raise PriorError(msg)
    x = patches.flatten()
    S = patches.scale
    B,P = patches.shape[:2]
    H,W = x.shape[-2:]
    target = (H//S, W//S)

    weights, mask = dispatch_weights(out,strategy,k)
    if evaluate_all: mask = torch.ones_like(mask)

    y, outputs = None, []
    for j,expert in enumerate(experts):
        rows = mask[:,j].nonzero().squeeze(1)
        if not len(rows):
            outputs.append((rows,None))
            continue
        # Expert outputs return to native patch resolution before combining
        yj = downsample(expert_forward(expert,x.index_select(0,rows)),target,spec)
        outputs.append((rows,yj))
        if y is None:
            y = torch.zeros((len(x),)+tuple(yj.shape[1:]),dtype=yj.dtype,device=yj.device)
        y = y.index_add(0,rows,weights[rows,j].reshape(-1,1,1,1)*yj)

    y = y.reshape((B,P)+tuple(y.shape[1:]))
    prediction = aggregate([y[:,p] for p in range(P)],S)
    return DispatchResult(prediction,weights,outputs,S)

def kl_divergence(p, q):
    """
    KL(p || q) = sum p log(p/q) along the last axis, with 0 log 0 = 0.
    """
    p,q = torch.as_tensor(p),torch.as_tensor(q)
    q = q.to(p.dtype)
    if (q <= 0).any():
        msg = "Reference distribution has zero entries; smooth it first"
        raise PriorError(msg)
    return (torch.xlogy(p,p) - p*torch.log(q)).sum(-1)

def load_entropy(probs):
    """ -sum_i sum_j p_ij log p_ij over all patches (natural log). """
    probs = torch.as_tensor(probs)
    return -torch.xlogy(probs,probs).sum()

def prior_kl(out, prior=None, epsilon=1e-3):
    """ Mean over patches of KL(probs || smoothed prior). """
    prior = prior if prior is not None else PriorSpec()
    N,M = out.probs.shape
    P = out.num_patches
    q = _prior_tensor(prior.smoothed(M,epsilon,P),out.probs,N//P)
    return kl_divergence(out.probs,q).mean()

def router_loss(out, prior=None, epsilon=1e-3, load_weight=1.0):
    """
    Mean-over-patches KL(probs || smoothed prior) plus the signed
    load-entropy term summed over all patches.
    """
    return prior_kl(out,prior,epsilon) + load_weight*load_entropy(out.probs)
