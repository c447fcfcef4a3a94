#!/usr/bin/env python
"""
The multi-scale mixture of spectral experts.
"""
import torch.nn as nn

from m2m.analysis.fields import ResampleSpec, Field, partition
from m2m.analysis.experts import build_ensemble, specs_from_config, count_params
from m2m.analysis.router import Router, RouterConfig, PriorSpec, route, dispatch
from m2m.utils.exceptions import ConfigError

class MultiScaleMoE(nn.Module):
    """
    segment -> upsample -> route -> dispatch to experts -> downsample -> aggregate

    Parameters:
    -----------
    specs    : list of ExpertSpec (router column order)
    router   : RouterConfig (num_experts and in_channels are taken from specs)
    scale    : patches per axis
    resample : ResampleSpec
    prior    : PriorSpec
    """
    def __init__(self, specs, router=None, scale=1, resample=None, prior=None):
        super().__init__()
        specs = [s.copy() for s in specs]
        self.scale = int(scale)
        if self.scale < 1:
            msg = "Scale must be a positive integer: %s"%scale
            raise ConfigError(msg)
        self.resample = resample if resample is not None else ResampleSpec()
        self.prior = prior if prior is not None else PriorSpec()

        config = router.copy() if router is not None else RouterConfig()
        config.set_attributes(num_experts=len(specs),in_channels=specs[0].in_channels)
        config._validate()

        self.experts = build_ensemble(specs)
        self.router = Router(config)

    @classmethod
    def from_config(cls, config):
        """ Build from a Config (experts, router, prior, resample, scale). """
        specs = specs_from_config(config['experts'])
        router = RouterConfig.from_config(config['router'])
        prior = PriorSpec.from_config(config['prior'])
        resample = ResampleSpec.from_config(config['resample'])
        return cls(specs,router,config['scale'],resample,prior)

    @property
    def specs(self):
        return [e.spec for e in self.experts]

    @property
    def num_experts(self):
        return len(self.experts)

    def routing(self, x):
        """ PatchBatch and RoutingOutput for a field x [B, T, H, W]. """
        x = x.values if isinstance(x,Field) else x
        patches = partition(x,self.scale,self.resample)
        return patches, route(self.router,patches,self.prior)

    def dispatch(self, x, strategy='topk', k=2, evaluate_all=False):
        """ Full forward pass returning (DispatchResult, RoutingOutput). """
        patches,out = self.routing(x)
        result = dispatch(patches,self.experts,out,strategy,k,
                          self.resample,evaluate_all=evaluate_all)
        return result, out

    def forward(self, x, strategy='topk', k=2):
        return self.dispatch(x,strategy,k)[0].prediction

    def summary(self):
        """ Parameter counts per component. """
        ret = [('%s'%e.name, count_params(e)) for e in self.experts]
        ret += [('router', count_params(self.router))]
        return ret
