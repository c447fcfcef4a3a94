#!/usr/bin/env python
"""
Timing, Pareto analysis and routing summaries.

Timings exclude data loading and host-device transfer: the input is
created on the device before the clock starts, every timed call is
synchronized, and the median over repeats is reported.
"""
import os
import time
from collections import OrderedDict as odict

import numpy as np
import torch

from m2m.analysis.model import Model, Parameter
from m2m.utils.logger import logger
from m2m.utils.exceptions import DataError
from m2m.utils import fileio

PROTOCOL = ("median wall-clock of %i forward passes after %i warmup passes; "
            "device=%s; batch=%s; data loading and host-device transfer excluded")

class BenchConfig(Model):
    _params = odict([
        ('repeats',       Parameter(20, [1, 1e6])),
        ('warmup',        Parameter(3, [0, 1e6])),
        ('batch_size',    Parameter(1, [1, 1e6])),
        ('baseline_modes',Parameter([16, 32, 64, 128], [1, 4096])),
        ('variants',      Parameter([])),
    ])

    def protocol(self, device):
        return PROTOCOL%(self.repeats,self.warmup,device,self.batch_size)

class BenchRecord(Model):
    _params = odict([
        ('model_name',     Parameter('')),
        ('parameter_count',Parameter(0, [0, np.inf])),
        ('forward_ms',     Parameter(0.0, [0, np.inf])),
        ('rel_l2',         Parameter(0.0, [0, np.inf])),
        ('rmse',           Parameter(0.0, [0, np.inf])),
        ('mae',            Parameter(0.0, [0, np.inf])),
    ])

def _sync(device):
    if torch.device(device).type == 'cuda':
        torch.cuda.synchronize(device)

@torch.no_grad()
def time_forward(model, sample_shape, repeats=20, warmup=3, device=None, **kwargs):
    """
    Median forward time of the model in milliseconds.

    Parameters:
    -----------
    model        : torch module
    sample_shape : input shape [B, T_in, H, W]
    repeats      : timed repeats
    warmup       : untimed calls before timing
    device       : torch device (default: the model's)
    kwargs       : passed to the model's forward

    Returns:
    --------
    ms           : median milliseconds per call
    """
    device = device if device is not None else next(model.parameters()).device
    training = model.training
    model.eval()
    x = torch.randn(tuple(sample_shape),device=device)
    for i in range(int(warmup)):
        model(x,**kwargs)
    _sync(device)

    times = []
    for i in range(max(int(repeats),1)):
        start = time.perf_counter()
        model(x,**kwargs)
        _sync(device)
        times.append(time.perf_counter() - start)
    model.train(training)
    return 1e3*float(np.median(times))

def pareto_flags(forward_ms, rel_l2):
    """
    True where no other point is at least as good in both coordinates
    and strictly better in one.
    """
    t = np.asarray(forward_ms,dtype=float)
    e = np.asarray(rel_l2,dtype=float)
    flags = np.ones(len(t),dtype=bool)
    for i in range(len(t)):
        for j in range(len(t)):
            if i == j: continue
            if t[j] <= t[i] and e[j] <= e[i] and (t[j] < t[i] or e[j] < e[i]):
                flags[i] = False
                break
    return flags

def pareto_report(records):
    """
    Records as a table with a Pareto-efficiency flag in the
    (forward_ms, rel_l2) plane.

    Returns:
    --------
    table : numpy structured array
    """
    records = list(records)
    if not len(records):
        raise ValueError("No benchmark records")
    flags = pareto_flags([r.forward_ms for r in records],[r.rel_l2 for r in records])
    width = max(len(r.model_name) for r in records)
    dtype = [('model_name','U%i'%max(width,1)),('parameter_count',int),
             ('forward_ms',float),('rel_l2',float),('rmse',float),('mae',float),
             ('efficient',bool)]
    rows = [tuple(r.todict().values()) + (f,) for r,f in zip(records,flags)]
    return np.array(rows,dtype=dtype)

def routing_summary(run_log):
    """
    Router probability snapshots over epochs.

    Parameters:
    -----------
    run_log : RunLog, dict with a 'router' entry, or router json filename

    Returns:
    --------
    matrices : [epochs, S^2, M]
    argmax   : [epochs, S^2] most probable expert per patch
    """
    if isinstance(run_log,str):
        run_log = fileio.read_json(run_log)
    elif hasattr(run_log,'todict'):
        run_log = run_log.todict()
    snapshots = run_log.get('router') if hasattr(run_log,'get') else None
    if not snapshots:
        msg = "Run log contains no router snapshots"
        raise DataError(msg)
    matrices = np.asarray(snapshots,dtype=float)
    if matrices.ndim != 3:
        msg = "Router snapshots must be [epochs, patches, experts]; found %s"%(matrices.shape,)
        raise DataError(msg)
    return matrices, np.argmax(matrices,axis=-1)

def write_report(records, outdir, protocol=None, basename='bench'):
    """ Write the Pareto table as csv and json. """
    table = pareto_report(records)
    csvfile = os.path.join(outdir,basename+'.csv')
    jsonfile = os.path.join(outdir,basename+'.json')
    fileio.write_table(csvfile,table)
    rows = [odict([(n,table[n][i].item()) for n in table.dtype.names])
            for i in range(len(table))]
    fileio.write_json(jsonfile,odict([('protocol',protocol),('records',rows)]))
    logger.info("Wrote %s"%csvfile)
    return table
