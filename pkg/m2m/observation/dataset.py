#!/usr/bin/env python
"""
Sample containers and the on-disk dataset format.

A dataset is a directory holding

    inputs.npy    : float32 little-endian C-order [N, T_in, H, W]
    targets.npy   : float32 little-endian C-order [N, T_out, H, W]
    manifest.json : kind, shapes, seed, config echo, per-sample meta,
                    train/test split and code version (sorted keys)

The first `n_train` samples are the training split and the rest the
test split.
"""
import os
from collections import OrderedDict as odict

import numpy as np
import scipy.io

from m2m.utils.logger import logger
from m2m.utils.exceptions import DataError, ShapeError
from m2m.utils.shell import mkdir
from m2m.utils import fileio

KINDS = ['poisson','ns','cylinder']
DTYPE = '<f4'
CYLINDER_SHAPE = (192,112)

class Sample(object):
    """ One (input, target) pair with its generating parameters. """
    def __init__(self, input, target, meta=None):
        self.input = np.ascontiguousarray(input,dtype=DTYPE)
        self.target = np.ascontiguousarray(target,dtype=DTYPE)
        self.meta = dict(meta) if meta else dict()
        if not (np.isfinite(self.input).all() and np.isfinite(self.target).all()):
            msg = "Sample contains non-finite values: %s"%self.meta
            raise DataError(msg)

    def __repr__(self):
        return "Sample(%s -> %s, %s)"%(list(self.input.shape),list(self.target.shape),self.meta)

class SampleSet(object):
    """
    An ordered set of samples stored as two stacked arrays.

    Parameters:
    -----------
    inputs  : [N, T_in, H, W]
    targets : [N, T_out, H, W]
    meta    : list of per-sample dicts
    kind    : dataset kind
    n_train : number of leading samples in the training split
    seed    : generation seed
    config  : config section used to generate the data
    """
    def __init__(self, inputs, targets, meta=None, kind='poisson', n_train=None,
                 seed=None, config=None):
        self.inputs = np.ascontiguousarray(inputs,dtype=DTYPE)
        self.targets = np.ascontiguousarray(targets,dtype=DTYPE)
        self.meta = list(meta) if meta is not None else [dict() for i in range(len(self.inputs))]
        self.kind = kind
        self.n_train = len(self.inputs) if n_train is None else int(n_train)
        self.seed = seed
        self.config = config

        if len(self.inputs) != len(self.targets) or len(self.meta) != len(self.inputs):
            msg = "Inconsistent sample counts: %i inputs, %i targets, %i meta"
            msg = msg%(len(self.inputs),len(self.targets),len(self.meta))
            raise ShapeError(msg)
        if not (0 <= self.n_train <= len(self)):
            msg = "Training split %i outside [0, %i]"%(self.n_train,len(self))
            raise ShapeError(msg)

    @classmethod
    def from_samples(cls, samples, **kwargs):
        samples = list(samples)
        inputs = np.stack([s.input for s in samples])
        targets = np.stack([s.target for s in samples])
        meta = [s.meta for s in samples]
        return cls(inputs,targets,meta,**kwargs)

    def __len__(self):
        return len(self.inputs)

    def __getitem__(self, i):
        return Sample(self.inputs[i],self.targets[i],self.meta[i])

    def __repr__(self):
        return "SampleSet(%s, %i samples, %i train)"%(self.kind,len(self),self.n_train)

    def subset(self, start, stop):
        return SampleSet(self.inputs[start:stop],self.targets[start:stop],
                         self.meta[start:stop],self.kind,n_train=None,
                         seed=self.seed,config=self.config)

    @property
    def train(self):
        return self.subset(0,self.n_train)

    @property
    def test(self):
        return self.subset(self.n_train,len(self))

    def tensors(self):
        """ (inputs, targets) as float32 torch tensors. """
        import torch
        return torch.from_numpy(self.inputs.copy()), torch.from_numpy(self.targets.copy())

    def manifest(self):
        from m2m import __version__
        return odict([
            ('kind',     self.kind),
            ('version',  __version__),
            ('seed',     self.seed),
            ('dtype',    DTYPE),
            ('order',    'C'),
            ('shapes',   odict([('inputs',list(self.inputs.shape)),
                                ('targets',list(self.targets.shape))])),
            ('n_samples',len(self)),
            ('n_train',  self.n_train),
            ('n_test',   len(self)-self.n_train),
            ('config',   self.config),
            ('meta',     self.meta),
        ])

def save_dataset(samples, dirname, force=False):
    """
    Write a SampleSet container.

    Parameters:
    -----------
    samples : SampleSet
    dirname : output directory (created if missing)
    force   : overwrite an existing container

    Returns:
    --------
    dirname
    """
    manifest = os.path.join(dirname,'manifest.json')
    if logger.file_found(manifest,force): return dirname
    try:
        mkdir(dirname)
    except OSError as e:
        msg = "Could not create %s: %s"%(dirname,e)
        raise DataError(msg)
    np.save(os.path.join(dirname,'inputs.npy'),samples.inputs)
    np.save(os.path.join(dirname,'targets.npy'),samples.targets)
    fileio.write_json(manifest,samples.manifest())
    logger.info("Wrote %i samples to %s"%(len(samples),dirname))
    return dirname

def _load_container(dirname):
    manifest = fileio.read_json(os.path.join(dirname,'manifest.json'))
    arrays = []
    for name in ('inputs','targets'):
        filename = os.path.join(dirname,name+'.npy')
        if not os.path.exists(filename):
            msg = "Missing array file: %s"%filename
            raise DataError(msg)
        try:
            arrays.append(np.load(filename,allow_pickle=False))
        except ValueError as e:
            msg = "Malformed array file %s: %s"%(filename,e)
            raise DataError(msg)
    inputs,targets = arrays
    kind = manifest.get('kind')
    if kind not in KINDS:
        msg = "Unrecognized dataset kind in %s: %s"%(dirname,kind)
        raise DataError(msg)
    return SampleSet(inputs,targets,manifest.get('meta'),kind,
                     n_train=manifest.get('n_train'),seed=manifest.get('seed'),
                     config=manifest.get('config'))

def _load_mat(filename, t_in, t_out, n_train=None):
    """ Benchmark vorticity file holding 'u' [N, H, W, T]. """
    try:
        data = scipy.io.loadmat(filename)
    except (ValueError,NotImplementedError) as e:
        msg = "Could not read %s: %s"%(filename,e)
        raise DataError(msg)
    if 'u' not in data:
        msg = "No array 'u' in %s"%filename
        raise DataError(msg)
    u = np.asarray(data['u'])
    if u.ndim != 4:
        msg = "Array 'u' must be [N, H, W, T]; found %s"%(list(u.shape),)
        raise ShapeError(msg)
    if u.shape[-1] < t_in + t_out:
        msg = "Time axis (3) of 'u' has %i frames; need %i input + %i target"
        msg = msg%(u.shape[-1],t_in,t_out)
        raise ShapeError(msg)
    inputs = np.transpose(u[...,:t_in],(0,3,1,2))
    targets = np.transpose(u[...,t_in:t_in+t_out],(0,3,1,2))
    meta = [dict(index=i) for i in range(len(u))]
    return SampleSet(inputs,targets,meta,'ns',n_train=n_train)

def validate(samples, kind, t_in=None, t_out=None):
    """ Check array shapes against the dataset kind. """
    for name,arr in (('inputs',samples.inputs),('targets',samples.targets)):
        if arr.ndim != 4:
            msg = "%s must be [N, T, H, W]; found %s"%(name,list(arr.shape))
            raise ShapeError(msg)
    if samples.inputs.shape[-2:] != samples.targets.shape[-2:]:
        msg = "Spatial shapes differ: inputs %s, targets %s"
        msg = msg%(samples.inputs.shape[-2:],samples.targets.shape[-2:])
        raise ShapeError(msg)

    if kind == 'poisson':
        t_in,t_out = 1,1
    elif kind == 'ns':
        t_in = 10 if t_in is None else t_in
        t_out = 10 if t_out is None else t_out
    elif kind == 'cylinder':
        if tuple(samples.inputs.shape[-2:]) != CYLINDER_SHAPE:
            msg = "Spatial axes (2, 3) are %s; cylinder data expects %s"
            msg = msg%(tuple(samples.inputs.shape[-2:]),CYLINDER_SHAPE)
            raise ShapeError(msg)
    else:
        msg = "Unrecognized dataset kind: %s"%kind
        raise DataError(msg)

    for name,arr,t in (('inputs',samples.inputs,t_in),('targets',samples.targets,t_out)):
        if t is not None and arr.shape[1] != t:
            msg = "Time axis (1) of %s has %i frames; expected %i"%(name,arr.shape[1],t)
            raise ShapeError(msg)
    return samples

def load_dataset(path, kind=None, t_in=None, t_out=None, n_train=None):
    """
    Load and shape-validate a dataset.

    Parameters:
    -----------
    path    : container directory, or a benchmark .mat file for kind 'ns'
    kind    : expected kind ('poisson', 'ns', 'cylinder'); None accepts the manifest kind
    t_in    : expected input frames (ns)
    t_out   : expected target frames (ns)
    n_train : training split for .mat files (default: all samples)

    Returns:
    --------
    samples : SampleSet
    """
    if not os.path.exists(path):
        msg = "Dataset not found: %s"%path
        raise DataError(msg)

    if os.path.splitext(path)[1] == '.mat':
        if kind not in (None,'ns'):
            msg = "Only 'ns' data can be read from .mat files; requested '%s'"%kind
            raise DataError(msg)
        t_in = 10 if t_in is None else t_in
        t_out = 10 if t_out is None else t_out
        samples = _load_mat(path,t_in,t_out,n_train)
    elif os.path.isdir(path):
        samples = _load_container(path)
    else:
        msg = "Unrecognized dataset format: %s"%path
        raise DataError(msg)

    if kind is not None and samples.kind != kind:
        msg = "Dataset %s holds '%s' data; expected '%s'"%(path,samples.kind,kind)
        raise DataError(msg)
    logger.debug("Loaded %r"%samples)
    return validate(samples,samples.kind,t_in,t_out)
