#!/usr/bin/env python
"""
Generate datasets, train, evaluate and benchmark multi-scale mixtures
of spectral experts.
"""
import os
import sys
from collections import OrderedDict as odict

import numpy as np
import torch

from m2m.analysis.pipeline import Pipeline
from m2m.analysis.moe import MultiScaleMoE
from m2m.analysis.controller import PIController
from m2m.analysis.training import (TrainConfig, train, evaluate, predict,
                                   save_checkpoint, load_checkpoint)
from m2m.analysis.experts import count_params
from m2m.analysis import bench
from m2m.observation.dataset import load_dataset, save_dataset
from m2m.simulation.poisson import PoissonConfig, generate_poisson_dataset
from m2m.simulation.navier_stokes import NSConfig, ns_generate
from m2m.utils.config import Config
from m2m.utils.logger import logger
from m2m.utils.exceptions import ConfigError, DataError
from m2m.utils.shell import mkdir, get_device
from m2m.utils import fileio

CHECKPOINT = 'checkpoint.pt'

def write_manifest(outdir, command, config):
    """ Config echo, seed and code version of a command's output. """
    from m2m import __version__
    manifest = odict([
        ('command', command),
        ('version', __version__),
        ('seed',    config['seed']),
        ('config',  config.todict()),
    ])
    filename = os.path.join(outdir,'manifest.json')
    fileio.write_json(filename,manifest)
    config.write(os.path.join(outdir,'config.yaml'))
    return filename

def load_samples(config, path=None):
    """ Dataset named by the config's data section. """
    kind = config['data']['kind']
    path = path or config['data']['path']
    if kind == 'ns':
        ns = config['ns']
        return load_dataset(path,kind,ns['t_in'],ns['t_out'],n_train=ns['train_split'])
    return load_dataset(path,kind)

def output_dir(path):
    """ Create a run directory; failures are data errors. """
    try:
        return mkdir(path)
    except OSError as e:
        msg = "Could not create output directory %s: %s"%(path,e)
        raise DataError(msg)

def model_name(model):
    if model.scale == 1 and model.num_experts == 1:
        return model.specs[0].name
    return 'M2M-S%i'%model.scale

def cmd_generate(config, force=False):
    """
    Write the dataset container named by data.path.

    Returns:
    --------
    dirname : dataset directory
    """
    config = Config(config)
    kind = config['data']['kind']
    dirname = config['data']['path']
    if logger.file_found(os.path.join(dirname,'manifest.json'),force):
        return dirname

    if kind == 'poisson':
        cfg = PoissonConfig.from_config(config['poisson'],seed=config['seed'])
        samples = generate_poisson_dataset(cfg)
    elif kind == 'ns':
        cfg = NSConfig.from_config(config['ns'],seed=config['seed'])
        samples = ns_generate(cfg)
    else:
        msg = "No generator for '%s' data; point data.path at an existing container"%kind
        raise ConfigError(msg)

    samples.config = config.todict()
    return save_dataset(samples,dirname,force=True)

def cmd_train(config, force=False, device=None):
    """
    Train the configured model on the training split.

    Returns:
    --------
    filename, model, log : checkpoint, trained model, RunLog (None if
                           an existing checkpoint was reused)
    """
    config = Config(config)
    device = get_device(device)
    outdir = output_dir(config['output']['dirname'])
    filename = os.path.join(outdir,CHECKPOINT)
    if logger.file_found(filename,force):
        model,_ = load_checkpoint(filename,device)
        return filename, model, None

    seed = int(config['seed'])
    torch.manual_seed(seed)
    np.random.seed(seed)

    samples = load_samples(config)
    model = MultiScaleMoE.from_config(config).to(device)
    t_in = samples.inputs.shape[1]
    if model.specs[0].in_channels != t_in:
        msg = "experts.in_channels=%i but the dataset has %i input frames"%(
            model.specs[0].in_channels,t_in)
        raise ConfigError(msg)

    cfg = TrainConfig.from_config(config['train'],seed=seed)
    controller = PIController.from_config(config['controller'])
    write_manifest(outdir,'train',config)
    logger.info("Parameters: "+", ".join("%s=%i"%(n,c) for n,c in model.summary()))

    model,log = train(model,samples.train,cfg,controller,val=samples.test,
                      outdir=outdir,device=device)
    save_checkpoint(filename,model,config)
    return filename, model, log

def _record(name, model, data, config, device):
    """ BenchRecord of a model on a sample set. """
    t = config['train']
    b = bench.BenchConfig.from_config(config['bench'])
    metrics = evaluate(model,data,t['strategy'],t['k'],t['batch_size'],device)
    shape = (b.batch_size,) + tuple(data.inputs.shape[1:])
    ms = bench.time_forward(model,shape,b.repeats,b.warmup,device,
                            strategy=t['strategy'],k=t['k'])
    return bench.BenchRecord(model_name=name,parameter_count=count_params(model),
                             forward_ms=ms,rel_l2=metrics['rel_l2'],
                             rmse=metrics['rmse'],mae=metrics['mae'])

def cmd_eval(checkpoint, dataset=None, outdir=None, device=None):
    """
    Metrics of a checkpoint on the train and test splits of a dataset.
    With train.rollout_steps > 1 the first test sample is also rolled
    out autoregressively and written to rollout.npy.

    Parameters:
    -----------
    checkpoint : checkpoint filename
    dataset    : dataset path (default: data.path of the checkpoint config)
    outdir     : report directory (default: next to the checkpoint)

    Returns:
    --------
    records    : list of BenchRecord, one per non-empty split
    """
    device = get_device(device)
    model,payload = load_checkpoint(checkpoint,device)
    if not payload.get('config'):
        msg = "Checkpoint %s carries no run config"%checkpoint
        raise DataError(msg)
    config = Config(payload['config'])
    samples = load_samples(config,dataset)

    name = model_name(model)
    records = []
    for split in ('train','test'):
        data = getattr(samples,split)
        if not len(data):
            logger.warning("Empty %s split; skipping..."%split)
            continue
        records.append(_record('%s[%s]'%(name,split),model,data,config,device))
        logger.info("%s: rel_l2=%.4g"%(records[-1].model_name,records[-1].rel_l2))

    if not records:
        msg = "Dataset %s has no samples"%(dataset or config['data']['path'])
        raise DataError(msg)
    outdir = output_dir(outdir or os.path.dirname(os.path.abspath(checkpoint)))
    bench.write_report(records,outdir,bench.BenchConfig.from_config(config['bench']).protocol(device),basename='eval')

    t = config['train']
    if t['rollout_steps'] > 1:
        data = samples.test if len(samples.test) else samples.train
        x = torch.from_numpy(data.inputs[:1].copy()).to(device)
        rollout = predict(model,x,t['strategy'],t['k'],t['rollout_steps'])
        filename = os.path.join(outdir,'rollout.npy')
        logger.info("Writing %s..."%filename)
        np.save(filename,rollout.numpy())
    return records

def bench_overlays(config):
    """
    Named config overlays of the benchmark sweep: single-expert scale-1
    baselines followed by the configured variants.
    """
    b = bench.BenchConfig.from_config(config['bench'])
    overlays = []
    for modes in b.baseline_modes:
        overlays.append(('FNO%i'%modes,{
            'scale': 1,
            'experts.modes': [int(modes)],
            'train.strategy': 'topk',
            'train.k': 1,
            'controller.enabled': False,
            'prior.mode': 'none',
            'prior.weights': None,
        }))
    for v in b.variants:
        if 'name' not in v:
            msg = "Benchmark variant without a name: %s"%(v,)
            raise ConfigError(msg)
        overlays.append((v['name'],dict(v.get('set') or {})))

    names = [n for n,o in overlays]
    if len(set(names)) != len(names):
        msg = "Duplicate benchmark names: %s"%names
        raise ConfigError(msg)
    return overlays

def cmd_bench(config, force=False, plot=False, device=None):
    """
    Train and time every model of the sweep and write the Pareto report.

    Returns:
    --------
    table : structured array with one row per model and an 'efficient' flag
    """
    config = Config(config)
    device = get_device(device)
    outdir = output_dir(config['output']['dirname'])
    write_manifest(outdir,'bench',config)

    overlays = bench_overlays(config)
    if not overlays:
        raise ConfigError("Benchmark sweep is empty")

    records = []
    for name,overlay in overlays:
        logger.info("Benchmarking %s..."%name)
        sub = Config(config,overrides=overlay)
        sub['output']['dirname'] = os.path.join(outdir,name)
        filename,model,log = cmd_train(sub,force=force,device=device)
        samples = load_samples(sub)
        data = samples.test if len(samples.test) else samples.train
        records.append(_record(name,model,data,sub,device))

    table = bench.write_report(records,outdir,bench.BenchConfig.from_config(config['bench']).protocol(device))
    if plot: _plot(table,overlays,outdir)
    return table

def _plot(table, overlays, outdir):
    from m2m.utils import plotting
    plotting.plotPareto(table,os.path.join(outdir,'pareto.png'))
    for name,overlay in overlays:
        rundir = os.path.join(outdir,name)
        routerfile = os.path.join(rundir,'router.json')
        if os.path.exists(routerfile):
            matrices,_ = bench.routing_summary(routerfile)
            experts = fileio.read_json(routerfile).get('experts')
            plotting.plotRouter(matrices,experts,filename=os.path.join(rundir,'router.png'))
        tracefile = os.path.join(rundir,'controller.csv')
        if os.path.exists(tracefile):
            plotting.plotController(fileio.read_table(tracefile),
                                    os.path.join(rundir,'controller.png'))

############################################################

def _generate(config, opts):
    return cmd_generate(config,opts.force)

def _train(config, opts):
    return cmd_train(config,opts.force)

def _eval(config, opts):
    checkpoint = opts.checkpoint or os.path.join(config['output']['dirname'],CHECKPOINT)
    return cmd_eval(checkpoint,opts.dataset,opts.outdir)

def _bench(config, opts):
    return cmd_bench(config,opts.force,opts.plot)

COMMANDS = [
    ('generate',(_generate,"Generate a dataset container")),
    ('train',   (_train,   "Train a model and write its checkpoint and run log")),
    ('eval',    (_eval,    "Evaluate a checkpoint on a dataset")),
    ('bench',   (_bench,   "Train and time a model sweep; write the Pareto report")),
]

def build_pipeline():
    pipeline = Pipeline(__doc__,COMMANDS)
    p = pipeline.subparsers['eval']
    p.add_argument('--checkpoint',default=None,
                   help="Checkpoint file (default: <outdir>/%s)."%CHECKPOINT)
    p.add_argument('--dataset',default=None,
                   help="Dataset path (default: data.path of the checkpoint config).")
    p = pipeline.subparsers['bench']
    p.add_argument('--plot',action='store_true',
                   help="Plot the Pareto frontier, router weights and controller traces.")
    return pipeline

def main(args=None):
    return build_pipeline().execute(args)

if __name__ == "__main__":
    sys.exit(main())
