#!/usr/bin/env python
"""
Alternating optimization of experts and router.

Every epoch runs an expert phase (router frozen, experts trained on
the expert loss) and a router phase (experts frozen, router trained on
lambda(t) * router_loss + MSE of the aggregated prediction). The PI
controller then updates lambda from the epoch feedback signal.
"""
import os
from collections import OrderedDict as odict

import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset

from m2m.analysis.model import Model, Parameter
from m2m.analysis.fields import Field, ResampleSpec, segment
from m2m.analysis.experts import ExpertSpec
from m2m.analysis.router import RouterConfig, PriorSpec, prior_kl, router_loss as _router_loss
from m2m.analysis.moe import MultiScaleMoE
from m2m.analysis.controller import PIController
from m2m.utils.logger import logger
from m2m.utils.exceptions import ConfigError, DataError, DivergenceError, ShapeError
from m2m.utils import fileio
from m2m.utils import stats

LOG_COLUMNS = ['epoch','train_rmse','train_rel_l2','val_rel_l2','lambda','e','P','I']

class TrainConfig(Model):
    _params = odict([
        ('epochs',          Parameter(100, [1, 1e9])),
        ('batch_size',      Parameter(8, [1, 1e9])),
        ('learning_rate',   Parameter(1e-3, [0, np.inf])),
        ('optimizer',       Parameter('adam', choices=['adam'])),
        ('strategy',        Parameter('topk', choices=['topk','dense'])),
        ('k',               Parameter(2, [1, 1024])),
        ('supervision',     Parameter('per_expert', choices=['per_expert','aggregate','dense'])),
        ('alternation',     Parameter('per_epoch', choices=['per_epoch','per_batch'])),
        ('router_objective',Parameter('joint', choices=['joint','router_only'])),
        ('load_weight',     Parameter(1.0)),
        ('rollout_steps',   Parameter(1, [1, 1000])),
        ('num_workers',     Parameter(0, [0, 1024])),
        ('seed',            Parameter(0)),
    ])

def mse(pred, truth):
    if pred.shape != truth.shape:
        msg = "Shape mismatch: %s != %s"%(tuple(pred.shape),tuple(truth.shape))
        raise ShapeError(msg)
    return torch.mean((pred - truth)**2)

def expert_loss(predictions, truth, supervision='aggregate'):
    """
    Expert supervision loss.

    Parameters:
    -----------
    predictions : aggregated prediction tensor, or a DispatchResult
    truth       : target field [B, T_out, H, W]
    supervision : 'aggregate' -> MSE of the aggregated prediction;
                  'per_expert'/'dense' -> sum over experts of the MSE on
                  the patches each expert was evaluated on

    Returns:
    --------
    loss        : scalar tensor
    """
    truth = truth.values if isinstance(truth,Field) else truth
    if torch.is_tensor(predictions):
        return mse(predictions,truth)
    if supervision == 'aggregate':
        return mse(predictions.prediction,truth)

    S = predictions.scale
    patches = torch.stack(segment(truth,S),dim=1)
    patches = patches.reshape((-1,)+tuple(patches.shape[2:]))
    loss = None
    for rows,yj in predictions.outputs:
        if yj is None: continue
        lj = mse(yj,patches.index_select(0,rows))
        loss = lj if loss is None else loss + lj
    return loss

def total_loss(router_loss, expert_loss, lam):
    """ lambda * router_loss + expert_loss """
    return lam*router_loss + expert_loss

def _set_trainable(module, flag):
    for p in module.parameters():
        p.requires_grad_(flag)

def _tensors(data):
    if data is None: return None
    if hasattr(data,'tensors'): return data.tensors()
    inputs,targets = data
    return torch.as_tensor(inputs),torch.as_tensor(targets)

@torch.no_grad()
def evaluate(model, data, strategy='topk', k=2, batch_size=8, device=None,
             return_prediction=False):
    """
    Error metrics of the model on a sample set.

    Returns:
    --------
    metrics : odict with rmse, rel_l2, mae, and 'router', the mean
              routing probabilities per patch [S^2, M]
    """
    inputs,targets = _tensors(data)
    device = device if device is not None else next(model.parameters()).device
    training = model.training
    model.eval()
    preds,mats = [],[]
    for i in range(0,len(inputs),int(batch_size)):
        x = inputs[i:i+batch_size].to(device)
        result,out = model.dispatch(x,strategy,k)
        preds.append(result.prediction.cpu())
        mats.append(out.probs.reshape(-1,out.num_patches,out.num_experts).cpu())
    model.train(training)

    pred = torch.cat(preds)
    ret = odict([
        ('rmse',   stats.rmse(pred,targets)),
        ('rel_l2', stats.relative_l2(pred,targets)),
        ('mae',    stats.mae(pred,targets)),
        ('router', torch.cat(mats).mean(0).numpy()),
    ])
    if return_prediction: ret['prediction'] = pred
    return ret

@torch.no_grad()
def predict(model, field, strategy='topk', k=2, rollout_steps=1):
    """
    Forward pass on a field [B, T_in, H, W]. With rollout_steps > 1 the
    output is fed back as input and the windows are concatenated in time.
    """
    x = field.values if isinstance(field,Field) else torch.as_tensor(field)
    training = model.training
    model.eval()
    outs = []
    for i in range(int(rollout_steps)):
        y = model(x,strategy,k)
        outs.append(y)
        if i + 1 < rollout_steps:
            if y.shape != x.shape:
                msg = "Rollout needs T_in == T_out; found %s -> %s"%(tuple(x.shape),tuple(y.shape))
                raise ShapeError(msg)
            x = y
    model.train(training)
    return Field(torch.cat(outs,dim=1))

class RunLog(object):
    """
    Per-epoch training record. With an output directory the csv table
    is appended (and flushed) every epoch and the router snapshots are
    rewritten to a json sidecar.
    """
    def __init__(self, outdir=None, experts=None, scale=1):
        self.rows = []
        self.router = []
        self.experts = list(experts) if experts else []
        self.scale = scale
        self.outdir = outdir
        self.writer = None
        if outdir:
            self.writer = fileio.TableWriter(self.logfile,LOG_COLUMNS)

    @property
    def logfile(self):
        return os.path.join(self.outdir,'run_log.csv')

    @property
    def routerfile(self):
        return os.path.join(self.outdir,'router.json')

    def __len__(self):
        return len(self.rows)

    def append(self, row, router):
        self.rows.append(row)
        self.router.append(np.asarray(router))
        if self.writer:
            self.writer.append(row)
            fileio.write_json(self.routerfile,self.todict())

    def todict(self):
        return odict([
            ('experts',self.experts),
            ('scale',  self.scale),
            ('epochs', [int(r['epoch']) for r in self.rows]),
            ('router', [r.tolist() for r in self.router]),
        ])

    def table(self):
        dtype = [('epoch',int)] + [(n,float) for n in LOG_COLUMNS[1:]]
        return np.array([tuple(r[n] for n in LOG_COLUMNS) for r in self.rows],dtype=dtype)

def _check_finite(loss, phase, epoch):
    if not torch.isfinite(loss):
        msg = "Non-finite %s loss at epoch %i"%(phase,epoch)
        raise DivergenceError(msg)

def train(model, dataset, cfg=None, controller=None, val=None, outdir=None, device=None,
          callback=None):
    """
    Train a MultiScaleMoE.

    Parameters:
    -----------
    model      : MultiScaleMoE
    dataset    : training SampleSet (or (inputs, targets))
    cfg        : TrainConfig
    controller : PIController (default: enabled with default gains)
    val        : validation SampleSet, may be empty
    outdir     : directory for run_log.csv, router.json and controller.csv
    device     : torch device
    callback   : called as callback(epoch, phase) after each expert and
                 router phase (after every batch with per_batch alternation)

    Returns:
    --------
    model, log : the trained model and its RunLog
    """
    cfg = cfg if cfg is not None else TrainConfig()
    controller = controller if controller is not None else PIController()
    if cfg.strategy == 'topk' and cfg.k > model.num_experts:
        msg = "k=%i exceeds the number of experts (%i)"%(cfg.k,model.num_experts)
        raise ConfigError(msg)
    device = device if device is not None else next(model.parameters()).device

    train_data = _tensors(dataset)
    if not len(train_data[0]):
        raise DataError("Training set is empty")
    val_data = _tensors(val)
    if val_data is not None and not len(val_data[0]):
        logger.warning("Validation set is empty; val_rel_l2 will be nan")
        val_data = None

    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed)
    generator = torch.Generator().manual_seed(int(cfg.seed))
    loader = DataLoader(TensorDataset(*train_data),batch_size=int(cfg.batch_size),
                        shuffle=True,generator=generator,num_workers=int(cfg.num_workers))

    opt_experts = torch.optim.Adam(model.experts.parameters(),lr=cfg.learning_rate)
    opt_router = torch.optim.Adam(model.router.parameters(),lr=cfg.learning_rate)
    epsilon = model.router.config.epsilon_prior
    evaluate_all = (cfg.supervision == 'dense')

    def expert_step(x, y, epoch):
        _set_trainable(model.router,False)
        _set_trainable(model.experts,True)
        result,_ = model.dispatch(x,cfg.strategy,cfg.k,evaluate_all)
        loss = expert_loss(result,y,cfg.supervision)
        _check_finite(loss,'expert',epoch)
        opt_experts.zero_grad()
        loss.backward()
        opt_experts.step()
        return loss.item()

    def router_step(x, y, lam, epoch):
        _set_trainable(model.experts,False)
        _set_trainable(model.router,True)
        result,out = model.dispatch(x,cfg.strategy,cfg.k)
        lr = _router_loss(out,model.prior,epsilon,cfg.load_weight)
        kl = prior_kl(out,model.prior,epsilon).item()
        le = mse(result.prediction,y) if cfg.router_objective == 'joint' else 0.0
        loss = total_loss(lr,le,lam)
        _check_finite(loss,'router',epoch)
        opt_router.zero_grad()
        loss.backward()
        opt_router.step()
        return loss.item(), kl

    names = [e.name for e in model.experts]
    log = RunLog(outdir,names,model.scale)
    model.train()
    logger.info("Training %s over %i epochs (scale=%i, strategy=%s)"%(
        '+'.join(names),cfg.epochs,model.scale,cfg.strategy))

    try:
        for epoch in range(1,int(cfg.epochs)+1):
            lam = controller.lam
            losses = []
            if cfg.alternation == 'per_epoch':
                for x,y in loader:
                    expert_step(x.to(device),y.to(device),epoch)
                if callback: callback(epoch,'expert')
                for x,y in loader:
                    losses.append(router_step(x.to(device),y.to(device),lam,epoch))
                if callback: callback(epoch,'router')
            else:
                for x,y in loader:
                    x,y = x.to(device),y.to(device)
                    expert_step(x,y,epoch)
                    if callback: callback(epoch,'expert')
                    losses.append(router_step(x,y,lam,epoch))
                    if callback: callback(epoch,'router')
            losses,kls = np.array(losses).T

            metrics = evaluate(model,train_data,cfg.strategy,cfg.k,cfg.batch_size,device)
            if val_data is not None:
                val_l2 = evaluate(model,val_data,cfg.strategy,cfg.k,cfg.batch_size,device)['rel_l2']
            else:
                val_l2 = np.nan

            feedback = odict([('rmse',metrics['rmse']),('total_loss',np.mean(losses)),
                              ('kl',np.mean(kls))])[controller.feedback]
            lam = controller.update(feedback)
            s = controller.state
            row = odict([('epoch',epoch),('train_rmse',metrics['rmse']),
                         ('train_rel_l2',metrics['rel_l2']),('val_rel_l2',float(val_l2)),
                         ('lambda',lam),('e',s.error),('P',s.proportional),('I',s.integral)])
            log.append(row,metrics['router'])
            logger.info("Epoch %i: train_rmse=%.4g val_rel_l2=%.4g lambda=%.4g"%(
                epoch,metrics['rmse'],val_l2,lam))
    finally:
        _set_trainable(model,True)
        if outdir and controller.trace:
            controller.write(os.path.join(outdir,'controller.csv'))

    return model, log

def save_checkpoint(filename, model, config=None):
    """
    Save weights, expert specs (in router column order), router,
    prior and resampling descriptors, and the run config.
    """
    from m2m import __version__
    payload = dict(
        version    = __version__,
        state_dict = model.state_dict(),
        experts    = [dict(s.todict()) for s in model.specs],
        router     = dict(model.router.config.todict()),
        prior      = dict(model.prior.todict()),
        resample   = dict(model.resample.todict()),
        scale      = model.scale,
        config     = config.todict() if hasattr(config,'todict') else config,
    )
    torch.save(payload,filename)
    logger.info("Wrote %s"%filename)
    return filename

def load_checkpoint(filename, device=None):
    """
    Rebuild a MultiScaleMoE from a checkpoint.

    Returns:
    --------
    model, payload
    """
    if not os.path.exists(filename):
        msg = "Checkpoint not found: %s"%filename
        raise DataError(msg)
    try:
        payload = torch.load(filename,map_location=device or 'cpu',weights_only=True)
    except Exception as e:
        msg = "Could not read checkpoint %s: %s"%(filename,e)
        raise DataError(msg)
    specs = [ExpertSpec(**d) for d in payload['experts']]
    model = MultiScaleMoE(specs,RouterConfig(**payload['router']),payload['scale'],
                          ResampleSpec(**payload['resample']),PriorSpec(**payload['prior']))
    model.load_state_dict(payload['state_dict'])
    if device is not None: model.to(device)
    return model, payload
