#!/usr/bin/env python
"""
Tests of the mixture network and the alternating training loop.
"""
import os
import unittest
# Execute tests in order: https://stackoverflow.com/a/22317851/4075339
unittest.TestLoader.sortTestMethodsUsing = None

import numpy as np
import pytest
import torch

from m2m.analysis.experts import ExpertSpec
from m2m.analysis.fields import ResampleSpec, Field
from m2m.analysis.router import RouterConfig, PriorSpec, router_loss
from m2m.analysis.moe import MultiScaleMoE
from m2m.analysis.controller import PIController, ControllerState
from m2m.analysis.training import (TrainConfig, mse, expert_loss, total_loss, evaluate,
                                   predict, train, save_checkpoint, load_checkpoint,
                                   _set_trainable, LOG_COLUMNS)
from m2m.utils.config import Config
from m2m.utils.exceptions import ConfigError, DataError, DivergenceError
from m2m.utils.logger import logger
from m2m.utils import fileio
logger.setLevel(logger.WARN)

CONFIG='tests/config.yaml'

def build_model(modes=(2,4), scale=2, channels=1, prior=None, seed=0, **kwargs):
    torch.manual_seed(seed)
    specs = [ExpertSpec(modes=m,hidden_channels=4,num_layers=2,projection_channels=8,
                        in_channels=channels,out_channels=channels) for m in modes]
    router = RouterConfig(embed_dim=8,num_heads=2,num_layers=1,pool_size=4)
    resample = ResampleSpec(**kwargs)
    return MultiScaleMoE(specs,router,scale,resample,prior)

def linear_task(n=8, size=16, seed=0):
    """ Smooth random fields and their image under u -> 2u. """
    rng = np.random.default_rng(seed)
    x = np.linspace(0,1,size)
    xx,yy = np.meshgrid(x,x,indexing='ij')
    inputs = []
    for i in range(n):
        a,b,c = rng.normal(size=3)
        inputs.append(a*np.sin(np.pi*xx)*np.sin(np.pi*yy) + b*np.cos(2*np.pi*xx) + c*yy)
    inputs = np.array(inputs,dtype=np.float32)[:,None]
    return torch.from_numpy(inputs),torch.from_numpy(2*inputs)

def test_losses():
    u = torch.randn(2,1,8,8)
    np.testing.assert_equal(mse(u,u).item(),0)
    np.testing.assert_allclose(expert_loss(u+0.5,u).item(),0.25,rtol=1e-6)

    np.testing.assert_allclose(total_loss(0.5,0.8,0.0),0.8)
    np.testing.assert_allclose(total_loss(0.5,0.5,1.0),1.0)
    np.testing.assert_allclose(total_loss(0.8,0.1,0.25),0.3)

def test_expert_loss_supervision():
    model = build_model()
    x,y = linear_task(n=2)
    result,out = model.dispatch(x,'topk',2)
    agg = expert_loss(result,y,'aggregate')
    np.testing.assert_allclose(agg.item(),mse(result.prediction,y).item())

    assert expert_loss(result,y,'per_expert').item() > 0

    # A single expert covering every cell sees the aggregate loss
    model = build_model(modes=(4,),scale=1)
    result,out = model.dispatch(x,'topk',1)
    np.testing.assert_allclose(expert_loss(result,y,'per_expert').item(),
                               expert_loss(result,y,'aggregate').item(),rtol=1e-6)

def test_shapes():
    model = build_model(modes=(4,8),scale=4)
    x = torch.randn(1,1,128,128)
    np.testing.assert_equal(tuple(model(x).shape),(1,1,128,128))

    model = build_model(modes=(4,8),scale=2,channels=10)
    x = torch.randn(1,10,64,64)
    np.testing.assert_equal(tuple(model(x).shape),(1,10,64,64))

def test_pipeline_collapse():
    """ Scale 1 with a single expert is the bare expert. """
    model = build_model(modes=(4,),scale=1).eval()
    x = torch.randn(2,1,16,16)
    with torch.no_grad():
        np.testing.assert_allclose(model(x,'topk',1).numpy(),model.experts[0](x).numpy(),
                                   rtol=1e-6,atol=1e-7)
        np.testing.assert_allclose(model(x,'dense').numpy(),model.experts[0](x).numpy(),
                                   rtol=1e-6,atol=1e-7)

def test_gradient_check():
    """ End-to-end input gradient of a miniature float64 model. """
    model = build_model(modes=(2,2),scale=2).double().eval()
    x = torch.randn(1,1,8,8,dtype=torch.float64,requires_grad=True)
    assert torch.autograd.gradcheck(lambda v: model(v,'dense'),(x,),
                                    eps=1e-6,atol=1e-6,rtol=1e-4)

def test_parameter_gradients():
    """ Parameter gradients of the total loss against central differences. """
    model = build_model(modes=(2,2),scale=2,seed=3).double().eval()
    g = torch.Generator().manual_seed(0)
    x = torch.randn(2,1,8,8,generator=g,dtype=torch.float64)
    y = torch.randn(2,1,8,8,generator=g,dtype=torch.float64)

    def loss():
        result,out = model.dispatch(x,'dense')
        return total_loss(router_loss(out,model.prior),mse(result.prediction,y),0.5)

    model.zero_grad()
    loss().backward()

    eps = 1e-6
    rng = np.random.default_rng(0)
    analytic,numeric = [],[]
    for name,p in model.named_parameters():
        if p.grad is None: continue
        flat = p.data.view(-1)
        for i in rng.choice(flat.numel(),size=min(2,flat.numel()),replace=False):
            analytic.append(p.grad.view(-1)[i].item())
            value = flat[i].item()
            flat[i] = value + eps
            up = loss().item()
            flat[i] = value - eps
            down = loss().item()
            flat[i] = value
            numeric.append((up - down)/(2*eps))

    analytic,numeric = np.array(analytic),np.array(numeric)
    assert np.linalg.norm(analytic) > 0
    assert np.linalg.norm(analytic - numeric)/np.linalg.norm(analytic) < 1e-4

def test_hard_prior():
    prior = PriorSpec(mode='hard',weights=[0,1])
    model = build_model(prior=prior)
    x,y = linear_task(n=3)
    patches,out = model.routing(x)
    np.testing.assert_equal(out.probs.argmax(-1).numpy(),1)
    result,out = model.dispatch(x,'topk',1)
    rows,yj = result.outputs[0]
    np.testing.assert_equal(len(rows),0)

def test_phase_isolation():
    model = build_model()
    x,y = linear_task(n=2)

    _set_trainable(model.router,False)
    result,out = model.dispatch(x,'topk',2)
    expert_loss(result,y,'per_expert').backward()
    assert all(p.grad is None for p in model.router.parameters())
    assert any(p.grad is not None for p in model.experts.parameters())
    _set_trainable(model,True)
    model.zero_grad(set_to_none=True)

    _set_trainable(model.experts,False)
    result,out = model.dispatch(x,'topk',2)
    loss = total_loss(router_loss(out,model.prior),mse(result.prediction,y),0.5)
    loss.backward()
    assert all(p.grad is None for p in model.experts.parameters())
    assert any(p.grad is not None for p in model.router.parameters())
    _set_trainable(model,True)

def snapshot(module):
    return torch.cat([p.detach().reshape(-1).clone() for p in module.parameters()])

def test_phase_isolation_in_training():
    """ Each phase of train() moves only its own parameters. """
    for alternation in ('per_epoch','per_batch'):
        model = build_model()
        state = dict(router=snapshot(model.router),experts=snapshot(model.experts))
        phases = []

        def callback(epoch, phase):
            router,experts = snapshot(model.router),snapshot(model.experts)
            if phase == 'expert':
                assert torch.equal(router,state['router'])
                assert not torch.equal(experts,state['experts'])
            else:
                assert torch.equal(experts,state['experts'])
                assert not torch.equal(router,state['router'])
            state.update(router=router,experts=experts)
            phases.append((epoch,phase))

        cfg = TrainConfig(epochs=2,batch_size=2,alternation=alternation)
        train(model,linear_task(n=4),cfg,callback=callback)
        nbatch = 1 if alternation == 'per_epoch' else 2
        np.testing.assert_equal(len(phases),2*2*nbatch)
        np.testing.assert_equal([p for e,p in phases[:2]],['expert','router'])

def test_k_too_large():
    model = build_model()
    with pytest.raises(ConfigError):
        train(model,linear_task(n=2),TrainConfig(epochs=1,k=3))

def test_divergence(tmp_path):
    model = build_model()
    x,y = linear_task(n=2)
    y[0,0,0,0] = float('inf')
    with pytest.raises(DivergenceError):
        train(model,(x,y),TrainConfig(epochs=1,batch_size=2),outdir=str(tmp_path))
    assert os.path.exists(os.path.join(str(tmp_path),'run_log.csv'))

def test_predict_rollout():
    model = build_model()
    x,y = linear_task(n=2)
    out = predict(model,Field(x),rollout_steps=3)
    np.testing.assert_equal(out.shape,(2,3,16,16))

class TestTrain(unittest.TestCase):
    """ Alternating optimization on a linear task. """

    def setUp(self):
        self.data = linear_task(n=8)
        self.cfg = TrainConfig(epochs=100,batch_size=4,learning_rate=1e-2,
                               strategy='topk',k=2,seed=0)

    def test_converges(self):
        model = build_model(up='nearest',down='nearest')
        before = evaluate(model,self.data,'topk',2)['rmse']
        model,log = train(model,self.data,self.cfg)
        after = log.rows[-1]['train_rmse']
        # MSE falls by at least 10x
        self.assertLess(after**2,0.1*before**2)
        np.testing.assert_equal(len(log),100)
        np.testing.assert_equal(log.table()['val_rel_l2'],np.nan)

    def test_deterministic(self):
        cfg = self.cfg.copy()
        cfg.epochs = 3
        tables = []
        for i in range(2):
            model = build_model(seed=1)
            model,log = train(model,self.data,cfg,PIController(ControllerState(kp=0.1)))
            tables.append(log.table())
        for name in LOG_COLUMNS:
            np.testing.assert_array_equal(tables[0][name],tables[1][name])

    def test_kl_feedback(self):
        cfg = self.cfg.copy()
        cfg.epochs = 2
        controller = PIController(ControllerState(kp=0.1),feedback='kl')
        model,log = train(build_model(),self.data,cfg,controller)
        fed = np.array([row['loss'] for row in controller.trace])
        np.testing.assert_equal(len(fed),2)
        # KL of two-expert routing to the uniform prior
        self.assertTrue(np.all((fed >= 0) & (fed <= np.log(2))))
        self.assertFalse(np.allclose(fed,log.table()['train_rmse']))

    def test_outputs(self):
        import tempfile
        cfg = self.cfg.copy()
        cfg.epochs = 2
        cfg.supervision = 'dense'
        cfg.alternation = 'per_batch'
        outdir = tempfile.mkdtemp()
        val = linear_task(n=2,seed=1)
        model,log = train(build_model(),self.data,cfg,val=val,outdir=outdir)

        table = fileio.read_table(os.path.join(outdir,'run_log.csv'))
        np.testing.assert_equal(list(table.dtype.names),LOG_COLUMNS)
        np.testing.assert_equal(len(table),2)
        self.assertTrue(np.all(np.isfinite(table['val_rel_l2'])))

        router = fileio.read_json(os.path.join(outdir,'router.json'))
        np.testing.assert_equal(router['experts'],['FNO2','FNO4'])
        np.testing.assert_equal(np.shape(router['router']),(2,4,2))
        trace = fileio.read_table(os.path.join(outdir,'controller.csv'))
        np.testing.assert_equal(len(trace),2)

        # Checkpoint round trip
        filename = os.path.join(outdir,'checkpoint.pt')
        save_checkpoint(filename,model,Config(CONFIG))
        loaded,payload = load_checkpoint(filename)
        np.testing.assert_equal([s.name for s in loaded.specs],['FNO2','FNO4'])
        np.testing.assert_equal(payload['config']['scale'],2)
        x = self.data[0][:2]
        with torch.no_grad():
            model.eval(); loaded.eval()
            self.assertTrue(torch.equal(model(x),loaded(x)))

        with self.assertRaises(DataError):
            load_checkpoint(os.path.join(outdir,'missing.pt'))

if __name__ == "__main__":
    unittest.main()
