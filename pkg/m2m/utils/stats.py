#!/usr/bin/env python
"""
Error metrics between predicted and reference fields.

Norms are computed per sample (everything but the leading batch axis
is flattened) and then averaged over the batch.
"""
import numpy as np

from m2m.utils.exceptions import ShapeError

def _asarray(x):
    """ Convert numpy arrays, torch tensors, and Fields to float64 ndarrays. """
    if hasattr(x,'values') and not callable(x.values):
        x = x.values
    if hasattr(x,'detach'):
        x = x.detach().cpu().numpy()
    return np.asarray(x,dtype=np.float64)

def _check(pred, truth):
    pred,truth = _asarray(pred),_asarray(truth)
    if pred.shape != truth.shape:
        msg = "Shape mismatch: %s != %s"%(pred.shape,truth.shape)
        raise ShapeError(msg)
    return pred,truth

def relative_l2(pred, truth):
    """
    Relative L2 error ||pred - truth|| / ||truth||, flattened per
    sample and averaged over the batch.

    Parameters:
    -----------
    pred  : predicted fields [B, ...]
    truth : reference fields [B, ...]

    Returns:
    --------
    err   : mean relative L2 error
    """
    pred,truth = _check(pred,truth)
    pred = pred.reshape(len(pred),-1) if pred.ndim > 1 else pred[None,:]
    truth = truth.reshape(len(truth),-1) if truth.ndim > 1 else truth[None,:]
    norm = np.linalg.norm(truth,axis=1)
    if np.any(norm == 0):
        msg = "Reference field has zero norm"
        raise ValueError(msg)
    return float(np.mean(np.linalg.norm(pred-truth,axis=1)/norm))

def rmse(pred, truth):
    """ Root mean squared error over all cells. """
    pred,truth = _check(pred,truth)
    return float(np.sqrt(np.mean((pred-truth)**2)))

def mae(pred, truth):
    """ Mean absolute error over all cells. """
    pred,truth = _check(pred,truth)
    return float(np.mean(np.abs(pred-truth)))
