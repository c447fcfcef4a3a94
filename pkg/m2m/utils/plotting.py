"""
Basic plotting tools.
"""
import os

import matplotlib
try:             os.environ['DISPLAY']
except KeyError: matplotlib.use('Agg')

import numpy as np
import pylab as plt

from m2m.utils.logger import logger

params = {
    'axes.labelsize': 12,
    'xtick.labelsize': 10,
    'ytick.labelsize': 10,
    'xtick.major.size': 3,      # major tick size in points
    'xtick.minor.size': 1.5,    # minor tick size in points
    }
matplotlib.rcParams.update(params)

############################################################

def plotPareto(table, filename=None, ax=None):
    """ Scatter of forward time vs relative L2 with the efficient frontier. """
    if ax is None: fig,ax = plt.subplots(figsize=(6,4.5))
    eff = table['efficient']
    ax.scatter(table['forward_ms'][~eff],table['rel_l2'][~eff],c='gray',label='dominated')
    ax.scatter(table['forward_ms'][eff],table['rel_l2'][eff],c='r',label='efficient')
    idx = np.argsort(table['forward_ms'][eff])
    ax.plot(table['forward_ms'][eff][idx],table['rel_l2'][eff][idx],'r--',lw=1)
    for row in table:
        ax.annotate(row['model_name'],(row['forward_ms'],row['rel_l2']),
                    fontsize=8,xytext=(3,3),textcoords='offset points')
    ax.set_xlabel('Forward time (ms)')
    ax.set_ylabel('Relative L2 error')
    ax.legend(loc='upper right',fontsize=9)
    if filename: _save(ax.figure,filename)
    return ax

def plotRouter(matrices, experts=None, epochs=None, filename=None):
    """
    Heatmaps of the per-patch router probabilities [S^2, M] for a
    selection of epochs.
    """
    matrices = np.asarray(matrices)
    if epochs is None:
        epochs = np.unique(np.linspace(0,len(matrices)-1,min(len(matrices),4)).astype(int))
    fig,axes = plt.subplots(1,len(epochs),figsize=(3.5*len(epochs),3.5),squeeze=False)
    for ax,e in zip(axes[0],epochs):
        im = ax.imshow(matrices[e],vmin=0,vmax=1,cmap='viridis',aspect='auto')
        ax.set_title('Epoch %i'%(e+1))
        ax.set_xlabel('Expert')
        ax.set_ylabel('Patch')
        if experts is not None:
            ax.set_xticks(np.arange(len(experts)))
            ax.set_xticklabels(experts,rotation=45,fontsize=8)
    fig.colorbar(im,ax=list(axes[0]))
    if filename: _save(fig,filename)
    return fig

def plotController(trace, filename=None):
    """ Loss and lambda against controller step. """
    fig,(ax1,ax2) = plt.subplots(2,1,sharex=True,figsize=(6,5))
    ax1.plot(trace['t'],trace['loss'],'-k')
    ax1.set_yscale('log')
    ax1.set_ylabel('Loss')
    ax2.plot(trace['t'],trace['lambda'],'-b')
    ax2.set_ylabel(r'$\lambda$')
    ax2.set_xlabel('Epoch')
    if filename: _save(fig,filename)
    return fig

def _save(fig, filename):
    logger.info("Writing %s..."%filename)
    fig.savefig(filename,bbox_inches='tight')
    plt.close(fig)
