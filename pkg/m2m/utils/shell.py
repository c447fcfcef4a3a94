#!/usr/bin/env python
import os
import errno

# Tools for working with the shell and the runtime environment

def mkdir(path):
    # https://stackoverflow.com/a/600612/4075339
    try:
        os.makedirs(path)
    except OSError as exc:
        if exc.errno == errno.EEXIST and os.path.isdir(path):
            pass
        else:
            raise
    return path

def get_device(name=None):
    """Get the torch device from the argument or the M2M_DEVICE
    environment variable (default: cuda if available, else cpu)."""
    import torch

    name = name or os.getenv('M2M_DEVICE')
    if not name:
        name = 'cuda' if torch.cuda.is_available() else 'cpu'
    return torch.device(name)
