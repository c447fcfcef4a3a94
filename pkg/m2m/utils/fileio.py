#!/usr/bin/env python
"""
Reading and writing tables and manifests.
"""
import os
import json

import numpy as np

from m2m.utils.logger import logger
from m2m.utils.exceptions import DataError

def _formats(dtype):
    fmt = []
    for name in dtype.names:
        kind = dtype[name].kind
        if kind in ('U','S','O'): fmt.append('%s')
        elif kind in ('i','u'):   fmt.append('%d')
        elif kind == 'b':         fmt.append('%d')
        else:                     fmt.append('%.10g')
    return fmt

def write_table(filename,data,**kwargs):
    """ Write a recarray to a csv file with a header row.

    Parameters:
    filename : output file name
    data     : the recarray data
    kwargs   : keyword arguments for np.savetxt
    Returns:
    None
    """
    data = np.atleast_1d(data)
    kwargs.setdefault('fmt',_formats(data.dtype))
    np.savetxt(filename,data,header=','.join(data.dtype.names),
               delimiter=',',comments='',**kwargs)

def read_table(filename,**kwargs):
    """ Read a csv table with a header row into a recarray. """
    if not os.path.exists(filename):
        msg = "File not found: %s"%filename
        raise DataError(msg)
    kwargs.setdefault('dtype',None)
    kwargs.setdefault('encoding',None)
    data = np.genfromtxt(filename,names=True,delimiter=',',**kwargs)
    return np.atleast_1d(data).view(np.recarray)

class TableWriter(object):
    """
    Append-only csv writer; the file is flushed after every row so a
    run that aborts leaves all completed rows on disk.
    """
    def __init__(self, filename, names):
        self.filename = filename
        self.names = list(names)
        with open(self.filename,'w') as f:
            f.write(','.join(self.names)+'\n')

    def append(self, row):
        values = [row[n] for n in self.names]
        line = ','.join('%.10g'%v if isinstance(v,(float,np.floating)) else str(v)
                        for v in values)
        with open(self.filename,'a') as f:
            f.write(line+'\n')
            f.flush()

def write_json(filename,data):
    """ Write a json file with sorted keys (byte-stable output). """
    with open(filename,'w') as f:
        json.dump(data,f,indent=1,sort_keys=True)
        f.write('\n')

def read_json(filename):
    if not os.path.exists(filename):
        msg = "File not found: %s"%filename
        raise DataError(msg)
    logger.debug("Reading %s..."%filename)
    with open(filename) as f:
        try:
            return json.load(f)
        except ValueError as e:
            msg = "Malformed json file %s: %s"%(filename,e)
            raise DataError(msg)
