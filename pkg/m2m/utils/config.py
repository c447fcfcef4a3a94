"""
Class for storing and updating config dictionaries.
"""
import os
import pprint
import copy

import yaml

from m2m.utils.logger import logger
from m2m.utils.exceptions import ConfigError

DEFAULT = os.path.join(os.path.dirname(os.path.dirname(__file__)),
                       'config','default.yaml')

def merge(base, update):
    """ Recursively merge `update` into a copy of `base`.

    Parameters:
    -----------
    base   : dict of default values
    update : dict of values to overwrite

    Returns:
    --------
    out    : merged dict
    """
    out = copy.deepcopy(base)
    for key,value in update.items():
        if isinstance(value,dict) and isinstance(out.get(key),dict):
            out[key] = merge(out[key],value)
        else:
            out[key] = copy.deepcopy(value)
    return out

def check_keys(params, default, prefix=''):
    """ Raise a ConfigError naming every key of `params` that does not
    exist in `default`. Keys whose default is a non-empty dict are
    checked recursively; everything else is a leaf.
    """
    unknown = []
    for key,value in params.items():
        path = prefix+str(key)
        if key not in default:
            unknown.append(path)
            continue
        if isinstance(default[key],dict) and len(default[key]):
            if not isinstance(value,dict):
                msg = "Expected a section for '%s'; found %r"%(path,value)
                raise ConfigError(msg)
            try:
                check_keys(value,default[key],prefix=path+'.')
            except ConfigError as e:
                unknown.extend(e.args[1] if len(e.args) > 1 else [])
    if unknown:
        msg = "Unrecognized config keys: %s"%(', '.join(unknown))
        raise ConfigError(msg,unknown)

def parse_value(value):
    """ Parse a command-line value with YAML scalar rules; YAML 1.1
    leaves '1e-3' as a string, so numeric strings are retried as float.
    """
    out = yaml.safe_load(value)
    if isinstance(out,str):
        try: out = float(out)
        except ValueError: pass
    return out

class Config(dict):
    """
    Configuration object
    """
    # Sections that must be present after merging with the default
    sections = ['output','data','poisson','ns','resample','experts',
                'router','prior','controller','train','bench']

    def __init__(self, config, default=DEFAULT, overrides=None):
        """
        Initialize a configuration object from a filename or a dictionary.
        The input is merged over the default configuration; keys that do
        not appear in the default are rejected.

        Parameters:
          config:    filename, dict, or Config object (deep copied)
          default:   default configuration to merge
          overrides: list of 'dotted.key=value' strings or a dict
                     mapping dotted keys to values

        Returns:
          config
        """
        self.filename = None
        defaults = self._load(default)
        params = self._load(config)

        check_keys(params,defaults)
        self.update(merge(defaults,params))
        self._defaults = defaults

        if overrides: self.set_overrides(overrides)

        self._validate()

    def __str__(self):
        return yaml.safe_dump(self.todict(),default_flow_style=False,sort_keys=False)

    def _load(self, config):
        """ Load this config from an existing config

        Parameters:
        -----------
        config : filename, config object, or dict to load

        Returns:
        --------
        params : configuration parameters
        """
        if isinstance(config,str):
            if not os.path.exists(config):
                msg = "Config file not found: %s"%config
                raise ConfigError(msg)
            self.filename = config
            with open(config) as f:
                try:
                    params = yaml.safe_load(f)
                except yaml.YAMLError as e:
                    msg = "Could not parse %s: %s"%(config,e)
                    raise ConfigError(msg)
            if params is None: params = {}
        elif isinstance(config, Config):
            # This is the copy constructor...
            self.filename = config.filename
            params = config.todict()
        elif isinstance(config, dict):
            params = copy.deepcopy(config)
        elif config is None:
            params = {}
        else:
            raise ConfigError('Unrecognized input: %r'%(config,))

        if not isinstance(params,dict):
            msg = "Config must be a mapping; found %s"%type(params).__name__
            raise ConfigError(msg)
        return params

    def _validate(self):
        """ Enforce some structure to the config file """
        missing = [s for s in self.sections if s not in self]
        if missing:
            msg = 'Missing sections: '+str(missing)
            raise ConfigError(msg)

        try:
            scale = int(self['scale'])
        except (TypeError,ValueError):
            scale = 0
        if scale < 1:
            msg = "Scale must be a positive integer: %s"%self['scale']
            raise ConfigError(msg)

        try:
            self._check_sections()
        except ConfigError:
            raise
        except (ValueError,KeyError,TypeError) as e:
            msg = "Invalid config value: %s"%e
            raise ConfigError(msg)

    def _check_sections(self):
        """ Build the descriptor of every section so that bad values
        fail on load rather than mid-run.
        """
        from m2m.analysis.fields import ResampleSpec
        from m2m.analysis.experts import specs_from_config
        from m2m.analysis.router import RouterConfig, PriorSpec
        from m2m.analysis.controller import PIController
        from m2m.analysis.training import TrainConfig
        from m2m.analysis.bench import BenchConfig
        from m2m.simulation.poisson import PoissonConfig
        from m2m.simulation.navier_stokes import NSConfig

        if self['data']['kind'] not in ('poisson','ns','cylinder'):
            msg = "Unrecognized data kind: %s"%self['data']['kind']
            raise ConfigError(msg)

        specs = specs_from_config(self['experts'])
        M = len(specs)
        if not M:
            raise ConfigError("No experts configured")
        RouterConfig.from_config(self['router'],num_experts=M,
                                 in_channels=specs[0].in_channels)
        PriorSpec.from_config(self['prior']).matrix(M,int(self['scale'])**2)
        ResampleSpec.from_config(self['resample'])
        PIController.from_config(self['controller'])
        PoissonConfig.from_config(self['poisson'],seed=self['seed'])
        NSConfig.from_config(self['ns'],seed=self['seed'])
        BenchConfig.from_config(self['bench'])

        train = TrainConfig.from_config(self['train'],seed=self['seed'])
        if train.strategy == 'topk' and train.k > M:
            msg = "train.k=%i exceeds the number of experts (%i)"%(train.k,M)
            raise ConfigError(msg)

    def set_overrides(self, overrides):
        """ Apply 'dotted.key=value' overrides.

        Parameters:
        -----------
        overrides : list of 'key=value' strings or dict of {key: value}

        Returns:
        --------
        None
        """
        if isinstance(overrides,dict):
            items = list(overrides.items())
        else:
            items = []
            for o in overrides:
                if '=' not in o:
                    msg = "Override must be 'key=value': %s"%o
                    raise ConfigError(msg)
                key,value = o.split('=',1)
                items.append((key.strip(),parse_value(value)))

        for key,value in items:
            self.setp(key,value)

    def getp(self, key):
        """ Get a value by dotted key path. """
        node = self
        for k in key.split('.'):
            if not isinstance(node,dict) or k not in node:
                msg = "Unrecognized config key: %s"%key
                raise ConfigError(msg)
            node = node[k]
        return node

    def setp(self, key, value):
        """ Set a value by dotted key path; the path must exist in the
        default configuration.
        """
        path = key.split('.')
        default = self._defaults
        for k in path:
            if not isinstance(default,dict) or k not in default:
                msg = "Unrecognized config key: %s"%key
                raise ConfigError(msg)
            default = default[k]

        node = self
        for k in path[:-1]:
            node = node[k]
        logger.debug("Setting %s = %r"%(key,value))
        node[path[-1]] = value

    def todict(self):
        """ Plain (nested) dict copy of this config. """
        return copy.deepcopy(dict(self))

    def write(self, filename):
        """
        Write a copy of this config object.

        Parameters:
        -----------
        outfile : output filename

        Returns:
        --------
        None
        """
        ext = os.path.splitext(filename)[1]
        with open(filename, 'w') as writer:
            if ext == '.py':
                writer.write(pprint.pformat(self.todict()))
            elif ext in ('.yaml','.yml'):
                writer.write(str(self))
            else:
                msg = 'Unrecognized config format: %s'%ext
                raise ConfigError(msg)

############################################################
