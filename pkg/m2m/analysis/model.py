#!/usr/bin/env python
"""
A Model object is just a container for a set of Parameter.
Implements __getattr__ and __setattr__.

The model has a set of default parameters stored in Model._params.
The parameters for a given instance of a model are stored in the
Model.params attribute. This attribute is a deepcopy of
Model._params created during instantiation, so changing an instance
never changes the class defaults.

The descriptors of the m2m components (expert architecture, router,
controller, training, datasets) are all Models; their parameters carry
bounds or a set of allowed choices that are checked on every
assignment.
"""
from collections import OrderedDict as odict
import copy

import numpy as np
import yaml

def asscalar(a):
    """ https://github.com/numpy/numpy/issues/4701 """
    try:
        return a.item()
    except AttributeError:
        return a

class Model(object):
    # The _params member is an ordered dictionary
    # of Parameter objects.
    _params = odict([])
    # The _mapping is an alternative name mapping
    # for the parameters in _params
    _mapping = odict([])

    def __init__(self,*args,**kwargs):
        self.name = self.__class__.__name__
        self.params = copy.deepcopy(self._params)
        self.set_attributes(**kwargs)
        self._validate()
        self._cache()

    def __getattr__(self,name):
        # __getattr__ is only called when the usual lookup fails
        if name in self._params or name in self._mapping:
            return self.getp(name).value
        else:
            # Raises AttributeError
            return object.__getattribute__(self,name)

    def __setattr__(self, name, value):
        if name in self._params or name in self._mapping:
            self.setp(name, value)
        else:
            return object.__setattr__(self, name, value)

    def __eq__(self, other):
        if not isinstance(other,Model): return NotImplemented
        return (self.name == other.name) and (self.todict() == other.todict())

    def __str__(self,indent=0):
        ret = '{0:>{2}}{1}'.format('',self.name,indent)
        if len(self.params)==0:
            pass
        else:
            ret += '\n{0:>{2}}{1}'.format('','Parameters:',indent+2)
            width = len(max(list(self.params.keys()),key=len))
            for name,value in self.params.items():
                par = '{0!s:{width}} : {1!r}'.format(name,value,width=width)
                ret += '\n{0:>{2}}{1}'.format('',par,indent+4)
        return ret

    def getp(self, name):
        """
        Get the named parameter.

        Parameters
        ----------
        name : string
            The parameter name.

        Returns
        -------
        param :
            The parameter object.
        """
        name = self._mapping.get(name,name)
        return self.params[name]

    def setp(self, name, value=None, bounds=None):
        """
        Set the value (and bounds) of the named parameter.

        Parameters
        ----------
        name : string
            The parameter name.
        value:
            The value of the parameter
        bounds: None
            The bounds on the parameter
        Returns
        -------
        None
        """
        name = self._mapping.get(name,name)
        self.params[name].set(value,bounds)
        self._cache(name)

    def set_attributes(self, **kwargs):
        """
        Set a group of parameters. Unknown names raise a KeyError.
        """
        for name,value in kwargs.items():
            if name not in self._params and name not in self._mapping:
                msg = "Unrecognized parameter for %s: '%s'"%(self.name,name)
                raise KeyError(msg)
            self.setp(name,value)

    def todict(self):
        """ Parameter values as an ordered dict. """
        return odict([(k,v.value) for k,v in self.params.items()])

    def dump(self):
        return yaml.safe_dump(dict(self.todict()),sort_keys=False)

    def copy(self):
        return copy.deepcopy(self)

    @classmethod
    def from_config(cls, section, **kwargs):
        """ Build from a config section, ignoring keys that are not
        parameters of this model. Extra keyword arguments take precedence.
        """
        params = dict([(k,v) for k,v in dict(section).items()
                       if k in cls._params or k in cls._mapping])
        params.update(kwargs)
        return cls(**params)

    def _validate(self):
        """ Cross-parameter invariants; overload in subclasses. """
        pass

    def _cache(self, name=None):
        """
        Method called in setp to cache any computationally
        intensive properties after updating the parameters.

        Parameters
        ----------
        name : string
           The parameter name.

        Returns
        -------
        None
        """
        pass


class Parameter(object):
    """
    Parameter class for storing a value with either numeric bounds
    or a list of allowed choices.
    """
    __value__   = None
    __bounds__  = None
    __choices__ = None

    def __init__(self, value, bounds=None, choices=None):
        self.__choices__ = list(choices) if choices is not None else None
        self.set(value,bounds)

    def __repr__(self):
        if self.choices:
            return "%s(%r, %s)"%(self.__class__.__name__,self.value,self.choices)
        return "%s(%r, %s)"%(self.__class__.__name__,self.value,self.bounds)

    @property
    def bounds(self):
        return self.__bounds__

    @property
    def choices(self):
        return self.__choices__

    @property
    def value(self):
        return self.__value__

    def check_bounds(self, value):
        if self.__bounds__ is None:
            return
        if np.ndim(value) > 0:
            values = np.asarray(value,dtype=float).ravel()
        else:
            values = [value]
        for v in values:
            if not (self.__bounds__[0] <= v <= self.__bounds__[1]):
                msg="Value outside bounds: %.4g [%.4g,%.4g]"
                msg=msg%(v,self.__bounds__[0],self.__bounds__[1])
                raise ValueError(msg)

    def check_choices(self, value):
        if self.__choices__ is None:
            return
        if value not in self.__choices__:
            msg = "Invalid choice: %r (choose from %s)"%(value,self.__choices__)
            raise ValueError(msg)

    def set_bounds(self, bounds):
        if bounds is None: return
        self.__bounds__ = [asscalar(b) for b in bounds]

    def set_value(self, value):
        self.check_bounds(value)
        self.check_choices(value)
        if isinstance(value,(list,tuple,np.ndarray)):
            value = copy.deepcopy(np.asarray(value).tolist())
        self.__value__ = asscalar(value)

    def set(self, value=None, bounds=None):
        self.set_bounds(bounds)
        if value is None and self.__value__ is not None: return
        self.set_value(value)

def odict_representer(dumper, data):
    """ http://stackoverflow.com/a/21912744/4075339 """
    return dumper.represent_mapping(
        yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG,list(data.items()))

yaml.add_representer(odict,odict_representer)
