#!/usr/bin/env python
"""
Exception classes. Each one subclasses a built-in so callers that
only know about ValueError/IOError still catch them; the command line
maps them onto exit codes.
"""

class ConfigError(ValueError):
    """ Invalid or unrecognized configuration. """
    exit_code = 2

class DataError(IOError):
    """ Missing, unreadable, or malformed data container. """
    exit_code = 3

class ShapeError(ValueError):
    """ Array shapes incompatible with the requested operation. """
    exit_code = 3

class IndivisibleError(ShapeError):
    """ Spatial dimensions not divisible by the scale factor. """

class ModeOverflowError(ShapeError):
    """ Retained Fourier modes exceed the representable spectrum. """

class PriorError(ValueError):
    """ Prior inconsistent with the number of experts, or not positive. """
    exit_code = 2

class SolverError(RuntimeError):
    """ Linear solve failed to converge. """
    exit_code = 3

class CFLError(RuntimeError):
    """ Time step violates the CFL bound. """
    exit_code = 3

class DivergenceError(ArithmeticError):
    """ Training loss became non-finite. """
    exit_code = 4
