"""
This is the Multi-scale Multi-expert (M2M) neural operator toolkit.
"""
__author__ = "M2M developers"

from ._version import get_versions
__version__ = get_versions()['version']
del get_versions
