#!/usr/bin/env python
"""
Argument parser with the options shared by the m2m commands.
"""
import argparse

from m2m.utils.logger import logger

class Parser(argparse.ArgumentParser):
    def __init__(self,*args,**kwargs):
        kwargs.setdefault('formatter_class',
                          argparse.ArgumentDefaultsHelpFormatter)

        super(Parser,self).__init__(*args,**kwargs)

    def add_verbose(self,**kwargs):
        self.add_argument('-v','--verbose',action='store_true',
                          help='Output verbosity.',**kwargs)

    def add_config(self,**kwargs):
        kwargs.setdefault('nargs','?')
        kwargs.setdefault('default',None)
        self.add_argument('config',metavar='config.yaml',
                          help='Configuration file (yaml).',**kwargs)

    def add_set(self,**kwargs):
        self.add_argument('-s','--set',dest='overrides',default=[],
                          action='append',metavar='KEY=VALUE',
                          help="Override a config key by dotted path (e.g., train.epochs=5).",
                          **kwargs)

    def add_outdir(self,**kwargs):
        self.add_argument('-o','--outdir',default=None,
                          help="Output directory (overrides output.dirname).",**kwargs)

    def add_force(self,**kwargs):
        self.add_argument('-f','--force',action='store_true',
                          help='Force the overwrite of files',**kwargs)

    def add_seed(self,**kwargs):
        self.add_argument('--seed',default=None,type=int,
                          help='Random seed.',**kwargs)

    def add_version(self,**kwargs):
        from m2m import __version__
        self.add_argument('-V','--version',action='version',
                          version='m2m '+__version__,
                          help='Print version.',**kwargs)

    def _parse_verbose(self,opts):
        if vars(opts).get('verbose'):
            logger.setLevel(logger.DEBUG)

    def parse_args(self,*args,**kwargs):
        opts = super(Parser,self).parse_args(*args,**kwargs)
        self._parse_verbose(opts)
        return opts

if __name__ == "__main__":
    description = "Argument parser test."
    parser = Parser(description=description)
    parser.add_config()
    parser.add_set()
    parser.add_verbose()
    parser.add_version()
    opts = parser.parse_args()
    print(opts)
