#!/usr/bin/env python
"""
Base functionality for pipeline scripts
"""
from collections import OrderedDict as odict

from m2m.utils.parser import Parser
from m2m.utils.logger import logger
from m2m.utils.config import Config

# Exit codes
SUCCESS = 0
CONFIG_ERROR = 2
DATA_ERROR = 3
DIVERGENCE = 4

class Pipeline(object):
    """
    A pipeline script owns:
    - A set of command line arguments (common options plus one
      subparser per command)
    - A set of commands, each a function of (config, opts)
    """
    def __init__(self, description=__doc__, commands=None):
        self.description = description
        self.commands = odict(commands or [])
        self._setup_parser()

    def _add_common(self, parser):
        parser.add_config()
        parser.add_set()
        parser.add_seed()
        parser.add_outdir()
        parser.add_force()
        parser.add_verbose()

    def _setup_parser(self):
        self.parser = Parser(description=self.description)
        self.parser.add_version()
        self.subparsers = {}
        if not self.commands:
            self._add_common(self.parser)
            return
        sub = self.parser.add_subparsers(dest='command',metavar='command',
                                         parser_class=Parser)
        sub.required = True
        for name,(func,helpstr) in self.commands.items():
            p = sub.add_parser(name,help=helpstr,description=helpstr)
            self._add_common(p)
            self.subparsers[name] = p

    def parse_args(self, args=None):
        self.opts = self.parser.parse_args(args)
        overrides = list(getattr(self.opts,'overrides',None) or [])
        self.config = Config(self.opts.config,overrides=overrides)
        if getattr(self.opts,'seed',None) is not None:
            self.config['seed'] = self.opts.seed
        if getattr(self.opts,'outdir',None):
            self.config['output']['dirname'] = self.opts.outdir

    def run(self):
        if not self.commands:
            logger.warning("Doing nothing...")
            return
        func = self.commands[self.opts.command][0]
        return func(self.config,self.opts)

    def execute(self, args=None):
        """ Parse, run, and map exceptions onto exit codes. """
        try:
            self.parse_args(args)
            self.run()
        except Exception as e:
            code = getattr(e,'exit_code',None)
            if code is None: raise
            logger.error(str(e))
            return code
        logger.info("Done.")
        return SUCCESS

if __name__ == "__main__":
    description = "Pipeline test"

    def test(config, opts):
        logger.info("Testing pipeline...")
        logger.info("  seed=%s"%config['seed'])

    pipeline = Pipeline(description,[('test',(test,"Run the test command"))])
    pipeline.parser.print_help()
    pipeline.execute()
