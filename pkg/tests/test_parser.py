#!/usr/bin/env python
"""
Tests of the command-line parser.
"""
import numpy as np
import pytest

import m2m.utils.parser
from m2m.utils.logger import logger

def build_parser():
    parser = m2m.utils.parser.Parser()
    parser.add_config()
    parser.add_set()
    parser.add_seed()
    parser.add_outdir()
    parser.add_force()
    parser.add_verbose()
    return parser

def test_options():
    parser = build_parser()
    args = parser.parse_args(['tests/config.yaml','-s','train.epochs=5','--set','scale=2',
                              '--seed','3','-o','out','-f'])
    np.testing.assert_equal(args.config,'tests/config.yaml')
    np.testing.assert_equal(args.overrides,['train.epochs=5','scale=2'])
    np.testing.assert_equal(args.seed,3)
    np.testing.assert_equal(args.outdir,'out')
    assert args.force
    assert not args.verbose

def test_defaults():
    args = build_parser().parse_args([])
    assert args.config is None
    np.testing.assert_equal(args.overrides,[])
    assert args.seed is None

def test_verbose():
    level = logger.level
    try:
        build_parser().parse_args(['-v'])
        np.testing.assert_equal(logger.level,logger.DEBUG)
    finally:
        logger.setLevel(level)

def test_version():
    parser = build_parser()
    parser.add_version()
    with pytest.raises(SystemExit):
        parser.parse_args(['--version'])
