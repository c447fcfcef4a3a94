import os

from setuptools import setup, find_packages
import versioneer

HERE = os.path.abspath(os.path.dirname(__file__))
VERSION = versioneer.get_version()
CMDCLASS = versioneer.get_cmdclass()

NAME = 'm2m'
DESC = "Multi-scale multi-expert neural PDE surrogates."
LONG_DESC = DESC
with open(os.path.join(HERE,'README.md')) as f:
    LONG_DESC = f.read()

CLASSIFIERS = """\
Development Status :: 4 - Beta
Intended Audience :: Science/Research
Intended Audience :: Developers
License :: OSI Approved :: MIT License
Natural Language :: English
Operating System :: MacOS :: MacOS X
Operating System :: POSIX :: Linux
Programming Language :: Python :: 3
Topic :: Scientific/Engineering
Topic :: Scientific/Engineering :: Artificial Intelligence
Topic :: Scientific/Engineering :: Physics
"""

setup(
    name=NAME,
    version=VERSION,
    cmdclass=CMDCLASS,
    author='M2M developers',
    install_requires=[
        'matplotlib',
        'numpy >= 1.20.0',
        'scipy >= 1.8.0',
        'pyyaml >= 5.1',
        'torch >= 1.13',
    ],
    extras_require={'test': ['pytest']},
    packages=find_packages(exclude=['tests']),
    package_data={'m2m': ['config/*.yaml']},
    entry_points={
        'console_scripts': ['m2m = m2m.pipeline.commands:main'],
    },
    description=DESC,
    long_description=LONG_DESC,
    long_description_content_type='text/markdown',
    python_requires='>=3.8',
    platforms='any',
    classifiers = [_f for _f in CLASSIFIERS.split('\n') if _f]
)
