import io
import os

from setuptools import find_packages, setup

NAME = 'ccfpython'
DESCRIPTION = 'Conditional cuckoo filters: approximate membership for (key, predicate) queries'
REQUIRES_PYTHON = '>=3.8.0'
VERSION = '0.1.0'

REQUIRED = ['mmh3>=3.0', 'bitarray>=2.0', 'numpy>=1.20']

ENTRY_POINTS = {'console_scripts': ['ccf=ccfpython.cli:main']}

here = os.path.abspath(os.path.dirname(__file__))

try:
    with io.open(os.path.join(here, 'README.md'), encoding='utf-8') as f:
        long_description = '\n' + f.read()
except FileNotFoundError:
    long_description = DESCRIPTION


setup(
    name=NAME,
    version=VERSION,
    description=DESCRIPTION,
    long_description=long_description,
    long_description_content_type='text/markdown',
    python_requires=REQUIRES_PYTHON,
    packages=find_packages(exclude=('tests',)),
    install_requires=REQUIRED,
    entry_points=ENTRY_POINTS,
    include_package_data=False,
    license='Apache 2.0',
    classifiers=[
        'License :: OSI Approved :: Apache Software License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Topic :: Database',
        'Topic :: Scientific/Engineering :: Information Analysis',
        'Programming Language :: Python :: Implementation :: CPython',
    ],
)
