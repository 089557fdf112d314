#!/usr/bin/env python

import os
from setuptools import setup

def get_readme():
    md_path = os.path.join(os.path.dirname(__file__), "README.md")
    txt_path = os.path.join(os.path.dirname(__file__), "README.txt")
    if os.path.exists(txt_path):
        d = open(txt_path).read()
    elif os.path.exists(md_path):
        d = open(md_path).read()
    else:
        d = ""
    return d

setup(name='critsde',
      version='0.1.0',
      description='Numerical laboratory for SDEs with critical Lebesgue-integrable drifts',
      license='BSD',
      keywords='sde heat kernel mild solution krylov estimate zvonkin monte carlo',
      install_requires=['numpy','scipy','traits','nipype','configobj'],
      tests_require=['pytest','mpmath'],
      packages=['critsde', 'critsde.tests'],
      scripts=['critsde/critpipe.py'],
      long_description=get_readme(),
      classifiers=[
        'Development Status :: 3 - Alpha',
        'Topic :: Scientific/Engineering :: Mathematics',
        'License :: OSI Approved :: BSD License',
        'Intended Audience :: Science/Research',
      ],
)
