""" critsde: heat-semigroup PDE solvers, Euler-Maruyama ensembles and the
checks around SDEs whose drift sits in a critical weighted Lebesgue space.
"""
__version__ = "0.1.0"
