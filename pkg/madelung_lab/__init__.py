"""Numerical laboratory for the real-valued (Madelung) form of quantum mechanics."""

from os.path import abspath, dirname, join

__version__ = "0.1.0.dev"
DATADIR = join(dirname(abspath(__file__)), "data")

from .model import *
