"""
TILT Solver

This package rectifies deformed low-rank textures in images. It provides the
TILT outer loop together with three inner-loop convex solvers (ADM, LADMAP and
LADMAP with warm-start SVD) and a command-line harness for the comparison
experiments.
"""

__version__ = '0.1.0'
