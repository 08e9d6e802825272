"""Grid solver for s-minimal functions: fractional perimeters, level-set cuts,
nonlocal curvature and continuity diagnostics."""

from .grid import CellSet, FarField, GridSpec, ShapeDesc, rasterize
from .kernel import KernelTable, build_kernel
from .solver import LevelSolution, ScalarField, energy, solve_level, solve_smoothed, solve_sminimal

__all__ = [
    "CellSet",
    "FarField",
    "GridSpec",
    "KernelTable",
    "LevelSolution",
    "ScalarField",
    "ShapeDesc",
    "build_kernel",
    "energy",
    "rasterize",
    "solve_level",
    "solve_smoothed",
    "solve_sminimal",
]

__version__ = "0.1.0"
