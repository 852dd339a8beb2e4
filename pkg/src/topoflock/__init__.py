"""Simulator and operator library for the topological Euler alignment system on the torus."""
from .dynamics import ShearSolver, SolverConfig, State, galilean_normalize, run, step_ssprk3
from .errors import ConfigError, InstabilityError, TopoflockError, VacuumError
from .grid import TorusGrid
from .kernel import CommGeometry, KernelParams, LatticeKernel

__version__ = "0.1.0"

__all__ = [
    "CommGeometry", "ConfigError", "InstabilityError", "KernelParams", "LatticeKernel",
    "ShearSolver", "SolverConfig", "State", "TopoflockError", "TorusGrid", "VacuumError",
    "galilean_normalize", "run", "step_ssprk3",
]
