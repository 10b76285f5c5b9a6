"""Mesh-free least-squares neural solver for the elliptic obstacle problem.

The solution, its flux, and the multiplier are parameterized by networks
whose lifted combination satisfies the boundary and obstacle constraints by
construction; training minimizes a Monte-Carlo least-squares functional.
"""

__version__ = "0.1.0"

from .admissible import LiftConfig, TripleNets, batch_loss, batch_loss_grad
from .backend import backend_name
from .geometry import Ball, Interval, UnitDiskSlit
from .netcore import Activation, NetworkSpec, HnnSpec, init_params, forward_jac
from .problems import Problem, RadialBenchmark, get_benchmark

__all__ = [
    "LiftConfig", "TripleNets", "batch_loss", "batch_loss_grad",
    "backend_name", "Ball", "Interval", "UnitDiskSlit",
    "Activation", "NetworkSpec", "HnnSpec", "init_params", "forward_jac",
    "Problem", "RadialBenchmark", "get_benchmark", "__version__",
]
