"""Reproducible target functions and sample generators."""
from .diffusion import DiffusionModel, KLModes, kl_1d, kl_eigenpairs, solve_diffusion
from .sampling import uniform_points, uniform_samples
from .targets import (ChainTarget, ManufacturedTarget, make_example1_target,
                      make_example3_target)

__all__ = [
    "ChainTarget", "DiffusionModel", "KLModes", "ManufacturedTarget",
    "kl_1d", "kl_eigenpairs", "make_example1_target", "make_example3_target",
    "solve_diffusion", "uniform_points", "uniform_samples",
]
