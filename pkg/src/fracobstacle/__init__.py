"""Numerical laboratory for random fractional obstacle problems.

Marked point processes, fractional capacities on grids, ergodic estimators,
and the eps-level and effective problems of the homogenized limit.
"""
__version__ = "0.1.0"

from .capacity import (condenser_capacity, global_capacity, relative_capacity,
                       capacity_diagnostics, standard_ball_capacity)
from .energy import GridDomain, KernelSpec, LatticeEnergy, ScalingParams, energy, energy_gradient
from .errors import (FracObstacleError, InvalidParameter, ConfigInvalid, WindowTooSmall,
                     MismatchedRealization, TemplateOutOfBounds, ZeroArgument, EmptyNodeSet,
                     OverlappingSets, NodeOutsideBall, InfeasibleGeometry, MomentInfinite,
                     SolverDiverged, LadderNotMonotone, UnderResolvedObstacles, IoError)
from .point_process import (MarkDistribution, MarkedConfiguration, ProcessSpec, Window,
                            matern_thin, sample_poisson, sample_shifted_lattice)
from .shapes import Ball, BallUnion, Box

__all__ = [
    'condenser_capacity',
    'global_capacity',
    'relative_capacity',
    'capacity_diagnostics',
    'standard_ball_capacity',
    'GridDomain',
    'KernelSpec',
    'LatticeEnergy',
    'ScalingParams',
    'energy',
    'energy_gradient',
    'FracObstacleError',
    'InvalidParameter',
    'ConfigInvalid',
    'WindowTooSmall',
    'MismatchedRealization',
    'TemplateOutOfBounds',
    'ZeroArgument',
    'EmptyNodeSet',
    'OverlappingSets',
    'NodeOutsideBall',
    'InfeasibleGeometry',
    'MomentInfinite',
    'SolverDiverged',
    'LadderNotMonotone',
    'UnderResolvedObstacles',
    'IoError',
    'MarkDistribution',
    'MarkedConfiguration',
    'ProcessSpec',
    'Window',
    'matern_thin',
    'sample_poisson',
    'sample_shifted_lattice',
    'Ball',
    'BallUnion',
    'Box',
]
