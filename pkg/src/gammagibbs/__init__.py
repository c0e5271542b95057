"""Gamma random measures, their Gibbs perturbations by pair potentials, and checks."""

from .gibbs import (ChainConfig, ChainResult, ChainState, consistency_check,
                    estimate_partition_function, exp_moment, mh_step, run_specification,
                    thermodynamic_sweep)
from .interaction import (BoundConstants, CertificationError, PotentialSpec, bound_constants,
                          certify, energy_increment, gnz_weight, hamiltonian,
                          stability_lower_bound)
from .lattice import CubeGrid, Window, cube_index, index_hull, interaction_parameter
from .levy import (LevySpec, MeasureBatch, sample_batch, sample_gamma_measure, sample_mark,
                   truncated_mass, truncation_bias)
from .measures import DiscreteMeasure, MarkedConfiguration, from_marked, to_marked
from .stats import Estimate

__version__ = "0.1.0"
