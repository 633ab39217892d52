"""Finite-element experiments on pressure waves in fluid-structure interaction.

An incompressible viscous fluid surrounds (or is surrounded by) a linearly
elastic solid.  The package builds the meshes, the coupled discretization and
the elastic eigenproblem, and provides the tools to detect undamped pressure
waves and to decompose long-time structure motion.
"""
__version__ = "0.1.0"

from .errors import (AssemblyFailure, BlowUp, DegenerateInput, FsiwError, InsufficientWindow,
                     InvalidArgument, InvalidSpec, MeshError, MissingArtifacts, PicardDivergence,
                     SolveFailure)
from .mesh import DomainSpec, Mesh, build_mesh
from .fem import FeSpace, Field
from .elasticity import (ElasticParams, EigenPair, badness_score, classify_domain, dirichlet_eigs,
                         korn_gap, project_rigid, solve_neumann_phi)
from .fluid import FluidParams, assemble_coupled
from .pressure_waves import ball_pressure_wave, disc_pressure_wave, spherical_bessel_roots
from .solver import ScenarioConfig, State, run, run_wave_1d, step
from .initdata import InitialData, Seed, check_compatibility, construct_compatible
from .asymptotics import decompose, oracle_wave_1d, shift_difference

__all__ = [name for name in dir() if not name.startswith("_")]
