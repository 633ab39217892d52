"""Shared meshes and operators.  Session scoped: several modules reuse them."""
import numpy as np
import pytest

from fsiwave import (DomainSpec, ElasticParams, FluidParams, assemble_coupled, build_mesh,
                     dirichlet_eigs, solve_neumann_phi)


@pytest.fixture(scope="session")
def elastic():
    return ElasticParams(1.0, 1.0)


@pytest.fixture(scope="session")
def fluid():
    return FluidParams(1.0)


@pytest.fixture(scope="session")
def disc_spec():
    return DomainSpec.disc_in_square(3.0, 1.0, 0.2)


@pytest.fixture(scope="session")
def disc_mesh(disc_spec):
    return build_mesh(disc_spec)


@pytest.fixture(scope="session")
def disc_mats(disc_mesh, fluid, elastic):
    return assemble_coupled(disc_mesh, fluid, elastic)


@pytest.fixture(scope="session")
def disc_basis(disc_mesh, elastic):
    return dirichlet_eigs(disc_mesh, elastic, 12)


@pytest.fixture(scope="session")
def disc_phi(disc_mesh, elastic):
    return solve_neumann_phi(disc_mesh, elastic)[0]


@pytest.fixture(scope="session")
def disc_wave(disc_basis):
    """The coarse disc's radial mode (smallest traction score)."""
    return min(disc_basis, key=lambda p: p.badness)


@pytest.fixture(scope="session")
def square_spec():
    return DomainSpec.square_in_square(3.0, 1.0, 0.2)


@pytest.fixture(scope="session")
def square_mesh(square_spec):
    return build_mesh(square_spec)


@pytest.fixture(scope="session")
def square_mats(square_mesh, fluid, elastic):
    return assemble_coupled(square_mesh, fluid, elastic)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
