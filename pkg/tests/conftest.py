import numpy as np
import pytest

from coldctrl import gpe
from coldctrl.units import PhysicalConstants


@pytest.fixture(scope="session")
def constants():
    return PhysicalConstants()


@pytest.fixture(scope="session")
def chip_pot(constants):
    return gpe.chip_potential(constants)


@pytest.fixture(scope="session")
def chip_grid():
    return gpe.default_grid()


@pytest.fixture(scope="session")
def g1d_700(constants):
    return gpe.g1d_for_atoms(700, constants)


@pytest.fixture(scope="session")
def stationary_700(chip_pot, chip_grid, g1d_700, constants):
    """Ground and first-excited chip states at N=700, shared across modules."""
    gs = gpe.ground_state(chip_pot, 700, g1d_700, chip_grid, constants)
    ex = gpe.first_excited_state(chip_pot, 700, g1d_700, chip_grid, constants)
    return gs, ex


def harmonic_potential(omega, constants):
    """Purely quadratic well with the given angular frequency."""
    return gpe.ChipPotential(p2=0.5 * constants.mass * omega**2, p4=0.0, p6=0.0)


@pytest.fixture(scope="session")
def harmonic_pot(constants):
    return harmonic_potential(2 * np.pi * gpe.CHIP_TRAP_FREQUENCY_HZ, constants)
