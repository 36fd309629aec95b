"""Physical constants and the nondimensionalization used by the engines.

All engines compute in reduced units built from a single reference scale:
the chip-trap engine uses harmonic-oscillator units of the measured
transverse frequency, the lattice engine uses the recoil energy of the
lattice.  Keeping the conversion in one place avoids scattering factors of
hbar through the numerics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

HBAR = 1.054571817e-34  # J s
H_PLANCK = 2.0 * math.pi * HBAR

RB87_MASS = 1.44316e-25  # kg
RB87_SCATTERING_LENGTH = 5.24e-9  # m, triplet a_s; not measured in-house, overridable
LATTICE_SPACING = 532e-9  # m


class UnitError(ValueError):
    """Raised when a quantity's unit does not match any known scale."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Atomic constants for Rb-87 plus the lattice geometry.

    ``recoil_energy`` is derived, never stored, so it can not drift out of
    sync with ``mass`` and ``a_lat``.
    """

    hbar: float = HBAR
    mass: float = RB87_MASS
    a3d_scattering: float = RB87_SCATTERING_LENGTH
    a_lat: float = LATTICE_SPACING

    def __post_init__(self):
        for name in ("hbar", "mass", "a3d_scattering", "a_lat"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def recoil_energy(self) -> float:
        """E_r = (2 pi hbar)^2 / (8 m a_lat^2) in joules."""
        return (2.0 * math.pi * self.hbar) ** 2 / (8.0 * self.mass * self.a_lat**2)

    @property
    def g3d(self) -> float:
        """Three-dimensional contact coupling 4 pi hbar^2 a_s / m."""
        return 4.0 * math.pi * self.hbar**2 * self.a3d_scattering / self.mass


@dataclass(frozen=True)
class TrapUnits:
    """A consistent (length, time, energy) triple for one atomic species.

    The three scales are tied together by ``energy * time = hbar`` and
    ``length**2 = hbar * time / mass``, so a single seed scale fixes all
    three.  Construct through one of the classmethods.
    """

    length_scale: float
    time_scale: float
    energy_scale: float
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        hbar, m = self.constants.hbar, self.constants.mass
        if not math.isclose(self.energy_scale * self.time_scale, hbar, rel_tol=1e-12):
            raise ValueError("energy_scale * time_scale must equal hbar")
        if not math.isclose(
            self.length_scale**2, hbar * self.time_scale / m, rel_tol=1e-12
        ):
            raise ValueError("length_scale**2 must equal hbar * time_scale / mass")

    @classmethod
    def from_angular_frequency(cls, omega: float, constants: PhysicalConstants | None = None):
        """Harmonic-oscillator units of a trap with angular frequency omega."""
        if omega <= 0:
            raise ValueError("omega must be positive")
        c = constants or PhysicalConstants()
        t = 1.0 / omega
        return cls(math.sqrt(c.hbar * t / c.mass), t, c.hbar * omega, c)

    @classmethod
    def from_length(cls, length: float, constants: PhysicalConstants | None = None):
        if length <= 0:
            raise ValueError("length must be positive")
        c = constants or PhysicalConstants()
        t = c.mass * length**2 / c.hbar
        return cls(length, t, c.hbar / t, c)

    @classmethod
    def from_energy(cls, energy: float, constants: PhysicalConstants | None = None):
        """Units with the given energy scale, e.g. the lattice recoil energy."""
        if energy <= 0:
            raise ValueError("energy must be positive")
        c = constants or PhysicalConstants()
        t = c.hbar / energy
        return cls(math.sqrt(c.hbar * t / c.mass), t, energy, c)

    def scale_for(self, unit: str) -> float:
        try:
            return {
                "m": self.length_scale,
                "s": self.time_scale,
                "J": self.energy_scale,
            }[unit]
        except KeyError:
            raise UnitError(
                f"unit {unit!r} is not one of the supported scales ('m', 's', 'J')"
            ) from None


def to_dimensionless(value: float, unit: str, units: TrapUnits) -> float:
    """Express an SI quantity in the reduced units.

    ``unit`` names the SI dimension carried by ``value``: 'm', 's' or 'J'.
    Anything else raises :class:`UnitError`.
    """
    return value / units.scale_for(unit)


def from_dimensionless(value: float, unit: str, units: TrapUnits) -> float:
    """Inverse of :func:`to_dimensionless`."""
    return value * units.scale_for(unit)
