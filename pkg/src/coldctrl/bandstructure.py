"""Lattice depth to Hubbard parameters via bands and Wannier functions.

The single-particle problem in one lattice direction is V sin^2(pi x / a) in
recoil units; plane-wave diagonalization gives the lowest band and its Bloch
states, a phase-aligned Bloch superposition gives the (real, even,
exponentially localized) Wannier function.  The tunneling J is the nearest-
neighbor Fourier coefficient of the band, the on-site U combines the Wannier
quartic integrals of all three directions, with the two transverse lattices
frozen at their static depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .pulse import ControlField
from .units import PhysicalConstants

TRANSVERSE_DEPTH = 20.0  # E_r, both confining lattices during the ramp
MODEL_VALIDITY_MIN_DEPTH = 3.0  # E_r; single-band picture degrades below
TABLE_DEPTH_MAX = 80.0  # E_r, covers the freeze ramp
DEFAULT_N_PLANEWAVES = 21
DEFAULT_N_Q = 64
WANNIER_PERIODS = 11
WANNIER_SAMPLES_PER_PERIOD = 64


@dataclass(frozen=True)
class BandSolution:
    """Lowest band and Wannier function at one lattice depth."""

    depth: float  # E_r
    quasimomenta: np.ndarray  # 1/m, first Brillouin zone
    lowest_band_energies: np.ndarray  # E_r
    wannier_x: np.ndarray  # m, sample positions over several periods
    wannier: np.ndarray  # normalized, real

    @property
    def bandwidth(self) -> float:
        return float(np.max(self.lowest_band_energies) - np.min(self.lowest_band_energies))


@dataclass(frozen=True)
class HubbardParams:
    """Tunneling and on-site interaction, joules, at one axial depth."""

    J: float
    U: float
    depth: float

    def __post_init__(self):
        if self.J <= 0 or self.U <= 0:
            raise ValueError("J and U must be positive in the single-band regime")


def _band_eigensystem(depth: float, n_planewaves: int, q_frac: np.ndarray):
    """Lowest-band energies (E_r) and plane-wave coefficients on a q grid.

    q_frac is q a / pi in [-1, 1).  Matrix: diagonal (q_frac + 2 l)^2 + V/2,
    off-diagonal -V/4 between neighboring reciprocal vectors.
    """
    lmax = n_planewaves // 2
    ls = np.arange(-lmax, lmax + 1)
    energies = np.empty(q_frac.size)
    coeffs = np.empty((q_frac.size, n_planewaves))
    off = -0.25 * depth * np.ones(n_planewaves - 1)
    for i, qf in enumerate(q_frac):
        diag = (qf + 2.0 * ls) ** 2 + 0.5 * depth
        h = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
        vals, vecs = np.linalg.eigh(h)
        energies[i] = vals[0]
        coeffs[i] = vecs[:, 0]
    return ls, energies, coeffs


def solve_band(
    depth: float,
    n_planewaves: int = DEFAULT_N_PLANEWAVES,
    n_q: int = DEFAULT_N_Q,
    constants: PhysicalConstants | None = None,
) -> BandSolution:
    """Diagonalize the cosine lattice and build the site-0 Wannier function."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    if n_planewaves < 21 or n_planewaves % 2 == 0:
        raise ValueError("n_planewaves must be odd and at least 21")
    c = constants or PhysicalConstants()
    a = c.a_lat
    q_frac = -1.0 + 2.0 * np.arange(n_q) / n_q
    ls, energies, coeffs = _band_eigensystem(depth, n_planewaves, q_frac)

    # fix Bloch phases so phi_q(0) = sum_l c_l is real positive, making the
    # Bloch superposition the standard real symmetric Wannier function
    s = coeffs.sum(axis=1)
    coeffs = coeffs * np.sign(s)[:, None]

    half = WANNIER_PERIODS / 2.0
    x = np.linspace(-half * a, half * a, WANNIER_PERIODS * WANNIER_SAMPLES_PER_PERIOD,
                    endpoint=False)
    # w(x) = (1/N_q) sum_q sum_l c_l(q) exp(i (q + 2 pi l / a) x)
    kx = (math.pi / a) * (q_frac[:, None] + 2.0 * ls[None, :])  # (n_q, n_pw)
    phases = np.exp(1j * kx.reshape(-1, 1) * x[None, :])
    w = (coeffs.reshape(-1, 1) * phases).sum(axis=0)
    if depth > 0:
        # degenerate band edges only occur in the exactly-free case
        assert np.max(np.abs(w.imag)) < 1e-9 * np.max(np.abs(w.real))
    w = w.real
    dx = x[1] - x[0]
    w = w / math.sqrt(np.sum(w**2) * dx)
    return BandSolution(depth, q_frac * math.pi / a, energies, x, w)


def tunneling_from_band(band: BandSolution) -> float:
    """Nearest-neighbor Fourier coefficient of the band, in E_r.

    A least-squares fit of eps(q) = eps0 - 2 J cos(q a) on the uniform q
    grid reduces to exactly this Fourier coefficient.
    """
    a = math.pi / abs(band.quasimomenta[0])
    return float(-np.mean(band.lowest_band_energies * np.cos(band.quasimomenta * a)))


def _tunneling_er(depth: float, n_planewaves: int, n_q: int) -> float:
    q_frac = -1.0 + 2.0 * np.arange(n_q) / n_q
    _, energies, _ = _band_eigensystem(depth, n_planewaves, q_frac)
    return float(-np.mean(energies * np.cos(math.pi * q_frac)))


def tunneling_tight_binding_asymptote(depth: float) -> float:
    """Deep-lattice closed form (4/sqrt(pi)) V^(3/4) exp(-2 sqrt(V)), E_r."""
    return 4.0 / math.sqrt(math.pi) * depth**0.75 * math.exp(-2.0 * math.sqrt(depth))


@lru_cache(maxsize=None)
def _quartic_integral(depth: float, n_planewaves: int, n_q: int, a_lat: float) -> float:
    """integral |w|^4 dx in 1/m for a lattice of the given depth."""
    band = solve_band(depth, n_planewaves, n_q, PhysicalConstants(a_lat=a_lat))
    dx = band.wannier_x[1] - band.wannier_x[0]
    return float(np.sum(band.wannier**4) * dx)


def hubbard_params(
    depth: float,
    transverse_depths: tuple[float, float] = (TRANSVERSE_DEPTH, TRANSVERSE_DEPTH),
    constants: PhysicalConstants | None = None,
    n_planewaves: int = DEFAULT_N_PLANEWAVES,
    n_q: int = DEFAULT_N_Q,
) -> HubbardParams:
    """J and U (joules) for an axial depth with frozen transverse lattices."""
    c = constants or PhysicalConstants()
    er = c.recoil_energy
    j = _tunneling_er(depth, n_planewaves, n_q) * er
    quartics = [_quartic_integral(depth, n_planewaves, n_q, c.a_lat)]
    for td in transverse_depths:
        quartics.append(_quartic_integral(td, n_planewaves, n_q, c.a_lat))
    u = c.g3d * quartics[0] * quartics[1] * quartics[2]
    return HubbardParams(J=j, U=u, depth=depth)


@dataclass(frozen=True)
class HubbardSchedule:
    """J(t), U(t) along a lattice-depth ramp, with a validity flag."""

    times: np.ndarray  # s
    J: np.ndarray  # joules
    U: np.ndarray  # joules
    depths: np.ndarray  # E_r
    below_validity: bool  # any depth under the single-band threshold

    def at(self, t):
        """Cubic interpolation of (J, U) at arbitrary times."""
        jf = CubicSpline(self.times, self.J)
        uf = CubicSpline(self.times, self.U)
        t = np.clip(np.asarray(t, dtype=float), self.times[0], self.times[-1])
        return jf(t), uf(t)

    def table(self) -> str:
        lines = ["# time_s depth_Er J_joule U_joule"]
        for row in zip(self.times, self.depths, self.J, self.U):
            lines.append(" ".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"


class _DepthTables:
    """Cubic (V -> J, U) interpolants over the model validity range."""

    def __init__(self, constants: PhysicalConstants, n_planewaves: int, n_q: int,
                 n_knots: int = 232):
        # 232 knots give exact thirds, so common endpoint depths (3, 14)
        # land on knots and interpolation is exact there
        self.depths = np.linspace(MODEL_VALIDITY_MIN_DEPTH, TABLE_DEPTH_MAX, n_knots)
        js, us = [], []
        for v in self.depths:
            p = hubbard_params(float(v), constants=constants,
                               n_planewaves=n_planewaves, n_q=n_q)
            js.append(p.J)
            us.append(p.U)
        self.j_spline = CubicSpline(self.depths, js)
        self.u_spline = CubicSpline(self.depths, us)


_TABLE_CACHE: dict = {}


def depth_tables(constants: PhysicalConstants | None = None,
                 n_planewaves: int = DEFAULT_N_PLANEWAVES,
                 n_q: int = DEFAULT_N_Q) -> _DepthTables:
    c = constants or PhysicalConstants()
    key = (c.a_lat, c.mass, c.a3d_scattering, n_planewaves, n_q)
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = _DepthTables(c, n_planewaves, n_q)
    return _TABLE_CACHE[key]


def ramp_to_schedule(field: ControlField,
                     constants: PhysicalConstants | None = None) -> HubbardSchedule:
    """Map a lattice-depth control field to J(t), U(t) time series.

    Depths below the single-band validity threshold are clamped to it for
    the lookup and flagged in the schedule rather than rejected.
    """
    tables = depth_tables(constants)
    v = np.asarray(field.values, dtype=float)
    below = bool(np.any(v < MODEL_VALIDITY_MIN_DEPTH))
    if np.any(v > TABLE_DEPTH_MAX):
        raise ValueError(f"depth above tabulated range {TABLE_DEPTH_MAX} E_r")
    vc = np.clip(v, MODEL_VALIDITY_MIN_DEPTH, TABLE_DEPTH_MAX)
    return HubbardSchedule(
        times=field.times.copy(),
        J=tables.j_spline(vc),
        U=tables.u_spline(vc),
        depths=v.copy(),
        below_validity=below,
    )
