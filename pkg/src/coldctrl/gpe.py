"""Mean-field engine for a 1D condensate in a displaced anharmonic trap.

The wavefunction lives on a uniform grid along the displacement direction y
and obeys

    i hbar d psi/dt = [ -hbar^2/(2m) d^2/dy^2 + V(y - lam(t)) + g1d N |psi|^2 ] psi

with unit-normalized psi and the atom number N multiplying the coupling.
Propagation is a Strang-split spectral kernel; stationary states come from
imaginary-time propagation (odd-parity projected for the first excited
state).  Internally everything is computed in harmonic-oscillator units of
the measured transverse frequency so grid spacings and steps are O(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .pulse import ControlField
from .units import PhysicalConstants, TrapUnits

CHIP_TRAP_FREQUENCY_HZ = 1770.0  # measured transverse level spacing
CHIP_LENGTH_UNIT = 172e-9  # meters; length unit of the potential fit
CHIP_ASPECT_RATIO = 200.0  # transverse-to-axial confinement ratio

DEFAULT_REAL_DT = 1e-7  # seconds
DEFAULT_IMAG_DT_SCHEDULE = (2e-6, 5e-7, 1e-7)  # annealed imaginary steps
DEFAULT_IMAG_TOL = 1e-13  # relative chemical-potential change per check
DEFAULT_MAX_IMAG_STEPS = 200_000


class ConvergenceError(RuntimeError):
    """Imaginary-time iteration failed to reach the requested tolerance."""


class EvolutionError(RuntimeError):
    """Real-time propagation produced a non-finite wavefunction."""


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform 1D grid; n_points a power of two for the spectral kernel."""

    y_min: float
    y_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 256 or self.n_points & (self.n_points - 1):
            raise ValueError("n_points must be a power of two, at least 256")
        if not self.y_max > self.y_min:
            raise ValueError("need y_max > y_min")

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.n_points

    @property
    def points(self) -> np.ndarray:
        return self.y_min + self.dy * np.arange(self.n_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.n_points, d=self.dy)


def default_grid(half_width: float = 12 * CHIP_LENGTH_UNIT, n_points: int = 1024) -> SpatialGrid:
    return SpatialGrid(-half_width, half_width, n_points)


@dataclass(frozen=True)
class ChipPotential:
    """Even polynomial well V(y) = p2 u^2 + p4 u^4 + p6 u^6, u = y - displacement."""

    p2: float
    p4: float
    p6: float
    displacement: float = 0.0

    def __post_init__(self):
        if self.p2 <= 0:
            raise ValueError("p2 must be positive")

    def __call__(self, y: np.ndarray) -> np.ndarray:
        u2 = (np.asarray(y) - self.displacement) ** 2
        return (self.p2 + (self.p4 + self.p6 * u2) * u2) * u2

    def displaced(self, displacement: float) -> "ChipPotential":
        return replace(self, displacement=displacement)

    def harmonic_angular_frequency(self, constants: PhysicalConstants) -> float:
        """Frequency of the quadratic part alone, sqrt(2 p2 / m)."""
        return math.sqrt(2.0 * self.p2 / constants.mass)


def chip_potential(constants: PhysicalConstants | None = None) -> ChipPotential:
    """The fitted chip-trap polynomial (coefficients per power of 172 nm)."""
    c = constants or PhysicalConstants()
    h = 2.0 * math.pi * c.hbar
    r0 = CHIP_LENGTH_UNIT
    return ChipPotential(p2=h * 310.0 / r0**2, p4=h * 13.6 / r0**4, p6=h * 0.0634 / r0**6)


def chip_units(constants: PhysicalConstants | None = None) -> TrapUnits:
    return TrapUnits.from_angular_frequency(
        2.0 * math.pi * CHIP_TRAP_FREQUENCY_HZ, constants or PhysicalConstants()
    )


@dataclass(frozen=True)
class MeanFieldState:
    """Unit-normalized complex wavefunction with its physical parameters."""

    grid: SpatialGrid
    psi: np.ndarray
    atom_number: float
    g1d: float

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape != (self.grid.n_points,):
            raise ValueError("psi must match the grid")
        nrm = float(np.sum(np.abs(psi) ** 2) * self.grid.dy)
        if abs(nrm - 1.0) > 1e-10:
            raise ValueError(f"psi must be unit-normalized, got norm^2 = {nrm}")
        object.__setattr__(self, "psi", psi)
        self.psi.setflags(write=False)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def momentum_density(self):
        """(k, |psi_tilde(k)|^2) with unit-normalized momentum wavefunction."""
        k = np.fft.fftshift(self.grid.wavenumbers)
        psi_k = np.fft.fftshift(np.fft.fft(self.psi)) * self.grid.dy / math.sqrt(2 * math.pi)
        return k, np.abs(psi_k) ** 2


@dataclass(frozen=True)
class StationaryState:
    state: MeanFieldState
    mu: float  # chemical potential, joules
    iterations: int
    residual: float


@dataclass(frozen=True)
class QuasiCondensateGeometry:
    """Elongated-cloud geometry entering the effective 1D coupling.

    ``alpha`` parametrizes the axial Thomas-Fermi-like profile and is the
    positive root of  alpha^3 (alpha+5)^2 = (15 N a_perp a_s)^2 / a_x^4
    for the bound atom number.
    """

    omega_x: float
    omega_y: float
    omega_z: float
    alpha: float
    atom_number: float
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        if min(self.omega_x, self.omega_y, self.omega_z) <= 0:
            raise ValueError("all trap frequencies must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        c = _alpha_equation_constant(
            self.atom_number, self.omega_x, self.omega_y, self.omega_z, self.constants
        )
        resid = abs(self.alpha**3 * (self.alpha + 5.0) ** 2 - c)
        if resid > 1e-9 * c:
            raise ValueError("alpha is not a root of the profile equation for this N")

    @property
    def omega_perp(self) -> float:
        return math.sqrt(self.omega_y * self.omega_z)

    def _osc_length(self, omega: float) -> float:
        return math.sqrt(self.constants.hbar / (self.constants.mass * omega))

    @property
    def a_x(self) -> float:
        return self._osc_length(self.omega_x)

    @property
    def a_z(self) -> float:
        return self._osc_length(self.omega_z)

    @property
    def a_perp(self) -> float:
        return self._osc_length(self.omega_perp)

    @property
    def axial_half_length(self) -> float:
        return self.a_x**2 * math.sqrt(self.alpha) / self.a_perp


def _alpha_equation_constant(n_atoms, omega_x, omega_y, omega_z, constants) -> float:
    hbar, m = constants.hbar, constants.mass
    a_perp = math.sqrt(hbar / (m * math.sqrt(omega_y * omega_z)))
    a_x = math.sqrt(hbar / (m * omega_x))
    return (15.0 * n_atoms * a_perp * constants.a3d_scattering) ** 2 / a_x**4


def solve_alpha(n_atoms, omega_x, omega_y, omega_z, constants=None) -> float:
    """Positive root of alpha^3 (alpha+5)^2 = c(N); monotone, so unique."""
    if n_atoms <= 0:
        raise ValueError("atom number must be positive")
    c_ = constants or PhysicalConstants()
    c = _alpha_equation_constant(n_atoms, omega_x, omega_y, omega_z, c_)
    if c == 0.0:
        return 0.0
    hi = max(10.0, c**0.2 + 10.0)
    alpha = brentq(lambda a: a**3 * (a + 5.0) ** 2 - c, 0.0, hi, xtol=1e-300, rtol=8.9e-16)
    resid = abs(alpha**3 * (alpha + 5.0) ** 2 - c)
    if resid > 1e-10 * c:
        raise ConvergenceError(f"alpha root residual {resid:.3e} exceeds 1e-10 of {c:.3e}")
    return alpha


def default_geometry(n_atoms, constants=None) -> QuasiCondensateGeometry:
    """Geometry assumptions for the chip cloud.

    omega_y comes from the quadratic part of the fitted potential.  The z
    confinement is not independently known and is taken equal to the
    measured 1.77 kHz level spacing (the transverse trap is nearly round);
    the axial frequency follows from the ~200 aspect ratio.  Both are
    assumptions, overridable in the run configuration.
    """
    c = constants or PhysicalConstants()
    omega_y = chip_potential(c).harmonic_angular_frequency(c)
    omega_z = 2.0 * math.pi * CHIP_TRAP_FREQUENCY_HZ
    omega_x = omega_y / CHIP_ASPECT_RATIO
    alpha = solve_alpha(n_atoms, omega_x, omega_y, omega_z, c)
    return QuasiCondensateGeometry(omega_x, omega_y, omega_z, alpha, n_atoms, c)


def coupling_g1d(n_atoms, geometry: QuasiCondensateGeometry) -> float:
    """Effective 1D coupling (joule meters) for the displacement direction.

    g1d = g3d * I_x / (sqrt(2 pi) a_z) with the axial-profile overlap
    I_x = alpha^2 L (alpha^2 + 9 alpha + 21) / (315 (a_s N)^2).
    """
    if n_atoms != geometry.atom_number:
        raise ValueError("geometry was solved for a different atom number")
    c = geometry.constants
    a = geometry.alpha
    ix = (
        a**2
        * geometry.axial_half_length
        * (a**2 + 9.0 * a + 21.0)
        / (315.0 * (c.a3d_scattering * n_atoms) ** 2)
    )
    return c.g3d * ix / (math.sqrt(2.0 * math.pi) * geometry.a_z)


def g1d_for_atoms(n_atoms, constants=None) -> float:
    return coupling_g1d(n_atoms, default_geometry(n_atoms, constants))


def axial_density(x, geometry: QuasiCondensateGeometry) -> np.ndarray:
    """Axial line density n1(x) in atoms per meter; zero outside the cloud."""
    a, L = geometry.alpha, geometry.axial_half_length
    a_s = geometry.constants.a3d_scattering
    x = np.asarray(x, dtype=float)
    prof = a * (1.0 - (x / L) ** 2)
    n1 = np.where(np.abs(x) <= L, prof * (prof + 4.0) / (16.0 * a_s), 0.0)
    return n1


# ---------------------------------------------------------------------------
# reduced-unit workspace shared by the propagators


class _Workspace:
    def __init__(self, grid: SpatialGrid, potential: ChipPotential, n_atoms, g1d,
                 constants: PhysicalConstants | None = None):
        c = constants or PhysicalConstants()
        u = chip_units(c)
        self.units = u
        self.grid = grid
        self.y = grid.points / u.length_scale
        self.dy = grid.dy / u.length_scale
        k = 2.0 * math.pi * np.fft.fftfreq(grid.n_points, d=self.dy)
        self.half_k2 = 0.5 * k * k
        self.k = k
        ls, es = u.length_scale, u.energy_scale
        self.c2 = potential.p2 * ls**2 / es
        self.c4 = potential.p4 * ls**4 / es
        self.c6 = potential.p6 * ls**6 / es
        self.disp0 = potential.displacement / ls
        self.g = g1d * n_atoms / (es * ls)

    def potential_at(self, displacement: float) -> np.ndarray:
        u2 = (self.y - displacement) ** 2
        return (self.c2 + (self.c4 + self.c6 * u2) * u2) * u2

    def mu_and_energy(self, psi: np.ndarray, v: np.ndarray):
        dens = psi.real**2 + psi.imag**2
        dpsi = np.fft.ifft(1j * self.k * np.fft.fft(psi))
        kin = np.sum(np.abs(dpsi) ** 2) * 0.5 * self.dy
        pot = np.sum(v * dens) * self.dy
        inter = 0.5 * self.g * np.sum(dens * dens) * self.dy
        return kin + pot + 2.0 * inter, kin + pot + inter

    def normalize(self, psi: np.ndarray) -> np.ndarray:
        return psi / math.sqrt(np.sum(psi.real**2 + psi.imag**2) * self.dy)


def _parity_reverse(psi: np.ndarray) -> np.ndarray:
    # index reversal modulo n maps y_j -> -y_j on the periodic grid
    return np.roll(psi[::-1], 1)


def _imaginary_time(ws: _Workspace, parity: str | None, dt_schedule, tol, max_steps):
    y = ws.y
    if parity == "odd":
        psi = (y * np.exp(-0.5 * y * y)).astype(complex)
    else:
        psi = np.exp(-0.5 * y * y).astype(complex)
    psi = ws.normalize(psi)
    v0 = ws.potential_at(ws.disp0)
    mu_prev = np.inf
    total_iters = 0
    mu = np.inf
    for dt_si in dt_schedule:
        dt = dt_si / ws.units.time_scale
        ek = np.exp(-ws.half_k2 * dt)
        converged = False
        for _ in range(max_steps):
            total_iters += 1
            dens = psi.real**2 + psi.imag**2
            psi = psi * np.exp(-0.5 * dt * (v0 + ws.g * dens))
            psi = np.fft.ifft(ek * np.fft.fft(psi))
            dens = psi.real**2 + psi.imag**2
            psi = psi * np.exp(-0.5 * dt * (v0 + ws.g * dens))
            if parity == "odd":
                psi = 0.5 * (psi - _parity_reverse(psi))
            psi = ws.normalize(psi)
            if total_iters % 10 == 0:
                mu, _ = ws.mu_and_energy(psi, v0)
                if abs(mu - mu_prev) < tol * abs(mu):
                    converged = True
                    break
                mu_prev = mu
        if not converged:
            raise ConvergenceError(
                f"imaginary time stalled at dt={dt_si}: relative mu change "
                f"{abs(mu - mu_prev) / abs(mu):.3e} after {max_steps} steps"
            )
    return psi, mu, total_iters, abs(mu - mu_prev) / abs(mu)


def _stationary(grid, potential, n_atoms, g1d, parity, constants,
                dt_schedule=DEFAULT_IMAG_DT_SCHEDULE, tol=DEFAULT_IMAG_TOL,
                max_steps=DEFAULT_MAX_IMAG_STEPS) -> StationaryState:
    ws = _Workspace(grid, potential, n_atoms, g1d, constants)
    psi, mu_hat, iters, resid = _imaginary_time(ws, parity, dt_schedule, tol, max_steps)
    # fix the global phase so the wavefunction is real positive at its peak
    peak = np.argmax(np.abs(psi))
    psi = psi * np.exp(-1j * np.angle(psi[peak]))
    psi_si = psi / math.sqrt(ws.units.length_scale)
    state = MeanFieldState(grid, psi_si, n_atoms, g1d)
    return StationaryState(state, mu_hat * ws.units.energy_scale, iters, resid)


def ground_state(potential, n_atoms, g1d, grid=None, constants=None, **kw) -> StationaryState:
    """Imaginary-time ground state; reports the chemical potential."""
    return _stationary(grid or default_grid(), potential, n_atoms, g1d, None, constants, **kw)


def first_excited_state(potential, n_atoms, g1d, grid=None, constants=None, **kw) -> StationaryState:
    """Lowest odd-parity stationary state (one node at the trap center).

    Valid only for an undisplaced potential: the parity projection assumes
    the well is symmetric about the grid center.
    """
    if potential.displacement != 0.0:
        raise ValueError("parity projection requires an undisplaced, symmetric potential")
    return _stationary(grid or default_grid(), potential, n_atoms, g1d, "odd", constants, **kw)


@dataclass(frozen=True)
class Trajectory:
    """Sampled real-time evolution history."""

    times: np.ndarray  # seconds, sampled instants (includes t=0 and t=T)
    psis: np.ndarray  # (n_samples, n_points) complex, SI normalization
    final_state: MeanFieldState
    norm_drift: float
    n_steps: int

    def densities(self) -> np.ndarray:
        return np.abs(self.psis) ** 2

    def momentum_densities(self, grid: SpatialGrid):
        k = np.fft.fftshift(grid.wavenumbers)
        fk = np.fft.fftshift(np.fft.fft(self.psis, axis=1), axes=1)
        fk *= grid.dy / math.sqrt(2 * math.pi)
        return k, np.abs(fk) ** 2


def evolve(
    state: MeanFieldState,
    lam_field: ControlField,
    dt: float = DEFAULT_REAL_DT,
    potential: ChipPotential | None = None,
    total_time: float | None = None,
    sample_stride: int = 0,
    constants: PhysicalConstants | None = None,
) -> Trajectory:
    """Propagate under the displaced trap along a control trajectory.

    Strang splitting with the midpoint displacement per step.  ``dt`` must
    resolve the trap frequency (dt <= 1/(50 nu)).  ``sample_stride`` > 0
    stores every stride-th wavefunction; 0 stores only endpoints.
    """
    c = constants or PhysicalConstants()
    pot = potential or chip_potential(c)
    nu_trap = max(
        pot.harmonic_angular_frequency(c) / (2 * math.pi), CHIP_TRAP_FREQUENCY_HZ
    )
    if dt > 1.0 / (50.0 * nu_trap):
        raise ValueError(f"dt={dt} too coarse: need dt <= {1.0 / (50 * nu_trap):.3e} s")
    horizon = lam_field.duration if total_time is None else total_time
    if horizon > lam_field.duration * (1 + 1e-12):
        raise ValueError("control field does not cover the requested horizon")

    ws = _Workspace(state.grid, pot, state.atom_number, state.g1d, c)
    ts = ws.units.time_scale
    n_steps = max(1, int(round(horizon / dt)))
    dth = (horizon / n_steps) / ts
    t_mid = (np.arange(n_steps) + 0.5) * (horizon / n_steps)
    lam_mid = np.asarray(lam_field(t_mid), dtype=float) / ws.units.length_scale

    psi = state.psi * math.sqrt(ws.units.length_scale)
    norm0 = np.sum(psi.real**2 + psi.imag**2) * ws.dy
    ek = np.exp(-1j * ws.half_k2 * dth)

    samples = [psi.copy()]
    sample_times = [0.0]
    for i in range(n_steps):
        v = ws.potential_at(lam_mid[i])
        dens = psi.real**2 + psi.imag**2
        psi = psi * np.exp(-0.5j * dth * (v + ws.g * dens))
        psi = np.fft.ifft(ek * np.fft.fft(psi))
        dens = psi.real**2 + psi.imag**2
        psi = psi * np.exp(-0.5j * dth * (v + ws.g * dens))
        if not np.isfinite(psi[0]) or (i % 64 == 0 and not np.all(np.isfinite(psi))):
            raise EvolutionError(f"non-finite wavefunction at step {i + 1}/{n_steps}")
        if sample_stride and (i + 1) % sample_stride == 0 and i + 1 < n_steps:
            samples.append(psi.copy())
            sample_times.append((i + 1) * horizon / n_steps)
    if not np.all(np.isfinite(psi)):
        raise EvolutionError(f"non-finite wavefunction at step {n_steps}/{n_steps}")
    samples.append(psi.copy())
    sample_times.append(horizon)

    norm1 = np.sum(psi.real**2 + psi.imag**2) * ws.dy
    drift = abs(norm1 - norm0)
    psi_final = ws.normalize(psi) / math.sqrt(ws.units.length_scale)
    final = MeanFieldState(state.grid, psi_final, state.atom_number, state.g1d)
    psis = np.array(samples) / math.sqrt(ws.units.length_scale)
    return Trajectory(np.array(sample_times), psis, final, drift, n_steps)


def infidelity(psi_final: MeanFieldState, target: MeanFieldState) -> float:
    """1 - |<target|psi>|^2, clipped to [0, 1] against rounding."""
    if psi_final.grid != target.grid:
        raise ValueError("states live on different grids")
    ov = np.sum(np.conj(target.psi) * psi_final.psi) * psi_final.grid.dy
    return float(min(1.0, max(0.0, 1.0 - abs(ov) ** 2)))


def gp_energy(state: MeanFieldState, potential: ChipPotential,
              constants: PhysicalConstants | None = None) -> float:
    """Total mean-field energy per atom, joules."""
    ws = _Workspace(state.grid, potential, state.atom_number, state.g1d, constants)
    psi = state.psi * math.sqrt(ws.units.length_scale)
    _, e = ws.mu_and_energy(psi, ws.potential_at(ws.disp0))
    return e * ws.units.energy_scale


def chemical_potential(state: MeanFieldState, potential: ChipPotential,
                       constants: PhysicalConstants | None = None) -> float:
    ws = _Workspace(state.grid, potential, state.atom_number, state.g1d, constants)
    psi = state.psi * math.sqrt(ws.units.length_scale)
    mu, _ = ws.mu_and_energy(psi, ws.potential_at(ws.disp0))
    return mu * ws.units.energy_scale
