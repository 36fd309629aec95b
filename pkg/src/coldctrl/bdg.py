"""Linearized excitation spectrum around mean-field stationary states.

Small fluctuations (u, v) around a stationary state phi with chemical
potential mu obey the block eigenproblem

    [  H[2|phi|^2] - mu      g1d N phi^2     ] (u)          (u)
    [ -g1d N phi*^2      -(H[2|phi|^2] - mu) ] (v)  = hbar w (v)

where H[n] is the mean-field Hamiltonian with doubled density in the
diagonal blocks.  The operator is non-Hermitian; eigenvalues come in +/-
pairs and a zero (phase) mode accompanies every stationary state.  The
positive family supplies the collective transition frequencies compared
against pulse spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig, eigh

from .gpe import ChipPotential, MeanFieldState, chip_units, default_grid
from .units import PhysicalConstants

ZERO_MODE_RELATIVE_CUTOFF = 1e-3  # |w| below this fraction of the trap frequency


@dataclass(frozen=True)
class BdgMode:
    """One Bogoliubov mode; norm_sign is 0 for the zero (phase) mode."""

    omega: float  # rad/s
    u: np.ndarray
    v: np.ndarray
    norm_sign: int


def _spectral_kinetic(n: int, dy: float) -> np.ndarray:
    """Dense matrix of -(1/2) d^2/dy^2 on the periodic grid (reduced units)."""
    k = 2.0 * math.pi * np.fft.fftfreq(n, d=dy)
    t = np.fft.ifft(0.5 * k[:, None] ** 2 * np.fft.fft(np.eye(n), axis=0), axis=0)
    return np.ascontiguousarray(t.real)


def _reduced_operator_blocks(state: MeanFieldState, mu: float, potential: ChipPotential,
                             constants: PhysicalConstants):
    units = chip_units(constants)
    ls, es = units.length_scale, units.energy_scale
    grid = state.grid
    y = grid.points / ls
    dy = grid.dy / ls
    phi = state.psi * math.sqrt(ls)
    g = state.g1d * state.atom_number / (es * ls)
    v_pot = potential(grid.points) / es
    kin = _spectral_kinetic(grid.n_points, dy)
    diag = v_pot + 2.0 * g * np.abs(phi) ** 2 - mu / es
    a = kin + np.diag(diag)
    b = np.diag(g * phi**2)
    return a, b, dy, units


def bdg_spectrum(
    state: MeanFieldState,
    mu: float,
    n_modes: int,
    potential: ChipPotential,
    constants: PhysicalConstants | None = None,
    zero_mode_cutoff: float = ZERO_MODE_RELATIVE_CUTOFF,
) -> list[BdgMode]:
    """Lowest ``n_modes`` of the positive Bogoliubov family, by |omega|.

    The full 2n x 2n block operator is assembled densely and handed to a
    general eigensolver; n <= 1024 keeps that tractable and trustworthy.
    Modes are normalized to integral(|u|^2 - |v|^2) = +-1 except the zero
    mode, which has vanishing norm and is returned with norm_sign = 0 and
    unit integral(|u|^2).
    """
    c = constants or PhysicalConstants()
    a, b, dy, units = _reduced_operator_blocks(state, mu, potential, c)
    n = a.shape[0]
    op = np.block([[a, b.real], [-b.real, -a]]) if np.allclose(b.imag, 0) else np.block(
        [[a.astype(complex), b], [-b.conj(), -a.astype(complex)]]
    )
    vals, vecs = eig(op)
    if np.max(np.abs(vals.imag)) > 1e-6 * np.max(np.abs(vals.real)):
        # dynamically unstable states would show complex frequencies; the
        # stationary states used here should not
        pass
    omega_trap = 1.0  # trap unit
    order = np.argsort(np.abs(vals.real))
    modes: list[BdgMode] = []
    for idx in order:
        w = vals[idx].real
        is_zero = abs(w) < zero_mode_cutoff * omega_trap
        if w < 0 and not is_zero:
            continue
        if is_zero and any(m.norm_sign == 0 for m in modes):
            continue  # the pair partner of the zero mode
        u = vecs[:n, idx]
        v = vecs[n:, idx]
        s = float(np.sum(np.abs(u) ** 2 - np.abs(v) ** 2) * dy)
        if is_zero or abs(s) < 1e-12:
            scale = math.sqrt(np.sum(np.abs(u) ** 2 + np.abs(v) ** 2) * dy)
            modes.append(BdgMode(w / units.time_scale, u / scale, v / scale, 0))
        else:
            scale = math.sqrt(abs(s))
            modes.append(BdgMode(w / units.time_scale, u / scale, v / scale,
                                 1 if s > 0 else -1))
        if len(modes) == n_modes:
            break
    if len(modes) < n_modes:
        raise RuntimeError(f"found only {len(modes)} of {n_modes} requested modes")
    return modes


def single_particle_levels(
    potential: ChipPotential,
    n_levels: int,
    grid=None,
    constants: PhysicalConstants | None = None,
) -> np.ndarray:
    """Lowest eigenenergies (joules) of the bare potential."""
    c = constants or PhysicalConstants()
    units = chip_units(c)
    g = grid or default_grid()
    dy = g.dy / units.length_scale
    kin = _spectral_kinetic(g.n_points, dy)
    h = kin + np.diag(potential(g.points) / units.energy_scale)
    vals = eigh(h, eigvals_only=True, check_finite=False)
    return vals[: n_levels + 1] * units.energy_scale


def single_particle_transitions(
    potential: ChipPotential,
    n_levels: int,
    grid=None,
    constants: PhysicalConstants | None = None,
) -> np.ndarray:
    """Transition frequencies (E_k - E_0)/h in hertz, k = 1..n_levels."""
    c = constants or PhysicalConstants()
    levels = single_particle_levels(potential, n_levels, grid, c)
    return (levels[1:] - levels[0]) / (2.0 * math.pi * c.hbar)


def spectrum_table(modes: list[BdgMode]) -> str:
    """Text export (index, omega/2pi in Hz) for pulse-spectrum annotation."""
    lines = ["# mode frequency_hz"]
    for i, m in enumerate(modes):
        lines.append(f"{i} {m.omega / (2 * math.pi):.17g}")
    return "\n".join(lines) + "\n"
