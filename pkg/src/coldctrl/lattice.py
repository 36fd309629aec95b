"""Trapped Bose-Hubbard chain: exact diagonalization path and observables.

Small systems are handled in the fixed-atom-number occupancy basis with
sparse matrices; the matrix-product path for larger chains lives in
:mod:`coldctrl.mps`.  Observables needed by the figure of merit (site
densities, their variances, odd-occupancy probabilities) are diagonal in
the occupancy basis, which keeps the exact path cheap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, expm_multiply

from .bandstructure import HubbardParams, HubbardSchedule
from .units import PhysicalConstants

ED_DIMENSION_LIMIT = 2_000_000
TRAP_FREQUENCY_HZ = 63.5  # measured harmonic confinement along the chain
DEFAULT_N_MAX = 4


@dataclass(frozen=True)
class BoseHubbardModel:
    """Chain geometry: L sites, N atoms, per-site cutoff, harmonic trap."""

    n_sites: int
    n_atoms: int
    n_max: int = DEFAULT_N_MAX
    omega: float = 2.0 * math.pi * TRAP_FREQUENCY_HZ
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        if not (1 <= self.n_atoms <= self.n_sites * self.n_max):
            raise ValueError("need 1 <= N <= L * n_max")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")

    @property
    def center(self) -> float:
        """Trap center (L - 1) / 2; between sites for even L."""
        return (self.n_sites - 1) / 2.0

    def site_energies(self) -> np.ndarray:
        """Harmonic on-site energies (joules)."""
        i = np.arange(self.n_sites)
        c = self.constants
        return 0.5 * c.mass * self.omega**2 * c.a_lat**2 * (i - self.center) ** 2

    def central_window(self, halfwidth: float = 4.0) -> np.ndarray:
        """Site indices within ``halfwidth`` of the trap center.

        For even L and the default halfwidth this is the central eight
        sites; the window is exposed because the averaging region of the
        figure of merit is a convention.
        """
        i = np.arange(self.n_sites)
        return i[np.abs(i - self.center) < halfwidth]

    @property
    def central_site(self) -> int:
        return (self.n_sites - 1) // 2


@lru_cache(maxsize=32)
def _basis_occupations(n_sites: int, n_atoms: int, n_max: int) -> np.ndarray:
    """All occupancy tuples of N atoms on L sites with per-site cutoff."""
    rows = []
    occ = np.zeros(n_sites, dtype=np.int8)

    def fill(site: int, remaining: int):
        if site == n_sites - 1:
            if remaining <= n_max:
                occ[site] = remaining
                rows.append(occ.copy())
            return
        hi = min(n_max, remaining)
        lo = max(0, remaining - (n_sites - site - 1) * n_max)
        for n in range(hi, lo - 1, -1):
            occ[site] = n
            fill(site + 1, remaining - n)
        occ[site] = 0

    fill(0, n_atoms)
    return np.array(rows, dtype=np.int8)


class FockBasis:
    """Fixed-N occupancy basis with an index lookup."""

    def __init__(self, model: BoseHubbardModel):
        self.model = model
        self.occupations = _basis_occupations(model.n_sites, model.n_atoms, model.n_max)
        self.dim = self.occupations.shape[0]
        self._index = {bytes(row.tobytes()): i for i, row in enumerate(self.occupations)}

    def index_of(self, occ) -> int:
        return self._index[np.asarray(occ, dtype=np.int8).tobytes()]


@dataclass
class FockState:
    """Normalized amplitude vector over a :class:`FockBasis`."""

    basis: FockBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.shape != (self.basis.dim,):
            raise ValueError("amplitude vector does not match the basis")
        nrm = float(np.sum(np.abs(amp) ** 2))
        if abs(nrm - 1.0) > 1e-10:
            raise ValueError(f"state must be normalized, got norm^2 = {nrm}")
        self.amplitudes = amp


@dataclass(frozen=True)
class ParityProfile:
    """Probability of odd site occupancy, per site."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
            raise ValueError("parities must lie in [0, 1]")
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))

    @property
    def maximum(self) -> float:
        return float(np.max(self.values))

    def central_dip(self, center: float, margin: float = 0.05) -> bool:
        """True when the center parity sits below the profile peak by margin."""
        i = int(round(center))
        lo, hi = max(0, i - 1), min(len(self.values), i + 2)
        center_val = float(np.min(self.values[lo:hi]))
        return center_val < self.maximum - margin


class _EdOperators:
    """Depth-independent sparse pieces: H = J * hop + U * diag_int + diag_trap."""

    def __init__(self, basis: FockBasis):
        model = basis.model
        occ = basis.occupations.astype(np.int64)
        self.diag_int = 0.5 * np.sum(occ * (occ - 1), axis=1).astype(float)
        self.diag_trap = occ @ model.site_energies()
        self.occ = occ

        rows, cols, vals = [], [], []
        for j in range(basis.dim):
            state = occ[j]
            for i in range(model.n_sites - 1):
                # b_i^dag b_{i+1}: move one atom left
                if state[i + 1] > 0 and state[i] < model.n_max:
                    new = state.copy()
                    new[i] += 1
                    new[i + 1] -= 1
                    k = basis.index_of(new)
                    amp = math.sqrt((state[i] + 1) * state[i + 1])
                    rows.append(k)
                    cols.append(j)
                    vals.append(amp)
        up = sp.csr_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim))
        self.hop = -(up + up.T)

    def hamiltonian(self, params: HubbardParams) -> sp.csr_matrix:
        h = params.J * self.hop
        return h + sp.diags(params.U * self.diag_int + self.diag_trap)


@lru_cache(maxsize=8)
def _cached_operators(n_sites, n_atoms, n_max, omega, a_lat, mass):
    c = PhysicalConstants(mass=mass, a_lat=a_lat)
    model = BoseHubbardModel(n_sites, n_atoms, n_max, omega, c)
    basis = FockBasis(model)
    return basis, _EdOperators(basis)


def ed_operators(model: BoseHubbardModel):
    return _cached_operators(
        model.n_sites, model.n_atoms, model.n_max, model.omega,
        model.constants.a_lat, model.constants.mass,
    )


def ground_state_ed(model: BoseHubbardModel, params: HubbardParams) -> FockState:
    """Sparse lowest eigenvector in the fixed-N sector."""
    basis, ops = ed_operators(model)
    if basis.dim > ED_DIMENSION_LIMIT:
        raise ValueError(
            f"basis dimension {basis.dim} exceeds the exact-diagonalization "
            "limit; use the matrix-product path (coldctrl.mps) instead"
        )
    h = ops.hamiltonian(params)
    # SI magnitudes are ~1e-31 J; solve a rescaled O(1) problem so the
    # eigensolver tolerances are meaningful
    scale = max(params.U, params.J, float(np.max(ops.diag_trap, initial=0.0)) or params.U)
    hs = h / scale
    if basis.dim <= 1500:
        vals, vecs = np.linalg.eigh(hs.toarray())
        vec, energy = vecs[:, 0], vals[0]
    else:
        vals, vecs = eigsh(hs, k=1, which="SA", tol=1e-14, maxiter=20000,
                           ncv=min(basis.dim, 48))
        vec, energy = vecs[:, 0], vals[0]
    vec = vec / np.linalg.norm(vec)
    resid = np.linalg.norm(hs @ vec - energy * vec)
    if resid > 1e-10 * max(abs(energy), 1e-3):
        raise RuntimeError(f"eigensolver residual {resid:.2e} too large")
    return FockState(basis, vec)


@dataclass
class LatticeTrajectory:
    """Observable history of a lattice ramp (shared by ED and MPS paths)."""

    times: np.ndarray  # s, sampled instants
    n_mean: np.ndarray  # (n_samples, L)
    n_sq: np.ndarray  # (n_samples, L)
    parity: np.ndarray  # (n_samples, L)
    final_state: object
    norm_drift: float
    truncation_error: float
    truncation_exceeded: bool
    below_validity: bool

    def final_variances(self) -> np.ndarray:
        return self.n_sq[-1] - self.n_mean[-1] ** 2

    def initial_variances(self) -> np.ndarray:
        return self.n_sq[0] - self.n_mean[0] ** 2

    def final_parity(self) -> ParityProfile:
        return ParityProfile(self.parity[-1])


def evolve_ed(state: FockState, schedule: HubbardSchedule, dt: float,
              sample_stride: int = 0) -> LatticeTrajectory:
    """Exact propagation with piecewise-constant H over midpoint steps.

    Serves as the oracle for the Trotter path; per step the propagator is
    applied by Krylov exponentiation, so the only discretization is the
    midpoint sampling of the schedule.
    """
    basis, ops = ed_operators(state.basis.model)
    hbar = state.basis.model.constants.hbar
    horizon = float(schedule.times[-1] - schedule.times[0])
    n_steps = max(1, int(round(horizon / dt)))
    step = horizon / n_steps
    psi = state.amplitudes.astype(complex)
    occ = ops.occ

    def observables(vec):
        w = np.abs(vec) ** 2
        return w @ occ, w @ (occ**2), w @ (occ % 2)

    times, n1s, n2s, pars = [0.0], [], [], []
    a, b, p = observables(psi)
    n1s.append(a), n2s.append(b), pars.append(p)
    for i in range(n_steps):
        t_mid = schedule.times[0] + (i + 0.5) * step
        j, u = schedule.at(t_mid)
        h = float(j) * ops.hop + sp.diags(float(u) * ops.diag_int + ops.diag_trap)
        psi = expm_multiply((-1j * step / hbar) * h, psi)
        if sample_stride and (i + 1) % sample_stride == 0 and i + 1 < n_steps:
            a, b, p = observables(psi)
            times.append((i + 1) * step)
            n1s.append(a), n2s.append(b), pars.append(p)
    nrm = np.linalg.norm(psi)
    a, b, p = observables(psi / nrm)
    times.append(horizon)
    n1s.append(a), n2s.append(b), pars.append(p)
    final = FockState(basis, psi / nrm)
    return LatticeTrajectory(
        times=np.array(times), n_mean=np.array(n1s), n_sq=np.array(n2s),
        parity=np.array(pars), final_state=final, norm_drift=abs(nrm - 1.0),
        truncation_error=0.0, truncation_exceeded=False,
        below_validity=schedule.below_validity,
    )


def site_expectations(state: FockState) -> tuple[np.ndarray, np.ndarray]:
    """(<n_i>, <n_i^2>) per site; diagonal in the occupancy basis."""
    _, ops = ed_operators(state.basis.model)
    w = np.abs(state.amplitudes) ** 2
    occ = ops.occ
    n1 = w @ occ
    n2 = w @ (occ**2)
    return n1, n2


def site_variance(state: FockState, i: int) -> float:
    n1, n2 = site_expectations(state)
    return float(n2[i] - n1[i] ** 2)


def site_variances(state: FockState) -> np.ndarray:
    n1, n2 = site_expectations(state)
    return n2 - n1**2


def parity_profile(state: FockState) -> ParityProfile:
    _, ops = ed_operators(state.basis.model)
    w = np.abs(state.amplitudes) ** 2
    return ParityProfile(w @ (ops.occ % 2))


def fom_f2(final_variances: np.ndarray, initial_variances: np.ndarray,
           window: np.ndarray) -> float:
    """Rescaled central variance average; 1 at t=0, 0 for a perfect insulator.

    Sites whose initial variance vanishes cannot be rescaled and are
    excluded with a warning.
    """
    num = np.asarray(final_variances, dtype=float)[window]
    den = np.asarray(initial_variances, dtype=float)[window]
    good = den > 1e-14
    if not np.all(good):
        warnings.warn("excluding zero-initial-variance sites from the figure of merit")
    if not np.any(good):
        raise ValueError("no sites with nonzero initial variance in the window")
    return float(np.mean(num[good] / den[good]))


def total_atoms(state: FockState) -> float:
    n1, _ = site_expectations(state)
    return float(np.sum(n1))
