"""Matrix-product path for chains beyond exact diagonalization.

States are stored in the right-canonical B form with the Schmidt weights of
every bond kept alongside (theta at bond i is S_i * B_i * B_{i+1}).  Each
bond index additionally carries the number of atoms to its left; a state
with fixed total atom number is block-sparse in these labels, so every
Schmidt decomposition splits into small per-charge blocks.  That keeps the
bond SVDs cheap and makes atom-number conservation exact: amplitudes that
would leak between charge sectors are never even read.

Ground states come from two-site density-matrix renormalization sweeps with
a quadratic atom-number penalty pinning the sector; time evolution is a
second-order Trotter scheme whose diagonal layer (interaction plus trap) is
applied exactly as single-site phases, leaving one shared hopping gate per
layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, svd
from scipy.sparse.linalg import LinearOperator, eigsh

from .bandstructure import HubbardParams, HubbardSchedule
from .lattice import BoseHubbardModel, FockBasis, LatticeTrajectory, ParityProfile

DEFAULT_CHI = 24
DEFAULT_SVD_MIN = 1e-12  # relative singular-value floor
DEFAULT_TRUNC_BUDGET = 1e-5
DEFAULT_TROTTER_STEP_REDUCED = 1e-2  # units of hbar / E_r


class TruncationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# state container


@dataclass
class MpsState:
    """Right-canonical MPS with per-bond Schmidt weights and charge labels."""

    tensors: list  # B[i]: (chi_i, d, chi_{i+1})
    bond_weights: list  # S[i]: 1d arrays, len L+1, unit 2-norm
    bond_charges: list  # q[i]: int arrays, atoms strictly left of bond i
    n_max: int
    truncation_error: float = 0.0
    step_truncations: list = field(default_factory=list)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def d(self) -> int:
        return self.n_max + 1

    @property
    def bond_dimensions(self) -> list:
        return [len(s) for s in self.bond_weights]

    def copy(self) -> "MpsState":
        return MpsState(
            [t.copy() for t in self.tensors],
            [s.copy() for s in self.bond_weights],
            [q.copy() for q in self.bond_charges],
            self.n_max,
            self.truncation_error,
            list(self.step_truncations),
        )

    def one_site_rdm(self, i: int) -> np.ndarray:
        theta = self.bond_weights[i][:, None, None] * self.tensors[i]
        return np.einsum("asc,atc->st", theta, theta.conj())

    def site_expectations(self):
        """(<n_i>, <n_i^2>, P_odd_i) from the one-site densities."""
        ns = np.arange(self.d, dtype=float)
        n1 = np.empty(self.n_sites)
        n2 = np.empty(self.n_sites)
        podd = np.empty(self.n_sites)
        for i in range(self.n_sites):
            p = np.real(np.diag(self.one_site_rdm(i)))
            n1[i] = p @ ns
            n2[i] = p @ ns**2
            podd[i] = p @ (ns % 2)
        return n1, n2, podd

    def total_atoms(self) -> float:
        return float(self.site_expectations()[0].sum())

    def norm(self) -> float:
        return float(np.linalg.norm(self.bond_weights[self.n_sites // 2]))

    def right_canonical_defect(self) -> float:
        worst = 0.0
        for b in self.tensors:
            chi = b.shape[0]
            g = np.tensordot(b, b.conj(), axes=((1, 2), (1, 2)))
            worst = max(worst, float(np.max(np.abs(g - np.eye(chi)))))
        return worst

    def to_statevector(self, basis: FockBasis) -> np.ndarray:
        """Dense amplitudes over a Fock basis; small systems only."""
        amps = np.empty(basis.dim, dtype=complex)
        for idx, occ in enumerate(basis.occupations):
            m = np.ones((1, 1), dtype=complex)
            for i, n in enumerate(occ):
                m = m @ self.tensors[i][:, int(n), :]
            amps[idx] = m[0, 0]
        return amps


def product_mps(occupations, n_max: int) -> MpsState:
    """Product Fock state as a bond-dimension-1 MPS with charge labels."""
    occ = np.asarray(occupations, dtype=int)
    if np.any(occ > n_max) or np.any(occ < 0):
        raise ValueError("occupation exceeds cutoff")
    d = n_max + 1
    tensors, weights, charges = [], [np.ones(1)], [np.zeros(1, dtype=int)]
    acc = 0
    for n in occ:
        b = np.zeros((1, d, 1), dtype=complex)
        b[0, n, 0] = 1.0
        tensors.append(b)
        acc += int(n)
        weights.append(np.ones(1))
        charges.append(np.array([acc]))
    return MpsState(tensors, weights, charges, n_max)


def default_filling(model: BoseHubbardModel) -> np.ndarray:
    """One atom on each of the N lowest-energy sites (N <= L)."""
    if model.n_atoms > model.n_sites:
        raise ValueError("default filling assumes at most unit filling")
    eps = model.site_energies()
    occ = np.zeros(model.n_sites, dtype=int)
    occ[np.argsort(eps, kind="stable")[: model.n_atoms]] = 1
    return occ


# ---------------------------------------------------------------------------
# charge-blocked bond update


def _blocked_svd(m: np.ndarray, row_q: np.ndarray, col_q: np.ndarray,
                 chi_max: int, rel_floor: float):
    """Charge-resolved truncated SVD of a block-sparse matrix.

    Entries outside matching (row charge == column charge) blocks are never
    read, which both speeds up the factorization and projects out any
    numerical leakage between atom-number sectors.  Returns zero-padded
    factors (u, s, vt), the charge label per kept singular vector, and the
    discarded relative weight.
    """
    blocks = []
    for r in np.intersect1d(np.unique(row_q), np.unique(col_q)):
        rows = np.nonzero(row_q == r)[0]
        cols = np.nonzero(col_q == r)[0]
        sub = m[np.ix_(rows, cols)]
        if not np.any(sub):
            continue
        u, s, vt = svd(sub, full_matrices=False, check_finite=False,
                       lapack_driver="gesdd")
        blocks.append((int(r), rows, cols, u, s, vt))
    if not blocks:
        raise TruncationError("no weight left in any charge sector")

    all_s = np.concatenate([b[4] for b in blocks])
    total = float(np.sum(all_s**2))
    cutoff_rank = np.sort(all_s)[::-1][min(chi_max, all_s.size) - 1]
    keep_threshold = max(cutoff_rank, rel_floor * np.max(all_s))

    kept = 0
    pieces = []
    for r, rows, cols, u, s, vt in sorted(blocks, key=lambda b: b[0]):
        k = min(int(np.sum(s >= keep_threshold)), chi_max - kept)
        if k <= 0:
            continue
        pieces.append((r, rows, cols, u[:, :k], s[:k], vt[:k]))
        kept += k

    u_full = np.zeros((m.shape[0], kept), dtype=complex)
    vt_full = np.zeros((kept, m.shape[1]), dtype=complex)
    s_kept = np.empty(kept)
    q_kept = np.empty(kept, dtype=int)
    at = 0
    for r, rows, cols, u, s, vt in pieces:
        k = len(s)
        u_full[rows, at:at + k] = u
        vt_full[at:at + k][:, cols] = vt
        s_kept[at:at + k] = s
        q_kept[at:at + k] = r
        at += k
    lost = max(0.0, 1.0 - float(np.sum(s_kept**2)) / total)
    return u_full, s_kept, vt_full, q_kept, lost


def _blocked_svd_update(state: MpsState, i: int, gate: np.ndarray,
                        chi_max: int, svd_min: float) -> float:
    """Apply a two-site gate at bond (i, i+1), truncate, return lost weight."""
    b1, b2 = state.tensors[i], state.tensors[i + 1]
    cl, d, _ = b1.shape
    cr = b2.shape[2]
    c = np.tensordot(b1, b2, axes=(2, 0)).reshape(cl, d * d, cr)
    cm = (gate @ c.transpose(1, 0, 2).reshape(d * d, cl * cr)).reshape(
        d * d, cl, cr).transpose(1, 0, 2)
    theta = state.bond_weights[i][:, None, None] * cm
    mm = np.ascontiguousarray(theta).reshape(cl * d, d * cr)
    cmat = np.ascontiguousarray(cm).reshape(cl * d, d * cr)

    row_q = (state.bond_charges[i][:, None] + np.arange(d)[None, :]).ravel()
    col_q = (state.bond_charges[i + 2][None, :] - np.arange(d)[:, None]).ravel()

    try:
        _, s_new, vt, q_new, lost = _blocked_svd(mm, row_q, col_q, chi_max, svd_min)
    except TruncationError as exc:
        raise TruncationError(f"bond {i}: {exc}") from exc
    nrm = float(np.linalg.norm(s_new))
    # Hastings form: the left tensor comes from the gated pair without the
    # Schmidt weights, so no small-value division is ever needed
    state.tensors[i] = ((cmat @ vt.conj().T) / nrm).reshape(cl, d, len(s_new))
    state.tensors[i + 1] = vt.reshape(len(s_new), d, cr)
    state.bond_weights[i + 1] = s_new / nrm
    state.bond_charges[i + 1] = q_new
    return lost


def _apply_site_phases(state: MpsState, phases: np.ndarray):
    """Diagonal single-site factors; phases has shape (L, d)."""
    for i in range(state.n_sites):
        state.tensors[i] = state.tensors[i] * phases[i][None, :, None]


# ---------------------------------------------------------------------------
# Trotter evolution


def _boson_ops(d: int):
    n = np.diag(np.arange(d, dtype=float))
    b = np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1)
    return n, b


def _hop_gate(j_hat: float, dt_hat: float, d: int) -> np.ndarray:
    """exp(-i dt (-J)(b^dag b + b b^dag)) on two sites, reduced units."""
    _, b = _boson_ops(d)
    h = -j_hat * (np.kron(b.T, b) + np.kron(b, b.T))
    w, v = eigh(h)
    return (v * np.exp(-1j * w * dt_hat)) @ v.T.conj()


def evolve_trotter(
    state: MpsState,
    schedule: HubbardSchedule,
    model: BoseHubbardModel,
    dt: float | None = None,
    chi_max: int = DEFAULT_CHI,
    svd_min: float = DEFAULT_SVD_MIN,
    truncation_budget: float = DEFAULT_TRUNC_BUDGET,
    sample_stride: int = 0,
) -> LatticeTrajectory:
    """Second-order Trotter sweep along a Hubbard schedule.

    Layers per step: half diagonal (interaction + trap), half even hopping
    bonds, full odd bonds, half even, half diagonal, all at the midpoint
    couplings.  The diagonal layer is exact; hopping gates are shared by
    every bond in a layer since J is site-independent.
    """
    c = model.constants
    er = c.recoil_energy
    t_unit = c.hbar / er
    if dt is None:
        dt = DEFAULT_TROTTER_STEP_REDUCED * t_unit
    horizon = float(schedule.times[-1] - schedule.times[0])
    n_steps = max(1, int(round(horizon / dt)))
    step = horizon / n_steps
    dth = step / t_unit

    eps_hat = model.site_energies() / er
    ns = np.arange(state.d, dtype=float)
    pair = 0.5 * ns * (ns - 1.0)

    work = state.copy()
    work.step_truncations = []
    even = list(range(0, model.n_sites - 1, 2))
    odd = list(range(1, model.n_sites - 1, 2))

    times, n1s, n2s, pars = [0.0], [], [], []
    a, b_, p = work.site_expectations()
    n1s.append(a), n2s.append(b_), pars.append(p)

    norm_drift = 0.0
    for istep in range(n_steps):
        t_mid = schedule.times[0] + (istep + 0.5) * step
        jt, ut = schedule.at(t_mid)
        j_hat, u_hat = float(jt) / er, float(ut) / er

        half_phase = np.exp(-0.5j * dth * (u_hat * pair[None, :] + eps_hat[:, None] * ns[None, :]))
        gate_half = _hop_gate(j_hat, 0.5 * dth, state.d)
        gate_full = _hop_gate(j_hat, dth, state.d)

        lost = 0.0
        _apply_site_phases(work, half_phase)
        for i in even:
            lost += _blocked_svd_update(work, i, gate_half, chi_max, svd_min)
        for i in odd:
            lost += _blocked_svd_update(work, i, gate_full, chi_max, svd_min)
        for i in even:
            lost += _blocked_svd_update(work, i, gate_half, chi_max, svd_min)
        _apply_site_phases(work, half_phase)

        work.truncation_error += lost
        work.step_truncations.append(lost)
        norm_drift += lost

        if sample_stride and (istep + 1) % sample_stride == 0 and istep + 1 < n_steps:
            a, b_, p = work.site_expectations()
            times.append((istep + 1) * step)
            n1s.append(a), n2s.append(b_), pars.append(p)

    a, b_, p = work.site_expectations()
    times.append(horizon)
    n1s.append(a), n2s.append(b_), pars.append(p)

    return LatticeTrajectory(
        times=np.array(times), n_mean=np.array(n1s), n_sq=np.array(n2s),
        parity=np.array(pars), final_state=work, norm_drift=norm_drift,
        truncation_error=work.truncation_error,
        truncation_exceeded=work.truncation_error > truncation_budget,
        below_validity=schedule.below_validity,
    )


def parity_profile_mps(state: MpsState) -> ParityProfile:
    return ParityProfile(state.site_expectations()[2])


# ---------------------------------------------------------------------------
# MPO construction and expectations


def _bose_hubbard_mpo(model: BoseHubbardModel, params: HubbardParams,
                      penalty: float = 0.0,
                      energy_scale: float = 1.0) -> tuple[list, np.ndarray, np.ndarray]:
    """MPO tensors W[i] (Dl, Dr, d, d) plus boundary weight vectors.

    Lower-triangular chain MPO for the Hubbard part; an optional quadratic
    atom-number penalty  penalty * (sum_i n_i - N)^2  rides in a direct-sum
    block so the ground-state search cannot drift out of the atom-number
    sector.  ``energy_scale`` divides all couplings so iterative solvers
    work on O(1) numbers.
    """
    d = model.n_max + 1
    n, b = _boson_ops(d)
    ident = np.eye(d)
    eps = model.site_energies() / energy_scale
    j, u = params.J / energy_scale, params.U / energy_scale
    penalty = penalty / energy_scale
    n0 = model.n_atoms
    dim = 7 if penalty else 4
    ws = []
    for i in range(model.n_sites):
        h_loc = 0.5 * u * (n @ n - n) + eps[i] * n
        w = np.zeros((dim, dim, d, d))
        w[0, 0] = ident
        w[1, 0] = b
        w[2, 0] = b.T
        w[3, 0] = h_loc
        w[3, 1] = -j * b.T
        w[3, 2] = -j * b
        w[3, 3] = ident
        if penalty:
            w[4, 4] = ident
            w[5, 4] = n
            w[5, 5] = ident
            w[6, 4] = penalty * (n @ n - 2.0 * n0 * n) + (penalty * n0**2 / model.n_sites) * ident
            w[6, 5] = 2.0 * penalty * n
            w[6, 6] = ident
        ws.append(w)
    left = np.zeros(dim)
    left[3] = 1.0
    if penalty:
        left[6] = 1.0
    right = np.zeros(dim)
    right[0] = 1.0
    if penalty:
        right[4] = 1.0
    return ws, left, right


def mpo_expectation(state: MpsState, ws, left, right) -> float:
    # the state vector is the plain product of B tensors (the left boundary
    # carries no weight), so no Schmidt factors enter here
    env = np.zeros((1, left.size, 1), dtype=complex)
    env[0, :, 0] = left
    for i in range(state.n_sites):
        theta = state.tensors[i]
        # env (aK, b, aB); contract ket tensor, MPO, bra tensor
        t = np.tensordot(env, theta, axes=(0, 0))  # (b, aB, s, cK)
        t = np.tensordot(t, ws[i], axes=((0, 2), (0, 3)))  # (aB, cK, br, sbra)
        env = np.tensordot(t, theta.conj(), axes=((0, 3), (0, 1)))  # (cK, br, cB)
    return float(np.real(np.tensordot(env, right, axes=(1, 0)).trace()))


def mpo_variance(state: MpsState, ws, left, right) -> float:
    """<(H - <H>)^2> by a double-MPO contraction."""
    e = mpo_expectation(state, ws, left, right)
    dim = left.size
    env = np.zeros((1, dim, dim, 1), dtype=complex)
    env[0, :, :, 0] = np.outer(left, left)
    for i in range(state.n_sites):
        theta = state.tensors[i]
        # env (aK, b_outer, b_inner, aB); the inner layer acts on the ket
        t = np.tensordot(env, theta, axes=(0, 0))  # (b1, b2, aB, s, cK)
        t = np.tensordot(t, ws[i], axes=((1, 3), (0, 3)))  # (b1, aB, cK, br2, smid)
        t = np.tensordot(t, ws[i], axes=((0, 4), (0, 3)))  # (aB, cK, br2, br1, sbra)
        t = np.tensordot(t, theta.conj(), axes=((0, 4), (0, 1)))  # (cK, br2, br1, cB)
        env = t.transpose(0, 2, 1, 3)
    h2 = float(np.real(np.einsum("abcd,b,c->ad", env, right, right).trace()))
    return h2 - e * e


# ---------------------------------------------------------------------------
# two-site DMRG ground search


@dataclass(frozen=True)
class DmrgResult:
    state: MpsState
    energy: float  # joules, Hubbard part only
    variance: float  # joules^2
    sweeps: int
    converged: bool
    energy_trace: tuple


def _dmrg_heff_matvec(le, re, w1, w2, shape):
    def mv(vec):
        th = vec.reshape(shape)
        t = np.tensordot(le, th, axes=(0, 0))  # (b, aB, s1, s2, cK)
        t = np.tensordot(t, w1, axes=((0, 2), (0, 3)))  # (aB, s2, cK, br, s1bra)
        t = np.tensordot(t, w2, axes=((3, 1), (0, 3)))  # (aB, cK, s1bra, br2, s2bra)
        t = np.tensordot(t, re, axes=((1, 3), (0, 1)))  # (aB, s1bra, s2bra, cB)
        return t.reshape(-1)

    return mv


def ground_state_dmrg(
    model: BoseHubbardModel,
    params: HubbardParams,
    chi_max: int = DEFAULT_CHI,
    max_sweeps: int = 40,
    rel_tol: float = 1e-9,
    penalty_scale: float = 20.0,
    initial_occupations=None,
) -> DmrgResult:
    """Variational ground state in the fixed-atom-number sector."""
    if chi_max < 1:
        raise ValueError("chi_max must be positive")
    ll = model.n_sites
    penalty = penalty_scale * max(params.U, 4.0 * params.J)
    er = model.constants.recoil_energy
    ws, left, right = _bose_hubbard_mpo(model, params, penalty=penalty, energy_scale=er)

    occ = default_filling(model) if initial_occupations is None else np.asarray(initial_occupations)
    mps = [t.copy() for t in product_mps(occ, model.n_max).tensors]

    res = [None] * (ll + 1)
    renv = np.zeros((1, left.size, 1), dtype=complex)
    renv[0, :, 0] = right
    res[ll] = renv
    for i in range(ll - 1, 0, -1):
        res[i] = _update_right_env(res[i + 1], mps[i], ws[i])
    les = [None] * (ll + 1)
    lenv = np.zeros((1, left.size, 1), dtype=complex)
    lenv[0, :, 0] = left
    les[0] = lenv

    energy_trace = []
    prev_e = np.inf
    converged = False
    sweeps_done = 0
    for sweep in range(max_sweeps):
        sweep_min = np.inf
        # left to right
        for i in range(ll - 1):
            e, th = _dmrg_solve_bond(les[i], res[i + 2], ws[i], ws[i + 1], mps[i], mps[i + 1])
            sweep_min = min(sweep_min, e)
            a_t, b_t = _split_theta(th, chi_max, to_right=True)
            mps[i], mps[i + 1] = a_t, b_t
            les[i + 1] = _update_left_env(les[i], mps[i], ws[i])
        # right to left
        for i in range(ll - 2, -1, -1):
            e, th = _dmrg_solve_bond(les[i], res[i + 2], ws[i], ws[i + 1], mps[i], mps[i + 1])
            sweep_min = min(sweep_min, e)
            a_t, b_t = _split_theta(th, chi_max, to_right=False)
            mps[i], mps[i + 1] = a_t, b_t
            res[i + 1] = _update_right_env(res[i + 2], mps[i + 1], ws[i + 1])
        sweeps_done = sweep + 1
        energy_trace.append(sweep_min)
        if abs(sweep_min - prev_e) < rel_tol * max(abs(sweep_min), 1e-300):
            converged = True
            break
        prev_e = sweep_min

    state = _to_b_form(mps, model)
    ws_bh, l_bh, r_bh = _bose_hubbard_mpo(model, params, penalty=0.0)
    energy = mpo_expectation(state, ws_bh, l_bh, r_bh)
    variance = mpo_variance(state, ws_bh, l_bh, r_bh)
    if not converged:
        raise RuntimeError(
            f"ground search did not converge in {max_sweeps} sweeps; "
            f"energy trace {energy_trace}"
        )
    return DmrgResult(state, energy, variance, sweeps_done, converged, tuple(energy_trace))


def _update_left_env(env, a_t, w):
    t = np.tensordot(env, a_t, axes=(0, 0))  # (b, aB, s, cK)
    t = np.tensordot(t, w, axes=((0, 2), (0, 3)))  # (aB, cK, br, sbra)
    t = np.tensordot(t, a_t.conj(), axes=((0, 3), (0, 1)))  # (cK, br, cB)
    return t


def _update_right_env(env, b_t, w):
    # env (cK, b, cB); returns (aK, b, aB)
    t = np.tensordot(b_t, env, axes=(2, 0))  # (aK, s, b, cB)
    t = np.tensordot(t, w, axes=((2, 1), (1, 3)))  # (aK, cB, bl, sbra)
    t = np.tensordot(t, b_t.conj(), axes=((1, 3), (2, 1)))  # (aK, bl, aB)
    return t


def _dmrg_solve_bond(le, re, w1, w2, a_t, b_t):
    th0 = np.tensordot(a_t, b_t, axes=(2, 0))
    shape = th0.shape
    size = th0.size
    mv = _dmrg_heff_matvec(le, re, w1, w2, shape)
    if size <= 128:
        dense = np.empty((size, size), dtype=complex)
        eye = np.eye(size)
        for k in range(size):
            dense[:, k] = mv(eye[:, k])
        vals, vecs = np.linalg.eigh(0.5 * (dense + dense.conj().T))
        return float(vals[0]), vecs[:, 0].reshape(shape)
    op = LinearOperator((size, size), matvec=mv, dtype=complex)
    v0 = th0.reshape(-1)
    vals, vecs = eigsh(op, k=1, which="SA", v0=v0, maxiter=4000,
                       tol=1e-12, ncv=min(size, 24))
    return float(vals[0]), vecs[:, 0].reshape(shape)


def _split_theta(th, chi_max, to_right: bool):
    cl, d, d2, cr = th.shape
    m = th.reshape(cl * d, d2 * cr)
    u, s, vt = svd(m, full_matrices=False, check_finite=False, lapack_driver="gesdd")
    k = min(chi_max, int(np.sum(s > 1e-14 * s[0])))
    u, s, vt = u[:, :k], s[:k], vt[:k]
    s = s / np.linalg.norm(s)
    if to_right:
        a_t = u.reshape(cl, d, k)
        b_t = (s[:, None] * vt).reshape(k, d, cr)
    else:
        a_t = (u * s[None, :]).reshape(cl, d, k)
        b_t = vt.reshape(k, d, cr)
    return a_t, b_t


def _to_b_form(mps, model: BoseHubbardModel) -> MpsState:
    """Canonicalize a raw tensor train into B form with charge labels.

    Left-to-right QR makes every left block orthonormal without mixing
    atom-number sectors (columns of distinct charge have disjoint row
    support, so orthogonalization never couples them); charges are then
    inferred per bond channel and sub-dominant cross-sector leakage -- the
    penalty formulation leaves a little -- is projected out.  The backward
    pass uses charge-blocked SVDs, so degenerate Schmidt values cannot
    remix sectors and the extracted weights are the true Schmidt spectra.
    """
    ll = len(mps)
    d = model.n_max + 1
    lefts = []
    charges = [None] * (ll + 1)
    charges[0] = np.zeros(1, dtype=int)
    carry = np.ones((1, 1), dtype=complex)
    for i in range(ll):
        cur = np.tensordot(carry, mps[i], axes=(1, 0))
        cl = cur.shape[0]
        q, r = np.linalg.qr(cur.reshape(cl * d, cur.shape[2]))
        a_t = q.reshape(cl, d, q.shape[1])
        # each column of the left-orthonormal block carries one charge
        row_q = (charges[i][:, None] + np.arange(d)[None, :]).ravel()
        mags = np.abs(q)
        col_charges = np.empty(q.shape[1], dtype=int)
        for c in range(q.shape[1]):
            col_charges[c] = row_q[int(np.argmax(mags[:, c]))]
            a_t.reshape(cl * d, -1)[row_q != col_charges[c], c] = 0.0
        charges[i + 1] = col_charges
        lefts.append(a_t)
        carry = r
    # carry is now the (1, 1) overall norm/phase; drop it

    tensors = [None] * ll
    weights = [None] * (ll + 1)
    weights[ll] = np.ones(1)
    bond_charges = [None] * (ll + 1)
    bond_charges[ll] = np.array([model.n_atoms], dtype=int)
    bond_charges[0] = np.zeros(1, dtype=int)
    right_q = bond_charges[ll]
    carry = np.ones((1, 1), dtype=complex)
    carry_q = right_q
    for i in range(ll - 1, -1, -1):
        cur = np.tensordot(lefts[i], carry, axes=(2, 0))
        cl = cur.shape[0]
        m = cur.reshape(cl, d * cur.shape[2])
        row_q = charges[i]
        col_q = (carry_q[None, :] - np.arange(d)[:, None]).ravel()
        u, s, vt, q_kept, _ = _blocked_svd(m, row_q, col_q, m.shape[0] + m.shape[1], 1e-14)
        nrm = np.linalg.norm(s)
        tensors[i] = vt.reshape(len(s), d, cur.shape[2])
        weights[i] = s / nrm
        if i > 0:
            bond_charges[i] = q_kept
        carry = u * s[None, :]
        carry_q = q_kept
    # the leakage projection above slightly breaks orthonormality; one more
    # fully charge-blocked round trip restores canonical form to roundoff
    return _recanonicalize(MpsState(tensors, weights, bond_charges, model.n_max))


def _recanonicalize(state: MpsState) -> MpsState:
    """Exact-charge canonical sweep; input must already carry charge labels."""
    ll, d = state.n_sites, state.d
    lefts, left_qs = [], [state.bond_charges[0]]
    carry = np.ones((1, 1), dtype=complex)
    carry_q = state.bond_charges[0]
    for i in range(ll):
        cur = np.tensordot(carry, state.tensors[i], axes=(1, 0))
        cl = cur.shape[0]
        m = cur.reshape(cl * d, cur.shape[2])
        row_q = (carry_q[:, None] + np.arange(d)[None, :]).ravel()
        u, s, vt, q_kept, _ = _blocked_svd(
            m, row_q, state.bond_charges[i + 1], m.shape[0] + m.shape[1], 1e-14)
        lefts.append(u.reshape(cl, d, len(s)))
        carry = s[:, None] * vt
        carry_q = q_kept
        left_qs.append(q_kept)

    tensors = [None] * ll
    weights = [None] * (ll + 1)
    charges = [None] * (ll + 1)
    weights[ll] = np.ones(1)
    charges[ll] = left_qs[ll]
    charges[0] = left_qs[0]
    carry = np.ones((1, 1), dtype=complex)
    carry_q = left_qs[ll]
    for i in range(ll - 1, -1, -1):
        cur = np.tensordot(lefts[i], carry, axes=(2, 0))
        cl = cur.shape[0]
        m = cur.reshape(cl, d * cur.shape[2])
        col_q = (carry_q[None, :] - np.arange(d)[:, None]).ravel()
        u, s, vt, q_kept, _ = _blocked_svd(
            m, left_qs[i], col_q, m.shape[0] + m.shape[1], 1e-14)
        nrm = np.linalg.norm(s)
        tensors[i] = vt.reshape(len(s), d, cur.shape[2])
        weights[i] = s / nrm
        if i > 0:
            charges[i] = q_kept
        carry = u * s[None, :]
        carry_q = q_kept
    weights[0] = np.ones(1)
    return MpsState(tensors, weights, charges, state.n_max,
                    state.truncation_error, list(state.step_truncations))
