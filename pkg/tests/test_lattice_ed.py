import math

import numpy as np
import pytest

from coldctrl import lattice
from coldctrl.bandstructure import HubbardParams, ramp_to_schedule
from coldctrl.lattice import BoseHubbardModel, FockBasis, FockState
from coldctrl.pulse import linear_ramp

H = 2 * math.pi * 1.054571817e-34
ER = 1.34363e-30  # close enough for constructing synthetic couplings


def params(j_over_u, u=1e-31):
    return HubbardParams(J=j_over_u * u, U=u, depth=5.0)


class TestBasis:
    def test_dimension_small_chain(self):
        # compositions of 4 atoms on 8 sites, cutoff 4: C(11, 7)
        model = BoseHubbardModel(8, 4, n_max=4)
        assert FockBasis(model).dim == 330

    def test_cutoff_respected(self):
        model = BoseHubbardModel(4, 6, n_max=2)
        basis = FockBasis(model)
        assert np.all(basis.occupations <= 2)
        assert np.all(basis.occupations.sum(axis=1) == 6)

    def test_invalid_model(self):
        with pytest.raises(ValueError):
            BoseHubbardModel(4, 20, n_max=2)

    def test_central_window_even_chain(self):
        model = BoseHubbardModel(16, 8)
        assert list(model.central_window()) == [4, 5, 6, 7, 8, 9, 10, 11]


class TestGroundState:
    def test_atomic_limit_unit_filling(self):
        model = BoseHubbardModel(6, 6, n_max=3, omega=0.0)
        gs = lattice.ground_state_ed(model, params(1e-6))
        target = model.n_sites * [1]
        idx = gs.basis.index_of(target)
        assert abs(gs.amplitudes[idx]) ** 2 > 1 - 1e-6

    def test_zero_tunneling_trap_fills_lowest_sites(self):
        # odd chain: the three lowest-energy sites are unambiguous
        model = BoseHubbardModel(7, 3, n_max=1)
        tiny_j = HubbardParams(J=1e-45, U=1e-30, depth=5.0)
        gs = lattice.ground_state_ed(model, tiny_j)
        n1, _ = lattice.site_expectations(gs)
        assert set(np.argsort(n1)[-3:]) == {2, 3, 4}

    def test_against_dense_diagonalization(self):
        model = BoseHubbardModel(8, 4, n_max=4)
        p = params(1 / 3.4)
        gs = lattice.ground_state_ed(model, p)
        basis, ops = lattice.ed_operators(model)
        h = ops.hamiltonian(p).toarray()
        vals = np.linalg.eigvalsh(h)
        energy = float(gs.amplitudes.conj() @ (ops.hamiltonian(p) @ gs.amplitudes)).real
        assert energy == pytest.approx(vals[0], abs=1e-10 * abs(vals[0]))


class TestObservables:
    def test_unit_filling_fock_state(self):
        model = BoseHubbardModel(6, 6, n_max=3)
        basis = FockBasis(model)
        amps = np.zeros(basis.dim)
        amps[basis.index_of([1] * 6)] = 1.0
        state = FockState(basis, amps)
        prof = lattice.parity_profile(state)
        assert np.allclose(prof.values, 1.0)
        assert np.allclose(lattice.site_variances(state), 0.0)

    def test_doubly_occupied_site_even_parity(self):
        model = BoseHubbardModel(4, 4, n_max=2)
        basis = FockBasis(model)
        amps = np.zeros(basis.dim)
        amps[basis.index_of([1, 2, 0, 1])] = 1.0
        state = FockState(basis, amps)
        prof = lattice.parity_profile(state)
        assert prof.values[1] == 0.0 and prof.values[2] == 0.0
        assert prof.values[0] == 1.0

    def test_f2_normalization_and_floor(self):
        model = BoseHubbardModel(16, 8)
        window = model.central_window()
        v0 = np.full(16, 0.3)
        assert lattice.fom_f2(v0, v0, window) == pytest.approx(1.0, rel=1e-12)
        assert lattice.fom_f2(np.zeros(16), v0, window) == 0.0

    def test_f2_excludes_degenerate_sites(self):
        model = BoseHubbardModel(16, 8)
        window = model.central_window()
        v0 = np.full(16, 0.3)
        v0[5] = 0.0
        with pytest.warns(UserWarning):
            f2 = lattice.fom_f2(v0, v0, window)
        assert f2 == pytest.approx(1.0, rel=1e-12)


class TestEvolveEd:
    def test_static_schedule_stationary_observables(self):
        model = BoseHubbardModel(6, 3, n_max=3)
        field = linear_ramp(5.0, 5.0, 2e-3, n_samples=65)
        sched = ramp_to_schedule(field)
        gs = lattice.ground_state_ed(model, lattice_params_at(sched, 0.0))
        traj = lattice.evolve_ed(gs, sched, dt=2e-5, sample_stride=20)
        assert np.max(np.abs(traj.n_sq - traj.n_sq[0])) < 1e-6
        assert traj.norm_drift < 1e-8

    def test_atom_number_conserved(self):
        model = BoseHubbardModel(6, 3, n_max=3)
        field = linear_ramp(3.0, 14.0, 2e-3, n_samples=65)
        sched = ramp_to_schedule(field)
        gs = lattice.ground_state_ed(model, lattice_params_at(sched, 0.0))
        traj = lattice.evolve_ed(gs, sched, dt=2e-5)
        assert np.allclose(traj.n_mean.sum(axis=1), 3.0, atol=1e-9)

    def test_energy_conserved_static_hamiltonian(self):
        model = BoseHubbardModel(6, 3, n_max=3)
        field = linear_ramp(5.0, 5.0, 12e-3, n_samples=65)
        sched = ramp_to_schedule(field)
        p = lattice_params_at(sched, 0.0)
        gs = lattice.ground_state_ed(model, p)
        basis, ops = lattice.ed_operators(model)
        h = ops.hamiltonian(p)
        traj = lattice.evolve_ed(gs, sched, dt=2e-5)
        e0 = (gs.amplitudes.conj() @ (h @ gs.amplitudes)).real
        psi = traj.final_state.amplitudes
        e1 = (psi.conj() @ (h @ psi)).real
        assert abs(e1 - e0) < 1e-6 * abs(e0)


def lattice_params_at(schedule, t):
    j, u = schedule.at(t)
    return HubbardParams(J=float(j), U=float(u), depth=float(schedule.depths[0]))
