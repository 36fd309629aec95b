import numpy as np
import pytest

from coldctrl import lattice, mps
from coldctrl.bandstructure import HubbardParams, hubbard_params, ramp_to_schedule
from coldctrl.lattice import BoseHubbardModel, FockBasis
from coldctrl.pulse import linear_ramp


def small_model(l=6, n=3, n_max=3, omega=None):
    kw = {} if omega is None else {"omega": omega}
    return BoseHubbardModel(l, n, n_max=n_max, **kw)


def params(j, u):
    return HubbardParams(J=j, U=u, depth=5.0)


class TestProductState:
    def test_observables(self):
        state = mps.product_mps([0, 1, 2, 1], n_max=3)
        n1, n2, podd = state.site_expectations()
        assert np.allclose(n1, [0, 1, 2, 1])
        assert np.allclose(n2, [0, 1, 4, 1])
        assert np.allclose(podd, [0, 1, 0, 1])
        assert state.total_atoms() == pytest.approx(4.0)

    def test_statevector_roundtrip(self):
        model = small_model(4, 3)
        basis = FockBasis(model)
        state = mps.product_mps([1, 1, 0, 1], n_max=3)
        vec = state.to_statevector(basis)
        assert abs(vec[basis.index_of([1, 1, 0, 1])]) == pytest.approx(1.0)
        assert np.linalg.norm(vec) == pytest.approx(1.0)


class TestDmrg:
    def test_energy_matches_ed_small_chain(self):
        model = small_model(6, 3)
        p = params(2e-31, 3e-31)
        res = mps.ground_state_dmrg(model, p, chi_max=20)
        gs = lattice.ground_state_ed(model, p)
        basis, ops = lattice.ed_operators(model)
        e_ed = float((gs.amplitudes.conj() @ (ops.hamiltonian(p) @ gs.amplitudes)).real)
        assert res.energy == pytest.approx(e_ed, rel=1e-8)
        assert res.state.total_atoms() == pytest.approx(3.0, abs=1e-9)

    def test_chi_one_zero_tunneling_product_state(self):
        model = small_model(5, 2, omega=2 * np.pi * 200.0)
        p = params(1e-40, 3e-31)
        res = mps.ground_state_dmrg(model, p, chi_max=1)
        n1, _, _ = res.state.site_expectations()
        assert n1[2] == pytest.approx(1.0, abs=1e-8)
        # two atoms sit on the two lowest-energy sites, no double occupancy
        assert np.sort(n1)[-2:] == pytest.approx([1.0, 1.0], abs=1e-8)

    def test_variance_small_for_converged_state(self):
        model = small_model(6, 3)
        p = params(2e-31, 3e-31)
        res = mps.ground_state_dmrg(model, p, chi_max=24)
        scale = max(abs(res.energy), p.U)
        assert res.variance / scale**2 < 1e-6

    def test_desk_scale_ground_state(self):
        model = BoseHubbardModel(16, 8)
        p = hubbard_params(3.0)
        res = mps.ground_state_dmrg(model, p, chi_max=16)
        assert res.converged
        assert res.state.total_atoms() == pytest.approx(8.0, abs=1e-8)
        # superfluid-side state: central sites near unit filling with
        # sizeable number fluctuations
        n1, n2, _ = res.state.site_expectations()
        center = res.state.n_sites // 2
        assert 0.8 < n1[center] < 1.4
        assert (n2[center] - n1[center] ** 2) > 0.1


class TestTrotter:
    def test_static_schedule_stationary(self):
        model = small_model(6, 3)
        field = linear_ramp(5.0, 5.0, 2e-3, n_samples=33)
        sched = ramp_to_schedule(field)
        j0, u0 = sched.at(0.0)
        res = mps.ground_state_dmrg(model, params(float(j0), float(u0)), chi_max=24)
        traj = mps.evolve_trotter(res.state, sched, model, chi_max=30)
        assert np.max(np.abs(traj.n_sq - traj.n_sq[0])) < 1e-6
        assert traj.norm_drift < 1e-8

    def test_ramp_matches_ed_oracle(self):
        model = small_model(6, 3)
        field = linear_ramp(3.0, 14.0, 3e-3, n_samples=65)
        sched = ramp_to_schedule(field)
        j0, u0 = sched.at(0.0)
        p0 = params(float(j0), float(u0))
        gs_ed = lattice.ground_state_ed(model, p0)
        gs_mps = mps.ground_state_dmrg(model, p0, chi_max=30)
        traj_ed = lattice.evolve_ed(gs_ed, sched, dt=1e-5)
        traj_mps = mps.evolve_trotter(gs_mps.state, sched, model, dt=1e-5, chi_max=40)
        assert np.max(np.abs(traj_mps.final_variances() - traj_ed.final_variances())) < 1e-4
        assert np.max(np.abs(traj_mps.n_mean[-1] - traj_ed.n_mean[-1])) < 1e-4

    def test_atom_number_exactly_conserved(self):
        model = small_model(6, 3)
        field = linear_ramp(3.0, 14.0, 2e-3, n_samples=33)
        sched = ramp_to_schedule(field)
        j0, u0 = sched.at(0.0)
        res = mps.ground_state_dmrg(model, params(float(j0), float(u0)), chi_max=16)
        traj = mps.evolve_trotter(res.state, sched, model, chi_max=12)
        assert np.allclose(traj.n_mean.sum(axis=1), 3.0, atol=1e-10)

    def test_truncation_budget_flag(self):
        model = BoseHubbardModel(8, 4, n_max=3)
        field = linear_ramp(3.0, 14.0, 2e-3, n_samples=33)
        sched = ramp_to_schedule(field)
        j0, u0 = sched.at(0.0)
        res = mps.ground_state_dmrg(model, params(float(j0), float(u0)), chi_max=16)
        traj = mps.evolve_trotter(res.state, sched, model, chi_max=2,
                                  truncation_budget=1e-9)
        assert traj.truncation_exceeded

    def test_canonical_form_maintained(self):
        model = small_model(6, 3)
        field = linear_ramp(3.0, 10.0, 1e-3, n_samples=33)
        sched = ramp_to_schedule(field)
        j0, u0 = sched.at(0.0)
        res = mps.ground_state_dmrg(model, params(float(j0), float(u0)), chi_max=16)
        traj = mps.evolve_trotter(res.state, sched, model, chi_max=16)
        assert traj.final_state.right_canonical_defect() < 1e-8


class TestEdMpsEquivalence:
    def test_observables_throughout_ramp(self):
        # l <= 8: all single-site observables agree along the whole ramp
        model = BoseHubbardModel(8, 4, n_max=3)
        field = linear_ramp(3.0, 14.0, 4e-3, n_samples=65)
        sched = ramp_to_schedule(field)
        j0, u0 = sched.at(0.0)
        p0 = params(float(j0), float(u0))
        gs_ed = lattice.ground_state_ed(model, p0)
        gs_mps = mps.ground_state_dmrg(model, p0, chi_max=40)
        traj_ed = lattice.evolve_ed(gs_ed, sched, dt=5e-6, sample_stride=100)
        traj_mps = mps.evolve_trotter(gs_mps.state, sched, model, dt=5e-6,
                                      chi_max=60, sample_stride=100)
        assert traj_ed.times.shape == traj_mps.times.shape
        assert np.max(np.abs(traj_ed.n_mean - traj_mps.n_mean)) < 1e-5
        assert np.max(np.abs(traj_ed.n_sq - traj_mps.n_sq)) < 1e-5
        assert np.max(np.abs(traj_ed.parity - traj_mps.parity)) < 1e-5
