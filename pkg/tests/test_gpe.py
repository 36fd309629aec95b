import math

import numpy as np
import pytest

from coldctrl import gpe
from coldctrl.pulse import ControlField
from coldctrl.units import PhysicalConstants

from conftest import harmonic_potential

H = 2 * math.pi * 1.054571817e-34


class TestAlpha:
    def test_small_cloud_limit(self, constants):
        g = gpe.default_geometry(1, constants)
        big = gpe.default_geometry(7000, constants)
        assert 0 < g.alpha < 0.02 < big.alpha

    def test_manufactured_root(self, constants):
        # choose a_s so the equation constant is exactly 36; root is alpha=1
        geo = gpe.default_geometry(700, constants)
        hbar, m = constants.hbar, constants.mass
        a_perp = math.sqrt(hbar / (m * geo.omega_perp))
        a_x = math.sqrt(hbar / (m * geo.omega_x))
        a_s = 6.0 * a_x**2 / (15.0 * a_perp)
        crafted = PhysicalConstants(a3d_scattering=a_s)
        alpha = gpe.solve_alpha(1, geo.omega_x, geo.omega_y, geo.omega_z, crafted)
        assert alpha == pytest.approx(1.0, abs=1e-12)

    def test_bisection_oracle(self, constants):
        geo = gpe.default_geometry(700, constants)
        c = gpe._alpha_equation_constant(700, geo.omega_x, geo.omega_y, geo.omega_z, constants)
        lo, hi = 0.0, 10.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid**3 * (mid + 5.0) ** 2 < c:
                lo = mid
            else:
                hi = mid
        assert geo.alpha == pytest.approx(0.5 * (lo + hi), abs=1e-10)
        resid = abs(geo.alpha**3 * (geo.alpha + 5.0) ** 2 - c)
        assert resid < 1e-10 * c


class TestCoupling:
    def test_formula_against_direct_evaluation(self, constants):
        for n in (1, 700, 7000):
            geo = gpe.default_geometry(n, constants)
            a, L = geo.alpha, geo.axial_half_length
            a_s = constants.a3d_scattering
            ix = a**2 * L * (a**2 + 9 * a + 21) / (315 * (a_s * n) ** 2)
            expected = constants.g3d * ix / (math.sqrt(2 * math.pi) * geo.a_z)
            assert gpe.coupling_g1d(n, geo) == pytest.approx(expected, rel=1e-14)

    def test_three_atom_numbers_distinct(self, constants):
        vals = [gpe.g1d_for_atoms(n, constants) for n in (1, 700, 7000)]
        assert len({round(v, 50) for v in vals}) == 3
        # weaker coupling for bigger clouds: the profile overlap dilutes faster
        # than g3d N grows
        assert vals[0] > vals[1] > vals[2] > 0

    def test_regression_values(self, constants):
        # frozen from the documented default geometry
        assert gpe.g1d_for_atoms(700, constants) == pytest.approx(1.4934e-40, rel=1e-3)

    def test_noninteracting_limit(self, constants):
        geo = gpe.default_geometry(700, constants)
        tiny = PhysicalConstants(a3d_scattering=1e-13)
        g_tiny = gpe.g1d_for_atoms(700, tiny)
        assert g_tiny < 1e-3 * gpe.coupling_g1d(700, geo)

    def test_az_scaling_at_fixed_overlap(self, constants):
        # g1d * a_z / I_x is geometry-independent (= g3d / sqrt(2 pi))
        for n in (10, 700):
            geo = gpe.default_geometry(n, constants)
            a, L = geo.alpha, geo.axial_half_length
            ix = a**2 * L * (a**2 + 9 * a + 21) / (315 * (constants.a3d_scattering * n) ** 2)
            ratio = gpe.coupling_g1d(n, geo) * geo.a_z / ix
            assert ratio == pytest.approx(constants.g3d / math.sqrt(2 * math.pi), rel=1e-12)


class TestAxialDensity:
    def test_edges_and_center(self, constants):
        geo = gpe.default_geometry(700, constants)
        L = geo.axial_half_length
        assert gpe.axial_density(np.array([-L, L]), geo) == pytest.approx([0.0, 0.0], abs=1e-30)
        assert gpe.axial_density(1.5 * L, geo) == 0.0
        center = geo.alpha * (geo.alpha + 4) / (16 * constants.a3d_scattering)
        assert gpe.axial_density(0.0, geo) == pytest.approx(center, rel=1e-14)

    def test_normalization_is_atom_number(self, constants):
        geo = gpe.default_geometry(700, constants)
        L = geo.axial_half_length
        x = np.linspace(-L, L, 20001)
        total = np.trapezoid(gpe.axial_density(x, geo), x)
        assert total == pytest.approx(700, rel=1e-6)


class TestStationaryStates:
    def test_harmonic_ground_state_analytic(self, constants, harmonic_pot, chip_grid):
        omega = harmonic_pot.harmonic_angular_frequency(constants)
        res = gpe.ground_state(harmonic_pot, 1, 0.0, chip_grid, constants)
        y = chip_grid.points
        sigma = math.sqrt(constants.hbar / (constants.mass * omega))
        phi = (math.pi * sigma**2) ** -0.25 * np.exp(-(y**2) / (2 * sigma**2))
        ov = abs(np.sum(phi * res.state.psi.conj()) * chip_grid.dy) ** 2
        assert ov > 1 - 1e-8
        energy = gpe.gp_energy(res.state, harmonic_pot, constants)
        assert energy == pytest.approx(0.5 * constants.hbar * omega, rel=1e-8)
        assert res.mu == pytest.approx(0.5 * constants.hbar * omega, rel=1e-8)

    def test_harmonic_first_excited_analytic(self, constants, harmonic_pot, chip_grid):
        omega = harmonic_pot.harmonic_angular_frequency(constants)
        res = gpe.first_excited_state(harmonic_pot, 1, 0.0, chip_grid, constants)
        assert res.mu == pytest.approx(1.5 * constants.hbar * omega, rel=1e-8)

    def test_full_potential_chemical_potentials(self, stationary_700):
        gs, ex = stationary_700
        # regression for the documented default geometry; the interacting
        # ground state sits near h * 1.08 kHz, the odd state above it
        assert gs.mu / H == pytest.approx(1075.0, rel=0.02)
        assert ex.mu > gs.mu

    def test_excited_state_single_node(self, chip_pot, chip_grid, constants):
        for n in (1, 700, 7000):
            g1 = gpe.g1d_for_atoms(n, constants)
            ex = gpe.first_excited_state(chip_pot, n, g1, chip_grid, constants)
            psi = ex.state.psi.real
            bulk = np.abs(psi) > 1e-6 * np.max(np.abs(psi))
            signs = np.sign(psi[bulk])
            assert np.sum(np.abs(np.diff(signs)) > 1) == 1

    def test_parity_orthogonality(self, stationary_700):
        gs, ex = stationary_700
        ov = np.sum(np.conj(gs.state.psi) * ex.state.psi) * gs.state.grid.dy
        assert abs(ov) < 1e-12

    def test_displaced_potential_rejected_for_excited(self, chip_pot, constants):
        with pytest.raises(ValueError):
            gpe.first_excited_state(chip_pot.displaced(1e-7), 1, 0.0, None, constants)


def constant_field(value, total_time, n=64, unit="m"):
    t = np.linspace(0.0, total_time, n)
    return ControlField(t, np.full(n, float(value)), value, value, unit=unit)


class TestEvolve:
    def test_stationary_state_is_fixed_point(self, stationary_700, chip_pot, constants):
        gs, _ = stationary_700
        traj = gpe.evolve(gs.state, constant_field(0.0, 1.09e-3), 1e-7, chip_pot,
                          constants=constants)
        ov = abs(np.sum(np.conj(gs.state.psi) * traj.final_state.psi) * gs.state.grid.dy) ** 2
        assert ov > 1 - 1e-8
        assert traj.norm_drift < 1e-10

    def test_short_run_norm_per_step(self, stationary_700, chip_pot, constants):
        gs, _ = stationary_700
        traj = gpe.evolve(gs.state, constant_field(2e-7, 1e-5), 1e-7, chip_pot,
                          constants=constants)
        assert traj.norm_drift / traj.n_steps < 1e-12

    def test_coherent_oscillation(self, constants, harmonic_pot, chip_grid):
        omega = harmonic_pot.harmonic_angular_frequency(constants)
        res = gpe.ground_state(harmonic_pot, 1, 0.0, chip_grid, constants)
        d = 2e-8
        total = 2 * math.pi / omega  # one period
        traj = gpe.evolve(res.state, constant_field(d, total), 5e-8, harmonic_pot,
                          sample_stride=200, constants=constants)
        y = chip_grid.points
        for t, psi in zip(traj.times, traj.psis):
            mean_y = float(np.sum(y * np.abs(psi) ** 2) * chip_grid.dy)
            expected = d * (1 - math.cos(omega * t))
            assert mean_y == pytest.approx(expected, abs=1e-6 * d + 1e-12)

    def test_energy_conserved_static_hamiltonian(self, stationary_700, chip_pot, constants):
        gs, _ = stationary_700
        lam = 3e-8
        pot_d = chip_pot.displaced(lam)
        traj = gpe.evolve(gs.state, constant_field(lam, 2e-4), 2e-8, chip_pot,
                          sample_stride=2000, constants=constants)
        energies = []
        for psi in traj.psis:
            st = gpe.MeanFieldState(gs.state.grid, psi / math.sqrt(
                np.sum(np.abs(psi) ** 2) * gs.state.grid.dy), 700, gs.state.g1d)
            energies.append(gpe.gp_energy(st, pot_d, constants))
        energies = np.array(energies)
        assert np.max(np.abs(energies - energies[0])) / abs(energies[0]) < 1e-9

    def test_even_parity_preserved(self, stationary_700, chip_pot, constants):
        gs, _ = stationary_700
        traj = gpe.evolve(gs.state, constant_field(0.0, 3e-4), 1e-7, chip_pot,
                          constants=constants)
        psi = traj.final_state.psi
        mirrored = np.roll(psi[::-1], 1)
        assert np.max(np.abs(psi - mirrored)) < 1e-10 * np.max(np.abs(psi))

    def test_too_coarse_dt_rejected(self, stationary_700, chip_pot, constants):
        gs, _ = stationary_700
        with pytest.raises(ValueError):
            gpe.evolve(gs.state, constant_field(0.0, 1e-3), 1e-4, chip_pot,
                       constants=constants)


class TestInfidelity:
    def test_identity_and_orthogonal(self, stationary_700):
        gs, ex = stationary_700
        assert gpe.infidelity(ex.state, ex.state) == pytest.approx(0.0, abs=1e-12)
        assert gpe.infidelity(gs.state, ex.state) == pytest.approx(1.0, abs=1e-12)

    def test_grid_mismatch_rejected(self, stationary_700, chip_pot, constants):
        gs, ex = stationary_700
        other = gpe.ground_state(chip_pot, 700, gs.state.g1d,
                                 gpe.default_grid(n_points=512), constants)
        with pytest.raises(ValueError):
            gpe.infidelity(other.state, ex.state)

    def test_displacement_baseline(self, stationary_700):
        # the best rigid displacement of the ground state overlaps one lobe
        # of the target, leaving an infidelity near 0.6
        gs, ex = stationary_700
        grid = gs.state.grid
        y = grid.points
        best = 1.0
        for d in np.linspace(0.0, 1e-6, 101):
            shifted = np.interp(y - d, y, gs.state.psi.real, left=0.0, right=0.0)
            nrm = math.sqrt(np.sum(shifted**2) * grid.dy)
            if nrm == 0:
                continue
            ov = abs(np.sum(ex.state.psi.conj() * shifted / nrm) * grid.dy) ** 2
            best = min(best, 1 - ov)
        assert best == pytest.approx(0.6, abs=0.1)


def test_momentum_density_normalized(stationary_700):
    gs, _ = stationary_700
    k, dens = gs.state.momentum_density()
    assert np.trapezoid(dens, k) == pytest.approx(1.0, rel=1e-8)
