"""Root finding: residuals, Jacobians, continuation, derived eigenvalues.

Pinned numbers were computed from independent closed forms (one- and
two-level algebra) or from the dense-sector diagonalization oracle
before being frozen here.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from rgpairing import model, oracle, solver
from rgpairing.model import PairingModel
from rgpairing.solver import ContinuationSchedule, StateLabel

from conftest import random_model, separated_levels

ROOT2 = math.sqrt(0.5)


class TestResidual:
    def test_single_level_unit_capacity(self):
        m = PairingModel(levels=[0.0], pairs=1, coupling=0.3)
        r = solver.residual(m, [-0.3])
        assert np.abs(r).max() <= 1e-14

    def test_single_level_higher_capacity(self):
        # capacity d: the root of d/t + 1/g sits at t = -d g
        m = PairingModel(levels=[0.0], degeneracies=[3], pairs=1, coupling=0.3)
        r = solver.residual(m, [-0.9])
        assert np.abs(r).max() <= 1e-14

    def test_two_level_quadratic_root(self):
        # 1/t + 1/(t-1) = -2 reduces to 2 t^2 = 1
        m = PairingModel(levels=[0.0, 1.0], pairs=1, coupling=0.5)
        r = solver.residual(m, [-ROOT2])
        assert np.abs(r).max() <= 1e-12

    def test_trig_single_level(self):
        # cot(t) = -1/g with g = 1 is solved by t = 3 pi / 4
        m = PairingModel(levels=[0.0], pairs=1, coupling=1.0, kind="trig")
        r = solver.residual(m, [0.75 * math.pi])
        assert np.abs(r).max() <= 1e-12


class TestJacobian:
    def test_single_root_diagonal_entry(self):
        m = PairingModel(levels=[0.0, 1.0], pairs=1, coupling=0.5)
        j = solver.jacobian(m, [-ROOT2])
        expected = -(1.0 / ROOT2 ** 2 + 1.0 / (-ROOT2 - 1.0) ** 2)
        assert j.shape == (1, 1)
        assert abs(j[0, 0] - expected) <= 1e-12
        assert abs(j[0, 0] - (-2.3431457505076194)) <= 1e-9

    def test_pair_coupling_off_diagonal(self):
        m = PairingModel(levels=[0.0, 1.0, 2.0], pairs=2, coupling=0.4)
        t = np.array([0.3 + 0.5j, -0.4 - 0.2j])
        j = solver.jacobian(m, t)
        assert abs(j[0, 1] - (-2.0 / (t[0] - t[1]) ** 2)) <= 1e-12
        assert abs(j[1, 0] - (-2.0 / (t[1] - t[0]) ** 2)) <= 1e-12

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        m = random_model(rng, 4, 2, 0.6)
        t = np.array([0.2 + 0.4j, 1.1 - 0.3j])
        j = solver.jacobian(m, t)
        h = 1e-7
        for k in range(2):
            tp, tm = t.copy(), t.copy()
            tp[k] += h
            tm[k] -= h
            fd = (solver.residual(m, tp) - solver.residual(m, tm)) / (2 * h)
            assert np.abs(fd - j[:, k]).max() <= 1e-6


class TestSolveAtG:
    def test_converges_from_nearby_seed(self, two_level_model):
        rs = solver.solve_at_g(two_level_model, [-0.6])
        assert abs(rs.roots[0] - (-ROOT2)) <= 1e-10
        assert rs.residual <= 1e-12

    def test_exact_seed_is_fixed_point(self, two_level_model):
        rs = solver.solve_at_g(two_level_model, [-ROOT2])
        assert rs.meta["newton_iters"] <= 1
        assert abs(rs.roots[0] - (-ROOT2)) <= 1e-12

    def test_coincident_seed_rejected(self):
        m = PairingModel(levels=[0.0, 1.0], pairs=2, coupling=0.5)
        with pytest.raises(solver.SolverError, match="coincident"):
            solver.solve_at_g(m, [0.3, 0.3])


class TestContinueInG:
    def test_ground_state_two_level(self, two_level_model):
        rs = solver.continue_in_g(two_level_model)
        assert abs(rs.roots[0] - (-ROOT2)) <= 1e-9
        assert rs.residual <= 1e-10

    def test_weak_coupling_roots_sit_on_occupied_levels(self):
        m = PairingModel(levels=[0.2, 0.9, 1.3, 1.8], pairs=2, coupling=1e-6)
        sch = ContinuationSchedule(g_target=1e-6, g_start=1e-6)
        rs = solver.continue_in_g(m, schedule=sch)
        t = np.sort_complex(np.asarray(rs.roots))
        assert abs(t[0] - 0.2) <= 1e-4
        assert abs(t[1] - 0.9) <= 1e-4

    def test_ground_energy_matches_dense_diagonalization(self):
        m = PairingModel(levels=[1.0, 2.0, 3.0, 4.0], pairs=2, coupling=0.5)
        rs = solver.continue_in_g(m)
        spectrum = oracle.ed_spectrum(oracle.hamiltonian_matrix(m))
        assert abs(rs.energy.real - spectrum[0]) <= 1e-9

    def test_excited_label_reaches_other_branch(self, two_level_model):
        rs = solver.continue_in_g(two_level_model, StateLabel((1,)))
        assert abs(rs.roots[0] - ROOT2) <= 1e-9

    def test_zero_pair_state(self):
        m = PairingModel(levels=[0.0, 1.0, 2.2], pairs=0, coupling=0.5)
        rs = solver.continue_in_g(m)
        assert rs.roots == ()
        assert rs.energy == 0


class TestEnergy:
    def test_two_level_value_matches_dense_ground_eigenvalue(self, two_level_model):
        rs = solver.continue_in_g(two_level_model)
        pair_matrix = np.array([[-0.5, -0.5], [-0.5, 0.5]])
        ground = np.linalg.eigvalsh(pair_matrix)[0]
        assert abs(solver.energy(rs) - ground) <= 1e-9

    def test_empty_root_set_gives_zero(self):
        rs = model.RootSet(roots=(), g=0.5, residual=0.0,
                           conjugation_closed=True)
        assert solver.energy(rs) == 0.0

    def test_conjugate_pair_sums_to_real_part(self):
        rs = model.RootSet(roots=(0.3 + 0.2j, 0.3 - 0.2j), g=0.5,
                           residual=0.0, conjugation_closed=True)
        assert solver.energy(rs) == 0.6


class TestGaudinEigenvalues:
    def test_two_level_values(self, two_level_model):
        rs = solver.continue_in_g(two_level_model)
        e = solver.gaudin_eigenvalues(two_level_model, rs)
        assert abs(e[0] - (-1.9142135623730951)) <= 1e-9
        assert abs(e[1] - (-0.08578643762690495)) <= 1e-9

    def test_zero_pair_closed_form(self):
        m = PairingModel(levels=[0.1, 0.9, 2.0], pairs=0, coupling=0.5)
        e = solver.gaudin_eigenvalues(m, model.RootSet(
            roots=(), g=0.5, residual=0.0, conjugation_closed=True))
        xi = np.asarray(m.levels)
        for i in range(3):
            expected = 0.5 * sum(1.0 / (xi[i] - xi[a]) for a in range(3) if a != i)
            assert abs(e[i] - expected) <= 1e-12

    def test_requires_unit_capacity(self):
        m = PairingModel(levels=[0.0, 1.0], degeneracies=[2, 1], pairs=1,
                         coupling=0.5)
        rs = solver.continue_in_g(m)
        with pytest.raises(ValueError):
            solver.gaudin_eigenvalues(m, rs)


class TestGeneralizedEnergy:
    def test_zero_weights(self):
        assert solver.generalized_energy([0.0, 0.0], [1.3, -0.4], 0.7) == 0.0

    def test_indicator_weight_picks_single_eigenvalue(self):
        eigs = [(-1.9142135623730951), (-0.08578643762690495)]
        got = solver.generalized_energy([1.0, 0.0], eigs, 0.5)
        assert abs(got - (-0.5 * eigs[0])) <= 1e-15

    def test_matches_dense_matrix_of_weighted_hamiltonian(self):
        # sum_i eps_i n_i - (g/2) sum_{i<j} (eps_i - eps_j)/(xi_i - xi_j) (sigma_i . sigma_j)
        rng = np.random.default_rng(23)
        m = PairingModel(levels=[0.1, 0.9, 2.0], pairs=1, coupling=0.35)
        rs = solver.continue_in_g(m)
        eigs = solver.gaudin_eigenvalues(m, rs)
        eps = rng.normal(size=3)
        basis = oracle.sector_basis(m)
        h = sum(eps[i] * oracle.number_op(m, i, basis).matrix for i in range(3))
        for i in range(3):
            for j in range(i + 1, 3):
                w = 0.5 * m.coupling * (eps[i] - eps[j]) / (m.levels[i] - m.levels[j])
                h = h - w * oracle.sigma_dot_op(m, i, j, basis).matrix
        psi = oracle.sigma_plus_state(m, rs.roots)
        value = solver.generalized_energy(eps, eigs, m.coupling)
        assert np.abs(h @ psi - value * psi).max() <= 1e-10 * np.abs(psi).max()

    def test_level_weights_shift_energy_by_state_independent_constant(self):
        m = PairingModel(levels=[0.1, 0.9, 2.0], pairs=1, coupling=0.35)
        shifts = []
        for label in solver.enumerate_labels(m):
            rs = solver.continue_in_g(m, label)
            eigs = solver.gaudin_eigenvalues(m, rs)
            value = solver.generalized_energy(m.levels, eigs, m.coupling)
            shifts.append(value - rs.energy.real)
        assert np.ptp(shifts) <= 1e-9


class TestLabels:
    def test_ground_label_fills_lowest_levels(self):
        m = PairingModel(levels=[0.0, 1.0, 2.0], degeneracies=[1, 2, 1],
                         pairs=2, coupling=0.5)
        assert solver.ground_label(m).occupied_levels == (0, 1)

    def test_enumeration_matches_sector_dimension(self):
        m = PairingModel(levels=[0.0, 1.0, 2.0, 3.0], pairs=2, coupling=0.5)
        labels = solver.enumerate_labels(m)
        assert len(labels) == 6
        assert len(set(labels)) == 6

    def test_seed_roots_start_near_occupied_levels(self):
        m = PairingModel(levels=[0.0, 1.0, 2.0, 3.0], pairs=2, coupling=0.5)
        seeds = solver.seed_roots(m, StateLabel((1, 3)), 1e-7)
        assert abs(seeds[0] - 1.0) <= 1e-4
        assert abs(seeds[1] - 3.0) <= 1e-4


class TestSolverInvariants:
    def test_residual_bound_and_conjugation_closure(self):
        # converged residual stays below newton_tol * (1 + 1/g), loosened to
        # newton_tol * (sum of term magnitudes) when cancellation noise sets
        # the attainable floor
        rng = np.random.default_rng(7)
        for _ in range(6):
            n = int(rng.integers(2, 8))
            m_pairs = int(rng.integers(1, n + 1))
            g = float(rng.uniform(0.1, 1.2))
            m = random_model(rng, n, m_pairs, g)
            rs = solver.continue_in_g(m)
            t = np.asarray(rs.roots)
            xi = np.asarray(m.levels, dtype=float)
            scales = []
            for i, ti in enumerate(t):
                s = float(np.sum(np.asarray(m.degeneracies) / np.abs(ti - xi)))
                s += sum(2.0 / abs(ti - tk) for k, tk in enumerate(t) if k != i)
                scales.append(s + 1.0 / g)
            floor = max(scales) if scales else 1.0
            assert rs.residual <= 1e-12 * max(1.0 + 1.0 / g, floor)
            assert rs.conjugation_closed
            paired = np.sort_complex(np.conj(t))
            assert np.abs(np.sort_complex(t) - paired).max() <= 1e-10

    def test_ground_energy_monotone_in_coupling(self):
        rng = np.random.default_rng(19)
        m = random_model(rng, 6, 3, 1.0)
        energies = []
        for g in np.linspace(0.01, 1.0, 12):
            rs = solver.continue_in_g(m.with_coupling(float(g)))
            energies.append(rs.energy.real)
        diffs = np.diff(energies)
        assert (diffs <= 1e-10).all()

    def test_full_spectrum_matches_dense_diagonalization(self):
        rng = np.random.default_rng(31)
        m = random_model(rng, 6, 3, 0.8)
        states = solver.full_spectrum(m)
        got = np.sort([rs.energy.real for rs in states])
        want = oracle.ed_spectrum(oracle.hamiltonian_matrix(m))
        assert len(got) == len(want)
        scale = max(1.0, np.abs(want).max())
        assert np.abs(got - want).max() <= 1e-8 * scale

    def test_schedule_respects_custom_target_tolerance(self, two_level_model):
        sch = ContinuationSchedule(g_target=0.5, newton_tol=1e-13)
        rs = solver.continue_in_g(two_level_model, schedule=sch)
        assert rs.residual <= 1e-12
