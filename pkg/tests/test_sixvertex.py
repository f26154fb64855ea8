"""Finite-eta vertex-model laboratory: gates, monodromy, factorizing basis.

The two-point extrapolation tests evaluate a quantity at eta and eta/2 and
assert the documented shrink rate (2 for first-order remainders, 4 for
second-order ones) within a generous window, which pins the expansion order
without chasing the constant.
"""

from __future__ import annotations

import numpy as np
import pytest

from rgpairing import sixvertex, solver
from rgpairing.model import PairingModel
from rgpairing.sixvertex import SixVertexError, SixVertexParams

I2 = np.eye(2)
I4 = np.eye(4)
P4 = np.eye(4)[[0, 2, 1, 3]]
SZ = np.diag([1.0, -1.0])
SP = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # occupies a site
SM = SP.T.copy()

LEVELS3 = (0.15, 0.8, 1.7)


def kron_chain(ops):
    out = np.array([[1.0 + 0.0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def one_site(op, i, n):
    return kron_chain([op if k == i else I2 for k in range(n)])


def sigma_dot(i, j, n):
    return (kron_chain([SZ if k in (i, j) else I2 for k in range(n)])
            + 2.0 * (one_site(SP, i, n) @ one_site(SM, j, n)
                     + one_site(SM, i, n) @ one_site(SP, j, n)))


def weighted_raising(levels, t):
    n = len(levels)
    return sum(one_site(SP, i, n) / (t - x) for i, x in enumerate(levels))


def params_for(eta, levels=LEVELS3, g=0.7):
    return SixVertexParams(eta=eta, levels=levels,
                           twist=eta / (2.0 * g * len(levels)))


class TestSMatrix:
    def test_equal_arguments_swap_with_weight_eta(self):
        eta = 0.37 + 0.21j
        s = sixvertex.s_matrix(0.0, 0.0, eta)
        want = np.zeros(4, dtype=complex)
        want[1] = eta  # |10> -> eta |01>
        assert np.abs(s[:, 2] - want).max() <= 1e-15
        assert np.abs(s - eta * P4).max() <= 1e-15

    def test_eta_zero_is_scalar(self):
        s = sixvertex.s_matrix(1.3, 0.4, 0.0)
        assert np.abs(s - 0.9 * I4).max() == 0.0

    def test_yang_baxter_holds_on_random_draws(self):
        rng = np.random.default_rng(17)
        worst = 0.0
        for _ in range(100):
            t1, t2, t3 = rng.uniform(-2.0, 2.0, 3)
            eta = complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))
            worst = max(worst, sixvertex.yang_baxter_residual(t1, t2, t3, eta))
        assert worst <= 1e-12


class TestMonodromy:
    def test_single_site_blocks_by_hand(self):
        eta, w, xi, t = 0.37 + 0.21j, 0.13, 0.8, 0.3 - 0.5j
        p = SixVertexParams(eta=eta, levels=(xi,), twist=w)
        blocks = sixvertex.monodromy(p, t)
        # ordered product of one twisted gate, written out on the pair basis
        assert np.abs(blocks.a - np.exp(-w) * ((xi - t) * I2 + 0.5 * eta * SZ)).max() == 0.0
        assert np.abs(blocks.d - np.exp(+w) * ((xi - t) * I2 - 0.5 * eta * SZ)).max() == 0.0
        assert np.abs(blocks.b - np.exp(-w) * eta * SP).max() == 0.0
        assert np.abs(blocks.c - np.exp(+w) * eta * SM).max() == 0.0

    def test_transfer_matrices_commute(self):
        p = SixVertexParams(eta=0.4 + 0.1j, levels=LEVELS3, twist=0.22)
        z1 = sixvertex.monodromy(p, 0.9 + 0.3j).transfer()
        z2 = sixvertex.monodromy(p, -0.4 - 0.6j).transfer()
        comm = np.abs(z1 @ z2 - z2 @ z1).max()
        assert comm <= 1e-11 * np.linalg.norm(z1) * np.linalg.norm(z2)

    def test_quantum_determinant_identity(self):
        eta, t = 0.37 + 0.21j, 0.3 - 0.5j
        for levels in ((0.2, 1.1), LEVELS3):
            p = SixVertexParams(eta=eta, levels=levels, twist=0.2)
            hi = sixvertex.monodromy(p, t)
            lo = sixvertex.monodromy(p, t - eta)
            q = hi.d @ lo.a - hi.b @ lo.c
            rhs = np.prod([(t - x + eta / 2) * (t - x - 1.5 * eta)
                           for x in levels])
            dim = 2 ** len(levels)
            assert np.abs(q - rhs * np.eye(dim)).max() <= 1e-10 * abs(rhs)

    def test_vacuum_expectations_closed_form(self):
        eta, t = 0.29 - 0.11j, 1.9 + 0.4j
        p = SixVertexParams(eta=eta, levels=LEVELS3, twist=0.21)
        a_val, d_val = sixvertex.vacuum_expectations(p, t)
        want_a = np.exp(-3 * 0.21) * np.prod([x - t + eta / 2 for x in LEVELS3])
        want_d = np.exp(+3 * 0.21) * np.prod([x - t - eta / 2 for x in LEVELS3])
        assert abs(a_val - want_a) <= 1e-12 * abs(want_a)
        assert abs(d_val - want_d) <= 1e-12 * abs(want_d)
        blocks = sixvertex.monodromy(p, t)
        assert abs(blocks.a[0, 0] - a_val) <= 1e-12 * abs(a_val)
        assert abs(blocks.d[0, 0] - d_val) <= 1e-12 * abs(d_val)

    def test_quasiclassical_transfer_expansion(self):
        g, t = 0.7, 2.3 + 0.4j
        hq = sixvertex.quasiclassical_hamiltonian(LEVELS3, g, t)
        norm = np.prod([x - t for x in LEVELS3])
        target = hq + np.eye(8) / (4.0 * g * g)

        def coefficient_gap(e):
            avg = 0.5 * (sixvertex.monodromy(params_for(e, g=g), t).transfer()
                         + sixvertex.monodromy(params_for(-e, g=g), t).transfer())
            return np.abs((avg / norm - 2.0 * np.eye(8)) / e**2 - target).max()

        lead = coefficient_gap(1e-3)
        assert lead <= 1e-5
        assert abs(coefficient_gap(1e-3) / coefficient_gap(5e-4) - 4.0) <= 0.8

    def test_site_factor_first_order(self):
        g, t, i = 0.7, 2.3 + 0.4j, 1
        ss = np.kron(SZ, SZ) + 2.0 * (np.kron(SP, SM) + np.kron(SM, SP))
        # the twist exponential carries e^{-w sz} on the auxiliary factor,
        # so the occupied auxiliary state is the one weighted by e^{+w}
        def gap(e):
            got = sixvertex.site_factor(params_for(e, g=g), i, t) / (LEVELS3[i] - t)
            want = (I4 + e * ss / (2.0 * (LEVELS3[i] - t))
                    - (e / (2.0 * g * 3)) * np.kron(I2, SZ))
            return np.abs(got - want).max()

        assert abs(gap(1e-3) / gap(5e-4) - 4.0) <= 0.8


class TestFactorizingOperator:
    def test_single_site_is_identity(self):
        p = SixVertexParams(eta=0.37 + 0.21j, levels=(0.8,), twist=0.13)
        assert np.abs(sixvertex.f_operator(p) - I2).max() == 0.0

    def test_vacuum_invariance(self):
        rng = np.random.default_rng(29)
        for _ in range(5):
            levels = tuple(np.sort(rng.uniform(0.0, 2.0, 4)))
            p = SixVertexParams(eta=complex(rng.uniform(0.2, 0.6),
                                            rng.uniform(-0.3, 0.3)),
                                levels=levels, twist=0.0)
            f = sixvertex.f_operator(p)
            vac = np.zeros(16)
            vac[0] = 1.0
            assert np.abs(f @ vac - vac).max() <= 1e-14

    def test_two_site_factorization(self):
        eta, levels = 0.37 + 0.21j, (0.25, 1.35)
        u = levels[1] - levels[0]
        gate = (u * I4 + eta * P4) / (u + eta)
        s21 = P4 @ gate @ P4
        f_full = sixvertex.f_operator(
            SixVertexParams(eta=eta, levels=levels, twist=0.0))
        f_perm = sixvertex.f_operator(
            SixVertexParams(eta=eta, levels=levels[::-1], twist=0.0))
        assert np.abs(f_full - s21 @ (P4 @ f_perm @ P4)).max() <= 1e-12

    def test_degenerate_parameters_raise(self):
        p = SixVertexParams(eta=0.5, levels=(0.3, 0.8), twist=0.0)
        with pytest.raises(SixVertexError):
            sixvertex.f_operator(p)


class TestFBasisFormulas:
    def test_diagonal_block_entries(self):
        eta, t = 0.31 + 0.12j, 2.1 - 0.4j
        p = SixVertexParams(eta=eta, levels=LEVELS3, twist=0.0)
        af, _, _ = sixvertex.fbasis_formulas(p, t)
        assert np.abs(af - np.diag(np.diag(af))).max() == 0.0
        for idx in range(8):
            bits = [(idx >> (2 - k)) & 1 for k in range(3)]
            want = 1.0
            for x, occ in zip(LEVELS3, bits):
                ct = (x - t) / (x - t + eta)
                want *= ct * (1 - occ) + occ
            assert abs(af[idx, idx] - want) <= 1e-13

    def test_single_site_raising_block(self):
        eta, xi, t = 0.37 + 0.21j, 0.8, 0.3 - 0.5j
        p = SixVertexParams(eta=eta, levels=(xi,), twist=0.0)
        _, bf, _ = sixvertex.fbasis_formulas(p, t)
        assert np.abs(bf - eta / (xi - t + eta) * SP).max() <= 1e-15

    def test_raising_block_reduces_to_weighted_raising(self):
        t = 2.3 + 0.4j
        target = weighted_raising(LEVELS3, t)

        def gap(e):
            _, bf, _ = sixvertex.fbasis_formulas(
                SixVertexParams(eta=e, levels=LEVELS3, twist=0.0), t)
            return np.abs(bf / e + target).max()

        assert abs(gap(1e-3) / gap(5e-4) - 2.0) <= 0.4

    def test_pole_rejected(self):
        p = SixVertexParams(eta=0.5, levels=(0.3, 1.1), twist=0.0)
        with pytest.raises(SixVertexError):
            sixvertex.fbasis_formulas(p, 0.3 + 0.5)  # xi_2 - t + eta = 0


class TestVerifyFBasis:
    def test_single_site_residuals_vanish(self):
        rep = sixvertex.verify_fbasis(
            SixVertexParams(eta=0.3, levels=(0.7,), twist=0.0), 1.9 + 0.2j)
        assert rep.passed
        assert max(rep.residuals.values()) <= 1e-14

    def test_three_sites_pass_with_unit_scalars(self):
        rep = sixvertex.verify_fbasis(
            SixVertexParams(eta=0.3, levels=LEVELS3, twist=0.0), 2.4 + 0.7j)
        assert rep.passed
        assert max(rep.residuals.values()) <= 1e-10
        assert max(abs(s - 1.0) for s in rep.scalars.values()) <= 1e-10

    def test_random_real_and_complex_draws(self):
        rng = np.random.default_rng(41)
        for n in (2, 3, 4):
            levels = tuple(np.sort(rng.uniform(0.0, 2.0, n)))
            for eta in (0.33, complex(0.3, 0.2)):
                p = SixVertexParams(eta=eta, levels=levels, twist=0.0)
                t = complex(rng.uniform(2.2, 3.0), rng.uniform(0.2, 0.8))
                rep = sixvertex.verify_fbasis(p, t)
                assert rep.passed, rep.residuals

    def test_unreachable_tolerance_fails(self):
        rep = sixvertex.verify_fbasis(
            SixVertexParams(eta=0.3, levels=LEVELS3, twist=0.0),
            2.4 + 0.7j, tolerance=1e-30)
        assert not rep.passed


class TestBilocalHamiltonian:
    def test_is_commutator_of_limit_operators(self):
        p = SixVertexParams(eta=0.31, levels=LEVELS3, twist=0.0)
        h = sixvertex.bilocal_hamiltonian(p)
        bp = sixvertex.bilocal_raising(p)
        cm = sixvertex.bilocal_lowering(p)
        assert np.abs(h - (bp @ cm - cm @ bp)).max() == 0.0

    def test_conserves_total_occupation(self):
        p = SixVertexParams(eta=0.31, levels=LEVELS3, twist=0.0)
        h = sixvertex.bilocal_hamiltonian(p)
        ntot = sum(one_site(np.diag([0.0, 1.0]), i, 3) for i in range(3))
        assert np.abs(h @ ntot - ntot @ h).max() <= 1e-12

    def test_commutes_with_conjugated_transfer(self):
        p = SixVertexParams(eta=0.31, levels=LEVELS3, twist=0.0)
        h = sixvertex.bilocal_hamiltonian(p)
        for t in (2.3 + 0.4j, -0.9 + 0.6j):
            zf = sixvertex.fbasis_transfer(p, t)
            assert np.abs(h @ zf - zf @ h).max() <= 1e-10

    def test_conjugated_transfer_quadratic_coefficient(self):
        t = 2.3 + 0.4j
        u = np.array([x - t for x in LEVELS3])
        closed = 0.5 * sum(sigma_dot(i, j, 3) / (u[i] * u[j])
                           for i in range(3) for j in range(i + 1, 3))
        closed = closed + (0.75 * np.sum(1.0 / u**2)
                           + 0.25 * np.sum(1.0 / u) ** 2) * np.eye(8)

        def gap(e):
            avg = 0.5 * (
                sixvertex.fbasis_transfer(
                    SixVertexParams(eta=e, levels=LEVELS3, twist=0.0), t)
                + sixvertex.fbasis_transfer(
                    SixVertexParams(eta=-e, levels=LEVELS3, twist=0.0), t))
            return np.abs((avg - 2.0 * np.eye(8)) / e**2 - closed).max()

        assert gap(1e-3) <= 1e-4
        assert abs(gap(1e-3) / gap(5e-4) - 4.0) <= 0.8


class TestBAResidual:
    def test_reduces_to_rational_residual(self):
        m = PairingModel(levels=list(LEVELS3), pairs=2, coupling=0.7)
        points = np.asarray(solver.continue_in_g(m).roots) + (0.11 + 0.07j)
        f_vals = solver.residual(m, points)

        def gap(e):
            return np.abs(
                sixvertex.ba_residual(params_for(e), 0.7, points) / e
                + f_vals).max()

        assert abs(gap(1e-3) / gap(5e-4) - 2.0) <= 0.4

    def test_on_shell_roots_quarter(self):
        m = PairingModel(levels=list(LEVELS3), pairs=2, coupling=0.7)
        points = np.asarray(solver.continue_in_g(m).roots)

        def scaled(e):
            return np.abs(
                sixvertex.ba_residual(params_for(e), 0.7, points) / e).max()

        assert abs(scaled(1e-3) / scaled(5e-4) - 4.0) <= 0.4

    def test_empty_root_list(self):
        out = sixvertex.ba_residual(params_for(0.3), 0.7, [])
        assert len(out) == 0

    def test_pole_collision_raises(self):
        p = params_for(0.3)
        with pytest.raises(SixVertexError):
            sixvertex.ba_residual(p, 0.7, [LEVELS3[0] - 0.15])
        with pytest.raises(SixVertexError):
            sixvertex.ba_residual(p, 0.7, [0.4 + 0.5j, 0.4 + 0.5j - 0.3])


class TestParams:
    def test_duplicate_levels_rejected(self):
        with pytest.raises(SixVertexError):
            SixVertexParams(eta=0.3, levels=(0.5, 0.5), twist=0.0)

    def test_zero_eta_rejected(self):
        with pytest.raises(SixVertexError):
            SixVertexParams(eta=0.0, levels=(0.5, 1.0), twist=0.0)
