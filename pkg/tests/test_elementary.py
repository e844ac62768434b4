"""Elementary segment generation and the small-error closed forms."""

import math

import numpy as np
import pytest

from ghznet.analysis import fidelity, ghz_state
from ghznet.channels import ImperfectionSet, bell_pair
from ghznet.elementary import (
    analytic_elementary,
    efficiency_from_cooperativity,
    generate_elementary,
    optimal_epsilon,
    optimize_epsilon_numeric,
    truncation_deficit,
    two_mode_squeezed,
)

IDEAL = ImperfectionSet(f=0.0, v=0.0, d=0.0, eta=1.0, eps_a=0.2)
# the working point quoted for a 22 km segment
WORK = ImperfectionSet(f=0.05, v=0.05, d=0.001, eta=0.6, eps_a=0.226)


class TestSources:
    def test_two_mode_squeezed_weights(self):
        eps = 0.3
        psi = two_mode_squeezed(eps, n_max=4)
        sp = psi.space
        a0 = psi.amplitudes[sp.basis_index((0, 0))]
        for n in range(5):
            expected = a0 * eps**n
            assert psi.amplitudes[sp.basis_index((n, n))] == pytest.approx(expected)
        # normalized up to the truncated tail
        tail = (1 - eps**2) * truncation_deficit(eps, 4)
        assert psi.norm**2 == pytest.approx(1.0 - tail, abs=1e-12)

    def test_truncation_deficit(self):
        eps = 0.3
        assert truncation_deficit(eps, 2) == pytest.approx(eps**6 / (1 - eps**2))

    def test_deficit_warning(self):
        small = ImperfectionSet(f=0.0, v=0.0, d=0.0, eta=1.0, eps_a=0.5)
        with pytest.warns(RuntimeWarning):
            generate_elementary("2D", small, 0.0, n_max=2)


class TestIdealSegment:
    def test_exact_ghz_at_any_pumping(self):
        for eps in (0.05, 0.2):
            imp = ImperfectionSet(f=0.0, v=0.0, d=0.0, eta=1.0, eps_a=eps)
            res = generate_elementary("2D", imp, 0.0, n_max=7)
            assert fidelity(res.rho_e, ghz_state(7)) == pytest.approx(1.0, abs=1e-10)

    def test_ideal_success_probability(self):
        # 2 (1 - eps^2)^2 eps^2, exact up to truncation
        res = generate_elementary("2D", IDEAL, 0.0, n_max=7)
        eps = IDEAL.eps_a
        assert res.q1 == pytest.approx(2 * (1 - eps**2) ** 2 * eps**2, abs=1e-10)

    def test_attempt_duration(self):
        res = generate_elementary("2D", WORK, 22.0, n_max=2)
        assert res.attempt_duration == pytest.approx(2 * 22.0 / 2.0e5 + 1e-4)

    def test_ideal_1d_link_is_bell(self):
        imp = ImperfectionSet(f=0.0, v=0.0, d=0.0, eta=1.0, eps_a=0.15)
        res = generate_elementary("1D", imp, 0.0, n_max=7)
        assert res.rho_e.space.num_modes == 2
        assert fidelity(res.rho_e, bell_pair(n_max=7)) == pytest.approx(1.0, abs=1e-10)


class TestWorkingPoint:
    def test_fidelity_anchor(self):
        res = generate_elementary("2D", WORK, 22.0, n_max=7)
        f = fidelity(res.rho_e, ghz_state(7))
        assert f == pytest.approx(0.918, abs=0.01)
        # regression pin of this implementation's value
        assert f == pytest.approx(0.9148919733747177, abs=1e-9)

    def test_numeric_matches_closed_form(self):
        ana = analytic_elementary(WORK, 22.0)
        res = generate_elementary("2D", WORK, 22.0, n_max=7)
        f_num = fidelity(res.rho_e, ghz_state(7))
        f_ana = math.sqrt(ana.q_ghz / ana.q1)
        assert abs(f_num - f_ana) <= 2e-2
        assert res.q1 == pytest.approx(ana.q1, rel=0.10)


class TestClosedForms:
    def test_branch_weights(self):
        imp = ImperfectionSet(f=0.05, v=0.05, d=0.001, eta=0.6, eps_a=0.1)
        ana = analytic_elementary(imp, 22.0)
        assert ana.q_ghz == pytest.approx(4.124e-3, abs=1e-5)
        assert ana.q_l == pytest.approx(5.160e-5, abs=1e-7)
        assert ana.q1 == pytest.approx(2 * imp.d + ana.q_ghz + ana.q_l + ana.q_r)

    def test_optimal_epsilon_formula(self):
        eps_op, f_max = optimal_epsilon(WORK, 22.0)
        assert eps_op == pytest.approx(0.226, abs=1e-3)
        assert f_max == pytest.approx(0.918, abs=1e-3)

    def test_numeric_optimum_near_formula(self):
        opt = optimize_epsilon_numeric(WORK, 22.0, n_max=7)
        eps_op, _ = optimal_epsilon(WORK, 22.0)
        assert not opt.degenerate
        assert opt.eps_a == pytest.approx(eps_op, rel=0.10)

    def test_ideal_optimum_degenerate(self):
        imp = ImperfectionSet(f=0.0, v=0.0, d=0.0, eta=1.0, eps_a=0.1)
        opt = optimize_epsilon_numeric(imp, 0.0, n_max=4, scan_max=0.3)
        assert opt.degenerate

    def test_efficiency_from_cooperativity(self):
        assert efficiency_from_cooperativity(1.5) == pytest.approx(0.6)
        assert efficiency_from_cooperativity(math.inf) == 1.0
