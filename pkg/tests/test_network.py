"""Topology, schedules, and the static merge engine."""

import numpy as np
import pytest

from ghznet.analysis import fidelity, ghz_state
from ghznet.channels import ImperfectionSet, bell_pair, merge
from ghznet.fock import DensityOperator, ModeSpace, tensor
from ghznet.network import (
    CANONICAL_ORIENTATION,
    NetworkSpec,
    build_schedule,
    level_one_fidelity,
    memory_count,
    merge_level_detailed,
    merge_level_static,
    optimize_orientation,
    run_static,
    swap_count,
    _merge_across,
)

IDEAL = ImperfectionSet(f=0.0, v=0.0, d=0.0, eta=1.0)
GHZ2 = ghz_state(2)


def ghz_children(n=3):
    return [GHZ2.to_density()] * n


def bell_links(n=3):
    return [bell_pair(n_max=2).to_density()] * n


class TestNetworkSpec:
    def test_scheme_aliases(self):
        assert NetworkSpec("1D-benchmark", 1, 10.0, IDEAL).scheme == "1D"
        assert NetworkSpec("2d", 0, 10.0, IDEAL).scheme == "2D"

    def test_l0_halves_per_level(self):
        spec = NetworkSpec("2D", 3, 80.0, IDEAL)
        assert spec.L0 == pytest.approx(10.0)

    def test_rejects_bad_levels(self):
        with pytest.raises(ValueError):
            NetworkSpec("2D", -1, 10.0, IDEAL)
        with pytest.raises(ValueError):
            NetworkSpec("1D", 0, 10.0, IDEAL)

    def test_rejects_bad_orientation(self):
        with pytest.raises(ValueError):
            NetworkSpec("2D", 1, 10.0, IDEAL, orientation=((0, 1, 1),) * 3)


class TestCounts:
    @pytest.mark.parametrize(
        "scheme,n,expected",
        [("2D", 0, 0), ("2D", 2, 12), ("1D", 1, 6), ("1D", 2, 9)],
    )
    def test_swap_count(self, scheme, n, expected):
        assert swap_count(scheme, n) == expected

    @pytest.mark.parametrize(
        "scheme,n,expected",
        [("2D", 1, 9), ("2D", 2, 27), ("1D", 2, 21)],
    )
    def test_memory_count(self, scheme, n, expected):
        assert memory_count(scheme, n) == expected

    def test_1d_needs_a_level(self):
        with pytest.raises(ValueError):
            swap_count("1D", 0)


class TestSchedule:
    def test_event_count_matches_swap_count(self):
        for scheme, lo in (("2D", 0), ("1D", 1)):
            for n in range(lo, 5):
                spec = NetworkSpec(scheme, n, 16.0, IDEAL)
                assert len(build_schedule(spec)) == swap_count(scheme, n)

    def test_2d_level_spans(self):
        spec = NetworkSpec("2D", 2, 40.0, IDEAL)
        events = build_schedule(spec)
        assert [e.level for e in events] == [1] * 9 + [2] * 3
        assert all(e.span_km == pytest.approx(20.0) for e in events if e.level == 1)
        assert all(e.span_km == pytest.approx(40.0) for e in events if e.level == 2)

    def test_closure_is_two_merges_and_a_filter(self):
        events = build_schedule(NetworkSpec("2D", 1, 10.0, IDEAL))
        assert [e.kind for e in events] == ["merge", "merge", "filter"]

    def test_1d_structure(self):
        events = build_schedule(NetworkSpec("1D", 2, 40.0, IDEAL))
        kinds = [e.kind for e in events]
        assert kinds == ["swap"] * 3 + ["corner"] * 3 + ["merge", "merge", "filter"]
        assert all(e.span_km == 0.0 for e in events if e.kind == "corner")
        assert all(
            e.span_km == pytest.approx(40.0) for e in events if e.kind in ("merge", "filter")
        )
        # one doubling joins two half-links into the full span
        assert events[0].span_km == pytest.approx(40.0)


class TestMergeAcross:
    @pytest.mark.parametrize(
        "ma,ia,mb,ib", [(3, 2, 3, 1), (2, 1, 2, 0), (4, 3, 3, 1), (3, 0, 2, 1)]
    )
    def test_matches_tensor_then_merge(self, ma, ia, mb, ib):
        rng = np.random.default_rng(11 * ma + ib)
        imp = ImperfectionSet(f=0.06, v=0.11, d=0.004, eta=0.6)

        def rand_density(space):
            g = rng.normal(size=(space.dim, space.dim)) + 1j * rng.normal(
                size=(space.dim, space.dim)
            )
            m = g @ g.conj().T
            return DensityOperator(space, m / np.trace(m).real)

        a = rand_density(ModeSpace(ma, 2))
        b = rand_density(ModeSpace(mb, 2))
        ref, p_ref = merge(tensor(a, b), (ia, ma + ib), imp)
        got, p_got = _merge_across(a, ia, b, ib, imp)
        assert np.abs(ref.matrix - got.matrix).max() < 1e-12
        assert p_got == pytest.approx(p_ref, abs=1e-12)


class TestStaticMerge:
    def test_ideal_triangle_closure(self):
        spec = NetworkSpec("2D", 1, 2.0, IDEAL)
        state, probs = merge_level_detailed(ghz_children(), spec, 1)
        assert probs[0] == pytest.approx(0.5, abs=1e-9)
        assert probs[1] == pytest.approx(0.5, abs=1e-9)
        assert probs[2] == pytest.approx(1.0, abs=1e-9)
        assert fidelity(state, GHZ2) == pytest.approx(1.0, abs=1e-9)
        _, p = merge_level_static(ghz_children(), spec, 1)
        assert p == pytest.approx(0.25, abs=1e-9)

    def test_ideal_1d_final_step(self):
        # five probabilistic events, then the deterministic filter
        spec = NetworkSpec("1D", 1, 2.0, IDEAL)
        state, probs = merge_level_detailed(bell_links(), spec, 1)
        assert np.allclose(probs[:5], 0.5, atol=1e-9)
        assert probs[5] == pytest.approx(1.0, abs=1e-9)
        assert fidelity(state, GHZ2) == pytest.approx(1.0, abs=1e-9)

    def test_zero_probability_reported(self):
        vac = DensityOperator(ModeSpace(3, 2), np.diag([1.0] + [0.0] * 26))
        spec = NetworkSpec("2D", 1, 2.0, IDEAL)
        with pytest.raises(ValueError):
            merge_level_static([vac] * 3, spec, 1)

    def test_level_out_of_range(self):
        spec = NetworkSpec("2D", 1, 2.0, IDEAL)
        with pytest.raises(ValueError):
            merge_level_static(ghz_children(), spec, 2)

    def test_2d_level_one_infidelity_anchor(self):
        imp = ImperfectionSet(f=0.025, v=0.025, d=0.001, eta=0.6)
        spec = NetworkSpec("2D", 1, 2.0, imp)
        state, _ = merge_level_static(ghz_children(), spec, 1)
        infid = 1.0 - fidelity(state, GHZ2)
        assert infid == pytest.approx(3.75e-4, rel=0.30)

    def test_1d_two_level_infidelity_anchor(self):
        imp = ImperfectionSet(f=0.025, v=0.025, d=0.001, eta=0.6)
        spec = NetworkSpec("1D", 2, 4.0, imp)
        run = run_static(spec, child=bell_pair(n_max=2).to_density())
        infid = 1.0 - fidelity(run.state, GHZ2)
        assert infid == pytest.approx(3.375e-3, rel=0.30)


class TestGrowthRatios:
    """Per-level growth of 1 - F under ideal children and small errors.

    The leading scalings have geometric bases 3 (2D) and 4 (1D); lower
    order terms pollute raw consecutive ratios, so the base is read off
    the ratio of successive second differences.
    """

    IMP = ImperfectionSet(f=0.002, v=0.002, d=1e-4, eta=0.6)

    def test_2d_base(self):
        infids = []
        for n in range(0, 4):
            spec = NetworkSpec("2D", n, 2.0**n, self.IMP)
            run = run_static(spec, child=GHZ2.to_density())
            infids.append(1.0 - fidelity(run.state, GHZ2))
        d2 = np.diff(infids, 2)
        assert d2[1] / d2[0] == pytest.approx(3.0, rel=0.15)

    def test_1d_base(self):
        infids = []
        for n in range(1, 5):
            spec = NetworkSpec("1D", n, 2.0**n, self.IMP)
            run = run_static(spec, child=bell_pair(n_max=2).to_density())
            infids.append(1.0 - fidelity(run.state, GHZ2))
        d2 = np.diff(infids, 2)
        assert d2[1] / d2[0] == pytest.approx(4.0, rel=0.15)


class TestRunStatic:
    def test_level_zero_returns_child(self):
        spec = NetworkSpec("2D", 0, 1.0, IDEAL)
        child = GHZ2.to_density()
        run = run_static(spec, child=child)
        assert run.level_probabilities == ()
        assert run.joint_probability == 1.0
        assert np.allclose(run.state.matrix, child.matrix)

    def test_generates_elementary_children(self):
        imp = ImperfectionSet(f=0.05, v=0.05, d=0.001, eta=0.6, eps_a=0.1)
        run = run_static(NetworkSpec("2D", 1, 2.0, imp), n_max=2)
        assert run.state.space.num_modes == 3
        assert 0.0 < run.joint_probability < 1.0
        assert 0.5 < fidelity(run.state, GHZ2) <= 1.0


class TestOrientation:
    def test_symmetric_children_tie_returns_first(self):
        sym = DensityOperator(ModeSpace(3, 2), np.eye(27) / 27.0)
        spec = NetworkSpec("2D", 1, 2.0, ImperfectionSet())
        best = optimize_orientation(spec, children=[sym] * 3)
        assert best == ((0, 1, 2), (0, 1, 2), (0, 1, 2))

    def test_single_candidate_unchanged(self):
        cand = (((1, 2, 0), (0, 1, 2), (2, 1, 0)),)
        spec = NetworkSpec("2D", 1, 2.0, ImperfectionSet())
        sym = DensityOperator(ModeSpace(3, 2), np.eye(27) / 27.0)
        assert optimize_orientation(spec, candidates=cand, children=[sym] * 3) == cand[0]

    def test_ideal_children_select_canonical(self):
        spec = NetworkSpec("2D", 1, 2.0, IDEAL)
        assert optimize_orientation(spec, children=ghz_children()) == CANONICAL_ORIENTATION

    def test_filtering_raises_fidelity(self):
        # vacuum and multi-excitation admixtures are suppressed by the
        # heralded closure, so one nesting level beats its own children
        imp = ImperfectionSet(f=0.05, v=0.05, d=0.001, eta=0.6, eps_a=0.1)
        from ghznet.elementary import generate_elementary

        elem = generate_elementary("2D", imp, 22.0, n_max=2)
        f_e = fidelity(elem.rho_e, GHZ2)
        spec = NetworkSpec("2D", 1, 44.0, imp)
        best = optimize_orientation(spec)
        f_i = level_one_fidelity(imp, 22.0, n_max=2, orientation=best)
        assert f_i >= f_e

    def test_empty_candidates_rejected(self):
        spec = NetworkSpec("2D", 1, 2.0, IDEAL)
        with pytest.raises(ValueError):
            optimize_orientation(spec, candidates=())
