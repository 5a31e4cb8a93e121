"""Drop-smallest and subset-max PC rules, component extraction, curves."""

import math
from itertools import combinations

import numpy as np
import pytest
from scipy import stats

from _golden import (
    CASE_C,
    CASE_D,
    TABLE_2B_BONFERRONI,
    TABLE_2B_NEW_INCONSISTENT_R,
)
from pcmeta.combiners import CombinerSpec, combine_fisher
from pcmeta.errors import (
    EnumerationBudgetError,
    InputValidationError,
    NonConvergenceError,
)
from pcmeta.numerics import ProbValue
from pcmeta.oracle import NullConfig, mc_validity
from pcmeta.partial_conjunction import (
    GroupPartition,
    PcCurve,
    PcEntry,
    bhpc,
    extract_component,
    fixed_subset_combiner,
    gbhpc_enumerate,
    pc_curve,
    structured_gbhpc,
    structured_subset_combiner,
)


def pv(*values):
    return [ProbValue.from_linear(v) for v in values]


def log_pv(*values):
    return [ProbValue.from_log(math.log(v)) for v in values]


FISHER = CombinerSpec("fisher")
SIMES = CombinerSpec("simes")
BONF = CombinerSpec("bonferroni")


class TestGroupPartition:
    def test_from_labels(self):
        part = GroupPartition.from_labels(["a", "b", "a", "c", "b"])
        assert part.blocks == ((0, 2), (1, 4), (3,))

    def test_validation(self):
        with pytest.raises(InputValidationError):
            GroupPartition(3, ((0, 1),))  # missing index 2
        with pytest.raises(InputValidationError):
            GroupPartition(3, ((0, 1), (1, 2)))  # overlap
        with pytest.raises(InputValidationError):
            GroupPartition(3, ((0, 1, 2), ()))  # empty block


class TestBhpc:
    def test_r1_equals_plain_combiner(self):
        ps = pv(0.02, 0.8, 0.3, 0.5)
        assert bhpc(ps, 1, FISHER).log_value == combine_fisher(ps).log_value

    def test_case_d_beats_case_c_at_r4(self):
        c = log_pv(*CASE_C)
        d = log_pv(*CASE_D)
        assert bhpc(d, 4, FISHER).log_value < bhpc(c, 4, FISHER).log_value

    def test_bundled_bonferroni_r2(self, bundled_pvalues):
        got = bhpc(bundled_pvalues, 2, BONF)
        assert math.isclose(got.linear, TABLE_2B_BONFERRONI[2], rel_tol=1e-2)
        # equals 17 * second-smallest p
        second = sorted(p.linear for p in bundled_pvalues)[1]
        assert math.isclose(got.linear, 17 * second, rel_tol=1e-12)

    def test_rejects_weighted_rule(self):
        spec = CombinerSpec("stouffer_weighted", weights=(1.0, 2.0, 3.0))
        with pytest.raises(InputValidationError):
            bhpc(pv(0.1, 0.2, 0.3), 2, spec)

    def test_accepts_callable_rule(self):
        ps = pv(0.1, 0.5, 0.9)
        got = bhpc(ps, 2, combine_fisher)
        assert got.log_value == combine_fisher(pv(0.5, 0.9)).log_value

    def test_r_bounds(self):
        with pytest.raises(InputValidationError):
            bhpc(pv(0.1, 0.2), 0, FISHER)
        with pytest.raises(InputValidationError):
            bhpc(pv(0.1, 0.2), 3, FISHER)

    def test_monotone_and_permutation_invariant(self):
        rng = np.random.default_rng(41)
        for _ in range(200):
            n = int(rng.integers(2, 9))
            r = int(rng.integers(1, n + 1))
            lo = rng.random(n)
            hi = np.minimum(1.0, lo + rng.random(n) * (1 - lo))
            assert (
                bhpc(pv(*lo), r, FISHER).log_value
                <= bhpc(pv(*hi), r, FISHER).log_value
            )
            ps = pv(*lo)
            shuffled = [ps[i] for i in rng.permutation(n)]
            assert bhpc(ps, r, FISHER).log_value == bhpc(shuffled, r, FISHER).log_value

    def test_ties_are_harmless(self):
        # Heavily tied inputs: value depends only on the multiset.
        ps = pv(0.2, 0.2, 0.2, 0.05, 0.05, 0.8)
        for r in range(1, 7):
            base = bhpc(ps, r, SIMES).log_value
            for perm in ([5, 4, 3, 2, 1, 0], [2, 0, 1, 4, 3, 5]):
                assert bhpc([ps[i] for i in perm], r, SIMES).log_value == base

    def test_chain_rule_validity(self):
        # An inner drop-smallest rule of order s used as the combiner of
        # an outer rule of order r yields a valid test of the (r+s-1)/n
        # null; check at (n, r, s) = (6, 2, 2) on its boundary (2 studies
        # non-null) for both weak and strong signal.
        inner = lambda ps: bhpc(ps, 2, FISHER)
        rule = lambda ps: bhpc(ps, 2, inner)
        for mean in (3.0, 6.0):
            config = NullConfig(6, z_means=(mean, mean, 0.0, 0.0, 0.0, 0.0))
            (est,) = mc_validity(rule, config, [0.05], reps=10**5, seed=99)
            assert est.rate <= est.bound, est


class TestGbhpcEnumerate:
    def test_symmetric_g_equals_bhpc(self):
        rng = np.random.default_rng(43)
        for _ in range(50):
            n = int(rng.integers(2, 8))
            r = int(rng.integers(1, n + 1))
            ps = pv(*rng.random(n))
            a = gbhpc_enumerate(ps, r, fixed_subset_combiner(FISHER))
            b = bhpc(ps, r, FISHER)
            assert math.isclose(a.log_value, b.log_value, rel_tol=1e-12, abs_tol=1e-12)

    def test_r1_single_subset(self):
        ps = pv(0.2, 0.6, 0.9)
        got = gbhpc_enumerate(ps, 1, fixed_subset_combiner(FISHER))
        assert got.log_value == combine_fisher(ps).log_value

    def test_hand_enumeration_n5_r3(self):
        rng = np.random.default_rng(47)
        vals = rng.random(5)
        ps = pv(*vals)
        got = gbhpc_enumerate(ps, 3, fixed_subset_combiner(FISHER))
        # Independent oracle: scipy Fisher on each of the C(5,3)=10 subsets.
        expected = max(
            stats.chi2.sf(-2 * sum(math.log(vals[i]) for i in u), 2 * 3)
            for u in combinations(range(5), 3)
        )
        assert math.isclose(got.linear, expected, rel_tol=1e-10)

    def test_budget(self):
        ps = pv(*np.linspace(0.01, 0.99, 30))
        with pytest.raises(EnumerationBudgetError):
            gbhpc_enumerate(ps, 15, fixed_subset_combiner(FISHER), budget=1000)

    def test_index_bound_weights(self):
        # The factory sees original indices, so index-bound weights stay
        # attached to their study regardless of subset.
        from pcmeta.combiners import combine_stouffer_weighted

        weights = (1.0, 10.0, 2.0, 5.0)
        ps = pv(0.02, 0.9, 0.4, 0.1)

        def factory(u):
            return lambda p_u: combine_stouffer_weighted(
                p_u, [weights[i] for i in u]
            )

        got = gbhpc_enumerate(ps, 2, factory)
        expected = max(
            combine_stouffer_weighted(
                [ps[i] for i in u], [weights[i] for i in u]
            ).log_value
            for u in combinations(range(4), 3)
        )
        assert got.log_value == expected


class TestStructured:
    def test_matches_enumeration_on_random_instances(self):
        rng = np.random.default_rng(53)
        for _ in range(100):
            n = int(rng.integers(2, 11))
            labels = [f"g{rng.integers(0, max(1, n // 2))}" for _ in range(n)]
            groups = GroupPartition.from_labels(labels)
            ps = pv(*rng.random(n))
            r = int(rng.integers(1, n + 1))
            fast = structured_gbhpc(ps, r, groups)
            slow = gbhpc_enumerate(ps, r, structured_subset_combiner(groups))
            assert math.isclose(
                fast.log_value, slow.log_value, rel_tol=1e-12, abs_tol=1e-12
            )

    def test_bundled_r16_exceeds_published_row(self, bundled_pvalues, bundled_groups):
        # Exhaustive check of the r = 16 entry: the best subset keeps the
        # top-2 chads2 p-values and the largest creatinine p-value, giving
        # 2 * Fisher(1.05e-01, 7.83e-02) ~ 9.54e-02.  The published table
        # reports 7.36e-02 here (same as its r = 15 row), which no subset
        # maximum reproduces.
        assert TABLE_2B_NEW_INCONSISTENT_R == 16
        got = structured_gbhpc(bundled_pvalues, 16, bundled_groups)
        best_hand = 2 * combine_fisher(pv(1.05e-01, 7.83e-02)).linear
        assert math.isclose(got.linear, best_hand, rel_tol=1e-12)
        assert got.linear > 7.36e-02 * 1.2

    def test_partition_size_mismatch(self):
        groups = GroupPartition.from_labels(["a", "a", "b"])
        with pytest.raises(InputValidationError):
            structured_gbhpc(pv(0.1, 0.2), 1, groups)


class TestExtractComponent:
    def test_recovers_fisher_from_bhpc(self):
        rng = np.random.default_rng(59)
        n, r = 6, 3
        ps = pv(*(rng.random(n) * 0.9 + 0.05))
        f = lambda vec: bhpc(vec, r, FISHER)
        for u in [(0, 1, 2, 3), (1, 3, 4, 5), (0, 2, 4, 5)]:
            g_u = extract_component(f, n, u)
            p_u = [ps[i] for i in u]
            assert g_u(p_u).log_value == combine_fisher(p_u).log_value

    def test_r1_returns_f_itself(self):
        ps = pv(0.2, 0.5, 0.7)
        f = lambda vec: combine_fisher(vec)
        g = extract_component(f, 3, (0, 1, 2))
        assert g(ps).log_value == combine_fisher(ps).log_value

    def test_recovers_structured_g(self, bundled_pvalues, bundled_groups):
        f = lambda vec: structured_gbhpc(vec, 16, bundled_groups)
        factory = structured_subset_combiner(bundled_groups)
        for u in [tuple(range(15, 18)), (0, 5, 11), (8, 9, 10)]:
            g_u = extract_component(f, 18, u)
            p_u = [bundled_pvalues[i] for i in u]
            expected = factory(u)(p_u)
            got = g_u(p_u)
            assert math.isclose(got.log_value, expected.log_value, rel_tol=1e-9)

    def test_non_convergence_flagged(self):
        # A global-null rule misread as an r = 2 rule: its g_u infimum is
        # 0, approached only as eps -> 0, so probing never stabilizes.
        from pcmeta.combiners import combine_bonferroni

        f = lambda vec: combine_bonferroni(vec)
        g = extract_component(f, 3, (0, 1))
        with pytest.raises(NonConvergenceError):
            g(pv(0.5, 0.6))

    def test_bad_index_set(self):
        with pytest.raises(InputValidationError):
            extract_component(lambda v: v[0], 3, (0, 5))


class TestPcCurve:
    def test_simes_curve_nondecreasing_interval(self):
        rng = np.random.default_rng(61)
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            ps = pv(*rng.random(n))
            curve = pc_curve(ps, 0.05, spec=SIMES)
            assert curve.nondecreasing
            assert curve.confidence_set == frozenset(range(1, curve.r_hat + 1))

    def test_bundled_bonferroni_curve(self, bundled_pvalues):
        curve = pc_curve(bundled_pvalues, 0.05, spec=BONF)
        assert curve.confidence_set == frozenset(range(1, 13))
        assert curve.r_hat == 12
        assert not curve.nondecreasing  # the r=17 entry dips below r=16
        logs = [e.p.log_value for e in curve.entries]
        assert logs[16] < logs[15]

    def test_all_ones(self):
        curve = pc_curve(pv(1.0, 1.0, 1.0, 1.0), 0.05, spec=BONF)
        assert all(e.p.is_one for e in curve.entries)
        assert curve.confidence_set == frozenset()
        assert curve.r_hat == 0

    def test_mode_selection_is_exclusive(self):
        ps = pv(0.1, 0.2)
        groups = GroupPartition.from_labels(["a", "b"])
        with pytest.raises(InputValidationError):
            pc_curve(ps, 0.05)
        with pytest.raises(InputValidationError):
            pc_curve(ps, 0.05, spec=SIMES, groups=groups)
        with pytest.raises(InputValidationError):
            pc_curve(ps, 1.5, spec=SIMES)

    def test_entries_validation(self):
        with pytest.raises(InputValidationError):
            PcCurve(
                n=2,
                method="x",
                alpha=0.05,
                entries=(PcEntry(2, ProbValue.one()), PcEntry(1, ProbValue.one())),
            )

    def test_structured_curve_matches_pointwise(self, bundled_pvalues, bundled_groups):
        curve = pc_curve(bundled_pvalues, 0.05, groups=bundled_groups)
        for e in curve.entries:
            direct = structured_gbhpc(bundled_pvalues, e.r, bundled_groups)
            assert e.p.log_value == direct.log_value
