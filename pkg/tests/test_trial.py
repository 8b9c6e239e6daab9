import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbcrt import (
    ObservedTrial,
    TrialValidationError,
    VarianceComponents,
)


def make_trial(records):
    return ObservedTrial.from_records(records)


BASIC = [
    ("a", 0, 0, 1.0), ("a", 1, 0, 2.0),
    ("b", 0, 1, 3.0), ("b", 1, 1, 4.0), ("b", 1, 1, 6.0),
]


class TestValidation:
    def test_empty(self):
        with pytest.raises(TrialValidationError):
            ObservedTrial.from_records([])

    def test_bad_period(self):
        with pytest.raises(TrialValidationError, match="period"):
            make_trial([("a", 2, 0, 1.0), ("b", 1, 1, 1.0)])

    def test_bad_sequence(self):
        with pytest.raises(TrialValidationError, match="sequence"):
            make_trial([("a", 0, 3, 1.0), ("b", 1, 1, 1.0)])

    def test_nonfinite_outcome(self):
        with pytest.raises(TrialValidationError, match="finite"):
            make_trial(BASIC + [("b", 1, 1, math.nan)])

    def test_inconsistent_sequence_within_cluster(self):
        rows = BASIC + [("a", 0, 1, 1.0)]
        with pytest.raises(TrialValidationError, match="'a'"):
            make_trial(rows)

    def test_missing_period_cell(self):
        rows = [("a", 0, 0, 1.0), ("a", 1, 0, 2.0), ("b", 1, 1, 3.0)]
        with pytest.raises(TrialValidationError, match="'b'"):
            make_trial(rows)

    def test_single_arm(self):
        rows = [("a", 0, 0, 1.0), ("a", 1, 0, 2.0),
                ("b", 0, 0, 3.0), ("b", 1, 0, 4.0)]
        with pytest.raises(TrialValidationError, match="arm"):
            make_trial(rows)

    def test_length_mismatch(self):
        with pytest.raises(TrialValidationError):
            ObservedTrial(["a", "b"], [0, 1, 0], [0, 1], [1.0, 2.0])


class TestIndexing:
    def test_cluster_stats(self):
        t = make_trial(BASIC)
        assert t.n_clusters == 2
        assert t.n_obs == 5
        a, b = t.clusters
        assert (a.cluster_id, a.sequence, a.k0, a.k1) == ("a", 0, 1, 1)
        assert (b.k0, b.k1) == (1, 2)
        assert b.sum1 == pytest.approx(10.0)
        assert b.sumsq1 == pytest.approx(52.0)
        assert b.mean1 == pytest.approx(5.0)

    def test_first_appearance_order(self):
        rows = [("z", 0, 1, 1.0), ("z", 1, 1, 1.0),
                ("a", 0, 0, 1.0), ("a", 1, 0, 1.0)]
        t = make_trial(rows)
        assert [c.cluster_id for c in t.clusters] == ["z", "a"]

    def test_equal_period_sizes_flag(self):
        assert not make_trial(BASIC).equal_period_sizes
        t = make_trial([("a", 0, 0, 1.0), ("a", 1, 0, 2.0),
                        ("b", 0, 1, 3.0), ("b", 1, 1, 4.0)])
        assert t.equal_period_sizes

    def test_drop_cluster(self):
        rows = BASIC + [("c", 0, 0, 5.0), ("c", 1, 0, 6.0)]
        t = make_trial(rows)
        sub = t.drop_cluster("a")
        assert [c.cluster_id for c in sub.clusters] == ["b", "c"]
        assert sub.n_obs == 5
        with pytest.raises(KeyError):
            t.drop_cluster("nope")

    def test_from_cell_means(self):
        t = ObservedTrial.from_cell_means([
            ("a", 0, 2, 3, 1.5, 2.5), ("b", 1, 1, 1, 0.0, 4.0)])
        a = t.clusters[0]
        assert (a.k0, a.k1) == (2, 3)
        assert a.mean0 == pytest.approx(1.5)
        assert a.sumsq1 == pytest.approx(3 * 2.5**2)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(
        st.tuples(st.integers(0, 4), st.integers(0, 1),
                  st.floats(-10, 10, allow_nan=False)),
        min_size=2, max_size=60))
    def test_aggregation_matches_naive(self, rows):
        # Vectorized indexing must agree with a plain dict aggregation.
        recs = [(f"c{i}", j, i % 2, y) for i, j, y in rows]
        naive = {}
        for cid, j, s, y in recs:
            d = naive.setdefault(cid, [0, 0, 0.0, 0.0, 0.0, 0.0])
            d[j] += 1
            d[2 + j] += y
            d[4 + j] += y * y
        try:
            t = ObservedTrial.from_records(recs)
        except TrialValidationError:
            return
        for c in t.clusters:
            d = naive[c.cluster_id]
            assert (c.k0, c.k1) == (d[0], d[1])
            assert c.sum0 == pytest.approx(d[2], abs=1e-9)
            assert c.sumsq1 == pytest.approx(d[5], abs=1e-9)


class TestVarianceComponents:
    def test_iccs(self):
        vc = VarianceComponents(1.0, 0.053, 0.013)
        assert vc.rho == pytest.approx(0.053 / 1.053)
        assert vc.rho_wp == pytest.approx(0.066 / 1.066)
        assert vc.rho_bp == pytest.approx(0.053 / 1.066)
        assert vc.cac == pytest.approx(0.053 / 0.066)

    def test_cac_undefined(self):
        assert math.isnan(VarianceComponents(1.0).cac)

    def test_from_iccs_round_trip(self):
        vc = VarianceComponents.from_iccs(2.0, 0.1, 0.75)
        assert vc.rho_wp == pytest.approx(0.1)
        assert vc.cac == pytest.approx(0.75)
        assert vc.sigma_w2 == 2.0

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            VarianceComponents(1.0, -0.1)
        with pytest.raises(ValueError):
            VarianceComponents(0.0)
        with pytest.raises(ValueError):
            VarianceComponents(math.inf)

    def test_frozen_hashable(self):
        assert hash(VarianceComponents(1.0)) == hash(VarianceComponents(1.0))
