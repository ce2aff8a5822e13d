import json
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from onsetml import numerics
from onsetml.dataset import (
    ExperimentTable,
    Layout,
    PlantedRules,
    Soil,
    Standardizer,
    correlation_matrix,
    engineer_features,
    engineer_matrix,
    interval_shares,
    kfold_partition,
    load_experiments,
    parse_experiments,
    split_indices,
    split_train_test,
    standardize,
    synth_generate,
    table_from_rows,
)
from onsetml.errors import (
    BadDesign,
    BadFoldCount,
    BadValue,
    ConstantColumn,
    DegenerateSplit,
    LayoutMismatch,
    MissingColumn,
    UnknownColumn,
)

from conftest import make_record, planted_correlation


class TestLoading:
    def test_eighteen_row_file(self, tmp_path, htop_table):
        path = tmp_path / "htop.csv"
        path.write_text(htop_table.to_csv())
        table = load_experiments(path, Layout.H_TOP)
        assert len(table) == 18
        assert [r.rain_intensity for r in table] == [r.rain_intensity for r in htop_table]
        assert str(path) in table.provenance

    def test_round_trip_is_exact(self, synth_table):
        again = parse_experiments(synth_table.to_csv())
        assert again.records == synth_table.records
        assert again.to_csv() == synth_table.to_csv()

    def test_missing_rain_column(self, htop_table):
        lines = htop_table.to_csv().splitlines()
        header = lines[0].split(",")
        drop = header.index("rain_mm_hr")
        text = "\n".join(",".join(c for i, c in enumerate(l.split(",")) if i != drop) for l in lines)
        with pytest.raises(MissingColumn) as info:
            parse_experiments(text)
        assert info.value.name == "rain_mm_hr"

    def test_empty_failure_cell(self, hsub_table):
        lines = hsub_table.to_csv().splitlines()
        lines[3] = lines[3].rsplit(",", 1)[0] + ","
        with pytest.raises(BadValue) as info:
            parse_experiments("\n".join(lines))
        assert "row 3" in str(info.value) and "failure" in str(info.value)

    def test_non_numeric_cell(self, htop_table):
        lines = htop_table.to_csv().splitlines()
        cells = lines[2].split(",")
        cells[2] = "abc"
        lines[2] = ",".join(cells)
        with pytest.raises(BadValue, match="row 2"):
            parse_experiments("\n".join(lines))

    def test_layout_mismatch(self, synth_table):
        with pytest.raises(LayoutMismatch):
            parse_experiments(synth_table.to_csv(), expected_layout=Layout.H_TOP)

    def test_negative_slope_rejected(self):
        with pytest.raises(BadValue):
            make_record(slope=-3.0)


class TestFeatures:
    def test_fine_example(self):
        f = engineer_features(make_record(d50=0.2, wev=2, slope=20, ri=18))
        assert f == pytest.approx((3.6, 36, 360))

    def test_coarse_example(self):
        f = engineer_features(make_record(d50=0.65, wev=1, slope=30, ri=120))
        assert f == pytest.approx((78, 120, 3600))

    @given(st.floats(0.01, 5), st.floats(0, 10), st.floats(0.5, 89.5))
    def test_rain_gating(self, d50, wev, slope):
        f = engineer_features(make_record(d50=d50, wev=wev, slope=slope, ri=0.0))
        assert tuple(f) == (0.0, 0.0, 0.0)

    def test_matrix_matches_records(self, synth_table):
        by_row = np.array([engineer_features(r) for r in synth_table])
        assert np.array_equal(engineer_matrix(synth_table.raw_features()), by_row)
        assert np.array_equal(synth_table.features(), by_row)


class TestStandardize:
    def test_two_values(self):
        z, s = standardize(np.array([[1.0], [3.0]]))
        assert z[:, 0] == pytest.approx([-1 / math.sqrt(2), 1 / math.sqrt(2)])
        assert s.means == (2.0,) and s.stds == pytest.approx((math.sqrt(2),))

    def test_idempotent(self):
        z0, _ = standardize(np.array([[1.0], [3.0], [8.0]]))
        z1, s = standardize(z0)
        assert np.allclose(z1, z0, atol=1e-12)
        assert s.means[0] == pytest.approx(0, abs=1e-12) and s.stds[0] == pytest.approx(1)

    def test_constant_column(self):
        with pytest.raises(ConstantColumn):
            standardize(np.array([[5.0], [5.0], [5.0]]))

    def test_table_needs_known_columns(self, htop_table):
        with pytest.raises(UnknownColumn):
            standardize(htop_table, ["nonsense"])

    @settings(max_examples=60)
    @given(arrays(float, (6, 3), elements=st.floats(-1e3, 1e3)))
    def test_round_trip(self, x):
        if np.any(np.ptp(x, axis=0) < 1e-3):
            return
        z, s = standardize(x)
        assert np.allclose(s.inverse_transform(z), x, atol=1e-12 * max(1.0, np.abs(x).max()) * 10)
        assert np.allclose(z.mean(axis=0), 0, atol=1e-9)
        assert Standardizer.from_dict(json.loads(json.dumps(s.to_dict()))) == s


class TestCorrelation:
    def test_unit_diagonal_and_symmetry(self, htop_table):
        cols = ["d50", "wev", "slope", "ri", "td", "te"]
        m = correlation_matrix(htop_table, cols)
        assert np.allclose(np.diag(m.values), 1.0)
        assert np.max(np.abs(m.values - m.values.T)) <= 1e-14

    def test_pairwise_oracle(self, htop_table):
        cols = ["d50", "wev", "slope", "ri", "td", "te", "e1", "d6"]
        m = correlation_matrix(htop_table, cols)
        for i, a in enumerate(cols):
            for j, b in enumerate(cols):
                if i != j:
                    assert m[a, b] == numerics.pearson_corr(htop_table.column(a), htop_table.column(b))

    def test_doubling(self):
        rows = [make_record(ri=float(r), td=2.0 * r) for r in (5, 10, 20, 40)]
        m = correlation_matrix(table_from_rows(rows), ["ri", "td"])
        assert m["ri", "td"] == pytest.approx(1.0)

    def test_constant_column(self):
        rows = [make_record(ri=float(r)) for r in (5, 10, 20)]
        with pytest.raises(ConstantColumn):
            correlation_matrix(table_from_rows(rows), ["ri", "d50"])

    def test_planted_rain_discharge_correlation(self):
        a, b = planted_correlation(200, 0.77, seed=3)
        rows = [make_record(ri=60 + 20 * u, td=30 + 5 * v) for u, v in zip(a, b)]
        m = correlation_matrix(table_from_rows(rows), ["ri", "td"])
        assert abs(m["ri", "td"] - 0.77) <= 0.02


class TestSplit:
    def test_default_fraction(self, htop_table):
        train, test = split_train_test(htop_table, 0.35, seed=42)
        assert (len(train), len(test)) == (12, 6)

    def test_stratified_balanced(self):
        rows = [make_record(layout=Layout.H_SUB, ri=float(10 + i), failure=i % 2) for i in range(18)]
        train, test = split_train_test(table_from_rows(rows), 0.2, seed=5, stratify_on="failure")
        assert len(test) == 4
        assert Counter(test.labels().tolist()) == {0: 2, 1: 2}

    def test_degenerate(self):
        with pytest.raises(DegenerateSplit):
            split_indices(18, 0.99, seed=1)
        with pytest.raises(DegenerateSplit):
            split_indices(18, 0.0, seed=1)

    @given(st.integers(4, 60), st.floats(0.05, 0.95), st.integers(0, 10**9))
    def test_disjoint_exhaustive(self, n, frac, seed):
        try:
            train, test = split_indices(n, frac, seed)
        except DegenerateSplit:
            return
        assert sorted(train + test) == list(range(n))
        assert len(test) == math.floor(n * frac + 0.5 + 1e-12)

    @given(st.integers(4, 60), st.floats(0.1, 0.9), st.integers(0, 10**9), st.integers(0, 2**16))
    def test_stratified_proportions(self, n, frac, seed, pattern):
        strata = [(pattern >> (i % 16)) & 1 for i in range(n)]
        try:
            train, test = split_indices(n, frac, seed, strata)
        except DegenerateSplit:
            return
        assert sorted(train + test) == list(range(n))
        for c in set(strata):
            exact = strata.count(c) * len(test) / n
            got = sum(strata[i] == c for i in test)
            assert abs(got - exact) < 1


class TestKfold:
    def test_eighteen_into_seven(self):
        folds = kfold_partition(18, 7, seed=1)
        assert sorted(len(f) for f in folds) == [2, 2, 2, 3, 3, 3, 3]

    def test_singletons(self):
        assert sorted(map(tuple, kfold_partition(4, 4, seed=9))) == [(0,), (1,), (2,), (3,)]

    def test_bad_count(self):
        with pytest.raises(BadFoldCount):
            kfold_partition(3, 5, seed=0)

    @given(st.integers(2, 80), st.data())
    def test_coverage(self, n, data):
        k = data.draw(st.integers(2, n))
        folds = kfold_partition(n, k, data.draw(st.integers(0, 2**64 - 1)))
        assert len(folds) == k
        assert Counter(i for f in folds for i in f) == Counter(range(n))
        assert max(map(len, folds)) - min(map(len, folds)) <= 1


class TestSynth:
    def test_design_size(self):
        t = synth_generate(seed=1)
        assert len(t) == 36
        assert Counter(r.layout for r in t) == {Layout.H_TOP: 18, Layout.H_SUB: 18}

    def test_noise_free_matches_rules(self):
        rules = PlantedRules()
        t = synth_generate(noise_scale=0.0, seed=1)
        prov = json.loads(t.provenance)
        mu, sd = np.array(prov["failure_feature_means"]), np.array(prov["failure_feature_stds"])
        for r in t:
            x = np.array(engineer_features(r))
            td = max(0.0, rules.td[0] + np.dot(rules.td[1:], x))
            te = max(0.0, rules.te[0] + np.dot(rules.te[1:], x))
            assert r.td == pytest.approx(td, abs=1e-9)
            assert r.te == pytest.approx(te, abs=1e-9)
            assert 10 * sum(r.discharge_intervals) == pytest.approx(r.td, abs=1e-9)
            if r.layout is Layout.H_SUB:
                logit = rules.failure[0] + np.dot(rules.failure[1:], (x - mu) / sd)
                assert r.failure == int(logit >= 0)

    def test_deterministic(self):
        assert synth_generate(seed=8).to_csv() == synth_generate(seed=8).to_csv()
        assert synth_generate(seed=8).to_csv() != synth_generate(seed=9).to_csv()

    def test_both_classes_present(self, hsub_table):
        assert set(hsub_table.labels().tolist()) == {0, 1}

    def test_provenance_records_plant(self, synth_table):
        prov = json.loads(synth_table.provenance)
        assert prov["synthesis_seed"] == 42
        assert tuple(prov["rules"]["td"]) == PlantedRules().td

    def test_bad_design(self):
        with pytest.raises(BadDesign):
            synth_generate(noise_scale=-1)
        with pytest.raises(BadDesign):
            synth_generate(wev_by_soil={"fine": 1.0, "medium": 1.0, "coarse": 0.0})

    def test_interval_shares_sum_to_one(self):
        for ri in (0, 18, 120):
            s = interval_shares(ri, 0.01)
            assert sum(s) == pytest.approx(1.0) and len(s) == 6

    def test_filters(self, synth_table):
        fine = synth_table.where({"soil": "fine", "layout": "h_sub"})
        assert len(fine) == 6 and all(r.soil is Soil.FINE for r in fine)
        assert len(synth_table.where({"rain_mm_hr": "70"})) == 12
