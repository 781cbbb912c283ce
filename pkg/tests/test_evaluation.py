import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spatialcrime.dataset import CrimeCategory, derive_label
from spatialcrime.errors import (ClassTooSmallError, DimensionMismatchError, EmptyInputError, PeriodOverlapError,
                                 SchemaError, SingleClassError)
from spatialcrime.evaluation import (
    METRICS,
    REPORT_SCHEMA,
    EvalReport,
    FoldPlan,
    accuracy,
    paired_t_test,
    render_reports,
    render_table,
    roc_auc,
    run_experiment,
    stratified_folds,
)
from spatialcrime.models import MODEL_NAMES

from oracles import brute_force_auc

A = CrimeCategory.ASSAULT
label_lists = st.lists(st.booleans(), min_size=2, max_size=40).filter(lambda y: any(y) and not all(y))


class TestFolds:
    def test_65_35(self):
        y = np.array([1] * 65 + [0] * 35)
        plan = stratified_folds(y, 10, seed=0)
        for i in range(10):
            te = plan.test_indices(i)
            assert y[te].sum() in (6, 7)
            assert (1 - y[te]).sum() in (3, 4)

    def test_k1_rejected(self):
        with pytest.raises(ValueError):
            stratified_folds([0, 1] * 10, 1)

    def test_class_too_small(self):
        with pytest.raises(ClassTooSmallError):
            stratified_folds([1] * 20 + [0] * 4, 5)

    def test_deterministic(self):
        y = np.random.default_rng(0).uniform(size=200) < 0.3
        a, b = stratified_folds(y, 10, 7), stratified_folds(y, 10, 7)
        assert all(np.array_equal(x, z) for x, z in zip(a.folds, b.folds))
        c = stratified_folds(y, 10, 8)
        assert not all(np.array_equal(x, z) for x, z in zip(a.folds, c.folds))

    def test_train_test_complement(self):
        plan = stratified_folds([0, 1] * 20, 4)
        for i in range(4):
            both = np.concatenate([plan.train_indices(i), plan.test_indices(i)])
            assert sorted(both) == list(range(40))

    def test_bad_partition_rejected(self):
        with pytest.raises(ValueError):
            FoldPlan(2, (np.array([0, 1]), np.array([1, 2])), 0)

    @given(st.integers(2, 12), st.integers(0, 1000), st.integers(0, 10_000))
    def test_partition_and_balance(self, k, n_extra, seed):
        rng = np.random.default_rng(seed)
        n = 2 * k + n_extra
        y = rng.uniform(size=n) < 0.5
        y[:k], y[k:2 * k] = True, False
        plan = stratified_folds(y, k, seed)
        allidx = np.concatenate(plan.folds)
        assert sorted(allidx.tolist()) == list(range(n))
        pos = [int(y[f].sum()) for f in plan.folds]
        sizes = [len(f) for f in plan.folds]
        assert max(pos) - min(pos) <= 1 and max(sizes) - min(sizes) <= 1


class TestAccuracy:
    def test_examples(self):
        assert accuracy([1, 0, 1], [1, 0, 1]) == 1.0
        assert accuracy([1, 0, 1, 0], [1, 1, 1, 0]) == 0.75
        y = np.array([1] * 65 + [0] * 35)
        assert accuracy(y, np.ones(100)) == pytest.approx(0.65)

    def test_errors(self):
        with pytest.raises(DimensionMismatchError):
            accuracy([1, 0], [1])
        with pytest.raises(EmptyInputError):
            accuracy([], [])


class TestAuc:
    def test_examples(self):
        assert roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.7, 0.9]) == 1.0
        assert roc_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75
        assert roc_auc([0, 1, 0, 1], [0.3] * 4) == 0.5

    def test_errors(self):
        with pytest.raises(SingleClassError):
            roc_auc([1, 1], [0.2, 0.3])
        with pytest.raises(ValueError):
            roc_auc([0, 1], [0.2, np.nan])

    @given(label_lists, st.data())
    def test_brute_force_with_ties(self, y, data):
        s = data.draw(st.lists(st.integers(0, 5), min_size=len(y), max_size=len(y)))
        assert roc_auc(y, s) == pytest.approx(brute_force_auc(y, s), abs=1e-12)

    @given(label_lists, st.data())
    def test_monotone_invariance(self, y, data):
        # integer scores keep the transforms exact, so ties are preserved
        s = np.array(data.draw(st.lists(st.integers(-20, 20), min_size=len(y), max_size=len(y))), dtype=float)
        assert roc_auc(y, s) == roc_auc(y, np.exp(s)) == roc_auc(y, 3 * s + 1)

    @given(label_lists, st.integers(0, 10_000))
    def test_reversal(self, y, seed):
        s = np.random.default_rng(seed).permutation(len(y)).astype(float)
        assert roc_auc(y, s) + roc_auc(y, -s) == pytest.approx(1.0, abs=1e-12)


class TestTTest:
    def test_identical(self):
        r = paired_t_test([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
        assert (r.t_statistic, r.p_value, r.significant) == (0.0, 1.0, False)

    def test_one_to_ten(self):
        r = paired_t_test(np.zeros(10), np.arange(1, 11))
        assert r.t_statistic == pytest.approx(5.5 / (np.std(np.arange(1, 11), ddof=1) / math.sqrt(10)))
        assert r.t_statistic == pytest.approx(5.745, abs=1e-3)
        assert r.p_value == pytest.approx(2.8e-4, abs=5e-5)
        assert r.df == 9 and r.significant

    def test_constant_shift(self):
        r = paired_t_test([1, 2, 3], [2, 3, 4])
        assert r.t_statistic == math.inf and r.p_value == 0.0
        assert paired_t_test([2, 3, 4], [1, 2, 3]).t_statistic == -math.inf

    def test_significance_boundary(self):
        r = paired_t_test([0, 0], [1, 3], alpha=0.5)
        assert r.significant == (r.p_value <= 0.5)

    def test_errors(self):
        with pytest.raises(ValueError):
            paired_t_test([1.0], [2.0])
        with pytest.raises(DimensionMismatchError):
            paired_t_test([1, 2], [1, 2, 3])

    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=15))
    def test_antisymmetric(self, pairs):
        a, b = zip(*pairs)
        r1, r2 = paired_t_test(a, b), paired_t_test(b, a)
        assert r1.t_statistic == -r2.t_statistic
        assert r1.p_value == r2.p_value
        assert 0.0 <= r1.p_value <= 1.0


class TestExperiment:
    def test_shape(self, small_report):
        assert set(small_report.results) == {(c, fs) for c in MODEL_NAMES for fs in ("raw", "engineered")}
        assert set(small_report.ttests) == {(c, m) for c in MODEL_NAMES for m in METRICS}
        for r in small_report.results.values():
            assert len(r.accuracy) == len(r.auc) == 5
            assert all(0 <= v <= 1 for v in r.accuracy + r.auc)
        assert small_report.meta["k"] == 5 and small_report.meta["ttest_quantity"]

    def test_engineered_helps_with_signal(self, small_report):
        assert small_report.mean("Ensemble", "engineered", "auc") > small_report.mean("Ensemble", "raw", "auc")

    def test_deterministic(self, small_report, synth, geocoder, taxonomy, rules, small_experiment_config):
        again = run_experiment(synth.records_a, synth.records_b, A, small_experiment_config, geocoder, taxonomy,
                               rules)
        assert again.to_json() == small_report.to_json()

    def test_overlap_guard(self, synth, geocoder, taxonomy, rules, small_experiment_config):
        with pytest.raises(PeriodOverlapError, match=r"^\[leakage guard\]"):
            run_experiment(synth.records_b, synth.records_b, A, small_experiment_config, geocoder, taxonomy, rules)

    def test_stage_context(self, synth, geocoder, taxonomy, rules, small_experiment_config):
        pos = [r for r in synth.records_b if derive_label(r, A, rules)]
        neg = [r for r in synth.records_b if not derive_label(r, A, rules)]
        few = neg[:50] + pos[:2]
        with pytest.raises(ClassTooSmallError, match=r"^\[folds\]"):
            run_experiment(synth.records_a, few, A, small_experiment_config, geocoder, taxonomy, rules)

    def test_empty_eval(self, synth, geocoder, taxonomy, small_experiment_config):
        with pytest.raises(EmptyInputError):
            run_experiment(synth.records_a, [], A, small_experiment_config, geocoder, taxonomy)


class TestReport:
    def test_json_round_trip(self, small_report):
        back = EvalReport.from_json(small_report.to_json())
        assert back.to_json() == small_report.to_json()
        doc = json.loads(small_report.to_json())
        assert doc["schema"] == REPORT_SCHEMA
        assert len(doc["results"]) == 8 and len(doc["ttests"]) == 8

    def test_infinite_t_survives_json(self, small_report):
        d = small_report.to_dict()
        d["ttests"][0]["t"] = "-inf"
        assert EvalReport.from_dict(d).ttests[("LR", "accuracy")].t_statistic == -math.inf

    def test_schema_errors(self, small_report):
        with pytest.raises(SchemaError):
            EvalReport.from_dict({"schema": "x"})
        d = small_report.to_dict()
        del d["results"]
        with pytest.raises(SchemaError):
            EvalReport.from_dict(d)

    def test_render(self, small_report):
        text = render_reports([small_report])
        lines = text.splitlines()
        assert lines[0] == "Accuracy (%)" and "AUC" in lines
        assert lines[-1].startswith("* ")
        assert text.endswith("\n")
        row = next(line for line in lines if line.startswith("Assault"))
        assert row.count(" / ") == 4

    def test_render_errors(self, small_report):
        with pytest.raises(EmptyInputError):
            render_reports([])
        with pytest.raises(ValueError):
            render_reports([small_report, small_report])
        with pytest.raises(ValueError):
            render_table([small_report], "f1")


def test_fixture_table_matches_reference_text(fixtures_dir):
    d = fixtures_dir / "reports"
    names = ("MotorVehicle", "Assault", "PropertyDamage", "AlcoholRelated")  # order must not matter
    reports = [EvalReport.from_json((d / f"report_{n}.json").read_text()) for n in names]
    assert render_reports(reports) == (d / "expected_table.txt").read_text()
