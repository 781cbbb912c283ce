"""Cross-validated comparison of raw and engineered features.

Each classifier is scored per fold on both feature sets using the same fold
assignment, and the per-fold metric vectors are compared with a paired
t-test. Engineered cells whose p-value exceeds alpha carry a ``*``.
"""

from __future__ import annotations

import contextlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from . import hdbscan
from .dataset import CrimeCategory, CrimeRecord, LabelRules, labels_for, load_label_rules
from .errors import ClassTooSmallError, DimensionMismatchError, EmptyInputError, SchemaError, \
    SingleClassError, SpatialCrimeError
from .features import fit_plan_from_attributes, raw_matrix, spatial_attributes, transform_attributes
from .geocoding import Taxonomy
from .hotspots import HotpointSet, check_period_disjoint, hotpoints_from_records
from .models import MODEL_NAMES, LrParams, RfParams, SvmParams, ensemble_score, lr_fit, lr_score, rf_fit, \
    rf_score, svm_fit, svm_score
from .stats import t_two_sided_p

REPORT_SCHEMA = "spatialcrime.report/v1"
METRICS = ("accuracy", "auc")
FEATURE_SETS = ("raw", "engineered")
TTEST_QUANTITY = "per-fold metric values, paired by fold (engineered minus raw)"


# --- folds -------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: tuple
    seed: int

    def __post_init__(self):
        n = sum(len(f) for f in self.folds)
        seen = np.concatenate(self.folds) if self.folds else np.zeros(0, dtype=int)
        if len(self.folds) != self.k or len(np.unique(seen)) != n or (n and (seen.min() != 0 or seen.max() != n - 1)):
            raise ValueError("folds must partition 0..n-1 into k parts")

    @property
    def n(self) -> int:
        return sum(len(f) for f in self.folds)

    def test_indices(self, i: int) -> np.ndarray:
        return self.folds[i]

    def train_indices(self, i: int) -> np.ndarray:
        return np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))


def stratified_folds(labels, k: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle each class with ``seed`` and deal it round-robin into ``k`` folds.

    Negatives continue dealing where positives stopped, so fold sizes also
    differ by at most one.
    """
    y = np.asarray(labels).astype(bool)
    if k < 2:
        raise ValueError("k must be at least 2 (a single fold leaves nothing held out)")
    pos, neg = np.flatnonzero(y), np.flatnonzero(~y)
    if len(pos) < k or len(neg) < k:
        raise ClassTooSmallError(f"each class needs at least k={k} members; have {len(pos)} positive "
                                 f"and {len(neg)} negative")
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in range(k)]
    start = 0
    for idx in (pos, neg):
        shuffled = rng.permutation(idx)
        for j, i in enumerate(shuffled):
            buckets[(start + j) % k].append(int(i))
        start = (start + len(shuffled)) % k
    return FoldPlan(k, tuple(np.array(sorted(b), dtype=np.intp) for b in buckets), int(seed))


# --- metrics -----------------------------------------------------------------

def _pair(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatchError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise EmptyInputError("metric needs at least one element")
    return a, b


def accuracy(y_true, y_pred) -> float:
    t, p = _pair(y_true, y_pred)
    return float(np.mean(t.astype(bool) == p.astype(bool)))


def roc_auc(y_true, scores) -> float:
    """Mann-Whitney AUC; tied scores share their mid-rank (count as half a win)."""
    y, s = _pair(y_true, scores)
    y = y.astype(bool)
    s = s.astype(float)
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC needs both classes")
    ranks = rankdata(s, method="average")
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    df: int
    p_value: float
    mean_difference: float
    alpha: float = 0.05

    @property
    def significant(self) -> bool:
        return self.p_value <= self.alpha


def paired_t_test(a, b, alpha: float = 0.05) -> TTestResult:
    """Two-sided paired t-test on ``d = b - a``.

    A zero spread gives ``t = 0, p = 1`` when the mean difference is zero,
    otherwise ``t = +/-inf, p = 0``.
    """
    a, b = _pair(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    k = len(a)
    if k < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = b - a
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, k - 1, 1.0, 0.0, alpha)
        return TTestResult(math.copysign(math.inf, mean), k - 1, 0.0, mean, alpha)
    t = mean / (sd / math.sqrt(k))
    return TTestResult(t, k - 1, t_two_sided_p(t, k - 1), mean, alpha)


# --- experiment ----------------------------------------------------------------

@dataclass(frozen=True)
class CvResult:
    classifier: str
    feature_set: str
    accuracy: tuple
    auc: tuple

    def metric(self, name: str) -> tuple:
        return getattr(self, name)

    def mean(self, name: str) -> float:
        return float(np.mean(self.metric(name)))


@dataclass(frozen=True)
class ExperimentConfig:
    k: int = 10
    seed: int = 0
    alpha: float = 0.05
    hdbscan: hdbscan.HdbscanParams = field(default_factory=hdbscan.HdbscanParams)
    lr: LrParams = field(default_factory=LrParams)
    svm: SvmParams = field(default_factory=SvmParams)
    rf: RfParams = field(default_factory=RfParams)
    allow_overlap: bool = False


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except SpatialCrimeError as exc:
        if exc.args and isinstance(exc.args[0], str):
            exc.args = (f"[{name}] {exc.args[0]}",) + exc.args[1:]
        raise


def _fit_and_score(Xtr, ytr, Xte, cfg: ExperimentConfig) -> dict:
    lr = lr_fit(Xtr, ytr, cfg.lr)
    svm = svm_fit(Xtr, ytr, cfg.svm)
    rf = rf_fit(Xtr, ytr, cfg.rf)
    scores = {"LR": lr_score(lr, Xte), "RF": rf_score(rf, Xte), "SVM": svm_score(svm, Xte)}
    scores["Ensemble"] = ensemble_score((lr, svm, rf), Xte)
    return scores


def run_experiment(records_train_period: Sequence[CrimeRecord], records_eval_period: Sequence[CrimeRecord],
                   category: CrimeCategory, config: ExperimentConfig, geocoder, taxonomy: Taxonomy,
                   rules: LabelRules | None = None, hotpoints: HotpointSet | None = None) -> "EvalReport":
    """Hotpoints from the training period, then k-fold CV on the evaluation period.

    Pass ``hotpoints`` to reuse a stored artifact instead of clustering
    ``records_train_period``. The feature plan is refitted on every training
    fold; geocoding and hotpoint distances do not depend on the fold and are
    computed once.
    """
    category = CrimeCategory.parse(category)
    rules = rules or load_label_rules()
    if not records_eval_period:
        raise EmptyInputError("evaluation period has no records")
    if hotpoints is None:
        with _stage("hotspots"):
            _, hotpoints = hotpoints_from_records(records_train_period, category, config.hdbscan, rules)
    with _stage("leakage guard"):
        check_period_disjoint(hotpoints, records_eval_period, config.allow_overlap)
    y = labels_for(records_eval_period, category, rules)
    with _stage("folds"):
        plan = stratified_folds(y, config.k, config.seed)
    with _stage("geocoding"):
        attrs = spatial_attributes(records_eval_period, geocoder, hotpoints)
    raw = raw_matrix(records_eval_period)

    per_fold = {(c, fs): {"accuracy": [], "auc": []} for c in MODEL_NAMES for fs in FEATURE_SETS}
    for i in range(plan.k):
        tr, te = plan.train_indices(i), plan.test_indices(i)
        with _stage(f"fold {i} features"):
            fplan = fit_plan_from_attributes(attrs.subset(tr), category, hotpoints, taxonomy,
                                             allow_overlap=config.allow_overlap)
            eng_tr = transform_attributes(raw[tr], attrs.subset(tr), fplan)
            eng_te = transform_attributes(raw[te], attrs.subset(te), fplan)
        for fs, (Xtr, Xte) in (("raw", (raw[tr], raw[te])), ("engineered", (eng_tr, eng_te))):
            with _stage(f"fold {i} {fs} models"):
                scores = _fit_and_score(Xtr, y[tr], Xte, config)
            for name in MODEL_NAMES:
                s = np.asarray(scores[name], dtype=float)
                per_fold[(name, fs)]["accuracy"].append(accuracy(y[te], s >= 0.5))
                per_fold[(name, fs)]["auc"].append(roc_auc(y[te], s))

    results = {key: CvResult(key[0], key[1], tuple(v["accuracy"]), tuple(v["auc"])) for key, v in per_fold.items()}
    ttests = {(name, metric): paired_t_test(results[(name, "raw")].metric(metric),
                                            results[(name, "engineered")].metric(metric), config.alpha)
              for name in MODEL_NAMES for metric in METRICS}
    return EvalReport(
        category=category,
        results=results,
        ttests=ttests,
        meta={
            "k": plan.k,
            "seed": plan.seed,
            "alpha": config.alpha,
            "ttest_quantity": TTEST_QUANTITY,
            "n_records": len(records_eval_period),
            "positive_fraction": float(y.mean()),
            "n_hotpoints": len(hotpoints),
            "hotpoint_period": hotpoints.training_period,
            "evaluation_years": sorted({r.year for r in records_eval_period}),
            "accuracy_threshold": 0.5,
        },
    )


# --- report --------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    category: CrimeCategory
    results: dict
    ttests: dict
    meta: dict = field(default_factory=dict)

    def mean(self, classifier: str, feature_set: str, metric: str) -> float:
        return self.results[(classifier, feature_set)].mean(metric)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "category": self.category.value,
            "meta": self.meta,
            "results": [{"classifier": r.classifier, "feature_set": r.feature_set,
                         "accuracy": list(r.accuracy), "auc": list(r.auc),
                         "mean_accuracy": r.mean("accuracy"), "mean_auc": r.mean("auc")}
                        for (c, fs), r in sorted(self.results.items(), key=_result_order)],
            "ttests": [{"classifier": c, "metric": m, "t": _json_float(t.t_statistic), "df": t.df,
                        "p_value": t.p_value, "mean_difference": t.mean_difference, "significant": t.significant}
                       for (c, m), t in sorted(self.ttests.items(), key=_ttest_order)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise SchemaError(f"unsupported report schema {d.get('schema')!r}; expected {REPORT_SCHEMA!r}")
        try:
            meta = d.get("meta", {})
            alpha = float(meta.get("alpha", 0.05))
            results = {(r["classifier"], r["feature_set"]): CvResult(r["classifier"], r["feature_set"],
                                                                     tuple(r["accuracy"]), tuple(r["auc"]))
                       for r in d["results"]}
            ttests = {(t["classifier"], t["metric"]): TTestResult(_from_json_float(t["t"]), int(t["df"]),
                                                                  float(t["p_value"]),
                                                                  float(t.get("mean_difference", 0.0)), alpha)
                      for t in d["ttests"]}
            return cls(CrimeCategory.parse(d["category"]), results, ttests, meta)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed report: missing or bad field {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))


def _result_order(item):
    (c, fs), _ = item
    return MODEL_NAMES.index(c), FEATURE_SETS.index(fs)


def _ttest_order(item):
    (c, m), _ = item
    return MODEL_NAMES.index(c), METRICS.index(m)


def _json_float(v: float):
    # JSON has no infinity; keep the sign as a string sentinel
    if math.isinf(v):
        return "+inf" if v > 0 else "-inf"
    return v


def _from_json_float(v) -> float:
    if isinstance(v, str):
        return math.inf if v == "+inf" else -math.inf
    return float(v)


def _cell(report: EvalReport, classifier: str, metric: str) -> str:
    fmt = (lambda v: f"{100.0 * v:.2f}") if metric == "accuracy" else (lambda v: f"{v:.3f}")
    raw = fmt(report.mean(classifier, "raw", metric))
    eng = fmt(report.mean(classifier, "engineered", metric))
    star = "" if report.ttests[(classifier, metric)].significant else "*"
    return f"{raw} / {eng}{star}"


def render_table(reports: Sequence[EvalReport], metric: str) -> str:
    """Categories down, classifiers across, ``raw / eng`` per cell."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    ordered = sorted(reports, key=lambda r: list(CrimeCategory).index(r.category))
    title = "Accuracy (%)" if metric == "accuracy" else "AUC"
    rows = [["Crime type", *MODEL_NAMES], ["", *(["raw / eng"] * len(MODEL_NAMES))]]
    rows += [[r.category.display_name, *(_cell(r, c, metric) for c in MODEL_NAMES)] for r in ordered]
    widths = [max(len(row[j]) for row in rows) for j in range(len(rows[0]))]
    lines = [title]
    for row in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def render_reports(reports: Sequence[EvalReport]) -> str:
    """Accuracy and AUC tables plus the significance note."""
    if not reports:
        raise EmptyInputError("no reports to render")
    cats = [r.category for r in reports]
    if len(set(cats)) != len(cats):
        raise ValueError("one report per category expected")
    alphas = {float(r.meta.get("alpha", 0.05)) for r in reports}
    alpha = alphas.pop() if len(alphas) == 1 else None
    note = (f"* engineered value not significantly different from raw (paired t-test p > {alpha:g})"
            if alpha is not None else "* engineered value not significantly different from raw (p > alpha)")
    return "\n\n".join([render_table(reports, "accuracy"), render_table(reports, "auc"), note]) + "\n"
