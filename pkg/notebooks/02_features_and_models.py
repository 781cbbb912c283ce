# %% [markdown]
# # Raw vs engineered features on one train/test split
#
# Hotpoints come from 2015. The 2016 records are split once, the feature
# plan is fitted on the training half, and the three classifiers plus their
# soft-voting ensemble are scored on the held-out half.

# %%
import numpy as np

from spatialcrime.dataset import CrimeCategory, SynthConfig, generate_synthetic, load_label_rules
from spatialcrime.evaluation import accuracy, roc_auc, stratified_folds
from spatialcrime.features import build_engineered, build_raw, fit_plan
from spatialcrime.geocoding import OfflineGeocoder, load_taxonomy
from spatialcrime.hotspots import hotpoints_from_records
from spatialcrime.models import RfParams, ensemble_score, fit_all, score

cat = CrimeCategory.ALCOHOL_RELATED
ds = generate_synthetic(SynthConfig(seed=1, n=1500))
taxonomy, rules = load_taxonomy(), load_label_rules()
geocoder = OfflineGeocoder.from_rows(ds.pois, taxonomy)
_, hps = hotpoints_from_records(ds.records_a, cat, rules=rules)
print(f"{len(hps)} {cat.display_name} hotpoints from period {hps.training_period}")

# %% [markdown]
# Hold out one fold of five. The plan (standardization, geocode
# vocabulary, missing-distance fill) only ever sees the training rows.

# %%
records = ds.records_b
y_all = build_raw(records, cat, rules).labels
plan_split = stratified_folds(y_all, 5, seed=0)
tr, te = plan_split.train_indices(0), plan_split.test_indices(0)
train = [records[i] for i in tr]
test = [records[i] for i in te]

plan = fit_plan(train, cat, hps, geocoder, taxonomy)
before = plan.checksum()
print(f"plan {before[:16]}... with {len(plan.column_names)} engineered columns")

# %%
sets = {
    "raw": (build_raw(train, cat, rules), build_raw(test, cat, rules)),
    "engineered": (build_engineered(train, plan, rules), build_engineered(test, plan, rules)),
}
for name, (a, b) in sets.items():
    model = fit_all(a.rows, a.labels, rf=RfParams(n_trees=30))
    print(f"{name:<10} {a.rows.shape[1]:>3} columns")
    for member in model.members:
        s = score(member, b.rows)
        print(f"  {type(member).__name__:<9} acc {accuracy(b.labels, s >= 0.5):.3f}  auc {roc_auc(b.labels, s):.3f}")
    s = ensemble_score(model, b.rows)
    print(f"  {'Ensemble':<9} acc {accuracy(b.labels, s >= 0.5):.3f}  auc {roc_auc(b.labels, s):.3f}")

# %% [markdown]
# Transforming rows never changes the plan: the checksum is the same after
# featurizing the test half.

# %%
print(plan.checksum() == before)
