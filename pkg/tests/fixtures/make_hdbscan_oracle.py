"""Regenerate hdbscan_oracle.json with scikit-learn's HDBSCAN.

Run once, offline: ``python tests/fixtures/make_hdbscan_oracle.py``.
scikit-learn counts the point itself in ``min_samples``; our core distance
is to the k-th *other* point, so k = 10 corresponds to min_samples = 11.
"""

import json
from pathlib import Path

import numpy as np
import sklearn
from sklearn.cluster import HDBSCAN

N_DATASETS = 20
BLOB_SIZE = 60
MIN_CLUSTER_SIZE = 10


def blobs(seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    centers = []
    while len(centers) < 3:
        c = rng.uniform(-10, 10, size=2)
        if all(np.linalg.norm(c - o) > 6 for o in centers):
            centers.append(c)
    pts = [rng.normal(c, 0.8, size=(BLOB_SIZE, 2)) for c in centers]
    truth = np.repeat(np.arange(3), BLOB_SIZE)
    n_noise = int(round(0.1 * 3 * BLOB_SIZE))
    pts.append(rng.uniform(-14, 14, size=(n_noise, 2)))
    truth = np.concatenate([truth, np.full(n_noise, -1)])
    return np.vstack(pts), truth


def main() -> None:
    out = {"sklearn_version": sklearn.__version__, "min_cluster_size": MIN_CLUSTER_SIZE,
           "sklearn_min_samples": MIN_CLUSTER_SIZE + 1, "datasets": []}
    for seed in range(N_DATASETS):
        X, truth = blobs(seed)
        labels = HDBSCAN(min_cluster_size=MIN_CLUSTER_SIZE, min_samples=MIN_CLUSTER_SIZE + 1).fit_predict(X)
        out["datasets"].append({"seed": seed, "points": X.tolist(), "truth": truth.tolist(),
                                "oracle_labels": labels.tolist()})
    path = Path(__file__).with_name("hdbscan_oracle.json")
    path.write_text(json.dumps(out) + "\n", encoding="utf-8")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
