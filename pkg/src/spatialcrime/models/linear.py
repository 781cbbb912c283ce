"""L2-regularised logistic regression and a linear SVM trained with a
Pegasos-style subgradient schedule, plus the margin squashing that turns SVM
margins into probability-like scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import DimensionMismatchError, SingleClassError


def check_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(bool)
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionMismatchError(f"X has shape {X.shape} but y has {len(y)} labels")
    if not np.all(np.isfinite(X)):
        raise ValueError("training matrix contains non-finite values")
    if len(y) < 2 or y.all() or not y.any():
        raise SingleClassError("training labels must contain both classes")
    return X, y


def balanced_weights(y: np.ndarray) -> np.ndarray:
    """Per-sample weights ``n / (2 * n_class)``; mean weight is 1."""
    n = len(y)
    n_pos = y.sum()
    return np.where(y, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))


def _sample_weights(y, class_weight):
    if class_weight is None:
        return np.ones(len(y))
    if class_weight == "balanced":
        return balanced_weights(y)
    raise ValueError(f"class_weight must be None or 'balanced', got {class_weight!r}")


def _check_dim(x, weights):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != len(weights):
        raise DimensionMismatchError(f"expected {len(weights)} features, got {x.shape[-1]}")
    return x


# --- logistic regression -----------------------------------------------------

@dataclass(frozen=True)
class LrParams:
    l2: float = 1e-4
    learning_rate: float = 0.1
    max_epochs: int = 500
    tol: float = 1e-8
    seed: int = 0
    class_weight: str | None = None


@dataclass(frozen=True)
class LrModel:
    weights: np.ndarray
    bias: float
    params: LrParams
    n_epochs: int = 0


def lr_objective(w, b, X, y, l2, sample_weight=None):
    """Mean log-loss plus ``l2 / 2 * |w|^2`` and its gradient.

    Returns ``(loss, grad_w, grad_b)``; the bias is not penalised.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    sw = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    z = X @ w + b
    n = len(y)
    loss = float(np.sum(sw * (np.logaddexp(0.0, z) - y * z)) / n + 0.5 * l2 * (w @ w))
    r = sw * (expit(z) - y) / n
    return loss, X.T @ r + l2 * w, float(r.sum())


def lr_fit(X, y, params: LrParams | None = None) -> LrModel:
    """Full-batch gradient descent on the regularised log-loss.

    The L2 term is applied as a proximal (implicit) step,
    ``w <- (w - lr * grad_loss) / (1 + lr * l2)``, which keeps very large
    ``l2`` stable. Stops after ``max_epochs`` or when the objective improves
    by less than ``tol``.
    """
    params = params or LrParams()
    X, y = check_training_data(X, y)
    sw = _sample_weights(y, params.class_weight)
    yf = y.astype(float)
    w = np.zeros(X.shape[1])
    b = 0.0
    lr = params.learning_rate
    prev, gw, gb = lr_objective(w, b, X, yf, 0.0, sw)
    prev += 0.5 * params.l2 * (w @ w)
    epochs = 0
    for epochs in range(1, params.max_epochs + 1):
        w = (w - lr * gw) / (1.0 + lr * params.l2)
        b -= lr * gb
        loss, gw, gb = lr_objective(w, b, X, yf, 0.0, sw)
        obj = loss + 0.5 * params.l2 * (w @ w)
        if prev - obj < params.tol:
            break
        prev = obj
    return LrModel(w, float(b), params, epochs)


def lr_score(m: LrModel, x) -> np.ndarray | float:
    x = _check_dim(x, m.weights)
    return expit(x @ m.weights + m.bias)


# --- linear SVM ----------------------------------------------------------------

@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    class_weight: str | None = None


@dataclass(frozen=True)
class SvmModel:
    weights: np.ndarray
    bias: float
    squash_a: float
    squash_c: float
    params: SvmParams
    objective_trace: tuple = ()

    def decision(self, x) -> np.ndarray | float:
        x = _check_dim(x, self.weights)
        return x @ self.weights + self.bias


def svm_objective(w, b, X, y, C, sample_weight=None):
    """``0.5 |w|^2 + C * sum(hinge)`` with ``y`` in {0, 1} or {-1, +1}.

    Returns ``(objective, subgrad_w, subgrad_b)``; at a margin of exactly 1
    the zero subgradient is used.
    """
    X = np.asarray(X, dtype=float)
    s = _signed(y)
    sw = np.ones(len(s)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    margin = s * (X @ w + b)
    active = margin < 1.0
    obj = float(0.5 * (w @ w) + C * np.sum(sw * np.maximum(0.0, 1.0 - margin)))
    coef = C * sw * s * active
    return obj, w - X.T @ coef, float(-coef.sum())


def _signed(y) -> np.ndarray:
    y = np.asarray(y)
    if y.dtype == bool or set(np.unique(y)).issubset({0, 1}):
        return np.where(y.astype(bool), 1.0, -1.0)
    return y.astype(float)


def svm_fit(X, y, params: SvmParams | None = None) -> SvmModel:
    """Mini-batch Pegasos with a seeded reshuffle every epoch.

    With ``lam = 1 / (C * n)`` the step at iteration ``t`` is
    ``1 / (lam * t)``, followed by projection onto the ball of radius
    ``1 / sqrt(lam)``. The bias rides along as a constant extra feature.
    After every epoch the average of that epoch's iterates is scored on the
    objective and kept if it beats the best so far; ``objective_trace``
    records the kept model's objective, so it never increases.
    """
    params = params or SvmParams()
    X, y = check_training_data(X, y)
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    s = np.where(y, 1.0, -1.0)
    sw = _sample_weights(y, params.class_weight)
    lam = 1.0 / (params.C * n)
    radius = 1.0 / np.sqrt(lam)
    rng = np.random.default_rng(params.seed)
    k = max(1, min(params.batch_size, n))
    w = np.zeros(d + 1)
    best = w.copy()
    best_obj = svm_objective(best[:d], best[d], X, s, params.C, sw)[0]
    t = 0
    trace = []
    for _ in range(params.epochs):
        order = rng.permutation(n)
        w_sum = np.zeros(d + 1)
        steps = 0
        for start in range(0, n, k):
            batch = order[start:start + k]
            t += 1
            eta = 1.0 / (lam * t)
            xb = Xa[batch]
            sb = s[batch]
            viol = sb * (xb @ w) < 1.0
            w *= 1.0 - eta * lam
            if viol.any():
                w += (eta / len(batch)) * ((sw[batch] * sb)[viol] @ xb[viol])
            norm = np.sqrt(w @ w)
            if norm > radius:
                w *= radius / norm
            w_sum += w
            steps += 1
        avg = w_sum / steps
        obj = svm_objective(avg[:d], avg[d], X, s, params.C, sw)[0]
        if obj < best_obj:
            best, best_obj = avg, obj
        trace.append(best_obj)
    a, c = fit_margin_squash(X @ best[:d] + best[d], y)
    return SvmModel(best[:d].copy(), float(best[d]), a, c, params, tuple(trace))


def fit_margin_squash(margins, y, max_iter: int = 100) -> tuple[float, float]:
    """Fit ``P(y=1 | m) = sigmoid(a * m + c)`` on training margins.

    Newton's method on the log-loss with Platt's smoothed targets
    ``(n+ + 1) / (n+ + 2)`` and ``1 / (n- + 2)``, which keep the fit finite
    on separable data. ``a`` is forced positive so scores stay monotone in
    the margin.
    """
    m = np.asarray(margins, dtype=float)
    y = np.asarray(y).astype(bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    t = np.where(y, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    a, c = 1.0, float(np.log((n_pos + 1.0) / (n_neg + 1.0)))

    def nll(a_, c_):
        z = a_ * m + c_
        return float(np.sum(np.logaddexp(0.0, z) - t * z))

    cur = nll(a, c)
    for _ in range(max_iter):
        p = expit(a * m + c)
        r = p - t
        g = np.array([r @ m, r.sum()])
        wts = p * (1.0 - p)
        H = np.array([[wts @ (m * m), wts @ m], [wts @ m, wts.sum()]]) + 1e-12 * np.eye(2)
        step = np.linalg.solve(H, g)
        scale = 1.0
        while scale > 1e-10:
            na, nc = a - scale * step[0], c - scale * step[1]
            new = nll(na, nc)
            if new <= cur:
                break
            scale *= 0.5
        else:
            break
        a, c = na, nc
        done = cur - new < 1e-12 * max(1.0, abs(cur))
        cur = new
        if done:
            break
    if not a > 0:
        a = 1e-6
        # refit the intercept alone
        for _ in range(max_iter):
            p = expit(a * m + c)
            g = float((p - t).sum())
            h = float((p * (1.0 - p)).sum()) + 1e-12
            c -= g / h
            if abs(g) < 1e-10:
                break
    return float(a), float(c)


def svm_score(m: SvmModel, x) -> np.ndarray | float:
    return expit(m.squash_a * m.decision(x) + m.squash_c)
