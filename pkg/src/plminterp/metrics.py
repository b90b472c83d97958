"""Evaluation metrics: sample quality (RD, WD), exactness, consistency, ablation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import BoundaryError


def _form(model, x, jitter=1e-9):
    try:
        return model.extract_local_form(x)
    except BoundaryError:
        return model.extract_local_form(np.asarray(x) + jitter)


def _points(cloud):
    return cloud.points if hasattr(cloud, "points") else np.atleast_2d(cloud)


def region_difference(model, x0, cloud) -> int:
    """0 when every sampled point lies in x0's region, 1 otherwise."""
    rid = _form(model, x0).region_id
    return int(any(_form(model, p).region_id != rid for p in _points(cloud)))


def weight_difference(model, x0, cloud, c: int) -> float:
    """Mean L1 gap between x0's and each sample's per-pair weight differences."""
    f0 = _form(model, x0)
    C = f0.n_classes
    pts = _points(cloud)
    # D_{c,c'} for all c' at once: column c minus every column
    D0 = f0.W[:, [c]] - f0.W
    total = 0.0
    for p in pts:
        W = _form(model, p).W
        total += np.abs(D0 - (W[:, [c]] - W)).sum()
    return total / ((C - 1) * len(pts))


def l1_exactness(d_star, d_true) -> float:
    a, b = np.asarray(d_star, dtype=np.float64), np.asarray(d_true, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


class UndefinedSimilarity(ValueError):
    pass


def cosine_consistency(d_a, d_b) -> float:
    a, b = np.asarray(d_a, dtype=np.float64), np.asarray(d_b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedSimilarity("cosine similarity of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def nearest_neighbors(X: np.ndarray) -> np.ndarray:
    """Index of each row's nearest other row in Euclidean distance."""
    X = np.asarray(X, dtype=np.float64)
    sq = np.sum(X**2, axis=1)
    dist = sq[:, None] + sq[None, :] - 2 * X @ X.T
    np.fill_diagonal(dist, np.inf)
    return np.argmin(dist, axis=1)


@dataclass(frozen=True)
class AblationCurve:
    cpp: np.ndarray  # (steps,)
    label_changed: np.ndarray  # (steps,) bool
    order: np.ndarray  # feature index altered at each step


def ablation_order(weights) -> np.ndarray:
    """Features by descending |weight|, ties (including zeros) by index."""
    w = np.abs(np.asarray(weights, dtype=np.float64))
    return np.lexsort((np.arange(w.size), -w))


def ablation_curve(api, x0, weights, max_steps: int = 200, order=None) -> AblationCurve:
    """Alter features one at a time and record the drop in the predicted class.

    Positive-weight features are set to 0, negative-weight features to 1 and
    exactly-zero ones to 0. ``order`` overrides the ranking (for random
    baselines); by default it is :func:`ablation_order`.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    w = np.asarray(getattr(weights, "weights", weights), dtype=np.float64)
    y0 = api.predict(x0)
    c = int(np.argmax(y0))
    order = ablation_order(w) if order is None else np.asarray(order)
    n = min(w.size, max_steps)
    x = x0.copy()
    cpp = np.empty(n)
    changed = np.empty(n, dtype=bool)
    for t in range(n):
        i = order[t]
        x[i] = 1.0 if w[i] < 0 else 0.0
        y = api.predict(x)
        cpp[t] = abs(y0[c] - y[c])
        changed[t] = int(np.argmax(y)) != c
    return AblationCurve(cpp, changed, order[:n])


def nlci(curves, step: int) -> int:
    """Number of instances whose label changed after ``step`` alterations (1-based)."""
    return int(sum(bool(curve.label_changed[step - 1]) for curve in curves if len(curve.label_changed) >= step))


def summarize(values) -> dict:
    """Mean, min, max and count of the finite entries."""
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"mean": None, "min": None, "max": None, "n": 0}
    return {"mean": float(np.mean(v)), "min": float(np.min(v)), "max": float(np.max(v)), "n": int(v.size)}
