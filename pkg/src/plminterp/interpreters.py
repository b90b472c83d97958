"""Decision-feature interpreters.

API-only methods (``openapi_interpret``, ``naive_interpret``, ``zoo_interpret``,
``lime_interpret``) see the model through a :class:`~plminterp.api.PredictionApi`.
``gradient_baselines`` needs the white-box model and exists for comparison.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .linsys import (
    EPS_SOLVE,
    SaturationError,
    assemble,
    check_overdetermined,
    make_equation,
    solve_determined,
)
from .models import BoundaryError, ground_truth_decision_features

logger = logging.getLogger(__name__)

SATURATION_PROB = 0.9999


@dataclass(frozen=True)
class SampleCloud:
    center: np.ndarray
    radius: float
    points: np.ndarray  # (n, d)


@dataclass(frozen=True)
class DecisionFeatures:
    weights: np.ndarray
    c: int
    cloud: SampleCloud | None = None
    core_params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class OpenApiResult:
    features: DecisionFeatures | None
    core_params: dict
    r_final: float
    iterations: int
    converged: bool
    cloud: SampleCloud | None = None


class InsufficientSamplesError(RuntimeError):
    pass


def aggregate(pair_weights: dict, C: int) -> np.ndarray:
    """Average the C-1 per-pair weight differences into decision features."""
    return np.sum(list(pair_weights.values()), axis=0) / (C - 1)


def _query_center(api, x0, c):
    x0 = np.asarray(x0, dtype=np.float64)
    y0 = api.predict(x0)
    if np.max(y0) > SATURATION_PROB:
        raise SaturationError(f"prediction at x0 is saturated (max prob {np.max(y0)!r})")
    if c is None:
        c = int(np.argmax(y0))
    if not 0 <= c < api.n_classes:
        raise IndexError(f"class index {c} out of range")
    return x0, y0, c


def _sample_cube(rng, x0, r, n):
    return x0 + rng.uniform(-r, r, size=(n, x0.size))


def openapi_interpret(
    api,
    x0,
    c: int | None = None,
    max_iter: int = 100,
    seed=None,
    r_init: float = 1.0,
    eps: float = EPS_SOLVE,
) -> OpenApiResult:
    """Exact decision features of a piecewise linear model from its predictions.

    Each iteration samples d+1 points in the hypercube ``|p - x0|_inf <= r``
    and, for every other class, checks the resulting d+2 log-odds equations
    for a common solution. If all C-1 systems agree the solutions are the core
    parameters of x0's region; otherwise r is halved and the cube resampled.
    ``c`` defaults to the predicted class.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    x0, y0, c = _query_center(api, x0, c)
    d, C = x0.size, api.n_classes
    others = [k for k in range(C) if k != c]
    rng = np.random.default_rng(seed)
    r = float(r_init)
    for it in range(1, max_iter + 1):
        S = _sample_cube(rng, x0, r, d + 1)
        ys = [api.predict(p) for p in S]
        xs = np.vstack([x0, S])
        ys = [y0] + ys
        found = {}
        for k in others:
            try:
                A, rhs = assemble(xs, ys, c, k)
            except SaturationError:
                break
            sol = check_overdetermined(A, rhs, eps)
            if sol is None:
                break
            found[k] = sol
        if len(found) == C - 1:
            cloud = SampleCloud(x0, r, S)
            D = aggregate({k: p.D for k, p in found.items()}, C)
            feats = DecisionFeatures(D, c, cloud, found)
            return OpenApiResult(feats, found, r, it, True, cloud)
        r /= 2.0
    logger.warning("no consistent hypercube after %d iterations (r=%g)", max_iter, r)
    return OpenApiResult(None, {}, r, max_iter, False, None)


def naive_interpret(api, x0, c: int | None = None, r: float = 1e-4, seed=None) -> DecisionFeatures:
    """Solve the determined d+1 systems from one batch of d samples, unverified."""
    x0, y0, c = _query_center(api, x0, c)
    d, C = x0.size, api.n_classes
    rng = np.random.default_rng(seed)
    S = _sample_cube(rng, x0, r, d)
    xs = np.vstack([x0, S])
    ys = [y0] + [api.predict(p) for p in S]
    params = {}
    for k in range(C):
        if k != c:
            params[k] = solve_determined(*assemble(xs, ys, c, k))
    D = aggregate({k: p.D for k, p in params.items()}, C)
    return DecisionFeatures(D, c, SampleCloud(x0, r, S), params)


def _log_ratios(y, c, C):
    return np.array([make_equation((), y, c, k)[1] for k in range(C) if k != c])


def zoo_interpret(api, x0, c: int | None = None, h: float = 1e-4) -> DecisionFeatures:
    """Symmetric difference quotients of the log-odds along each axis."""
    x0, _, c = _query_center(api, x0, c)
    d, C = x0.size, api.n_classes
    grads = np.empty((C - 1, d))
    probes = []
    for i in range(d):
        step = np.zeros(d)
        step[i] = h
        plus, minus = x0 + step, x0 - step
        probes += [plus, minus]
        try:
            lp = _log_ratios(api.predict(plus), c, C)
            lm = _log_ratios(api.predict(minus), c, C)
        except SaturationError as err:
            raise SaturationError(f"probe along axis {i} (h={h}) saturated: {err}") from None
        grads[:, i] = (lp - lm) / (2 * h)
    others = [k for k in range(C) if k != c]
    pair = {k: grads[j] for j, k in enumerate(others)}
    return DecisionFeatures(aggregate(pair, C), c, SampleCloud(x0, h, np.array(probes)), pair)


def lime_interpret(
    api,
    x0,
    c: int | None = None,
    r: float = 1e-4,
    n_samples: int = 1000,
    ridge: float = 0.0,
    seed=None,
) -> DecisionFeatures:
    """Linear (``ridge=0``) or ridge regression of the log-odds on cube samples.

    The intercept is never penalized: features and targets are centred and
    the slopes solved from the centred problem.
    """
    x0, _, c = _query_center(api, x0, c)
    d, C = x0.size, api.n_classes
    if n_samples < d + 1:
        raise ValueError(f"n_samples must be at least d+1={d + 1}")
    rng = np.random.default_rng(seed)
    S = _sample_cube(rng, x0, r, n_samples)
    kept, targets = [], []
    for p in S:
        try:
            targets.append(_log_ratios(api.predict(p), c, C))
            kept.append(p)
        except SaturationError:
            continue
    if len(kept) < d + 1:
        raise InsufficientSamplesError(f"only {len(kept)} unsaturated samples, need {d + 1}")
    X = np.array(kept)
    T = np.array(targets)  # (n, C-1)
    Xc = X - X.mean(axis=0)
    Tc = T - T.mean(axis=0)
    if ridge > 0:
        Xc = np.vstack([Xc, np.sqrt(ridge) * np.eye(d)])
        Tc = np.vstack([Tc, np.zeros((d, C - 1))])
    slopes = np.linalg.lstsq(Xc, Tc, rcond=None)[0]  # (d, C-1)
    others = [k for k in range(C) if k != c]
    pair = {k: slopes[:, j] for j, k in enumerate(others)}
    return DecisionFeatures(aggregate(pair, C), c, SampleCloud(x0, r, X), pair)


GRADIENT_VARIANTS = ("saliency", "grad_input", "integrated")


def _form_at(model, x, jitter=1e-9):
    try:
        return model.extract_local_form(x)
    except BoundaryError:
        logger.info("integration step on a boundary; jittering by %g", jitter)
        return model.extract_local_form(x + jitter)


def gradient_baselines(
    model,
    x0,
    c: int,
    variant: str = "saliency",
    baseline=None,
    steps: int = 300,
) -> DecisionFeatures:
    """White-box gradient attributions of the one-vs-rest log-odds.

    Within a region the log-odds gradient is exactly the decision-feature
    vector, so: saliency is its absolute value, grad_input multiplies it by x0,
    and integrated averages it over ``steps`` midpoints of the straight path
    from ``baseline`` (default origin) to x0, times ``x0 - baseline``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if variant == "saliency":
        return DecisionFeatures(np.abs(ground_truth_decision_features(model.extract_local_form(x0), c)), c)
    if variant == "grad_input":
        return DecisionFeatures(ground_truth_decision_features(model.extract_local_form(x0), c) * x0, c)
    if variant == "integrated":
        base = np.zeros_like(x0) if baseline is None else np.asarray(baseline, dtype=np.float64)
        delta = x0 - base
        total = np.zeros_like(x0)
        cache = {}
        for k in range(steps):
            form = _form_at(model, base + (k + 0.5) / steps * delta)
            g = cache.get(form.region_id)
            if g is None:
                g = cache[form.region_id] = ground_truth_decision_features(form, c)
            total += g
        return DecisionFeatures(total / steps * delta, c)
    raise ValueError(f"unknown gradient variant {variant!r}; expected one of {GRADIENT_VARIANTS}")
