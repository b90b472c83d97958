"""Piecewise linear classifiers with a white-box view of their local linear forms.

Two model families are provided: logistic model trees (axis-aligned splits,
one softmax classifier per leaf) and ReLU networks. Both expose ``predict``
and ``extract_local_form``; only ``predict`` is made reachable through a
prediction API (see :mod:`plminterp.api`).
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

BOUNDARY_TOL = 1e-12


class BoundaryError(ValueError):
    """Raised when an instance sits on (or within 1e-12 of) a region boundary."""


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass(frozen=True)
class LocalLinearForm:
    """Affine map ``x -> W.T @ x + b`` governing one locally linear region."""

    region_id: Hashable
    W: np.ndarray  # (d, C)
    b: np.ndarray  # (C,)

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2 or b.shape != (W.shape[1],):
            raise ValueError(f"inconsistent shapes W{W.shape}, b{b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite coefficients")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def n_classes(self) -> int:
        return self.W.shape[1]

    def logits(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.W + self.b

    def predict(self, x) -> np.ndarray:
        return softmax(self.logits(x))

    def core_params(self, c: int, c2: int) -> tuple[np.ndarray, float]:
        """Weight and bias differences between classes ``c`` and ``c2``."""
        return self.W[:, c] - self.W[:, c2], float(self.b[c] - self.b[c2])


def ground_truth_decision_features(form: LocalLinearForm, c: int) -> np.ndarray:
    """Average of ``W_c - W_c'`` over the other ``C-1`` classes."""
    C = form.n_classes
    if not 0 <= c < C:
        raise IndexError(f"class index {c} out of range for C={C}")
    W = form.W
    # sum over all c' of (W_c - W_c') = C*W_c - sum(W); the c'=c term is zero
    return (C * W[:, c] - W.sum(axis=1)) / (C - 1)


def _check_instance(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise ValueError(f"expected instance of shape ({d},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("instance has non-finite entries")
    return x


class PiecewiseLinearModel:
    """Common surface of the white-box models."""

    d: int
    n_classes: int

    def logits(self, x) -> np.ndarray:
        raise NotImplementedError

    def predict(self, x) -> np.ndarray:
        return softmax(self.logits(x))

    def extract_local_form(self, x) -> LocalLinearForm:
        raise NotImplementedError

    def region_id(self, x) -> Hashable:
        return self.extract_local_form(x).region_id

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_dict(self) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Logistic model trees
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None  # x[feature] <= threshold
    right: "TreeNode | None" = None
    form: LocalLinearForm | None = None

    @property
    def is_leaf(self) -> bool:
        return self.form is not None


class ModelTree(PiecewiseLinearModel):
    """Binary tree of axis-aligned splits with a softmax classifier per leaf."""

    def __init__(self, root: TreeNode, d: int, n_classes: int):
        self.root = root
        self.d = int(d)
        self.n_classes = int(n_classes)
        self._validate(root, {})

    def _validate(self, node: TreeNode, bounds: dict):
        if node.is_leaf:
            if node.form.W.shape != (self.d, self.n_classes):
                raise ValueError(f"leaf {node.form.region_id}: W has shape {node.form.W.shape}")
            return
        if node.left is None or node.right is None:
            raise ValueError("internal node missing a child")
        if not 0 <= node.feature < self.d:
            raise ValueError(f"split feature {node.feature} out of range")
        lo, hi = bounds.get(node.feature, (-np.inf, np.inf))
        if not lo < node.threshold < hi:
            raise ValueError(
                f"threshold {node.threshold} on feature {node.feature} leaves an empty region"
            )
        self._validate(node.left, {**bounds, node.feature: (lo, node.threshold)})
        self._validate(node.right, {**bounds, node.feature: (node.threshold, hi)})

    def leaves(self) -> list[LocalLinearForm]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node.form)
            else:
                stack.extend([node.right, node.left])
        return out

    @property
    def depth(self) -> int:
        def _depth(node):
            return 0 if node.is_leaf else 1 + max(_depth(node.left), _depth(node.right))

        return _depth(self.root)

    def _route(self, x: np.ndarray, strict: bool) -> LocalLinearForm:
        node = self.root
        while not node.is_leaf:
            gap = node.threshold - x[node.feature]
            if strict and abs(gap) < BOUNDARY_TOL:
                raise BoundaryError(
                    f"feature {node.feature} = {x[node.feature]!r} is on threshold {node.threshold!r}"
                )
            node = node.left if gap >= 0 else node.right
        return node.form

    def logits(self, x) -> np.ndarray:
        x = _check_instance(x, self.d)
        return self._route(x, strict=False).logits(x)

    def extract_local_form(self, x) -> LocalLinearForm:
        x = _check_instance(x, self.d)
        return self._route(x, strict=True)

    def to_dict(self) -> dict:
        def node_dict(node):
            if node.is_leaf:
                return {
                    "leaf": node.form.region_id,
                    "W": _encode(node.form.W),
                    "b": _encode(node.form.b),
                }
            return {
                "feature": node.feature,
                "threshold": float(node.threshold).hex(),
                "left": node_dict(node.left),
                "right": node_dict(node.right),
            }

        return {"kind": "tree", "d": self.d, "C": self.n_classes, "root": node_dict(self.root)}


def build_synthetic_plm(d: int, C: int, depth: int, seed=None) -> ModelTree:
    """Random logistic model tree with up to ``2**depth`` leaves.

    Thresholds are uniform in [0.2, 0.8] (intersected with the interval already
    carved out along the path, so no leaf is empty); leaf weights and biases
    are uniform in [-2, 2].
    """
    if d < 1 or C < 2 or depth < 0:
        raise ValueError(f"need d >= 1, C >= 2, depth >= 0 (got {d}, {C}, {depth})")
    rng = np.random.default_rng(seed)
    counter = iter(range(2**depth + 1))

    def grow(level, bounds):
        if level == depth:
            leaf_id = next(counter)
            W = rng.uniform(-2.0, 2.0, size=(d, C))
            b = rng.uniform(-2.0, 2.0, size=C)
            return TreeNode(form=LocalLinearForm(leaf_id, W, b))
        for feature in rng.permutation(d):
            lo, hi = bounds.get(feature, (0.2, 0.8))
            lo, hi = max(lo, 0.2), min(hi, 0.8)
            if hi - lo > 1e-3:
                break
        else:  # every feature already cut too finely; stop splitting here
            return grow(depth, bounds)
        feature = int(feature)
        t = float(rng.uniform(lo, hi))
        left = grow(level + 1, {**bounds, feature: (lo, t)})
        right = grow(level + 1, {**bounds, feature: (t, hi)})
        return TreeNode(feature=feature, threshold=t, left=left, right=right)

    return ModelTree(grow(0, {}), d, C)


def fit_model_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int | None = None,
    max_depth: int = 4,
    min_samples: int = 100,
    stop_accuracy: float = 0.99,
    C_reg: float = 1.0,
) -> ModelTree:
    """Greedy logistic model tree fitted to labelled data.

    Splits maximise information gain on the class labels over per-feature
    quantile thresholds. A node becomes a leaf when it holds fewer than
    ``min_samples`` instances or its logistic regression classifier is
    already more than ``stop_accuracy`` accurate.
    """
    from sklearn.linear_model import LogisticRegression

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    n, d = X.shape
    C = int(n_classes if n_classes is not None else y.max() + 1)
    counter = iter(range(2 ** (max_depth + 1)))

    def leaf_form(Xn, yn):
        W = np.zeros((d, C))
        b = np.zeros(C)
        present = np.unique(yn)
        if len(present) == 1:
            b[present[0]] = 10.0
            return LocalLinearForm(next(counter), W, b), 1.0
        clf = LogisticRegression(C=C_reg, max_iter=1000).fit(Xn, yn)
        if len(present) == 2:
            # sklearn's binary model is a single logit for the second class
            W[:, present[1]] = clf.coef_[0]
            b[present[1]] = clf.intercept_[0]
        else:
            W[:, present] = clf.coef_.T
            b[present] = clf.intercept_
        return LocalLinearForm(next(counter), W, b), clf.score(Xn, yn)

    def entropy(labels):
        p = np.bincount(labels, minlength=C) / len(labels)
        p = p[p > 0]
        return -np.sum(p * np.log2(p))

    def best_split(Xn, yn, bounds):
        base, best = entropy(yn), (0.0, None, None)
        for f in range(d):
            lo, hi = bounds.get(f, (-np.inf, np.inf))
            for t in np.unique(np.quantile(Xn[:, f], np.linspace(0.1, 0.9, 9))):
                if not lo < t < hi:
                    continue
                mask = Xn[:, f] <= t
                k = mask.sum()
                if k == 0 or k == len(yn):
                    continue
                gain = base - (k * entropy(yn[mask]) + (len(yn) - k) * entropy(yn[~mask])) / len(yn)
                if gain > best[0]:
                    best = (gain, f, float(t))
        return best[1], best[2]

    def grow(Xn, yn, level, bounds):
        if len(yn) < min_samples or level == max_depth:
            return TreeNode(form=leaf_form(Xn, yn)[0])
        form, acc = leaf_form(Xn, yn)
        if acc > stop_accuracy:
            return TreeNode(form=form)
        f, t = best_split(Xn, yn, bounds)
        if f is None:
            return TreeNode(form=form)
        mask = Xn[:, f] <= t
        lo, hi = bounds.get(f, (-np.inf, np.inf))
        return TreeNode(
            feature=f,
            threshold=t,
            left=grow(Xn[mask], yn[mask], level + 1, {**bounds, f: (lo, t)}),
            right=grow(Xn[~mask], yn[~mask], level + 1, {**bounds, f: (t, hi)}),
        )

    return ModelTree(grow(X, y, 0, {}), d, C)


# ---------------------------------------------------------------------------
# ReLU networks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReluNetSpec:
    layer_widths: Sequence[int]
    weights: Sequence[np.ndarray] = field(default_factory=list)  # each (n_in, n_out)
    biases: Sequence[np.ndarray] = field(default_factory=list)


class ReluNet(PiecewiseLinearModel):
    """Fully connected network: ReLU hidden layers, softmax output."""

    def __init__(self, spec: ReluNetSpec):
        widths = [int(w) for w in spec.layer_widths]
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"bad layer widths {widths}")
        if len(spec.weights) != len(widths) - 1 or len(spec.biases) != len(widths) - 1:
            raise ValueError("need one weight matrix and bias vector per layer")
        self.weights, self.biases = [], []
        for i, (W, b) in enumerate(zip(spec.weights, spec.biases)):
            W = np.array(W, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if W.shape != (widths[i], widths[i + 1]) or b.shape != (widths[i + 1],):
                raise ValueError(
                    f"layer {i}: expected W{(widths[i], widths[i + 1])}, b({widths[i + 1]},); "
                    f"got W{W.shape}, b{b.shape}"
                )
            W.setflags(write=False)
            b.setflags(write=False)
            self.weights.append(W)
            self.biases.append(b)
        if widths[-1] < 2:
            raise ValueError("need at least two output classes")
        self.layer_widths = widths
        self.d = widths[0]
        self.n_classes = widths[-1]

    def logits(self, x) -> np.ndarray:
        h = _check_instance(x, self.d)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ W + b, 0.0)
        return h @ self.weights[-1] + self.biases[-1]

    def activation_pattern(self, x, strict: bool = True) -> list[np.ndarray]:
        h = _check_instance(x, self.d)
        pattern = []
        for i, (W, b) in enumerate(zip(self.weights[:-1], self.biases[:-1])):
            z = h @ W + b
            if strict and np.any(np.abs(z) < BOUNDARY_TOL):
                unit = int(np.argmin(np.abs(z)))
                raise BoundaryError(f"hidden layer {i} unit {unit} pre-activation is {z[unit]!r}")
            active = z > 0
            pattern.append(active)
            h = np.where(active, z, 0.0)
        return pattern

    def extract_local_form(self, x) -> LocalLinearForm:
        pattern = self.activation_pattern(x)
        # compose the affine maps with inactive units' outputs zeroed
        A = np.eye(self.d)
        a = np.zeros(self.d)
        for (W, b), active in zip(zip(self.weights[:-1], self.biases[:-1]), pattern):
            A = (A @ W) * active
            a = (a @ W + b) * active
        W_out, b_out = self.weights[-1], self.biases[-1]
        region = "".join("1" if v else "0" for layer in pattern for v in layer)
        return LocalLinearForm(region, A @ W_out, a @ W_out + b_out)

    def to_dict(self) -> dict:
        return {
            "kind": "relu",
            "d": self.d,
            "C": self.n_classes,
            "layer_widths": self.layer_widths,
            "weights": [_encode(W) for W in self.weights],
            "biases": [_encode(b) for b in self.biases],
        }


def build_relu_net(spec: ReluNetSpec) -> ReluNet:
    return ReluNet(spec)


def random_relu_net(layer_widths: Sequence[int], seed=None, scale: float = 1.0) -> ReluNet:
    """ReLU net with He-scaled Gaussian weights and small Gaussian biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(layer_widths[:-1], layer_widths[1:]):
        weights.append(rng.normal(0.0, scale * np.sqrt(2.0 / n_in), size=(n_in, n_out)))
        biases.append(rng.normal(0.0, 0.1 * scale, size=n_out))
    return ReluNet(ReluNetSpec(list(layer_widths), weights, biases))


# ---------------------------------------------------------------------------
# Serialization
#
# Arrays travel as {"shape": [...], "f64le": <base64 of little-endian doubles,
# row-major>}; split thresholds as float.hex strings. Both are bit-exact.
# ---------------------------------------------------------------------------


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "f64le": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["f64le"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(obj["shape"])


def model_from_dict(doc: dict) -> PiecewiseLinearModel:
    kind = doc.get("kind")
    if kind == "tree":
        def node(obj):
            if "leaf" in obj:
                return TreeNode(form=LocalLinearForm(obj["leaf"], _decode(obj["W"]), _decode(obj["b"])))
            return TreeNode(
                feature=int(obj["feature"]),
                threshold=float.fromhex(obj["threshold"]),
                left=node(obj["left"]),
                right=node(obj["right"]),
            )

        return ModelTree(node(doc["root"]), doc["d"], doc["C"])
    if kind == "relu":
        return ReluNet(
            ReluNetSpec(
                doc["layer_widths"],
                [_decode(w) for w in doc["weights"]],
                [_decode(b) for b in doc["biases"]],
            )
        )
    raise ValueError(f"unknown model kind {kind!r}")


def model_from_json(text: str) -> PiecewiseLinearModel:
    return model_from_dict(json.loads(text))


def save_model(model: PiecewiseLinearModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(model.to_json())


def load_model(path) -> PiecewiseLinearModel:
    with open(path) as fh:
        return model_from_json(fh.read())
