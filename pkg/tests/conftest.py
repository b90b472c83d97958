import numpy as np
import pytest

from plminterp.models import LocalLinearForm, ModelTree, TreeNode


def linear_model(W, b=None):
    """Single-leaf tree, i.e. one global softmax classifier."""
    W = np.asarray(W, dtype=float)
    b = np.zeros(W.shape[1]) if b is None else np.asarray(b, dtype=float)
    return ModelTree(TreeNode(form=LocalLinearForm(0, W, b)), W.shape[0], W.shape[1])


def split_model(left: LocalLinearForm, right: LocalLinearForm, feature: int, threshold: float):
    root = TreeNode(feature=feature, threshold=threshold, left=TreeNode(form=left), right=TreeNode(form=right))
    return ModelTree(root, left.d, left.n_classes)


def continuous_split_model(d, C, feature, threshold, seed):
    """Depth-1 tree whose two leaves agree on the split hyperplane."""
    rng = np.random.default_rng(seed)
    W = rng.uniform(-2, 2, size=(d, C))
    b = rng.uniform(-2, 2, size=C)
    kink = rng.uniform(-2, 2, size=C)
    W2 = W.copy()
    W2[feature] += kink
    b2 = b - threshold * kink
    return split_model(LocalLinearForm(0, W, b), LocalLinearForm(1, W2, b2), feature, threshold)


def near_split(model, rng, dist=0.01, max_prob=0.9999):
    """Unsaturated instance within ``dist`` of the root split, on a random side."""
    f, t = model.root.feature, model.root.threshold
    while True:
        x = rng.uniform(0, 1, model.d)
        x[f] = t + rng.choice([-1, 1]) * rng.uniform(0.1 * dist, dist)
        if model.predict(x).max() <= max_prob:
            return x


@pytest.fixture
def identity_model():
    """d=2, C=2 with W_1=(1,0), W_2=(0,1), b=0."""
    return linear_model(np.eye(2))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
