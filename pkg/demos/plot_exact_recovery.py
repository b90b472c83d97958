"""
Exact decision features from predictions alone
==============================================

A small model tree is hidden behind a prediction API. OpenAPI recovers the
decision features of the region around an instance using only queries, and
we compare them against the tree's own leaf classifier.
"""

import numpy as np

from plminterp import (
    build_synthetic_plm,
    ground_truth_decision_features,
    openapi_interpret,
    wrap_in_process,
)

# a depth-3 tree over 8 features with 4 classes
model = build_synthetic_plm(d=8, C=4, depth=3, seed=0)
api = wrap_in_process(model)

x0 = np.random.default_rng(1).uniform(0, 1, 8)
print("prediction:", np.round(api.predict(x0), 4))

result = openapi_interpret(api, x0, seed=2)
print(f"converged after {result.iterations} iterations, final r = {result.r_final:g}")
print(f"queries used: {api.ledger.count} (1 + iterations x (d+1))")

# the oracle reads the leaf directly, something the interpreter never sees
truth = ground_truth_decision_features(model.extract_local_form(x0), result.features.c)
print("recovered:", np.round(result.features.weights, 6))
print("oracle:   ", np.round(truth, 6))
print("L1 gap:", np.abs(result.features.weights - truth).sum())
