"""
Why a single batch of samples is not enough
===========================================

Near a region boundary, the naive method solves its equations from points
that straddle two regions and gets a blend. OpenAPI adds one more equation
and shrinks the sampling cube until the system is consistent.
"""

import numpy as np

from plminterp import (
    build_synthetic_plm,
    ground_truth_decision_features,
    naive_interpret,
    openapi_interpret,
    region_difference,
    wrap_in_process,
)

model = build_synthetic_plm(d=10, C=3, depth=1, seed=4)
api = wrap_in_process(model)

# put x0 a hair to the left of the root split
f, t = model.root.feature, model.root.threshold
x0 = np.full(10, 0.5)
x0[f] = t - 0.005
c = int(np.argmax(api.predict(x0)))
truth = ground_truth_decision_features(model.extract_local_form(x0), c)

for r in (0.5, 0.05, 1e-4):
    naive = naive_interpret(api, x0, c, r=r, seed=0)
    err = np.abs(naive.weights - truth).sum()
    rd = region_difference(model, x0, naive.cloud)
    print(f"naive  r={r:<6g} L1={err:.3e}  samples left the region: {bool(rd)}")

res = openapi_interpret(api, x0, c, seed=0)
err = np.abs(res.features.weights - truth).sum()
print(f"openapi r_final={res.r_final:g} L1={err:.3e} after {res.iterations} iterations")
