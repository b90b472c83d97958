"""
Feature ablation and heatmaps
=============================

Features are switched off in order of decreasing absolute weight and we track
how far the predicted probability falls. A random order serves as reference.
The decision features of one instance are drawn as a red/blue SVG grid.
"""

from pathlib import Path

import numpy as np

from plminterp import ablation_curve, openapi_interpret, random_relu_net, render_heatmap, wrap_in_process

net = random_relu_net([64, 32, 3], seed=1)
api = wrap_in_process(net)
rng = np.random.default_rng(0)

ours, rand = [], []
for k, x in enumerate(rng.uniform(0, 1, (30, 64))):
    w = openapi_interpret(api, x, seed=k).features.weights
    ours.append(ablation_curve(api, x, w, max_steps=20).cpp)
    rand.append(ablation_curve(api, x, w, max_steps=20, order=rng.permutation(64)).cpp)

print("step  CPP(openapi)  CPP(random)")
for t in (1, 2, 5, 10, 20):
    print(f"{t:>4}  {np.mean(ours, 0)[t - 1]:.4f}        {np.mean(rand, 0)[t - 1]:.4f}")

x0 = rng.uniform(0, 1, 64)
w = openapi_interpret(api, x0, seed=99).features.weights
out = Path("decision_features.svg")
out.write_text(render_heatmap(w, (8, 8), cell=24, title="decision features"))
print("wrote", out.resolve())
