"""
Comparing interpretation baselines
==================================

ZOO and LIME also work from queries. Gradient methods need the model itself.
Each one is scored against the exact decision features of a small ReLU net.
"""

import numpy as np

from plminterp import (
    ground_truth_decision_features,
    gradient_baselines,
    lime_interpret,
    openapi_interpret,
    random_relu_net,
    wrap_in_process,
    zoo_interpret,
)

net = random_relu_net([6, 16, 8, 3], seed=3)
api = wrap_in_process(net)
x0 = np.random.default_rng(0).uniform(0, 1, 6)
c = int(np.argmax(api.predict(x0)))
truth = ground_truth_decision_features(net.extract_local_form(x0), c)

results = {
    "openapi": openapi_interpret(api, x0, c, seed=0).features.weights,
    "zoo h=1e-4": zoo_interpret(api, x0, c, h=1e-4).weights,
    "zoo h=0.1": zoo_interpret(api, x0, c, h=0.1).weights,
    "zoo h=1e-13": zoo_interpret(api, x0, c, h=1e-13).weights,
    "lime": lime_interpret(api, x0, c, r=1e-4, seed=0).weights,
    "lime ridge": lime_interpret(api, x0, c, r=1e-4, ridge=1.0, seed=0).weights,
    # white-box methods, shown for their shape rather than their accuracy
    "saliency": gradient_baselines(net, x0, c, "saliency").weights,
    "grad*input": gradient_baselines(net, x0, c, "grad_input").weights,
    "integrated": gradient_baselines(net, x0, c, "integrated").weights,
}

print("oracle     ", np.round(truth, 3))
for name, w in results.items():
    print(f"{name:<11}", np.round(w, 3), f" L1 to oracle {np.abs(w - truth).sum():.2e}")

# saliency keeps the magnitudes and throws away the signs
print("signs lost by saliency:", int(np.sum(np.sign(truth) != np.sign(results["saliency"]))))
