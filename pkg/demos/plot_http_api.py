"""
Interpreting a model behind HTTP
================================

The model is served on a local port and the interpreter only talks to the
``/predict`` endpoint. Results match the in-process run bit for bit.
"""

import numpy as np

from plminterp import connect_http, openapi_interpret, random_relu_net, serve_http, wrap_in_process

net = random_relu_net([5, 12, 3], seed=8)
x0 = np.array([0.2, 0.7, 0.4, 0.9, 0.1])

with serve_http(net) as server:
    print("serving at", server.url)
    remote = connect_http(server.url)
    print("remote meta: d =", remote.d, "C =", remote.n_classes)
    over_http = openapi_interpret(remote, x0, seed=5)
    print("HTTP queries:", remote.ledger.count)

local = openapi_interpret(wrap_in_process(net), x0, seed=5)
print("identical to in-process:", np.array_equal(over_http.features.weights, local.features.weights))
