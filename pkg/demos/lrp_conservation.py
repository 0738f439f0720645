"""
Relevance conservation in LRP
=============================

Push a class logit back through a small random CNN with the epsilon rule
and watch where it goes. Without biases every bit of it lands on the
input pixels; with biases some leaks out at each Conv and Dense layer.
"""

import numpy as np

from heatlens.explain import lrp
from heatlens.netgraph import build_network, toy_cnn_architecture

rng = np.random.default_rng(3)
arch = toy_cnn_architecture((4, 4))
net = build_network(arch, (1, 12, 12), 3, seed=5)
x = rng.random((1, 12, 12))


def with_biases(net, make):
    return net.with_layers(tuple(
        type(layer)(**{**vars(layer), "bias": make(len(layer.bias))}) if getattr(layer, "bias", None) is not None else layer
        for layer in net.layers
    ))


# Fresh networks start with zero biases, so strip them outright for the conservative case
# and give the other copy some random ones.
bias_free = with_biases(net, lambda n: None)
net = with_biases(net, lambda n: rng.normal(scale=0.2, size=n))

r = lrp(bias_free, x, 1, epsilon=0.0)
print(f"logit {r.logit:.6f}, input relevance sum {r.input_relevance.sum():.6f}")
for i, rel in enumerate(r.layer_relevance):
    print(f"  relevance entering layer {i}: {rel.sum(): .6f}")

# Now with biases and a small epsilon. The books still balance once leakage is counted.
r = lrp(net, x, 1, epsilon=1e-6)
print(f"\nwith biases: logit {r.logit:.6f} = input {r.input_relevance.sum():.6f} + leakage {r.total_leakage:.6f}")
for i, leak in enumerate(r.leakage):
    if leak:
        print(f"  layer {i} ({type(net.layers[i]).__name__}) leaked {leak: .6f}")

# The heatmap sums relevance over channels.
h = r.heatmap
print("\nmost relevant pixel:", np.unravel_index(np.argmax(h), h.shape))
