"""
Grad-CAM on a GAP network is CAM
================================

When the last conv feature maps go straight through global average
pooling into a Dense head, the Grad-CAM channel weights are just the
Dense row divided by the map area. The two heatmaps agree bit for bit.
"""

import numpy as np

from heatlens.explain import grad_cam
from heatlens.explain.gradcam import weighted_map
from heatlens.netgraph import Conv2D, Dense, GlobalAvgPool, Network, ReLU, forward
from heatlens.segmentation import Heatmap, normalize
from heatlens.tensor import bilinear_resize

rng = np.random.default_rng(1)
net = Network(
    (Conv2D(rng.normal(size=(6, 1, 3, 3)), rng.normal(size=6) * 0.1, 1, 1), ReLU(), GlobalAvgPool(), Dense(rng.normal(size=(2, 6)))),
    (1, 8, 8),
    2,
)
x = rng.normal(size=(1, 8, 8))

g = grad_cam(net, x, 0)
print("alpha          :", g.alpha)
print("Dense row / 64 :", net.layers[3].weight[0] / 64)

# CAM by hand: weight the post-ReLU maps by the Dense row.
_, _, cache = forward(net, x)
cam = np.maximum(weighted_map(net.layers[3].weight[0], cache.activation(1)), 0.0)
cam = normalize(Heatmap(bilinear_resize(cam, 8, 8))).scores
gc = normalize(Heatmap(g.heatmap)).scores
print("bit-identical after min-max:", np.array_equal(cam, gc))

# Doubling the head doubles the raw map and leaves the normalised one alone.
doubled = net.with_layers(net.layers[:3] + (Dense(2 * net.layers[3].weight),))
g2 = grad_cam(doubled, x, 0)
print("raw map scales:", np.array_equal(g2.raw_map, 2 * g.raw_map),
      " normalised unchanged:", np.array_equal(normalize(Heatmap(g2.heatmap)).scores, gc))
