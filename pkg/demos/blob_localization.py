"""
Do the heatmaps find the blob?
==============================

Train the toy CNN on synthetic blob images for half a minute, explain
one held-out image with all four methods, threshold each heatmap at
tau = 0.5 and score it against the blob mask.
"""

import numpy as np

from heatlens.evaluation import iou
from heatlens.explain import LimeConfig, ShapConfig, explain_lime, grad_cam, kernel_shap, lrp, segment_superpixels
from heatlens.explain.export import DEFAULT_NORMALIZATION
from heatlens.netgraph import TrainConfig, build_network, generate_blob_dataset, predict_proba, toy_cnn_architecture, train
from heatlens.segmentation import Heatmap, normalize, threshold

ds = generate_blob_dataset(300, 32, seed=0)
images = ds.images()
net = build_network(toy_cnn_architecture((8, 8)), (1, 32, 32), 4, seed=0)
net, history = train(net, images[:240], ds.labels[:240], TrainConfig(epochs=80, learning_rate=5e-3))
print(f"training loss {history[0]:.3f} -> {history[-1]:.3f}")

# First held-out image with at least one blob.
i = next(k for k in range(240, 300) if ds.labels[k].any())
x = images[i]
c = int(np.flatnonzero(ds.labels[i])[0])
print(f"image {i}, class {c}, p = {predict_proba(net, x[None])[0, c]:.3f}")

sp = segment_superpixels(x, 30)
heatmaps = {
    "lime": explain_lime(net, x, c, LimeConfig(num_samples=600), sp).heatmap,
    "shap": kernel_shap(net, x, c, sp, ShapConfig(num_coalitions=600)).heatmap,
    "gradcam": grad_cam(net, x, c).heatmap,
    "lrp": lrp(net, x, c).heatmap,
}
for method, h in heatmaps.items():
    mask = threshold(normalize(Heatmap(h, method, c), DEFAULT_NORMALIZATION[method]), 0.5)
    print(f"{method:8s} IoU {iou(mask, ds.masks[i, c]):.3f}  ({int(mask.mask.sum())} px kept)")

# A quick picture: '#' blob, '+' Grad-CAM mask, '*' both.
m = threshold(normalize(Heatmap(heatmaps["gradcam"])), 0.5).mask
gt = ds.masks[i, c]
for r in range(32):
    print("".join("*" if gt[r, q] and m[r, q] else "#" if gt[r, q] else "+" if m[r, q] else "." for q in range(32)))
