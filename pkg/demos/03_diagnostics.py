"""Calibration, TLD/entropy correlation and a template projection, with SVG figures."""
import os
import sys

import numpy as np

from kdlab import data, diagnostics, distill, plotting
from kdlab.distill import TrainConfig

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
os.makedirs(out, exist_ok=True)

ds = data.gen_gaussian_mixture(10, 16, 200, spread=0.5, seed=1)
train, test = data.split(ds, 0.2, seed=1)
net = distill.train(train, test, None, TrainConfig((16, 32, 10), epochs=30, seed=1)).net

# ECE on a hand-made case first: one sample at 0.9 confidence, right once and wrong once
print("ece hand case:", diagnostics.ece([0.9, 0.9], [True, False])[0])

e, bins = diagnostics.model_calibration(net, test.x, test.labels)
print(f"test ece={e:.4f} over {bins.n_bins} bins")

# confident samples (large TLD) should have low entropy
t, _ = diagnostics.tld_distribution(net, train.x, train.labels)
h = diagnostics.entropy_values(net, train.x)
print(f"pcc(entropy, tld) = {diagnostics.pcc(h, t):.4f}")

hist = diagnostics.histogram(t, bins=40)
with open(os.path.join(out, "tld.svg"), "w") as fh:
    fh.write(plotting.histogram_svg(hist.edges[:-1], hist.edges[1:], hist.counts, "TLD, train set", "tld"))

# Project the pre-logits of three classes onto the plane of their templates.
classes = [0, 1, 2]
basis = diagnostics.projection_basis(diagnostics.class_templates(net, train.x, train.labels, classes))
mask = np.isin(train.labels, classes)
pts = diagnostics.project(basis, diagnostics.prelogits(net, train.x[mask]))
with open(os.path.join(out, "projection.svg"), "w") as fh:
    fh.write(plotting.scatter_svg(pts[:, 0], pts[:, 1], [str(c) for c in train.labels[mask]], "pre-logit projection"))
print("wrote", os.path.join(out, "tld.svg"), "and", os.path.join(out, "projection.svg"))
