"""Fit a one-feature network to a single synthetic micrograph."""

import numpy as np

from simresnet.data_io import V_SPEC, gen_synthetic
from simresnet.metrics import histogram, picture_error
from simresnet.trainer import TrainConfig, evaluate_outputs, normalize, train

# 70 synthetic group-V pictures with 150 maximum-feret measurements each.
pictures = [p.select(("feret",)) for p in gen_synthetic(V_SPEC, P=70, M=150, seed=0)]
normed, transform = normalize(pictures)
pic = normed[0]
print(f"{pic.picture_id}: target {pictures[0].target:.1f} MPa -> {pic.target:.3f} normalized")

# Defaults: learning rate 0.1, depth 4, sigmoid, at most 10^4 epochs.
report = train(pic, TrainConfig())
print(f"{report.iterations} epochs, stopped by {report.stopping_reason}")
print("loss at epochs 1, 10, 100, last:", report.loss_history[[0, 9, 99, -1]])

out = evaluate_outputs(report.network, pic)
eta = picture_error(out, pic.target)
print(f"eta = {eta:.4f}, mean |x(T) - h| = {eta / pic.n_measurements:.4f}")

# The network squeezes the input spread onto the target.
for name, values in (("input", pic.features), ("output", out)):
    h = histogram(values, 8)
    print(f"{name:6s} range [{h.edges[0]:.3f}, {h.edges[-1]:.3f}] counts {h.counts.tolist()}")
