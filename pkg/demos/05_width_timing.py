"""Training time against network width (N = d * multiplier)."""

import time
from dataclasses import replace

from simresnet.data_io import V_SPEC, gen_synthetic
from simresnet.trainer import TrainConfig, make_wide, normalize, train

normed, _ = normalize([p.select(("feret",)) for p in gen_synthetic(V_SPEC, 10, 150, seed=0)])
pic = normed[0]
cfg = replace(TrainConfig(max_iterations=1000), plateau_window=None)
train(pic, replace(cfg, max_iterations=1))  # compile the kernel first

for m in (1, 2, 4, 8):
    best = float("inf")
    for _ in range(3):
        net = make_wide(1, m, cfg)
        t0 = time.perf_counter()
        rep = train(pic, cfg, net)
        best = min(best, time.perf_counter() - t0)
    print(f"N = {m}: {best:.4f} s for {cfg.max_iterations} epochs, final loss {rep.loss_history[-1]:.2e}")
