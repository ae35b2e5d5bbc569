"""Compare the distribution of predicted limits with the true targets."""

import numpy as np

from simresnet.data_io import V_SPEC, gen_synthetic
from simresnet.metrics import fit_lognormal
from simresnet.trainer import TrainConfig, normalize, predict_limit, train, train_averaged

pictures = [p.select(("feret",)) for p in gen_synthetic(V_SPEC, 70, 150, seed=0)]
normed, transform = normalize(pictures)
true = fit_lognormal([p.target for p in pictures])

one = train(normed[0], TrainConfig()).network
five = train_averaged(normed[:5], TrainConfig())
for label, net in (("1 picture", one), ("5 pictures", five)):
    pred = np.array([predict_limit(net, p, transform) for p in normed])
    fit = fit_lognormal(pred)
    print(f"{label:10s}: predicted mu {fit.mu:.4f} s {fit.s:.4f}   true mu {true.mu:.4f} s {true.s:.4f}")
    print(f"            predicted range {pred.min():.1f} .. {pred.max():.1f} MPa")

# The medians agree, the spreads do not: a network fitted to one picture maps
# every picture close to that picture's target.
