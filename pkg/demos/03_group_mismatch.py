"""Train on one nodule group and evaluate on both."""

import numpy as np

from simresnet.data_io import RN_SPEC, V_SPEC, gen_synthetic
from simresnet.metrics import error_report, picture_error
from simresnet.trainer import TrainConfig, evaluate_outputs, fit_transform, train


def corpus(spec):
    return [p.select(("feret",)) for p in gen_synthetic(spec, 70, 150, seed=0)]


groups = {"V": corpus(V_SPEC), "RN": corpus(RN_SPEC)}
for own, other in (("V", "RN"), ("RN", "V")):
    transform = fit_transform(groups[own])
    pick = int(np.random.default_rng(0).integers(70))
    net = train(transform.apply(groups[own][pick]), TrainConfig()).network
    for name in (own, other):
        pics = [transform.apply(p) for p in groups[name]]
        rep = error_report(
            (p.picture_id, picture_error(evaluate_outputs(net, p), p.target)) for p in pics
        )
        print(f"trained on {own:2s}, evaluated on {name:2s}: eta_bar {rep.eta_bar:8.3f}  theta {rep.theta:9.3f}")

# The RN -> V direction does not show a large mismatch: RN's wider target
# scatter inflates its own eta_bar while V targets fall inside the RN range.
