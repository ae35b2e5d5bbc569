"""Static shakedown factor of small stress-point instances."""

import numpy as np

from simresnet.shakedown import (
    EquilibriumOperator,
    GaussPointData,
    ShakedownInstance,
    brute_force_factor,
    check_certificate,
    elastic_limit,
    shakedown_factor,
    uniaxial_instance,
)

# Pulsating uniaxial load 0 -> 100 MPa, yield 250 MPa, free residual stress.
inst = uniaxial_instance(100.0, 250.0)
res = shakedown_factor(inst)
print(f"elastic limit {elastic_limit(inst):.3f}, shakedown factor {res.alpha:.4f} (range bound 5)")
print("residual stress at the limit:", np.round(res.residual, 2))
print("oracle:", round(brute_force_factor(inst, 0.02), 4))

# Two points, two load vertices, the shear residual forced to zero at point 0.
rng = np.random.default_rng(1)
points = tuple(GaussPointData(rng.uniform(-150, 150, (2, 3)), 250.0) for _ in range(2))
eq = EquilibriumOperator(np.array([[0, 0, 1.0, 0, 0, 0]]), 2)
inst = ShakedownInstance(points, eq)
res = shakedown_factor(inst)
print(f"\nsolver {res.alpha:.4f}, oracle {brute_force_factor(inst, 0.02):.4f}")
print("certificate:", check_certificate(inst, res.alpha, res.residual, 1e-6 * 250.0))
