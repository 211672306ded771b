# coding: utf-8

# # Checking the hand-written gradients
#
# Every model has analytic reverse-mode gradients. Here they are compared
# against central finite differences on random small problems.

import numpy as np

from quatfm import VariantConfig
from quatfm.gradients import backward, finite_difference_gradient, gradient_sweep, random_case

rng = np.random.default_rng(3)
params, inst = random_case("qnfm", rng, n=10, d=3, l=2, nnz=4)
grads = backward(params, inst).grads

# A handful of individual partials:

for coord in (("w0", 0), ("M", 5), ("W", 17), ("b", 4), ("p", 2)):
    print(coord, f"analytic={grads.get(coord): .8f}", f"numeric={finite_difference_gradient(params, inst, coord): .8f}")

# A randomized sweep reports the worst relative error per parameter group.
# Instances whose ReLU pre-activations sit too close to zero are redrawn,
# since the finite difference is meaningless at the kink.

for variant in (VariantConfig(), VariantConfig(pooling="elementwise_real", residual=False)):
    report = gradient_sweep("qnfm", cases=5, seed=0, variant=variant)
    print(variant)
    for line in report.lines():
        print("   ", line)
