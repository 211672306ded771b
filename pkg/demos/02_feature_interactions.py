# coding: utf-8

# # Pairwise feature interactions
#
# A quaternion FM scores an instance with a bias, a linear term and the
# real part (averaged over cores) of the summed pairwise Hamilton
# interactions of the active feature embeddings.

import itertools

import numpy as np

from quatfm import SparseInstance, VariantConfig, init_params
from quatfm import quaternion as qt
from quatfm.models import embed, qfm_forward, qfm_interaction, qfm_interaction_fast, qnfm_pooling

rng = np.random.default_rng(1)
params = init_params("qfm", n=20, d=4, seed=1)
params.M[...] = rng.normal(0, 0.5, size=params.M.shape)

inst = SparseInstance((2, 7, 11, 15), (1.0, 1.0, 0.5, 2.0), label=1)
embs = embed(params, inst)

# The direct sum over pairs, both orientations, skips self-pairs.

brute = sum(
    qt.inner_hamilton_product(embs[a], embs[b]) + qt.inner_hamilton_product(embs[b], embs[a])
    for a, b in itertools.combinations(range(len(embs)), 2)
)
print("pairwise loop:", brute)
print("library      :", qfm_interaction(list(embs)))

# Bilinearity gives a linear-time form: S (x) S minus the self terms.

print("fast path    :", qfm_interaction_fast(list(embs)))

# ## Ablations
#
# One-way interaction keeps a single orientation per pair, and the dot
# product variant drops the cross-core mixing.

for variant in (VariantConfig(), VariantConfig(directionality="one_way"), VariantConfig(interaction="dot_product")):
    print(variant.interaction, variant.directionality, "->", round(qfm_forward(params, inst, variant), 6))

# The neural model pools with the element-wise product instead and keeps a
# quaternion vector of width d for the feed-forward network.

print("pooled shape:", qnfm_pooling(list(embs)).shape)
