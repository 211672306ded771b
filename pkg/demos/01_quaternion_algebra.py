# coding: utf-8

# # Quaternion algebra
#
# Quaternions are stored as arrays whose leading axis holds the four cores
# in (r, a, b, c) order. A scalar quaternion has shape (4,), a quaternion
# vector of width d has shape (4, d).

import numpy as np

from quatfm import quaternion as qt

one, i, j, k = (qt.quaternion(*row) for row in np.eye(4))

# The basis units square to -1, and i j k = -1 as well.

for name, q in (("i", i), ("j", j), ("k", k)):
    print(name, "squared:", qt.hamilton_product(q, q))
print("i j k:", qt.hamilton_product(qt.hamilton_product(i, j), k))

# The product does not commute: i j = k but j i = -k.

print("i j =", qt.hamilton_product(i, j), "  j i =", qt.hamilton_product(j, i))

# Norms multiply, which is what keeps the algebra well conditioned.

rng = np.random.default_rng(0)
p, q = rng.normal(size=(2, 4))
print("|pq| =", qt.norm(qt.hamilton_product(p, q)), " |p||q| =", qt.norm(p) * qt.norm(q))

# ## Products of quaternion vectors
#
# The inner Hamilton product combines matching cores with dot products and
# returns one quaternion. The element-wise version keeps the width d.

u, v = rng.normal(size=(2, 4, 3))
print("u (x) v =", qt.inner_hamilton_product(u, v))
print("v (x) u =", qt.inner_hamilton_product(v, u))
print("u (.) v shape:", qt.elementwise_hamilton_product(u, v).shape)

# A quaternion matrix acting on a quaternion vector is the same as a real
# 4d x 4d block matrix acting on the stacked cores.

W = rng.normal(size=(4, 3, 3))
h = rng.normal(size=(4, 3))
print("block form agrees:", np.allclose(qt.qmat_real_block(W) @ h.ravel(), qt.qmat_vec(W, h).ravel()))
