# coding: utf-8

# # Parameter budget
#
# A quaternion embedding of width d carries 4d reals, so QFM at width d has
# exactly as many parameters as a real FM at width 4d. The neural model adds
# l square quaternion layers plus a projection quaternion vector.

from quatfm.models import param_count, param_skeleton, real_ffn_layer_count

n = 1000
print(f"{'d':>3} {'fm(4d)':>9} {'qfm(d)':>9} {'qnfm(d,l=2)':>12}")
for d in (4, 8, 16, 32, 64):
    print(f"{d:>3} {param_count('fm', n, 4 * d):>9} {param_count('qfm', n, d):>9} {param_count('qnfm', n, d, 2):>12}")

# The counts above come from closed-form formulas. Walking the actual
# parameter arrays gives the same totals, without allocating them.

print("structural walk matches:", param_skeleton("qnfm", 10**5, 64, 3).size == param_count("qnfm", 10**5, 64, 3))

# A quaternion d x d layer shares its four d x d core blocks across the
# 4d x 4d real block matrix, a quarter of the weights of a real layer.

d = 16
print("real layer:", real_ffn_layer_count(d), " quaternion layer:", 4 * d * d + 4 * d)
