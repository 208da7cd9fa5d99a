"""
Binary dot products with XNOR and popcount
==========================================

A +-1 vector packs into 64-bit words, one sign per bit.  The dot product of
two packed vectors is ``n - 2 * popcount(a XOR b)``.
"""

import numpy as np

from selftest_bnn import pack_signs, unpack_signs, xnor_popcount_dot

rng = np.random.default_rng(0)
a = rng.choice([-1.0, 1.0], size=100)
b = rng.choice([-1.0, 1.0], size=100)

pa, pb = pack_signs(a), pack_signs(b)
print("words per vector:", pa.words.size)
print("first word of a: ", hex(int(pa.words[0])))

# packing is lossless
assert np.array_equal(unpack_signs(pa), a)

print("packed dot:", xnor_popcount_dot(pa, pb))
print("dense dot: ", int(a @ b))

# zero counts as +1
print(unpack_signs(pack_signs(np.array([0.0, -0.5, 3.0]))))
