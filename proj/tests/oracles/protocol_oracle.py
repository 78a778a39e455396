#!/usr/bin/env python3
"""Independent re-implementation of the seed derivation and basis sampler
described in docs/PROTOCOL.md. Used once to freeze the golden values in
tests/test_rand_basis.cpp and tests/test_subspace.cpp; run it to re-derive.
"""
import math
import struct

import numpy as np

M64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
ROOT_SALT = 0x6A09E667F3BCC909
LANE_SALT = [0xBB67AE8584CAA73B, 0x3C6EF372FE94F82B,
             0xA54FF53A5F1D36F1, 0x510E527FADE682D1]


def mix64(z):
    z &= M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


def derive_subseed(root, client, rnd, block, basis):
    h = mix64(root ^ ROOT_SALT)
    for j, x in enumerate((client, rnd, block, basis)):
        h = mix64(((h + GOLDEN) & M64) ^ mix64(x + LANE_SALT[j]))
    return h


def uniform(key, i):
    return (float(mix64(key + (i + 1) * GOLDEN) >> 11) + 0.5) * 2.0 ** -53


A = [3.387132872796366608, 133.14166789178437745, 1971.5909503065514427,
     13731.693765509461125, 45921.953931549871457, 67265.770927008700853,
     33430.575583588128105, 2509.0809287301226727]
B = [1.0, 42.313330701600911252, 687.1870074920579083, 5394.1960214247511077,
     21213.794301586595867, 39307.89580009271061, 28729.085735721942674,
     5226.495278852545925]


def ppf_central(q):
    r = 0.180625 - q * q
    num = A[7]
    for c in reversed(A[:7]):
        num = num * r + c
    den = B[7]
    for c in reversed(B[:7]):
        den = den * r + c
    return q * num / den


def f32(x):
    return struct.unpack('<f', struct.pack('<f', x))[0]


def f32_bits(x):
    return struct.unpack('<I', struct.pack('<f', x))[0]


def basis(seed, block, dim, k):
    a = 1.0 / math.sqrt(float(dim))
    h = 0.5 * math.erf(a / math.sqrt(2.0))
    af = f32(a)
    if af > a:
        af = float(np.nextafter(np.float32(af), np.float32(0)))
    key = derive_subseed(seed, 0, 0, block, k)
    out = []
    for i in range(dim):
        u = uniform(key, i)
        x = f32(ppf_central((2.0 * u - 1.0) * h))
        out.append(min(max(x, -af), af))
    return out


def rho_closed(dim):
    a = 1.0 / math.sqrt(float(dim))
    pdf = math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    cdf = 0.5 * math.erfc(-a / math.sqrt(2.0))
    return 1.0 - (2.0 * pdf * a) / (2.0 * cdf - 1.0)


if __name__ == '__main__':
    for args in [(42, 0, 0, 0, 0), (42, 0, 0, 0, 1), (42, 0, 0, 0, 2),
                 (42, 1, 2, 0, 0), (42, 2, 1, 0, 0)]:
        print('derive_subseed%s = 0x%016x' % (args, derive_subseed(*args)))
    v0 = basis(42, 0, 8, 0)
    print('basis(42, block 0, d=8, k=0) bits:',
          ', '.join('0x%08x' % f32_bits(x) for x in v0))
    v3 = basis(7, 2, 5, 3)
    print('basis(7, block 2, d=5, k=3) bits:',
          ', '.join('0x%08x' % f32_bits(x) for x in v3))
    # project example: d = 4, K = 2, seed 42, delta = (1, 2, 3, 4)
    delta = [1.0, 2.0, 3.0, 4.0]
    rho = rho_closed(4)
    inv = 1.0 / (rho * 2.0)
    coords = []
    for k in range(2):
        v = basis(42, 0, 4, k)
        acc = 0.0
        for vi, xi in zip(v, delta):
            acc += vi * xi
        coords.append(f32(acc * inv))
    print('rho(4) = %.17g' % rho)
    print('project coords = %r, bits %s' % (
        coords, [hex(f32_bits(c)) for c in coords]))
