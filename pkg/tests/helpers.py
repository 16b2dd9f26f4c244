"""Shared test utilities: independent oracles built on sympy/gmpy2.

Everything here deliberately avoids the package's own code paths so each
test keeps an implementation-independent route to the expected value.
"""

import math
import random

import gmpy2
import sympy


def egcd(a, b):
    if b == 0:
        return (1, 0, a)
    x, y, g = egcd(b, a % b)
    return (y, x - (a // b) * y, g)


def modinv_oracle(a, m):
    x, _, g = egcd(a % m, m)
    if g != 1:
        return None
    return x % m


def random_prime(rng: random.Random, bits: int) -> int:
    """Independent prime generation via GMP's next_prime."""
    while True:
        start = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        p = int(gmpy2.next_prime(start))
        if p.bit_length() == bits:
            return p


def smallest_odd_prime_factor(m: int):
    factors = [f for f in sympy.factorint(m) if f != 2]
    return min(factors) if factors else None


def mod_category_oracle(*primes) -> int:
    """Avoidance category from full factorizations of each prime-1."""
    smallest = None
    for p in primes:
        s = smallest_odd_prime_factor(p - 1)
        if s is not None and (smallest is None or s < smallest):
            smallest = s
    if smallest is None or smallest > 17863:
        return 1
    if smallest > 251:
        return 2
    if smallest > 5:
        return 3
    return 4


def roca_modulus_params(prime_bits: int):
    """Primorial covering the detector primes, plus the generator order.

    Independent construction for building fingerprintable primes in tests:
    multiplies consecutive primes until both the 0.45-of-prime-bits target
    and coverage of every prime up to 157 are reached, mirroring what a
    structured generator must provide for the fingerprint to fire.
    """
    target = int(0.45 * prime_bits)
    M = 1
    order = 1
    for s in sympy.primerange(2, 10_000):
        M *= s
        if s > 2:
            order = math.lcm(order, sympy.n_order(65537, s))
        if M.bit_length() >= target and s >= 157:
            break
    return M, order


def make_roca_like_prime(rng: random.Random, prime_bits: int) -> int:
    """A prime of the structured form k*M + (65537^a mod M), via sympy."""
    M, order = roca_modulus_params(prime_bits)
    lo = 1 << (prime_bits - 1)
    hi = 1 << prime_bits
    while True:
        a = rng.randrange(order)
        r = pow(65537, a, M)
        k_lo = -((r - lo) // M)
        k_hi = (hi - 1 - r) // M
        if k_lo > k_hi:
            continue
        candidate = rng.randrange(k_lo, k_hi + 1) * M + r
        if sympy.isprime(candidate):
            return candidate


def batch_gcd_oracle(moduli):
    """Quadratic reference for batch GCD: gcd(n_i, prod of the others).

    Computed literally from the definition with prefix/suffix products; no
    trees involved.
    """
    n = len(moduli)
    prefix = [1] * (n + 1)
    for i, m in enumerate(moduli):
        prefix[i + 1] = prefix[i] * m
    suffix = [1] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] * moduli[i]
    return [(i, math.gcd(moduli[i], prefix[i] * suffix[i + 1])) for i in range(n)]


def shared_factors_oracle(moduli):
    """Pairwise-gcd view: the set of shared prime factors per modulus."""
    out = []
    for i, n in enumerate(moduli):
        shared = set()
        for j, m in enumerate(moduli):
            if i != j:
                g = math.gcd(n, m)
                if g > 1:
                    shared.add(g)
        out.append(shared)
    return out
