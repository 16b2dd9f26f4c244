"""Biased categorical features of RSA private keys and single primes.

Five features are extracted from a private key: the top five bits of each
prime (p5, q5), whether the modulus is a Blum integer, the small-factor
avoidance category of p-1 and q-1 (mod), and the structural fingerprint of
the flawed Infineon generator (roca). A reduced four-feature variant works
on one prime alone, for keys recovered by batch GCD where the shared prime
would otherwise be double-counted.
"""

from dataclasses import dataclass
from functools import reduce

from .errors import TooShort
from .primes import AVOID_THRESHOLDS, has_odd_factor_up_to

# The fingerprint generator of the detectable Infineon structure.
ROCA_GENERATOR = 65537

# The 17 smallest primes s where 65537 generates a proper subgroup of
# (Z/sZ)*; membership of x mod s in that subgroup for every s is the
# fingerprint. Joint false-positive probability on uniform residues is
# about 4.2e-9.
ROCA_DETECTOR_PRIMES = (
    11, 13, 17, 19, 37, 53, 61, 71, 73, 79, 97, 103, 107, 109, 127, 151, 157,
)


def _subgroup(generator: int, s: int) -> frozenset:
    members = {1}
    x = generator % s
    while x != 1:
        members.add(x)
        x = x * (generator % s) % s
    return frozenset(members)


ROCA_SUBGROUPS = {s: _subgroup(ROCA_GENERATOR, s) for s in ROCA_DETECTOR_PRIMES}


def msb5(prime: int) -> int:
    """Integer value of the five most significant bits.

    In [16, 31] whenever the prime has its declared exact bit length
    (leading bit set).
    """
    nbits = prime.bit_length()
    if nbits < 5:
        raise TooShort(f"need at least 5 bits, got {nbits}")
    return prime >> (nbits - 5)


def blum_flag(p: int, q: int) -> bool:
    """True iff p*q is a Blum integer (both primes are 3 mod 4)."""
    return p % 4 == 3 and q % 4 == 3


def mod_category_single(prime: int) -> int:
    """Small-factor avoidance category of prime-1, from one prime alone.

    1: no odd prime factor <= 17863 divides prime-1
    2: none <= 251
    3: none <= 5
    4: everything else (3 or 5 divides prime-1)
    """
    m = prime - 1
    if has_odd_factor_up_to(m, 5):
        return 4
    if has_odd_factor_up_to(m, 251):
        return 3
    if has_odd_factor_up_to(m, 17863):
        return 2
    return 1


def mod_category(p: int, q: int) -> int:
    """Joint avoidance category of a key; the weaker prime decides."""
    return max(mod_category_single(p), mod_category_single(q))


def roca_fingerprint(x: int) -> bool:
    """True iff x mod s lies in the 65537-subgroup for every detector prime s.

    Holds for all primes of the form k*M' + (65537^a mod M') with the
    detector primes dividing M', and for products of such primes
    (subgroups are closed under multiplication).
    """
    for s, members in ROCA_SUBGROUPS.items():
        if x % s not in members:
            return False
    return True


def openssl_fingerprint(prime: int) -> bool:
    """Single-prime mark of aggressive small-factor avoidance in prime-1.

    True iff prime-1 has no odd prime factor up to 17863 (single-prime
    category 1), characteristic of OpenSSL's prime generation.
    """
    return mod_category_single(prime) == 1


@dataclass(frozen=True)
class FeatureVector:
    """Joint categorical features of one private key."""

    msb_p: int
    msb_q: int
    blum: bool
    mod_cat: int
    roca: bool

    def values(self) -> tuple:
        """Zero-based coordinates in the private-key feature space."""
        return (
            self.msb_p - 16,
            self.msb_q - 16,
            int(self.blum),
            self.mod_cat - 1,
            int(self.roca),
        )

    @classmethod
    def from_values(cls, values) -> "FeatureVector":
        m_p, m_q, blum, mod_cat, roca = values
        return cls(m_p + 16, m_q + 16, bool(blum), mod_cat + 1, bool(roca))

    def to_json(self) -> dict:
        return {
            "p5": self.msb_p,
            "q5": self.msb_q,
            "blum": self.blum,
            "mod": self.mod_cat,
            "roca": self.roca,
        }

    @classmethod
    def from_json(cls, obj) -> "FeatureVector":
        return cls(obj["p5"], obj["q5"], bool(obj["blum"]), obj["mod"], bool(obj["roca"]))


@dataclass(frozen=True)
class SinglePrimeFeatureVector:
    """Features computable from one prime of a key."""

    msb: int
    second_lsb: int
    mod_cat: int
    roca: bool

    def values(self) -> tuple:
        return (self.msb - 16, self.second_lsb, self.mod_cat - 1, int(self.roca))

    @classmethod
    def from_values(cls, values) -> "SinglePrimeFeatureVector":
        m, lsb2, mod_cat, roca = values
        return cls(m + 16, lsb2, mod_cat + 1, bool(roca))

    def to_json(self) -> dict:
        return {
            "p5": self.msb,
            "lsb2": self.second_lsb,
            "mod": self.mod_cat,
            "roca": self.roca,
        }

    @classmethod
    def from_json(cls, obj) -> "SinglePrimeFeatureVector":
        return cls(obj["p5"], obj["lsb2"], obj["mod"], bool(obj["roca"]))


def extract_private(key) -> FeatureVector:
    """Feature vector of a private key (needs p and q).

    Primes are taken in stored order: whether a library sorts its primes
    is itself a signal, so no canonical reordering happens here.
    """
    p, q = key.p, key.q
    n = key.n if key.n is not None else p * q
    return FeatureVector(
        msb_p=msb5(p),
        msb_q=msb5(q),
        blum=blum_flag(p, q),
        mod_cat=mod_category(p, q),
        roca=roca_fingerprint(n),
    )


def extract_single_prime(prime: int) -> SinglePrimeFeatureVector:
    """Feature vector of one prime (for shared-prime batches)."""
    return SinglePrimeFeatureVector(
        msb=msb5(prime),
        second_lsb=(prime >> 1) & 1,
        mod_cat=mod_category_single(prime),
        roca=roca_fingerprint(prime),
    )


@dataclass(frozen=True)
class FeatureSpace:
    """A finite product of categorical axes, indexed in mixed radix."""

    name: str
    fields: tuple
    sizes: tuple

    @property
    def size(self) -> int:
        return reduce(lambda a, b: a * b, self.sizes, 1)

    def encode(self, values) -> int:
        idx = 0
        for v, size in zip(values, self.sizes, strict=True):
            if not 0 <= v < size:
                raise ValueError(f"value {v} out of range for axis of size {size}")
            idx = idx * size + v
        return idx

    def decode(self, idx: int) -> tuple:
        out = []
        for size in reversed(self.sizes):
            out.append(idx % size)
            idx //= size
        return tuple(reversed(out))


PRIVATE_KEY_SPACE = FeatureSpace(
    name="private_key",
    fields=("msb_p", "msb_q", "blum", "mod", "roca"),
    sizes=(16, 16, 2, 4, 2),
)

SINGLE_PRIME_SPACE = FeatureSpace(
    name="single_prime",
    fields=("msb", "second_lsb", "mod", "roca"),
    sizes=(16, 2, 4, 2),
)

_SPACES = {s.name: s for s in (PRIVATE_KEY_SPACE, SINGLE_PRIME_SPACE)}


def space_for_mode(mode: str) -> FeatureSpace:
    try:
        return _SPACES[mode]
    except KeyError:
        raise ValueError(f"unknown feature mode {mode!r}") from None


def vector_values(vector) -> tuple:
    """Zero-based coordinates of a vector (dataclass or raw tuple)."""
    if isinstance(vector, (FeatureVector, SinglePrimeFeatureVector)):
        return vector.values()
    return tuple(vector)


def to_cell(space: FeatureSpace, vector) -> int:
    return space.encode(vector_values(vector))


def vector_row_to_json(key_id: str, source_id: str, vector) -> dict:
    """One JSONL line of the vector stream: routing fields plus the vector."""
    obj = {"id": key_id, "source": source_id}
    obj.update(vector.to_json())
    return obj


def vector_row_from_json(obj) -> tuple:
    """Inverse of vector_row_to_json; detects the feature mode per row."""
    cls = FeatureVector if "q5" in obj else SinglePrimeFeatureVector
    return obj.get("id", ""), obj.get("source", ""), cls.from_json(obj)


__all__ = [
    "AVOID_THRESHOLDS",
    "FeatureSpace",
    "FeatureVector",
    "PRIVATE_KEY_SPACE",
    "ROCA_DETECTOR_PRIMES",
    "ROCA_GENERATOR",
    "ROCA_SUBGROUPS",
    "SINGLE_PRIME_SPACE",
    "SinglePrimeFeatureVector",
    "blum_flag",
    "extract_private",
    "extract_single_prime",
    "mod_category",
    "mod_category_single",
    "msb5",
    "openssl_fingerprint",
    "roca_fingerprint",
    "space_for_mode",
    "to_cell",
    "vector_values",
]
