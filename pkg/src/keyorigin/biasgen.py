"""Synthetic generation of labeled RSA corpora with controllable biases.

Each BiasProfile emulates one catalogued family of implementation quirks:
how the top bits of primes are chosen, whether candidates are drawn fresh
or incremented from a random start, which small factors of p-1 are
avoided, Blum-integer moduli, prime ordering, and the structured primes of
the fingerprinted Infineon generator. Corpora generated from the same
(profiles, counts, bits, seed) are byte-identical, including across
worker-pool runs: every record draws from its own RNG stream derived from
(seed, profile id, record index).
"""

import hashlib
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import gmpy2
import yaml

from .errors import NotInvertible, Unsatisfiable
from .features import ROCA_DETECTOR_PRIMES, ROCA_GENERATOR
from .keycore import KeyPair, KeyRecord, PublicKey, complete_keypair
from .primes import (
    AVOID_THRESHOLDS,
    ODD_PRIMORIALS,
    is_probable_prime,
    passes_prefilter,
    sieve_primes,
)

FIXED_PATTERN = "fixed_pattern"
RANDOM_TOP = "random_top"
REJECTION_INTERVAL = "rejection_interval"

RANDOM_CANDIDATES = "random_candidates"
INCREMENTAL = "incremental_from_random_start"

ORDER_NONE = "none"
ORDER_P_GREATER = "p_greater"
ORDER_P_SMALLER = "p_smaller"

DEFAULT_E = 65537


@dataclass(frozen=True)
class MsbPolicy:
    """How the most significant bits of a prime candidate are chosen."""

    kind: str = RANDOM_TOP
    value: int | None = None  # fixed_pattern: 5-bit value, leading bit set
    lo: float | None = None  # rejection_interval bounds as fractions of 2^bits
    hi: float | None = None

    @classmethod
    def fixed(cls, value: int) -> "MsbPolicy":
        return cls(kind=FIXED_PATTERN, value=value)

    @classmethod
    def random_top(cls) -> "MsbPolicy":
        return cls(kind=RANDOM_TOP)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "MsbPolicy":
        return cls(kind=REJECTION_INTERVAL, lo=lo, hi=hi)

    def window(self, bits: int) -> tuple:
        """Half-open candidate interval enforcing an exact bit length."""
        top = 1 << (bits - 1)
        if self.kind == RANDOM_TOP:
            return top, top << 1
        if self.kind == FIXED_PATTERN:
            if self.value is None or not 16 <= self.value <= 31:
                raise Unsatisfiable(
                    f"fixed MSB pattern {self.value!r} must be a 5-bit value with "
                    "its leading bit set (16..31)"
                )
            lo = self.value << (bits - 5)
            return lo, lo + (1 << (bits - 5))
        if self.kind == REJECTION_INTERVAL:
            if self.lo is None or self.hi is None or not 0 <= self.lo < self.hi <= 1:
                raise Unsatisfiable(f"bad rejection interval ({self.lo}, {self.hi})")
            lo = max(int(self.lo * (top << 1)), top)
            hi = min(int(self.hi * (top << 1)), top << 1)
            if lo >= hi:
                raise Unsatisfiable(
                    f"interval ({self.lo}, {self.hi}) cannot produce {bits}-bit primes"
                )
            return lo, hi
        raise Unsatisfiable(f"unknown msb policy kind {self.kind!r}")


@dataclass(frozen=True)
class BiasProfile:
    """One synthetic key-generation behavior, identified by profile_id."""

    profile_id: str
    msb_policy: MsbPolicy = field(default_factory=MsbPolicy.random_top)
    search: str = RANDOM_CANDIDATES
    avoid_threshold: int = 1
    blum: bool = False
    ordering: str = ORDER_NONE
    roca_structure: bool = False
    e: int = DEFAULT_E
    size_dependent: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.avoid_threshold not in AVOID_THRESHOLDS:
            raise ValueError(
                f"avoid_threshold must be one of {AVOID_THRESHOLDS}, "
                f"got {self.avoid_threshold}"
            )
        if self.search not in (RANDOM_CANDIDATES, INCREMENTAL):
            raise ValueError(f"unknown search mode {self.search!r}")
        if self.ordering not in (ORDER_NONE, ORDER_P_GREATER, ORDER_P_SMALLER):
            raise ValueError(f"unknown ordering {self.ordering!r}")

    def at_bits(self, bits: int) -> "BiasProfile":
        """Effective profile at a key size, with size overrides applied."""
        overrides = self.size_dependent.get(bits) or self.size_dependent.get(str(bits))
        if not overrides:
            return self
        fields = dict(overrides)
        if "msb_policy" in fields and isinstance(fields["msb_policy"], dict):
            fields["msb_policy"] = MsbPolicy(**fields["msb_policy"])
        return replace(self, size_dependent={}, **fields)


def derive_rng(seed: int, *parts) -> random.Random:
    """Independent deterministic RNG stream for one unit of work."""
    label = "|".join(str(p) for p in (seed, *parts))
    digest = hashlib.sha256(label.encode()).digest()
    return random.Random(int.from_bytes(digest, "big"))


# Staged avoidance screens, cheapest first; each entry is exact for its
# threshold because the primorial contains every odd prime up to it.
_AVOID_STAGES = {
    5: (ODD_PRIMORIALS[5],),
    251: (ODD_PRIMORIALS[5], ODD_PRIMORIALS[251]),
    17863: (ODD_PRIMORIALS[5], ODD_PRIMORIALS[251], ODD_PRIMORIALS[17863]),
}

_gcd = gmpy2.gcd


def _avoid_clean(candidate_minus_1: int, stages) -> bool:
    for P in stages:
        if _gcd(candidate_minus_1, P) != 1:
            return False
    return True


def _max_tries(bits: int) -> int:
    return 100_000 + 400 * bits


# --- structured (fingerprintable) primes -----------------------------------

_roca_param_cache: dict = {}


def _element_order(g: int, s: int) -> int:
    """Multiplicative order of g modulo prime s (s-1 factored by trial division)."""
    order = s - 1
    m = order
    f = 2
    factors = []
    while f * f <= m:
        if m % f == 0:
            factors.append(f)
            while m % f == 0:
                m //= f
        f += 1
    if m > 1:
        factors.append(m)
    for f in factors:
        while order % f == 0 and pow(g, order // f, s) == 1:
            order //= f
    return order


def roca_parameters(prime_bits: int) -> tuple:
    """(M', order of 65537 mod M') used for structured primes of this size.

    M' is the primorial of the first m primes, with m chosen so that M'
    spans roughly 0.45 of the prime's bits but never less than needed to
    contain every fingerprint detector prime.
    """
    cached = _roca_param_cache.get(prime_bits)
    if cached is not None:
        return cached
    target_bits = int(0.45 * prime_bits)
    primorial = 1
    order = 1
    covered = 0
    for s in sieve_primes(10_000):
        primorial *= s
        if s > 2:
            order = math.lcm(order, _element_order(ROCA_GENERATOR, s))
        covered = s
        if primorial.bit_length() >= target_bits and covered >= max(ROCA_DETECTOR_PRIMES):
            break
    if prime_bits < primorial.bit_length() + 16:
        raise Unsatisfiable(
            f"structured primes need at least {primorial.bit_length() + 16} bits, "
            f"got {prime_bits}"
        )
    params = (gmpy2.mpz(primorial), order)
    _roca_param_cache[prime_bits] = params
    return params


def _generate_roca_prime(policy: MsbPolicy, bits: int, rng: random.Random) -> int:
    M, order = roca_parameters(bits)
    lo, hi = policy.window(bits)
    for _ in range(_max_tries(bits)):
        a = rng.randrange(order)
        r = gmpy2.powmod(ROCA_GENERATOR, a, M)
        k_lo = -((r - lo) // M)  # ceil((lo - r) / M)
        k_hi = (hi - 1 - r) // M
        if k_lo > k_hi:
            continue
        candidate = rng.randrange(k_lo, k_hi + 1) * M + r
        if is_probable_prime(candidate):
            return int(candidate)
    raise Unsatisfiable(f"no structured {bits}-bit prime found within the retry budget")


# --- plain biased primes ----------------------------------------------------


def generate_prime(profile: BiasProfile, bits: int, rng: random.Random) -> int:
    """One prime honoring the profile's policies, with exact bit length."""
    if bits < 16:
        raise ValueError(f"prime bit length must be >= 16, got {bits}")
    if profile.roca_structure:
        # Structure dominates: search, avoidance and blum are not applied.
        return _generate_roca_prime(profile.msb_policy, bits, rng)
    lo, hi = profile.msb_policy.window(bits)
    stages = _AVOID_STAGES.get(profile.avoid_threshold, ())
    blum = profile.blum
    incremental = profile.search == INCREMENTAL
    step = 4 if blum else 2
    candidate = None
    for _ in range(_max_tries(bits)):
        if candidate is None:
            candidate = lo + rng.randrange(hi - lo)
            candidate |= 3 if blum else 1
            if candidate >= hi:
                candidate = None
                continue
        if (not stages or _avoid_clean(candidate - 1, stages)) and passes_prefilter(
            candidate
        ):
            if is_probable_prime(candidate):
                return candidate
        if incremental:
            candidate += step
            if candidate >= hi:
                candidate = None
        else:
            candidate = None
    raise Unsatisfiable(
        f"profile {profile.profile_id!r} found no {bits}-bit prime within the "
        "retry budget (conflicting policy constraints?)"
    )


def generate_keypair(
    profile: BiasProfile, bits: int, rng: random.Random, e: int | None = None
) -> KeyPair:
    """A full key pair with exact modulus bit length.

    Candidate prime pairs whose product falls a bit short are rejected and
    redrawn, so MSB windows that can never reach an exact-length modulus
    (for example fixed patterns with both tops below sqrt(2)) exhaust the
    retry budget and raise Unsatisfiable.
    """
    if bits % 2 or bits < 32:
        raise ValueError(f"modulus bit length must be even and >= 32, got {bits}")
    eff = profile.at_bits(bits)
    e = eff.e if e is None else e
    for _ in range(10_000):
        p = generate_prime(eff, bits // 2, rng)
        q = generate_prime(eff, bits // 2, rng)
        if p == q or (p * q).bit_length() != bits:
            continue
        try:
            pair = complete_keypair(p, q, e)
        except NotInvertible:
            continue
        if eff.ordering == ORDER_P_GREATER and p < q:
            p, q = q, p
        elif eff.ordering == ORDER_P_SMALLER and p > q:
            p, q = q, p
        return KeyPair(p=p, q=q, n=pair.n, e=e, d=pair.d, bits=bits)
    raise Unsatisfiable(
        f"profile {profile.profile_id!r} cannot reach an exact {bits}-bit modulus"
    )


@dataclass(frozen=True)
class Corpus:
    """Labeled records generated from a fixed (profiles, counts, bits, seed)."""

    records: tuple
    bits: int
    seed: int


def _corpus_record(profile: BiasProfile, bits: int, seed: int, index: int) -> KeyRecord:
    rng = derive_rng(seed, profile.profile_id, index)
    pair = generate_keypair(profile, bits, rng)
    return KeyRecord(
        key_id=f"{profile.profile_id}/{index}", source_id=profile.profile_id, key=pair
    )


def _corpus_chunk(args) -> list:
    profile, bits, seed, start, stop = args
    return [_corpus_record(profile, bits, seed, i) for i in range(start, stop)]


def generate_corpus(
    profiles, per_source: int, bits: int, seed: int, workers: int = 1
) -> Corpus:
    """per_source keys for every profile; deterministic under seed."""
    profiles = list(profiles)
    if per_source < 1:
        raise ValueError(f"per_source must be >= 1, got {per_source}")
    ids = [p.profile_id for p in profiles]
    if len(set(ids)) != len(ids):
        raise ValueError("profile ids must be distinct")
    jobs = []
    chunk = max(64, per_source // max(1, 4 * workers))
    for profile in profiles:
        for start in range(0, per_source, chunk):
            jobs.append((profile, bits, seed, start, min(start + chunk, per_source)))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_corpus_chunk, jobs))
    else:
        chunks = [_corpus_chunk(job) for job in jobs]
    records = [rec for ch in chunks for rec in ch]
    return Corpus(records=tuple(records), bits=bits, seed=seed)


def generate_shared_prime_corpus(
    profile: BiasProfile,
    n_batches: int,
    batch_size: int,
    n_clean: int,
    bits: int,
    seed: int,
    batch_sizes=None,
) -> tuple:
    """Public moduli with planted shared primes, plus clean coprime moduli.

    Each batch holds `batch_size` moduli (or per-batch sizes from
    `batch_sizes`) that share one planted prime; second primes are drawn
    fresh per key, as if the generator's PRNG had been properly reseeded
    after the first prime. Returns (corpus, ground_truth) where
    ground_truth maps batch index -> planted prime. All primes across the
    corpus are distinct, so clean moduli are pairwise coprime and no
    unplanned sharing occurs.
    """
    if batch_sizes is None:
        batch_sizes = [batch_size] * n_batches
    if any(s < 2 for s in batch_sizes):
        raise ValueError("batch_size must be >= 2")
    eff = profile.at_bits(bits)
    prime_bits = bits // 2
    used = set()

    def fresh_prime(rng):
        while True:
            p = generate_prime(eff, prime_bits, rng)
            if p not in used:
                used.add(p)
                return p

    records = []
    ground_truth = {}
    for b, size in enumerate(batch_sizes):
        planted = fresh_prime(derive_rng(seed, eff.profile_id, "planted", b))
        ground_truth[b] = planted
        for j in range(size):
            rng = derive_rng(seed, eff.profile_id, "member", b, j)
            while True:
                second = fresh_prime(rng)
                n = planted * second
                if n.bit_length() == bits:
                    break
            records.append(
                KeyRecord(
                    key_id=f"batch{b}/key{j}",
                    source_id=eff.profile_id,
                    key=PublicKey(n=n, e=eff.e, bits=bits),
                )
            )
    for i in range(n_clean):
        rng = derive_rng(seed, eff.profile_id, "clean", i)
        while True:
            p = fresh_prime(rng)
            q = fresh_prime(rng)
            n = p * q
            if n.bit_length() == bits:
                break
        records.append(
            KeyRecord(
                key_id=f"clean/{i}",
                source_id=eff.profile_id,
                key=PublicKey(n=n, e=eff.e, bits=bits),
            )
        )
    return Corpus(records=tuple(records), bits=bits, seed=seed), ground_truth


# --- profile config files ---------------------------------------------------


def profile_to_dict(profile: BiasProfile) -> dict:
    obj = asdict(profile)
    obj["msb_policy"] = {
        k: v for k, v in asdict(profile.msb_policy).items() if v is not None
    }
    if not obj["size_dependent"]:
        del obj["size_dependent"]
    return obj


def profile_from_dict(obj: dict) -> BiasProfile:
    fields = dict(obj)
    msb = fields.get("msb_policy")
    if isinstance(msb, dict):
        fields["msb_policy"] = MsbPolicy(**msb)
    return BiasProfile(**fields)


def load_profiles(text: str) -> list:
    """Parse a profile config: one YAML document per profile."""
    docs = [d for d in yaml.safe_load_all(text) if d]
    return [profile_from_dict(d) for d in docs]


def dump_profiles(profiles) -> str:
    return yaml.safe_dump_all(
        [profile_to_dict(p) for p in profiles], sort_keys=True, explicit_start=True
    )
