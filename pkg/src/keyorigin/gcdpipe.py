"""Batch-GCD factorization of moduli sharing primes, and batch attribution.

The quasilinear trick: multiply all moduli into a product tree, push the
root back down a remainder tree mod n_i^2, and read off
gcd((root mod n_i^2) / n_i, n_i) per modulus. Keys recovered this way are
grouped into shared-prime batches, OpenSSL-fingerprinted batches are set
aside, and the rest go to a single-prime classifier.
"""

import logging
from collections import Counter
from dataclasses import dataclass, replace

import gmpy2

from ._ioutil import int_to_hex
from .classifier import classify_batch
from .errors import DuplicateModulus, KeyOriginError, ModeMismatch
from .features import extract_single_prime, openssl_fingerprint
from .primes import is_probable_prime

logger = logging.getLogger(__name__)

# Factors at or below this are damage (bit flips etc.), not RSA primes.
SMALL_FACTOR_CUTOFF = 1 << 16

DEFAULT_MIN_BATCH = 10

# Above this many moduli a single product tree is asked to hold more than
# memory-failure-prone sizes; orchestration switches to partitioned runs.
AUTO_PARTITION_THRESHOLD = 1 << 21

ATTRIBUTION_NOTE = (
    "Probabilistic attribution: assumes each shared-prime batch was generated "
    "by sources from a single classification group. Rankings are model "
    "posteriors, not ground truth."
)


def dedup_moduli(moduli) -> list:
    """Unique moduli, first occurrence order preserved."""
    seen = set()
    out = []
    for n in moduli:
        if n not in seen:
            seen.add(n)
            out.append(n)
    return out


@dataclass(frozen=True)
class ProductTree:
    levels: tuple  # levels[0] = leaves, levels[-1] = (root,)

    @classmethod
    def build(cls, moduli) -> "ProductTree":
        levels = [tuple(gmpy2.mpz(n) for n in moduli)]
        while len(levels[-1]) > 1:
            cur = levels[-1]
            nxt = [cur[i] * cur[i + 1] for i in range(0, len(cur) - 1, 2)]
            if len(cur) % 2:
                nxt.append(cur[-1])
            levels.append(tuple(nxt))
        return cls(levels=tuple(levels))

    @property
    def root(self):
        return self.levels[-1][0]

    def check_bit_length(self) -> None:
        """Loud corruption check: root size must match the leaf sizes."""
        leaf_sum = sum(n.bit_length() for n in self.levels[0])
        root_bits = self.root.bit_length()
        n_leaves = len(self.levels[0])
        if not (leaf_sum - n_leaves <= root_bits <= leaf_sum + n_leaves):
            raise KeyOriginError(
                f"product tree root has {root_bits} bits, expected "
                f"{leaf_sum} +- {n_leaves}; arithmetic corruption?"
            )


def batch_gcd(moduli) -> list:
    """For each modulus, gcd with the product of all the others.

    Returns [(index, g)] in input order; g == 1 means no shared factor.
    Duplicate moduli are rejected: they share both primes and would drown
    the whole batch in their common value.
    """
    moduli = list(moduli)
    if any(n <= 1 for n in moduli):
        raise ValueError("moduli must be > 1")
    if len(set(moduli)) != len(moduli):
        raise DuplicateModulus("identical moduli in input; dedup first")
    if not moduli:
        return []
    if len(moduli) == 1:
        return [(0, 1)]
    tree = ProductTree.build(moduli)
    tree.check_bit_length()
    remainders = [tree.root]
    for level in reversed(tree.levels[:-1]):
        parents = remainders
        remainders = [
            parents[i // 2] % (node * node) for i, node in enumerate(level)
        ]
    out = []
    for i, (n, z) in enumerate(zip(tree.levels[0], remainders)):
        g = gmpy2.gcd(z // n, n)
        out.append((i, int(g)))
    return out


@dataclass(frozen=True)
class FactoredKey:
    """A modulus split by a shared factor; q is the cofactor n // p."""

    n: int
    p: int
    q: int
    valid: bool
    shared_primes: tuple

    def to_json(self) -> dict:
        return {
            "n": int_to_hex(self.n),
            "p": int_to_hex(self.p),
            "q": int_to_hex(self.q),
            "valid": self.valid,
            "shared": [int_to_hex(s) for s in self.shared_primes],
        }

    @classmethod
    def from_json(cls, obj) -> "FactoredKey":
        return cls(
            n=int(obj["n"], 16),
            p=int(obj["p"], 16),
            q=int(obj["q"], 16),
            valid=bool(obj["valid"]),
            shared_primes=tuple(int(s, 16) for s in obj["shared"]),
        )


def _build_factored(n: int, shared) -> FactoredKey:
    shared = tuple(sorted(shared))
    p = shared[0]
    q = n // p
    valid = min(p, q) > SMALL_FACTOR_CUTOFF and q > 1
    return FactoredKey(n=n, p=p, q=q, valid=valid, shared_primes=shared)


def resolve_factors(moduli, gcds) -> list:
    """Turn batch_gcd output into factored keys.

    A composite g means the modulus shares primes with several partners;
    pairwise gcds against the other flagged moduli split it. Factors at or
    below 2^16 mark the key invalid (damaged input) rather than failing
    the run.
    """
    moduli = list(moduli)
    flagged = [(i, g) for i, g in gcds if g != 1]
    flagged_idx = [i for i, _ in flagged]
    out = []
    for i, g in flagged:
        n = moduli[i]
        if g != n and is_probable_prime(g):
            parts = {g}
        else:
            parts = set()
            for j in flagged_idx:
                if j == i:
                    continue
                d = int(gmpy2.gcd(n, moduli[j]))
                if 1 < d < n:
                    parts.add(d)
            if not parts:
                parts = {g}
        out.append(_build_factored(n, parts))
    return out


def partitioned_batch_gcd(moduli, partition_size: int, overlap_fraction: float = 0.5) -> list:
    """Batch GCD over consecutive partitions plus boundary-straddling overlaps.

    Trades completeness for memory: shared primes whose keys sit in
    different partitions and outside every overlap window are missed.
    The input stream is deduplicated up front (scan data repeats
    certificates); results merge by modulus across partitions.
    """
    if partition_size < 2:
        raise ValueError(f"partition_size must be >= 2, got {partition_size}")
    if not 0 <= overlap_fraction <= 1:
        raise ValueError("overlap_fraction must be in [0, 1]")
    moduli = dedup_moduli(moduli)
    parts = [moduli[i : i + partition_size] for i in range(0, len(moduli), partition_size)]
    window = int(round(partition_size * overlap_fraction))
    runs = list(parts)
    if window:
        for b in range(1, len(parts)):
            boundary = b * partition_size
            lo = max(0, boundary - window)
            hi = min(len(moduli), boundary + window)
            runs.append(moduli[lo:hi])
    merged: dict = {}
    for run in runs:
        if len(run) < 2:
            continue
        for fk in resolve_factors(run, batch_gcd(run)):
            prev = merged.get(fk.n)
            if prev is None:
                merged[fk.n] = fk
            elif set(fk.shared_primes) - set(prev.shared_primes):
                merged[fk.n] = _build_factored(
                    fk.n, set(prev.shared_primes) | set(fk.shared_primes)
                )
    return [merged[n] for n in moduli if n in merged]


@dataclass(frozen=True)
class PrimeBatch:
    """Factored keys sharing one prime; k members carry k+1 unique primes."""

    shared_prime: int
    members: tuple
    unique_primes: tuple
    openssl: bool | None = None


def form_batches(factored, min_size: int = DEFAULT_MIN_BATCH) -> list:
    """Group valid factored keys by shared prime; drop small batches.

    A key whose both primes are shared joins the batch of each one.
    """
    by_prime: dict = {}
    for fk in factored:
        if not fk.valid:
            continue
        for prime in fk.shared_primes:
            by_prime.setdefault(prime, []).append(fk)
    batches = []
    for prime, members in by_prime.items():
        if len(members) < min_size:
            continue
        unique = {prime}
        unique.update(fk.n // prime for fk in members)
        batches.append(
            PrimeBatch(
                shared_prime=prime,
                members=tuple(members),
                unique_primes=tuple(sorted(unique)),
            )
        )
    batches.sort(key=lambda b: (-len(b.members), b.shared_prime))
    return batches


def split_openssl(batches) -> tuple:
    """Separate batches whose every unique prime carries the OpenSSL mark."""
    openssl_side = []
    other_side = []
    for batch in batches:
        tagged = all(openssl_fingerprint(p) for p in batch.unique_primes)
        batch = replace(batch, openssl=tagged)
        (openssl_side if tagged else other_side).append(batch)
    return openssl_side, other_side


@dataclass(frozen=True)
class AttributionRow:
    batch_index: int
    shared_prime: int
    n_members: int
    n_primes: int
    ranking: tuple  # top (group_id, posterior) pairs

    @property
    def top_group(self):
        return self.ranking[0][0]


@dataclass(frozen=True)
class AttributionReport:
    rows: tuple
    group_counts: dict  # top group -> number of batches
    note: str = ATTRIBUTION_NOTE

    def to_json(self) -> dict:
        return {
            "note": self.note,
            "rows": [
                {
                    "batch": r.batch_index,
                    "shared_prime": int_to_hex(r.shared_prime),
                    "members": r.n_members,
                    "primes": r.n_primes,
                    "ranking": [[g, p] for g, p in r.ranking],
                }
                for r in self.rows
            ],
            "group_counts": {str(g): c for g, c in sorted(self.group_counts.items())},
        }

    def to_text(self) -> str:
        lines = ["Group(s)                       # batches"]
        for g, c in sorted(self.group_counts.items(), key=lambda kv: -kv[1]):
            lines.append(f"{g!s:<30} {c}")
        lines.append("")
        lines.append(self.note)
        return "\n".join(lines) + "\n"


def attribute_batches(model, batches, top: int = 3) -> AttributionReport:
    """Classify each batch's unique primes with a single-prime model."""
    if model.feature_mode != "single_prime":
        raise ModeMismatch("attribution needs a single-prime model")
    rows = []
    counts: Counter = Counter()
    for index, batch in enumerate(batches):
        vectors = [extract_single_prime(p) for p in batch.unique_primes]
        ranking = classify_batch(model, vectors)[:top]
        row = AttributionRow(
            batch_index=index,
            shared_prime=batch.shared_prime,
            n_members=len(batch.members),
            n_primes=len(batch.unique_primes),
            ranking=tuple(ranking),
        )
        rows.append(row)
        counts[row.top_group] += 1
    return AttributionReport(rows=tuple(rows), group_counts=dict(counts))
