"""Generate synthetic RSA corpora with controlled generation biases.

Each BiasProfile mimics one family of library quirks: fixed top bits of
the primes, avoided small factors of p-1, Blum moduli, prime ordering, or
the structured primes of the fingerprintable Infineon generator. Corpora
are fully reproducible from (profiles, counts, bits, seed).
"""

import random

from keyorigin import biasgen, features, keycore

openssl_like = biasgen.BiasProfile(
    profile_id="openssl-like",
    msb_policy=biasgen.MsbPolicy.interval(0.75, 1.0),
    avoid_threshold=17863,
)
smartcard_like = biasgen.BiasProfile(
    profile_id="smartcard-like",
    msb_policy=biasgen.MsbPolicy.fixed(0b11001),
    blum=True,
    ordering=biasgen.ORDER_P_GREATER,
    search=biasgen.INCREMENTAL,
)
infineon_like = biasgen.BiasProfile(profile_id="infineon-like", roca_structure=True)

print("== single keys ==")
rng = random.Random(1)
for profile in (openssl_like, smartcard_like):
    key = biasgen.generate_keypair(profile, bits=256, rng=rng)
    vec = features.extract_private(key)
    print(f"{profile.profile_id:>16}: p5={vec.msb_p} q5={vec.msb_q} "
          f"blum={vec.blum} mod={vec.mod_cat} roca={vec.roca}")
    assert keycore.validate_keypair(key).ok

key = biasgen.generate_keypair(infineon_like, bits=512, rng=rng)
print(f"{'infineon-like':>16}: roca fingerprint on modulus -> "
      f"{features.roca_fingerprint(key.n)}")

print()
print("== a reproducible corpus ==")
corpus = biasgen.generate_corpus(
    [openssl_like, smartcard_like], per_source=50, bits=128, seed=7
)
again = biasgen.generate_corpus(
    [openssl_like, smartcard_like], per_source=50, bits=128, seed=7
)
blob = keycore.serialize_keys(corpus.records, "jsonl")
print(f"{len(corpus.records)} records, {len(blob)} JSONL bytes")
print("same seed twice is byte-identical:",
      blob == keycore.serialize_keys(again.records, "jsonl"))

print()
print("== profile config files (one YAML document per profile) ==")
print(biasgen.dump_profiles([openssl_like, infineon_like]))
