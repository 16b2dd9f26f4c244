"""Origin attribution for RSA keys.

Cryptographic libraries leave measurable fingerprints in the private keys
they generate: biased top bits of the primes, avoided small factors of
p-1, Blum moduli, prime ordering, or outright structured primes. This
package extracts those features, clusters key sources into statistically
distinguishable groups, trains Bayes-family classifiers over them, and
runs the batch-GCD pipeline that attributes shared-prime keys found in
TLS scans.
"""

from .biasgen import (
    BiasProfile,
    Corpus,
    MsbPolicy,
    generate_corpus,
    generate_keypair,
    generate_prime,
    generate_shared_prime_corpus,
)
from .classifier import (
    ClassificationModel,
    EvaluationReport,
    classify_batch,
    classify_key,
    evaluate,
    train,
)
from .errors import KeyOriginError
from .features import (
    FeatureVector,
    SinglePrimeFeatureVector,
    extract_private,
    extract_single_prime,
    mod_category,
    msb5,
    openssl_fingerprint,
    roca_fingerprint,
)
from .gcdpipe import (
    FactoredKey,
    PrimeBatch,
    attribute_batches,
    batch_gcd,
    form_batches,
    partitioned_batch_gcd,
    resolve_factors,
    split_openssl,
)
from .keycore import (
    KeyPair,
    KeyRecord,
    PublicKey,
    complete_keypair,
    parse_keys,
    serialize_keys,
    validate_keypair,
)
from .profiles import (
    Dendrogram,
    Grouping,
    SourceProfile,
    cluster_sources,
    estimate_profile,
    manhattan_distance,
    merge_group_profiles,
)

__version__ = "0.1.0"
