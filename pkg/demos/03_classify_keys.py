"""Train the three Bayes-family classifiers and evaluate them.

The full model keeps one joint table per group; the naive variant assumes
feature independence; the cross-feature variant re-joins the correlated
MSB pair before going naive. Batching several keys from the same source
multiplies their likelihoods, which is where the accuracy comes from.
"""

from keyorigin import biasgen, classifier, features, profiles

SOURCES = [
    biasgen.BiasProfile(profile_id="lib-a", msb_policy=biasgen.MsbPolicy.fixed(24)),
    biasgen.BiasProfile(
        profile_id="lib-b", msb_policy=biasgen.MsbPolicy.fixed(24), blum=True
    ),
    biasgen.BiasProfile(
        profile_id="card-c", msb_policy=biasgen.MsbPolicy.fixed(29), avoid_threshold=5
    ),
    biasgen.BiasProfile(
        profile_id="hsm-d", msb_policy=biasgen.MsbPolicy.interval(0.71875, 0.75)
    ),
]

HOLDOUT = 1000
corpus = biasgen.generate_corpus(SOURCES, per_source=4000, bits=64, seed=23, workers=2)
train_vecs, test_vecs = {}, {}
for record in corpus.records:
    index = int(record.key_id.split("/")[1])
    bucket = train_vecs if index < 4000 - HOLDOUT else test_vecs
    bucket.setdefault(record.source_id, []).append(
        features.extract_private(record.key)
    )

source_profiles = [
    profiles.estimate_profile(sid, vecs) for sid, vecs in sorted(train_vecs.items())
]
_, grouping = profiles.cluster_sources(source_profiles, threshold=0.3)
to_group = grouping.source_to_group()
grouped_train = {to_group[s]: v for s, v in train_vecs.items()}
grouped_test = {to_group[s]: v for s, v in test_vecs.items()}
print(f"{len(SOURCES)} sources clustered into {len(grouping.groups)} groups")

print()
print("== model comparison (single held-out keys) ==")
reports = {}
for variant in classifier.VARIANTS:
    model = classifier.train(grouped_train, variant=variant)
    reports[variant] = classifier.evaluate(
        model, grouped_test, batch_sizes=(1, 2, 3, 5, 10, 100), top_ks=(1, 2, 3)
    )
    r = reports[variant]
    print(f"{variant:>12}: precision {r.macro_precision:.3f}  recall {r.macro_recall:.3f}")

print()
print("== full Bayes: accuracy by batch size and top-k ==")
print(reports[classifier.FULL_BAYES].to_text())

print("== classifying one batch of 10 keys from card-c ==")
model = classifier.train(grouped_train, variant=classifier.FULL_BAYES)
batch = grouped_test[to_group["card-c"]][:10]
for group_id, posterior in classifier.classify_batch(model, batch)[:3]:
    members = ", ".join(grouping.groups[group_id])
    print(f"  group {group_id} ({members}): posterior {posterior:.6f}")
