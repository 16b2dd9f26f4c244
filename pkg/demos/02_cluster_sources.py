"""Cluster key sources into distinguishable groups.

Sources whose feature distributions differ by less than the sampling
noise cannot be told apart; agglomerative clustering over the Manhattan
distance merges them, and the dendrogram is printed for a human to judge
the cut. Two of the five sources below share an implementation, so five
sources collapse into four groups.
"""

from keyorigin import biasgen, features, profiles

SOURCES = [
    biasgen.BiasProfile(profile_id="lib-a-v1", msb_policy=biasgen.MsbPolicy.fixed(24)),
    # v2 "changed nothing" in prime selection: same observable behavior
    biasgen.BiasProfile(profile_id="lib-a-v2", msb_policy=biasgen.MsbPolicy.fixed(24)),
    biasgen.BiasProfile(
        profile_id="lib-b", msb_policy=biasgen.MsbPolicy.fixed(24), avoid_threshold=5
    ),
    biasgen.BiasProfile(
        profile_id="card-c", msb_policy=biasgen.MsbPolicy.fixed(29), blum=True
    ),
    biasgen.BiasProfile(
        profile_id="lib-d", msb_policy=biasgen.MsbPolicy.interval(0.6875, 0.78125)
    ),
]

corpus = biasgen.generate_corpus(SOURCES, per_source=3000, bits=64, seed=11, workers=2)
by_source = {}
for record in corpus.records:
    by_source.setdefault(record.source_id, []).append(
        features.extract_private(record.key)
    )
source_profiles = [
    profiles.estimate_profile(sid, vecs) for sid, vecs in sorted(by_source.items())
]

print("== pairwise Manhattan distances ==")
ids = [p.source_id for p in source_profiles]
print(" " * 10 + "".join(f"{i:>10}" for i in ids))
for a in source_profiles:
    row = "".join(
        f"{profiles.manhattan_distance(a, b):>10.3f}" for b in source_profiles
    )
    print(f"{a.source_id:>10}{row}")

threshold = 0.3
dendrogram, grouping = profiles.cluster_sources(source_profiles, threshold)

print()
print(f"== dendrogram (cut at {threshold}) ==")
print(dendrogram.to_newick())
print()
print("== groups ==")
for gid, members in grouping.groups.items():
    print(f"group {gid}: {', '.join(members)}")

merged = profiles.merge_group_profiles(grouping, source_profiles)
print()
print("== per-group pooled sample sizes ==")
for gid, prof in merged.items():
    print(f"group {gid}: {prof.total} keys")
