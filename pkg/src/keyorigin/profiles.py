"""Per-source feature distributions, distances, and source clustering.

Sources whose keys are distributed identically cannot be told apart, so
they are merged into groups by agglomerative clustering (average linkage
over Manhattan distance) and the dendrogram is exported for a human to
confirm or re-cut the threshold.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, MissingProfile
from .features import FeatureSpace, space_for_mode, to_cell

DEFAULT_THRESHOLD = 0.085


@dataclass(frozen=True)
class SourceProfile:
    """Empirical distribution of one source over a feature space."""

    source_id: str
    space: FeatureSpace
    counts: dict
    total: int

    def distribution(self) -> np.ndarray:
        dense = np.zeros(self.space.size)
        for cell, count in self.counts.items():
            dense[cell] = count
        return dense / self.total

    def to_json(self) -> dict:
        return {
            "source_id": self.source_id,
            "space": self.space.name,
            "total": self.total,
            "counts": {str(cell): c for cell, c in sorted(self.counts.items())},
        }

    @classmethod
    def from_json(cls, obj) -> "SourceProfile":
        return cls(
            source_id=obj["source_id"],
            space=space_for_mode(obj["space"]),
            counts={int(cell): c for cell, c in obj["counts"].items()},
            total=obj["total"],
        )


def estimate_profile(source_id: str, vectors, space: FeatureSpace | None = None) -> SourceProfile:
    """Tally feature vectors into a SourceProfile."""
    counts: dict = {}
    total = 0
    for v in vectors:
        if space is None:
            space = _infer_space(v)
        cell = to_cell(space, v)
        counts[cell] = counts.get(cell, 0) + 1
        total += 1
    if total == 0:
        raise EmptyInput(f"no vectors for source {source_id!r}")
    return SourceProfile(source_id=source_id, space=space, counts=counts, total=total)


def _infer_space(vector) -> FeatureSpace:
    from .features import FeatureVector, SinglePrimeFeatureVector

    if isinstance(vector, FeatureVector):
        return space_for_mode("private_key")
    if isinstance(vector, SinglePrimeFeatureVector):
        return space_for_mode("single_prime")
    raise ValueError("cannot infer feature space from a raw tuple; pass space=")


def manhattan_distance(a: SourceProfile, b: SourceProfile) -> float:
    """L1 distance between the two relative-frequency distributions, in [0, 2]."""
    if a.space != b.space:
        raise ValueError(f"profiles live in different spaces: {a.space.name} vs {b.space.name}")
    dist = 0.0
    for cell in a.counts.keys() | b.counts.keys():
        dist += abs(a.counts.get(cell, 0) / a.total - b.counts.get(cell, 0) / b.total)
    return min(dist, 2.0)  # rounding can nudge the sum past the true bound


@dataclass(frozen=True)
class DendrogramNode:
    members: tuple  # sorted source ids in this subtree
    distance: float = 0.0  # merge distance; 0.0 at leaves
    children: tuple = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class Dendrogram:
    root: DendrogramNode

    def merge_distances(self) -> list:
        """All internal merge distances, leaves-to-root order."""
        out = []

        def walk(node):
            for child in node.children:
                walk(child)
            if not node.is_leaf:
                out.append(node.distance)

        walk(self.root)
        return sorted(out)

    def to_json(self) -> dict:
        def render(node):
            if node.is_leaf:
                return {"source_id": node.members[0]}
            return {
                "distance": node.distance,
                "children": [render(c) for c in node.children],
            }

        return render(self.root)

    def to_newick(self) -> str:
        """Ultrametric Newick text; branch length = parent height - own height."""

        def render(node, parent_height):
            branch = parent_height - node.distance
            if node.is_leaf:
                return f"{node.members[0]}:{branch:.6g}"
            inner = ",".join(render(c, node.distance) for c in node.children)
            return f"({inner}):{branch:.6g}"

        root = self.root
        if root.is_leaf:
            return f"{root.members[0]};"
        inner = ",".join(render(c, root.distance) for c in root.children)
        return f"({inner});"


@dataclass(frozen=True)
class Grouping:
    """A partition of sources obtained by cutting the dendrogram."""

    threshold: float
    groups: dict  # group_id -> tuple of source ids

    def group_of(self, source_id: str) -> int:
        for gid, members in self.groups.items():
            if source_id in members:
                return gid
        raise KeyError(source_id)

    def source_to_group(self) -> dict:
        return {s: gid for gid, members in self.groups.items() for s in members}

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "groups": {str(gid): list(members) for gid, members in self.groups.items()},
        }

    @classmethod
    def from_json(cls, obj) -> "Grouping":
        return cls(
            threshold=obj["threshold"],
            groups={int(g): tuple(m) for g, m in obj["groups"].items()},
        )


def cluster_sources(profiles, threshold: float) -> tuple:
    """Agglomerate sources bottom-up; returns (Dendrogram, Grouping).

    Average linkage over Manhattan distance; ties in merge order are
    broken by the lexicographically smallest member ids, so results are
    reproducible. The grouping is the dendrogram cut at `threshold`
    (merges at distance <= threshold are applied).
    """
    profiles = sorted(profiles, key=lambda p: p.source_id)
    if not profiles:
        raise EmptyInput("no profiles to cluster")
    ids = [p.source_id for p in profiles]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate source ids")

    clusters = {
        i: DendrogramNode(members=(p.source_id,)) for i, p in enumerate(profiles)
    }
    sizes = {i: 1 for i in clusters}
    dist = {}
    for i in range(len(profiles)):
        for j in range(i + 1, len(profiles)):
            dist[(i, j)] = manhattan_distance(profiles[i], profiles[j])

    next_id = len(profiles)
    while len(clusters) > 1:
        best = min(
            dist.items(),
            key=lambda kv: (kv[1], clusters[kv[0][0]].members[0], clusters[kv[0][1]].members[0]),
        )
        (a, b), d = best
        merged = DendrogramNode(
            members=tuple(sorted(clusters[a].members + clusters[b].members)),
            distance=d,
            children=(clusters[a], clusters[b]),
        )
        # average linkage: distances to the new cluster are size-weighted
        # means, which keeps them equal to the mean pairwise leaf distance
        for k in clusters:
            if k in (a, b):
                continue
            d_ak = dist[(min(a, k), max(a, k))]
            d_bk = dist[(min(b, k), max(b, k))]
            dist[(min(k, next_id), max(k, next_id))] = (
                sizes[a] * d_ak + sizes[b] * d_bk
            ) / (sizes[a] + sizes[b])
        for k in list(dist):
            if a in k or b in k:
                del dist[k]
        sizes[next_id] = sizes.pop(a) + sizes.pop(b)
        clusters[next_id] = merged
        del clusters[a], clusters[b]
        next_id += 1

    dendrogram = Dendrogram(root=next(iter(clusters.values())))
    return dendrogram, cut_dendrogram(dendrogram, threshold)


def cut_dendrogram(dendrogram: Dendrogram, threshold: float) -> Grouping:
    """Partition sources by applying merges at distance <= threshold."""
    groups = []

    def walk(node):
        if node.is_leaf or node.distance <= threshold:
            groups.append(node.members)
        else:
            for child in node.children:
                walk(child)

    walk(dendrogram.root)
    groups.sort(key=lambda members: members[0])
    return Grouping(
        threshold=threshold, groups={gid: members for gid, members in enumerate(groups)}
    )


def merge_group_profiles(grouping: Grouping, profiles) -> dict:
    """Pool member counts into one profile per group."""
    by_id = {p.source_id: p for p in profiles}
    merged = {}
    for gid, members in sorted(grouping.groups.items()):
        counts: dict = {}
        total = 0
        space = None
        for source_id in members:
            profile = by_id.get(source_id)
            if profile is None:
                raise MissingProfile(f"no profile for source {source_id!r}")
            if space is None:
                space = profile.space
            elif space != profile.space:
                raise ValueError("group members live in different feature spaces")
            for cell, c in profile.counts.items():
                counts[cell] = counts.get(cell, 0) + c
            total += profile.total
        merged[gid] = SourceProfile(
            source_id=f"group{gid}", space=space, counts=counts, total=total
        )
    return merged


def profiles_to_json(profiles) -> dict:
    return {"profiles": [p.to_json() for p in sorted(profiles, key=lambda p: p.source_id)]}


def profiles_from_json(obj) -> list:
    return [SourceProfile.from_json(p) for p in obj["profiles"]]
