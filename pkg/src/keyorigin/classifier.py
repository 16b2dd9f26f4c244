"""Bayes-family classifiers over grouped feature distributions.

Three variants share one model shell: the full Bayes classifier keeps one
joint table per group, the naive variant assumes per-feature independence,
and the cross-feature naive variant re-joins the two correlated MSB
features into a single axis before applying the naive assumption. All
likelihood math runs in log space; a 100-key batch would underflow
linear-space products.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBatch, EmptyGroup, ModeMismatch, UnknownGroup
from .features import (
    FeatureSpace,
    FeatureVector,
    SinglePrimeFeatureVector,
    space_for_mode,
    vector_values,
)

FULL_BAYES = "full_bayes"
NAIVE_BAYES = "naive_bayes"
CROSS_NAIVE = "cross_naive"
VARIANTS = (FULL_BAYES, NAIVE_BAYES, CROSS_NAIVE)

DEFAULT_ALPHA = 1e-4

# Axes merged by the cross-feature variant (the top bits of p and q are
# correlated by the exact-modulus-length requirement).
_CROSS_AXES = ("msb_p", "msb_q")


def _smooth(counts: np.ndarray, alpha: float) -> np.ndarray:
    total = counts.sum()
    return (counts + alpha) / (total + alpha * counts.size)


@dataclass
class ClassificationModel:
    """Trained per-group probability tables plus variant/smoothing config."""

    variant: str
    feature_mode: str
    space: FeatureSpace
    groups: tuple
    alpha: float
    priors: np.ndarray
    # full: list of per-group joint arrays; naive: per-group list of
    # per-axis arrays; cross: per-group [cross_table, *remaining axes]
    tables: list
    metadata: dict = field(default_factory=dict)

    def group_index(self, group_id) -> int:
        try:
            return self.groups.index(group_id)
        except ValueError:
            raise UnknownGroup(f"group {group_id!r} not in model") from None

    # -- likelihoods --------------------------------------------------------

    def _check_mode(self, vector) -> None:
        if isinstance(vector, FeatureVector) and self.feature_mode != "private_key":
            raise ModeMismatch("private-key vector fed to a non-private model")
        if isinstance(vector, SinglePrimeFeatureVector) and self.feature_mode != "single_prime":
            raise ModeMismatch("single-prime vector fed to a non-single-prime model")

    def _coordinates(self, vectors) -> np.ndarray:
        rows = []
        for v in vectors:
            self._check_mode(v)
            rows.append(vector_values(v))
        coords = np.asarray(rows, dtype=np.int64)
        if coords.ndim != 2 or coords.shape[1] != len(self.space.sizes):
            raise ModeMismatch(
                f"vectors have {coords.shape[-1]} axes, model expects {len(self.space.sizes)}"
            )
        return coords

    def log_likelihoods(self, vectors) -> np.ndarray:
        """Matrix of log P(vector | group), shape (n_groups, n_vectors)."""
        coords = self._coordinates(vectors)
        sizes = self.space.sizes
        n = coords.shape[0]
        out = np.zeros((len(self.groups), n))
        if self.variant == FULL_BAYES:
            cells = np.zeros(n, dtype=np.int64)
            for axis, size in enumerate(sizes):
                cells = cells * size + coords[:, axis]
            for gi, joint in enumerate(self.tables):
                out[gi] = np.log(joint[cells])
        elif self.variant == NAIVE_BAYES:
            for gi, axes in enumerate(self.tables):
                acc = np.zeros(n)
                for axis, table in enumerate(axes):
                    acc += np.log(table[coords[:, axis]])
                out[gi] = acc
        else:  # cross_naive
            i_p = self.space.fields.index(_CROSS_AXES[0])
            i_q = self.space.fields.index(_CROSS_AXES[1])
            cross_cells = coords[:, i_p] * sizes[i_q] + coords[:, i_q]
            rest = [a for a in range(len(sizes)) if a not in (i_p, i_q)]
            for gi, tables in enumerate(self.tables):
                acc = np.log(tables[0][cross_cells])
                for ti, axis in enumerate(rest):
                    acc += np.log(tables[ti + 1][coords[:, axis]])
                out[gi] = acc
        return out

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        def table_json(arr, sparse):
            if not sparse:
                return {"dense": [float(x) for x in arr]}
            default = float(arr.min())
            cells = {
                str(i): float(x) for i, x in enumerate(arr) if x != default
            }
            return {"size": int(arr.size), "default": default, "cells": cells}

        tables = []
        for group_tables in self.tables:
            if self.variant == FULL_BAYES:
                tables.append(table_json(group_tables, sparse=True))
            else:
                tables.append([table_json(t, sparse=False) for t in group_tables])
        return {
            "format": "keyorigin-model/1",
            "variant": self.variant,
            "feature_mode": self.feature_mode,
            "space": {
                "name": self.space.name,
                "fields": list(self.space.fields),
                "sizes": list(self.space.sizes),
            },
            "groups": list(self.groups),
            "alpha": self.alpha,
            "priors": [float(p) for p in self.priors],
            "tables": tables,
            "metadata": dict(sorted(self.metadata.items())),
        }

    @classmethod
    def from_json(cls, obj) -> "ClassificationModel":
        space = FeatureSpace(
            name=obj["space"]["name"],
            fields=tuple(obj["space"]["fields"]),
            sizes=tuple(obj["space"]["sizes"]),
        )

        def table_back(tj):
            if "dense" in tj:
                return np.asarray(tj["dense"])
            arr = np.full(tj["size"], tj["default"])
            for cell, prob in tj["cells"].items():
                arr[int(cell)] = prob
            return arr

        tables = []
        for tj in obj["tables"]:
            if obj["variant"] == FULL_BAYES:
                tables.append(table_back(tj))
            else:
                tables.append([table_back(t) for t in tj])
        return cls(
            variant=obj["variant"],
            feature_mode=obj["feature_mode"],
            space=space,
            groups=tuple(obj["groups"]),
            alpha=obj["alpha"],
            priors=np.asarray(obj["priors"]),
            tables=tables,
            metadata=obj.get("metadata", {}),
        )


def train(
    grouped,
    variant: str = FULL_BAYES,
    alpha: float = DEFAULT_ALPHA,
    priors=None,
    space: FeatureSpace | None = None,
    metadata: dict | None = None,
) -> ClassificationModel:
    """Fit smoothed frequency tables from vectors grouped by class label.

    grouped maps group ids to sequences of feature vectors. Tables hold
    (count + alpha) / (total + alpha * cells); alpha > 0 keeps unseen
    cells classifiable.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    group_ids = tuple(sorted(grouped))
    if not group_ids:
        raise EmptyGroup("no groups to train on")
    vectors_by_group = {}
    for gid in group_ids:
        vectors = list(grouped[gid])
        if not vectors:
            raise EmptyGroup(f"group {gid!r} has no training vectors")
        vectors_by_group[gid] = vectors
    if space is None:
        first = vectors_by_group[group_ids[0]][0]
        if isinstance(first, FeatureVector):
            space = space_for_mode("private_key")
        elif isinstance(first, SinglePrimeFeatureVector):
            space = space_for_mode("single_prime")
        else:
            raise ValueError("cannot infer feature space from raw tuples; pass space=")
    if variant == CROSS_NAIVE and not all(f in space.fields for f in _CROSS_AXES):
        raise ModeMismatch(
            f"variant {CROSS_NAIVE} needs the paired MSB axes; "
            f"space {space.name!r} lacks them"
        )

    if priors is None:
        prior_arr = np.full(len(group_ids), 1.0 / len(group_ids))
    else:
        if isinstance(priors, dict):
            prior_arr = np.asarray([float(priors[g]) for g in group_ids])
        else:
            prior_arr = np.asarray(priors, dtype=float)
        if prior_arr.shape != (len(group_ids),) or prior_arr.sum() <= 0:
            raise ValueError("priors must give one positive weight per group")
        prior_arr = prior_arr / prior_arr.sum()

    sizes = space.sizes
    tables = []
    for gid in group_ids:
        coords = np.asarray(
            [vector_values(v) for v in vectors_by_group[gid]], dtype=np.int64
        )
        if variant == FULL_BAYES:
            cells = np.zeros(len(coords), dtype=np.int64)
            for axis, size in enumerate(sizes):
                cells = cells * size + coords[:, axis]
            counts = np.bincount(cells, minlength=space.size).astype(float)
            tables.append(_smooth(counts, alpha))
        elif variant == NAIVE_BAYES:
            axes = []
            for axis, size in enumerate(sizes):
                counts = np.bincount(coords[:, axis], minlength=size).astype(float)
                axes.append(_smooth(counts, alpha))
            tables.append(axes)
        else:
            i_p = space.fields.index(_CROSS_AXES[0])
            i_q = space.fields.index(_CROSS_AXES[1])
            cross = coords[:, i_p] * sizes[i_q] + coords[:, i_q]
            counts = np.bincount(cross, minlength=sizes[i_p] * sizes[i_q]).astype(float)
            group_tables = [_smooth(counts, alpha)]
            for axis in range(len(sizes)):
                if axis in (i_p, i_q):
                    continue
                counts = np.bincount(coords[:, axis], minlength=sizes[axis]).astype(float)
                group_tables.append(_smooth(counts, alpha))
            tables.append(group_tables)

    return ClassificationModel(
        variant=variant,
        feature_mode=space.name,
        space=space,
        groups=group_ids,
        alpha=alpha,
        priors=prior_arr,
        tables=tables,
        metadata=metadata or {},
    )


def _log_sum_exp(x: np.ndarray) -> float:
    m = np.max(x)
    return float(m + np.log(np.sum(np.exp(x - m))))


def _rank(model: ClassificationModel, log_post: np.ndarray) -> list:
    posteriors = np.exp(log_post - _log_sum_exp(log_post))
    order = sorted(range(len(model.groups)), key=lambda gi: (-posteriors[gi], model.groups[gi]))
    return [(model.groups[gi], float(posteriors[gi])) for gi in order]


def classify_key(model: ClassificationModel, vector) -> list:
    """Ranked (group_id, posterior) list for one key, best first."""
    return classify_batch(model, [vector])


def classify_batch(model: ClassificationModel, vectors) -> list:
    """Ranked (group_id, posterior) list for a batch from one source.

    Log-posterior of a group is its log prior plus the sum of per-vector
    log likelihoods; a batch of one reduces to classify_key.
    """
    vectors = list(vectors)
    if not vectors:
        raise EmptyBatch("no vectors in batch")
    log_lik = model.log_likelihoods(vectors)
    log_post = np.log(model.priors) + log_lik.sum(axis=1)
    return _rank(model, log_post)


@dataclass
class EvaluationReport:
    """Per-group precision/recall, confusion matrix, and the batch/top-k grid."""

    groups: tuple  # true groups present in the test set (confusion rows)
    predicted_groups: tuple  # all model groups (confusion columns)
    precision: dict
    recall: dict
    macro_precision: float
    macro_recall: float
    confusion: list  # relative frequencies; rows = true, columns = predicted
    batch_sizes: tuple
    top_ks: tuple
    # batch_accuracy[batch_size][k][group_id] -> fraction of batches where
    # the true group ranked in the top k; None when a group has too few
    # test keys to form a single batch
    batch_accuracy: dict
    average_accuracy: dict  # batch_accuracy averaged over groups

    def top_k_accuracy(self, k: int, batch_size: int = 1):
        return self.average_accuracy[batch_size][k]

    def to_json(self) -> dict:
        return {
            "groups": list(self.groups),
            "predicted_groups": list(self.predicted_groups),
            "precision": {str(g): self.precision[g] for g in self.groups},
            "recall": {str(g): self.recall[g] for g in self.groups},
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "confusion": self.confusion,
            "batch_sizes": list(self.batch_sizes),
            "top_ks": list(self.top_ks),
            "batch_accuracy": {
                str(b): {
                    str(k): {str(g): acc for g, acc in per_group.items()}
                    for k, per_group in by_k.items()
                }
                for b, by_k in self.batch_accuracy.items()
            },
            "average_accuracy": {
                str(b): {str(k): acc for k, acc in by_k.items()}
                for b, by_k in self.average_accuracy.items()
            },
        }

    def to_text(self) -> str:
        lines = []
        lines.append("group      precision  recall")
        for g in self.groups:
            lines.append(f"{g!s:<10} {self.precision[g]:>9.3f}  {self.recall[g]:>6.3f}")
        lines.append(
            f"{'macro':<10} {self.macro_precision:>9.3f}  {self.macro_recall:>6.3f}"
        )
        lines.append("")
        header = "keys/batch " + " ".join(f"top-{k:<4}" for k in self.top_ks)
        lines.append(header)
        for b in self.batch_sizes:
            cells = []
            for k in self.top_ks:
                acc = self.average_accuracy[b][k]
                cells.append("   --  " if acc is None else f"{100 * acc:>6.1f}%")
            lines.append(f"{b:<10} " + " ".join(cells))
        return "\n".join(lines) + "\n"


def evaluate(
    model: ClassificationModel,
    test_by_group,
    batch_sizes=(1, 2, 3, 5, 10, 100),
    top_ks=(1, 2, 3),
) -> EvaluationReport:
    """Score the model on held-out vectors with known true groups.

    Keys of test_by_group are true group ids (must exist in the model).
    Batches are consecutive disjoint chunks of each group's test
    sequence; a trailing partial chunk is dropped. Undefined precision
    (nothing predicted as a group) is reported as 0.
    """
    test_groups = sorted(test_by_group)
    for g in test_groups:
        if g not in model.groups:
            raise UnknownGroup(f"test label {g!r} not in model")
        if len(test_by_group[g]) == 0:
            raise EmptyBatch(f"no test vectors for group {g!r}")

    n_model_groups = len(model.groups)
    gi_of = {g: i for i, g in enumerate(model.groups)}
    log_priors = np.log(model.priors)

    confusion_counts = np.zeros((len(test_groups), n_model_groups))
    batch_hits = {b: {k: {} for k in top_ks} for b in batch_sizes}

    for row, g in enumerate(test_groups):
        vectors = list(test_by_group[g])
        log_lik = model.log_likelihoods(vectors)  # (G, N)
        true_idx = gi_of[g]
        for b in batch_sizes:
            n_batches = len(vectors) // b
            if n_batches == 0:
                for k in top_ks:
                    batch_hits[b][k][g] = None
                continue
            hits = {k: 0 for k in top_ks}
            for bi in range(n_batches):
                scores = log_priors + log_lik[:, bi * b : (bi + 1) * b].sum(axis=1)
                # stable sort on descending score ties back to group order
                order = np.argsort(-scores, kind="stable")
                rank_of_true = int(np.nonzero(order == true_idx)[0][0])
                for k in top_ks:
                    if rank_of_true < k:
                        hits[k] += 1
                if b == 1:
                    confusion_counts[row, order[0]] += 1
            for k in top_ks:
                batch_hits[b][k][g] = hits[k] / n_batches
        if 1 not in batch_sizes:
            scores = log_priors[:, None] + log_lik
            predicted = np.argmax(scores, axis=0)
            for pi in predicted:
                confusion_counts[row, pi] += 1

    precision = {}
    recall = {}
    col_sums = confusion_counts.sum(axis=0)
    for g in test_groups:
        row = test_groups.index(g)
        col = gi_of[g]
        correct = confusion_counts[row, col]
        predicted_as = col_sums[col]
        precision[g] = float(correct / predicted_as) if predicted_as > 0 else 0.0
        recall[g] = float(correct / confusion_counts[row].sum())

    confusion_rel = (confusion_counts / confusion_counts.sum(axis=1, keepdims=True)).tolist()

    average_accuracy = {}
    for b in batch_sizes:
        average_accuracy[b] = {}
        for k in top_ks:
            defined = [v for v in batch_hits[b][k].values() if v is not None]
            average_accuracy[b][k] = sum(defined) / len(defined) if defined else None

    return EvaluationReport(
        groups=tuple(test_groups),
        predicted_groups=tuple(model.groups),
        precision=precision,
        recall=recall,
        macro_precision=sum(precision.values()) / len(precision),
        macro_recall=sum(recall.values()) / len(recall),
        confusion=confusion_rel,
        batch_sizes=tuple(batch_sizes),
        top_ks=tuple(top_ks),
        batch_accuracy=batch_hits,
        average_accuracy=average_accuracy,
    )
