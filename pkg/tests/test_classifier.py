import math
import random

import numpy as np
import pytest

from keyorigin import classifier
from keyorigin._ioutil import canonical_json
from keyorigin.errors import EmptyBatch, EmptyGroup, ModeMismatch, UnknownGroup
from keyorigin.features import (
    PRIVATE_KEY_SPACE,
    FeatureSpace,
    FeatureVector,
    SinglePrimeFeatureVector,
)

VA = FeatureVector(msb_p=25, msb_q=25, blum=False, mod_cat=4, roca=False)
VB = FeatureVector(msb_p=16, msb_q=31, blum=True, mod_cat=1, roca=False)
VC = FeatureVector(msb_p=17, msb_q=19, blum=False, mod_cat=3, roca=False)


def two_group_model(lik_a=0.2, lik_b=0.1, vector=VA):
    """Hand-built full-Bayes model with known likelihoods for `vector`."""
    cell = PRIVATE_KEY_SPACE.encode(vector.values())
    t0 = np.full(4096, 1e-9)
    t1 = np.full(4096, 1e-9)
    t0[cell] = lik_a
    t1[cell] = lik_b
    return classifier.ClassificationModel(
        variant=classifier.FULL_BAYES,
        feature_mode="private_key",
        space=PRIVATE_KEY_SPACE,
        groups=(0, 1),
        alpha=0.0,
        priors=np.array([0.5, 0.5]),
        tables=[t0, t1],
    )


# --- train -------------------------------------------------------------------


def test_single_group_posterior_one():
    model = classifier.train({7: [VA, VB]}, variant=classifier.FULL_BAYES)
    assert classifier.classify_key(model, VC) == [(7, 1.0)]


def test_disjoint_supports_self_classify():
    model = classifier.train({0: [VA] * 5, 1: [VB] * 5}, alpha=1e-9)
    assert classifier.classify_key(model, VA)[0][0] == 0
    assert classifier.classify_key(model, VB)[0][0] == 1
    assert classifier.classify_key(model, VA)[0][1] > 0.999


def test_table_rows_sum_to_one():
    for variant in classifier.VARIANTS:
        model = classifier.train(
            {0: [VA, VB, VC], 1: [VB, VB, VC]}, variant=variant, alpha=1e-4
        )
        for group_tables in model.tables:
            if variant == classifier.FULL_BAYES:
                assert np.isclose(group_tables.sum(), 1.0, atol=1e-9)
            else:
                for table in group_tables:
                    assert np.isclose(table.sum(), 1.0, atol=1e-9)


def test_smoothing_formula():
    model = classifier.train({0: [VA, VA, VB]}, variant=classifier.FULL_BAYES, alpha=0.5)
    cell_a = PRIVATE_KEY_SPACE.encode(VA.values())
    cell_b = PRIVATE_KEY_SPACE.encode(VB.values())
    denom = 3 + 0.5 * 4096
    assert model.tables[0][cell_a] == pytest.approx((2 + 0.5) / denom)
    assert model.tables[0][cell_b] == pytest.approx((1 + 0.5) / denom)
    assert model.tables[0][0] == pytest.approx(0.5 / denom)


def test_empty_group_rejected():
    with pytest.raises(EmptyGroup):
        classifier.train({0: [VA], 1: []})
    with pytest.raises(EmptyGroup):
        classifier.train({})


def test_cross_requires_paired_msb_axes():
    single = SinglePrimeFeatureVector(msb=20, second_lsb=1, mod_cat=4, roca=False)
    with pytest.raises(ModeMismatch):
        classifier.train({0: [single]}, variant=classifier.CROSS_NAIVE)


def test_custom_priors():
    model = classifier.train({0: [VA], 1: [VA]}, priors={0: 3.0, 1: 1.0})
    ranking = classifier.classify_key(model, VA)
    assert ranking[0] == (0, pytest.approx(0.75))
    assert ranking[1] == (1, pytest.approx(0.25))


# --- classify_key / classify_batch ---------------------------------------------


def test_direct_bayes_arithmetic():
    model = two_group_model(lik_a=0.2, lik_b=0.1)
    ranking = classifier.classify_key(model, VA)
    assert ranking[0] == (0, pytest.approx(2 / 3))
    assert ranking[1] == (1, pytest.approx(1 / 3))


def test_posteriors_sum_to_one_and_sorted():
    model = classifier.train({0: [VA, VB], 1: [VB, VC], 2: [VC, VC]}, alpha=1e-3)
    ranking = classifier.classify_key(model, VB)
    assert sum(p for _, p in ranking) == pytest.approx(1.0, abs=1e-9)
    posts = [p for _, p in ranking]
    assert posts == sorted(posts, reverse=True)


def test_unseen_vector_with_smoothing_is_classifiable():
    model = classifier.train({0: [VA], 1: [VB]}, alpha=1e-4)
    ranking = classifier.classify_key(model, VC)
    assert len(ranking) == 2
    assert all(np.isfinite(p) and p > 0 for _, p in ranking)


def test_batch_of_one_equals_single():
    model = classifier.train({0: [VA, VB], 1: [VB, VC]}, alpha=1e-3)
    assert classifier.classify_batch(model, [VC]) == classifier.classify_key(model, VC)


def test_batch_order_invariant():
    model = classifier.train({0: [VA, VB], 1: [VB, VC]}, alpha=1e-3)
    batch = [VA, VB, VC, VA]
    a = classifier.classify_batch(model, batch)
    b = classifier.classify_batch(model, list(reversed(batch)))
    assert a == b


def test_batch_sharpens_posterior():
    model = two_group_model(lik_a=0.2, lik_b=0.1)
    single = classifier.classify_key(model, VA)[0][1]
    ten = classifier.classify_batch(model, [VA] * 10)[0][1]
    assert ten > single
    # closed form: posterior of A after n copies = 2^n / (2^n + 1)
    assert ten == pytest.approx(2**10 / (2**10 + 1))


def test_empty_batch():
    model = two_group_model()
    with pytest.raises(EmptyBatch):
        classifier.classify_batch(model, [])


def test_mode_mismatch():
    model = two_group_model()
    single = SinglePrimeFeatureVector(msb=20, second_lsb=1, mod_cat=4, roca=False)
    with pytest.raises(ModeMismatch):
        classifier.classify_key(model, single)


def test_deterministic_tie_break_by_group_id():
    model = classifier.train({3: [VA], 1: [VA]}, alpha=1e-4)
    ranking = classifier.classify_key(model, VA)
    assert [g for g, _ in ranking] == [1, 3]


def test_permutation_equivariance():
    model = classifier.train({0: [VA, VB], 1: [VB, VC]}, alpha=1e-3)
    swapped = classifier.ClassificationModel(
        variant=model.variant,
        feature_mode=model.feature_mode,
        space=model.space,
        groups=(0, 1),
        alpha=model.alpha,
        priors=model.priors[::-1].copy(),
        tables=[model.tables[1], model.tables[0]],
    )
    orig = dict(classifier.classify_key(model, VB))
    swap = dict(classifier.classify_key(swapped, VB))
    assert orig[0] == pytest.approx(swap[1])
    assert orig[1] == pytest.approx(swap[0])


def test_likelihood_scaling_shifts_log_posterior():
    base = two_group_model(lik_a=0.2, lik_b=0.1)
    c = 3.0
    scaled = classifier.ClassificationModel(
        variant=base.variant,
        feature_mode=base.feature_mode,
        space=base.space,
        groups=base.groups,
        alpha=base.alpha,
        priors=base.priors,
        tables=[base.tables[0] * c, base.tables[1]],
    )
    for batch_size in (1, 4, 9):
        batch = [VA] * batch_size
        post = dict(classifier.classify_batch(base, batch))
        post_scaled = dict(classifier.classify_batch(scaled, batch))
        log_ratio = math.log(post[0] / post[1])
        log_ratio_scaled = math.log(post_scaled[0] / post_scaled[1])
        assert log_ratio_scaled - log_ratio == pytest.approx(batch_size * math.log(c))


def test_full_equals_naive_on_one_feature_space():
    space = FeatureSpace(name="one_axis", fields=("mod",), sizes=(4,))
    rng = random.Random(5)
    grouped = {
        g: [(rng.choices(range(4), weights=w)[0],) for _ in range(200)]
        for g, w in {0: [5, 1, 1, 1], 1: [1, 1, 5, 2]}.items()
    }
    full = classifier.train(grouped, variant=classifier.FULL_BAYES, space=space)
    naive = classifier.train(grouped, variant=classifier.NAIVE_BAYES, space=space)
    for v in [(0,), (1,), (2,), (3,)]:
        assert classifier.classify_key(full, v) == classifier.classify_key(naive, v)


# --- evaluate -------------------------------------------------------------------


def test_perfect_classifier_metrics():
    model = classifier.train({0: [VA] * 4, 1: [VB] * 4}, alpha=1e-9)
    report = classifier.evaluate(
        model, {0: [VA] * 10, 1: [VB] * 10}, batch_sizes=(1, 2), top_ks=(1, 2)
    )
    assert report.precision == {0: 1.0, 1: 1.0}
    assert report.recall == {0: 1.0, 1: 1.0}
    assert report.confusion == [[1.0, 0.0], [0.0, 1.0]]
    assert report.macro_precision == 1.0
    assert report.average_accuracy[1][1] == 1.0
    assert report.average_accuracy[2][1] == 1.0


def test_constant_classifier_closed_form():
    # group 0's table dominates everywhere: every key is predicted 0
    t0 = np.full(4096, 1.0)
    t1 = np.full(4096, 0.5)
    model = classifier.ClassificationModel(
        variant=classifier.FULL_BAYES,
        feature_mode="private_key",
        space=PRIVATE_KEY_SPACE,
        groups=(0, 1),
        alpha=0.0,
        priors=np.array([0.5, 0.5]),
        tables=[t0, t1],
    )
    report = classifier.evaluate(
        model, {0: [VA] * 10, 1: [VB] * 10}, batch_sizes=(1,), top_ks=(1, 2)
    )
    assert report.recall == {0: 1.0, 1: 0.0}
    assert report.precision == {0: 0.5, 1: 0.0}  # undefined precision reported as 0
    assert report.confusion == [[1.0, 0.0], [1.0, 0.0]]
    assert report.average_accuracy[1][2] == 1.0  # top-2 always contains the truth


def test_random_guess_baseline_is_one_over_g():
    groups = 26
    table = np.full(4096, 1 / 4096)
    model = classifier.ClassificationModel(
        variant=classifier.FULL_BAYES,
        feature_mode="private_key",
        space=PRIVATE_KEY_SPACE,
        groups=tuple(range(groups)),
        alpha=0.0,
        priors=np.full(groups, 1 / groups),
        tables=[table.copy() for _ in range(groups)],
    )
    test_set = {g: [VA] * 10 for g in range(groups)}
    report = classifier.evaluate(model, test_set, batch_sizes=(1,), top_ks=(1,))
    assert report.average_accuracy[1][1] == pytest.approx(1 / 26)


def test_unknown_group():
    model = classifier.train({0: [VA], 1: [VB]})
    with pytest.raises(UnknownGroup):
        classifier.evaluate(model, {99: [VA]})


def test_batch_chunking_drops_remainder():
    model = classifier.train({0: [VA] * 4, 1: [VB] * 4}, alpha=1e-9)
    report = classifier.evaluate(
        model, {0: [VA] * 7, 1: [VB] * 7}, batch_sizes=(3, 100), top_ks=(1,)
    )
    assert report.batch_accuracy[3][1] == {0: 1.0, 1: 1.0}
    assert report.batch_accuracy[100][1] == {0: None, 1: None}
    assert report.average_accuracy[100][1] is None


def test_monotone_batch_accuracy_on_separable_groups():
    rng = random.Random(1)

    def sample(msb_w, blum_p, mod_w, n):
        out = []
        for _ in range(n):
            msb_p = rng.choices(range(16, 32), weights=msb_w)[0]
            msb_q = rng.choices(range(16, 32), weights=msb_w)[0]
            out.append(
                FeatureVector(
                    msb_p=msb_p,
                    msb_q=msb_q,
                    blum=rng.random() < blum_p,
                    mod_cat=rng.choices([1, 2, 3, 4], weights=mod_w)[0],
                    roca=False,
                )
            )
        return out

    spec_by_group = {
        0: ([4] * 8 + [1] * 8, 0.2, [1, 2, 4, 8]),
        1: ([1] * 8 + [4] * 8, 0.5, [8, 4, 2, 1]),
        2: ([2] * 16, 0.8, [2, 8, 2, 4]),
    }
    train_set = {g: sample(*spec, 4000) for g, spec in spec_by_group.items()}
    test_set = {g: sample(*spec, 3000) for g, spec in spec_by_group.items()}
    model = classifier.train(train_set, variant=classifier.FULL_BAYES)
    sizes = (1, 2, 3, 5, 10, 100)
    report = classifier.evaluate(model, test_set, batch_sizes=sizes, top_ks=(1,))
    accs = [report.average_accuracy[b][1] for b in sizes]
    assert all(b >= a - 0.01 for a, b in zip(accs, accs[1:]))
    assert accs[-1] > accs[0]
    assert accs[-1] > 0.99


# --- serialization ----------------------------------------------------------------


@pytest.mark.parametrize("variant", classifier.VARIANTS)
def test_model_json_roundtrip(variant):
    model = classifier.train(
        {0: [VA, VB, VA], 1: [VB, VC, VC]},
        variant=variant,
        alpha=1e-4,
        metadata={"corpus_hash": "abc", "date": None},
    )
    obj = model.to_json()
    restored = classifier.ClassificationModel.from_json(obj)
    assert canonical_json(restored.to_json()) == canonical_json(obj)
    for v in (VA, VB, VC):
        assert classifier.classify_key(restored, v) == classifier.classify_key(model, v)


def test_report_json_and_text():
    model = classifier.train({0: [VA] * 4, 1: [VB] * 4}, alpha=1e-9)
    report = classifier.evaluate(
        model, {0: [VA] * 5, 1: [VB] * 5}, batch_sizes=(1, 2), top_ks=(1, 2)
    )
    obj = report.to_json()
    assert obj["precision"] == {"0": 1.0, "1": 1.0}
    text = report.to_text()
    assert "precision" in text and "keys/batch" in text
