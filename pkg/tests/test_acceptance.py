"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion
summary lines. Tolerances are pinned here and do not drift.
"""

from pathlib import Path

import numpy as np

from imolab.classifiers import (
    HyperParams,
    ape_logits,
    ape_refine,
    clip_logits,
    plusplus_logits,
    tip_adapter_logits,
    tip_x_logits,
)
from imolab.harness import (
    ExperimentConfig,
    accuracy,
    run_experiment,
    sample_shots,
)
from imolab.kernels import affinity, kl_divergence, softmax_rows
from imolab.metrics import imo_intersection, pearson, proxy_a_distance
from imolab.reports import markdown_table
from imolab.store import CacheModel, EmbeddingSet, build_cache, l2_normalize
from imolab.synth import SynthSpec, generate, generate_pair, save_bundle

import oracles
from conftest import random_cache, random_classifier, random_embedding_set

DATA_DIR = Path(__file__).parent / "data"


def announce(number: int, text: str) -> None:
    print(f"\n[PASS] criterion {number}: {text}")


def single_domain(vectors):
    return EmbeddingSet(vectors=vectors, labels=np.zeros(len(vectors), dtype=int),
                        class_names=("domain",), normalized=True)


def random_instance(rng):
    n = int(rng.integers(2, 5))      # N <= 4
    k = int(rng.integers(1, 4))      # K <= 3
    d = int(rng.integers(3, 9))      # d <= 8
    m = int(rng.integers(1, 6))
    labels = rng.integers(0, n, size=m)
    test = random_embedding_set(rng, m, d, n, labels=labels)
    adapted = random_embedding_set(rng, m, d, n, labels=labels)
    cache = random_cache(rng, n, k, d)
    cache_adapted = CacheModel(keys=l2_normalize(rng.standard_normal((n * k, d))),
                               values=cache.values, num_classes=n, shots=k)
    w = random_classifier(rng, n, d)
    hp = HyperParams(alpha=float(rng.uniform(0, 3)),
                     beta=float(rng.uniform(1, 8)),
                     gamma=float(rng.uniform(0, 3)),
                     gamma_ape=float(rng.uniform(0, 2)),
                     channel_budget=int(rng.integers(2, d + 1)),
                     lambda_mix=0.7)
    return test, adapted, cache, cache_adapted, w, hp


def test_criterion_1_oracle_equivalence():
    """200 random instances: all six cache methods vs scalar-loop oracles, 1e-6."""
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        test, adapted, cache, cache_adapted, w, hp = random_instance(rng)
        t = test.vectors.tolist()
        ta = adapted.vectors.tolist()
        keys = cache.keys.tolist()
        keys_a = cache_adapted.keys.tolist()
        values = cache.values.tolist()
        ww = w.weights.tolist()

        got = tip_adapter_logits(test, cache, w, hp).logits
        expected = oracles.ta_logits_oracle(t, keys, values, ww, hp.alpha, hp.beta)
        worst = max(worst, float(np.abs(got - expected).max()))

        got = tip_x_logits(test, cache, w, hp).logits
        expected = oracles.tx_logits_oracle(t, keys, values, ww,
                                            hp.alpha, hp.beta, hp.gamma)
        worst = max(worst, float(np.abs(got - expected).max()))

        got = plusplus_logits(test, adapted, cache_adapted, w, hp,
                              variant="TA++").logits
        expected = oracles.ta_plusplus_oracle(t, ta, keys_a, values, ww,
                                              hp.alpha, hp.beta)
        worst = max(worst, float(np.abs(got - expected).max()))

        got = plusplus_logits(test, adapted, cache_adapted, w, hp,
                              variant="TX++", cache_orig=cache).logits
        expected = oracles.tx_plusplus_oracle(t, ta, keys, keys_a, values, ww,
                                              hp.alpha, hp.beta, hp.gamma)
        worst = max(worst, float(np.abs(got - expected).max()))

        mask = ape_refine(w, hp)
        got = ape_logits(test, cache, w, hp, mask).logits
        expected = oracles.ape_logits_oracle(
            t, keys, values, ww, hp.alpha, hp.beta, hp.gamma_ape,
            hp.lambda_mix, hp.channel_budget)
        worst = max(worst, float(np.abs(got - expected).max()))

        got = ape_logits(test, cache, w, hp, mask, corrected_cache=cache_adapted,
                         test_adapted=adapted).logits
        expected = oracles.ape_logits_oracle(
            t, keys, values, ww, hp.alpha, hp.beta, hp.gamma_ape,
            hp.lambda_mix, hp.channel_budget,
            keys_affinity=keys_a, test_affinity=ta)
        worst = max(worst, float(np.abs(got - expected).max()))

    assert worst <= 1e-6
    announce(1, f"oracle equivalence over 200 instances, max |diff| = {worst:.2e}")


def test_criterion_2_degeneracy_suite():
    """alpha, gamma, identity-adaptation, gamma_ape and full-budget degeneracies."""
    rng = np.random.default_rng(7)
    for _ in range(20):
        test, adapted, cache, cache_adapted, w, hp = random_instance(rng)
        zero = clip_logits(test, w).logits

        hp0 = hp.replace(alpha=0.0)
        mask = ape_refine(w, hp0)
        for bundle in (
            tip_adapter_logits(test, cache, w, hp0),
            plusplus_logits(test, adapted, cache_adapted, w, hp0, variant="TA++"),
            ape_logits(test, cache, w, hp0, mask),
            ape_logits(test, cache, w, hp0, mask, corrected_cache=cache_adapted,
                       test_adapted=adapted),
        ):
            assert np.abs(bundle.logits - zero).max() <= 1e-9
            assert np.array_equal(bundle.predictions,
                                  clip_logits(test, w).predictions)

        hp_nog = hp.replace(gamma=0.0)
        tx = tip_x_logits(test, cache, w, hp_nog).logits
        ta = tip_adapter_logits(test, cache, w, hp_nog).logits
        assert np.abs(tx - ta).max() <= 1e-9

        tx_pp = plusplus_logits(test, adapted, cache_adapted, w, hp_nog,
                                variant="TX++", cache_orig=cache).logits
        ta_pp = plusplus_logits(test, adapted, cache_adapted, w, hp_nog,
                                variant="TA++").logits
        assert np.abs(tx_pp - ta_pp).max() <= 1e-9

        # identical original/adapted inputs collapse the ++ variants
        same_ta = plusplus_logits(test, test, cache, w, hp, variant="TA++").logits
        assert np.abs(same_ta - tip_adapter_logits(test, cache, w, hp).logits).max() <= 1e-9
        mask_full = ape_refine(w, hp)
        same_ape = ape_logits(test, cache, w, hp, mask_full,
                              corrected_cache=cache, test_adapted=test).logits
        assert np.abs(same_ape - ape_logits(test, cache, w, hp, mask_full).logits).max() <= 1e-9

        # gamma_ape = 0 -> every reweighting factor is exactly 1
        flat = ape_logits(test, cache, w, hp.replace(gamma_ape=0.0), mask_full)
        assert np.all(flat.extras["ape_weights"] == 1.0)

        # full channel budget -> identity mask
        full_mask = ape_refine(w, hp.replace(channel_budget=test.dim))
        assert np.array_equal(full_mask.indices, np.arange(test.dim))

    announce(2, "degeneracy chain (alpha=0, gamma=0, identity adaptation, "
                "gamma_ape=0, Q=d) all within 1e-9")


def test_criterion_3_kernel_properties_and_pad_endpoints():
    """KL positivity, softmax shift invariance, affinity formula, PAD range."""
    rng = np.random.default_rng(11)
    for _ in range(200):
        p = softmax_rows(rng.standard_normal((1, 6)))[0]
        q = softmax_rows(rng.standard_normal((1, 6)))[0]
        assert kl_divergence(p, q) >= -1e-9
        assert abs(kl_divergence(p, p)) <= 1e-9

    z = rng.standard_normal((50, 8))
    shifted = z + rng.standard_normal((50, 1)) * 100
    assert np.abs(softmax_rows(z) - softmax_rows(shifted)).max() <= 1e-9

    sims = rng.uniform(-1, 1, size=(40, 40))
    for beta in (0.5, 2.0, 7.5):
        direct = np.exp(-beta * (1.0 - sims))
        assert np.abs(affinity(sims, beta) - direct).max() <= 1e-6

    xs = l2_normalize(rng.standard_normal((600, 16)))
    same = single_domain(xs)
    shuffled = single_domain(xs[rng.permutation(600)])
    pad_same = proxy_a_distance(same, shuffled, seed=0).pad
    assert pad_same <= 0.2

    north = l2_normalize(np.asarray([3.0, 0, 0]) + 0.3 * rng.standard_normal((300, 3)))
    south = l2_normalize(np.asarray([-3.0, 0, 0]) + 0.3 * rng.standard_normal((300, 3)))
    pad_split = proxy_a_distance(single_domain(north), single_domain(south), seed=0).pad
    assert pad_split >= 1.8

    announce(3, f"kernel properties hold; PAD endpoints {pad_same:.3f} <= 0.2 "
                f"and {pad_split:.3f} >= 1.8")


def test_criterion_4_overlap_metric_endpoints_and_rotation_invariance():
    """Area -> 1 on identical distributions, -> 0 on disjoint; rotation safe."""
    row = l2_normalize(np.ones((1, 8)))
    identical = EmbeddingSet(vectors=np.repeat(row, 12, axis=0),
                             labels=np.arange(12) % 2, class_names=("a", "b"),
                             normalized=True)
    area_full = imo_intersection(identical, seed=0).intersection_area
    assert area_full >= 0.999

    e1 = np.zeros((1, 4), dtype=np.float32)
    e1[0, 0] = 1.0
    antipodal = EmbeddingSet(
        vectors=np.vstack([np.repeat(e1, 6, axis=0), np.repeat(-e1, 6, axis=0)]),
        labels=np.repeat([0, 1], 6), class_names=("n", "s"), normalized=True)
    area_none = imo_intersection(antipodal, seed=0).intersection_area
    assert area_none <= 0.001

    spec = SynthSpec(num_classes=5, per_class=(10, 10, 40), dim=12, kappa=3.0,
                     rho=1.0, tau=0.3, seed=11)
    test = generate(spec).test
    base = imo_intersection(test, pairs_per_class=200, bins=200, seed=2)

    rot_rng = np.random.default_rng(21)
    signs = np.where(rot_rng.standard_normal(12) > 0, 1.0, -1.0).astype(np.float32)
    if int((signs < 0).sum()) % 2 == 1:
        signs[0] = -signs[0]
    perm = rot_rng.permutation(12)
    permuted = EmbeddingSet(vectors=(test.vectors * signs)[:, perm],
                            labels=test.labels, class_names=test.class_names,
                            normalized=True)
    diff_perm = abs(imo_intersection(permuted, pairs_per_class=200, bins=200,
                                     seed=2).intersection_area
                    - base.intersection_area)
    assert diff_perm <= 1e-6

    q, _ = np.linalg.qr(rot_rng.standard_normal((12, 12)))
    rotated = EmbeddingSet(vectors=l2_normalize(test.vectors.astype(np.float64) @ q),
                           labels=test.labels, class_names=test.class_names,
                           normalized=True)
    diff_dense = abs(imo_intersection(rotated, pairs_per_class=200, bins=200,
                                      seed=2).intersection_area
                     - base.intersection_area)
    assert diff_dense <= 1e-6

    announce(4, f"overlap endpoints {area_full:.4f} / {area_none:.4f}; rotation "
                f"diffs {diff_perm:.2e}, {diff_dense:.2e}")


def test_criterion_5_overlap_reduction_tracks_accuracy_gain():
    """>= 8 graded adaptation strengths, 5 seeds: r > 0.3 and positive top gain."""
    base_kappa = 2.5
    grades = (1.3, 1.8, 2.4, 3.2, 4.5, 6.0, 8.0, 12.0)
    hp = HyperParams(alpha=1.5, beta=5.5)
    mean_d_imo, mean_gain = [], []
    for grade in grades:
        d_imo, gain = [], []
        for seed in range(5):
            spec = SynthSpec(num_classes=8, per_class=(16, 8, 25), dim=24,
                             kappa=base_kappa, rho=1.0, tau=0.6, seed=seed)
            orig, adapted = generate_pair(spec, base_kappa * grade)
            d_imo.append(
                imo_intersection(orig.val, seed=0).intersection_area
                - imo_intersection(adapted.val, seed=0).intersection_area)
            shot_gains = []
            for k in (1, 2, 4):
                idx = sample_shots(orig.train, k, seed)
                cache_o = build_cache(orig.train, idx)
                cache_a = build_cache(adapted.train, idx)
                acc_ta = accuracy(
                    tip_adapter_logits(orig.test, cache_o, orig.weights, hp),
                    orig.test.labels)
                acc_pp = accuracy(
                    plusplus_logits(orig.test, adapted.test, cache_a, orig.weights,
                                    hp, variant="TA++", cache_orig=cache_o),
                    orig.test.labels)
                shot_gains.append(acc_pp - acc_ta)
            gain.append(float(np.mean(shot_gains)))
        mean_d_imo.append(float(np.mean(d_imo)))
        mean_gain.append(float(np.mean(gain)))

    r = pearson(np.asarray(mean_d_imo), np.asarray(mean_gain))
    assert r > 0.3
    assert mean_gain[-1] > 0.0
    announce(5, f"overlap-vs-gain correlation r = {r:.3f} > 0.3; "
                f"largest-grade mean gain = {mean_gain[-1]:.2f} > 0")


def test_criterion_6_run_determinism(tmp_path):
    """Identical config => byte-identical report JSON at 1 and many workers."""
    spec = SynthSpec(num_classes=4, per_class=(8, 6, 20), dim=16, kappa=4.0,
                     rho=1.0, tau=0.4, seed=13)
    orig, adapted = generate_pair(spec, 12.0)
    out = tmp_path / "data"
    paths = {k: str(v) for k, v in save_bundle(orig, out, source="det").items()}
    adapted_paths = save_bundle(adapted, out, source="det adapted",
                                encoder="adapted", suffix="_adapted")
    paths.update({f"{k}_adapted": str(v) for k, v in adapted_paths.items()})

    config = ExperimentConfig(
        dataset="determinism", paths=paths,
        methods=["zero-shot", "TA", "TX", "TA++", "TX++", "APE", "APE++"],
        shots=[1, 2], seeds=[0, 1],
        alpha_grid=[0.0, 1.0, 2.0], beta_grid=[2.0, 5.5], gamma_grid=[0.0, 1.0])
    first = run_experiment(config, workers=1).canonical_json()
    second = run_experiment(config, workers=1).canonical_json()
    many = run_experiment(config, workers=8).canonical_json()
    assert first == second == many
    announce(6, f"byte-identical reports across reruns and worker counts "
                f"({len(first)} bytes)")


def golden_fixture_reports(tmp_path):
    reports = []
    for i, seed in enumerate((101, 102, 103)):
        spec = SynthSpec(num_classes=4, per_class=(8, 6, 20), dim=16, kappa=4.0,
                         rho=1.0, tau=0.4, seed=seed)
        orig, adapted = generate_pair(spec, 12.0)
        out = tmp_path / f"golden_{i}"
        paths = {k: str(v) for k, v in save_bundle(orig, out, source="golden").items()}
        adapted_paths = save_bundle(adapted, out, source="golden adapted",
                                    encoder="adapted", suffix="_adapted")
        paths.update({f"{k}_adapted": str(v) for k, v in adapted_paths.items()})
        config = ExperimentConfig(
            dataset=f"synthetic_{chr(ord('a') + i)}", paths=paths,
            methods=["zero-shot", "TA", "TA++", "TX", "TX++", "APE", "APE++"],
            shots=[1, 2], seeds=[0], search=False,
            hyperparams=HyperParams(alpha=1.0, beta=5.5, gamma=0.5))
        reports.append(run_experiment(config))
    return reports


def test_criterion_7_markdown_layout_matches_golden(tmp_path):
    """Emitter reproduces the reference column structure bit-for-bit."""
    reports = golden_fixture_reports(tmp_path)
    table = markdown_table(reports)
    golden = (DATA_DIR / "golden_table1.md").read_text()
    assert table == golden
    announce(7, "markdown table matches the golden fixture byte-for-byte")
