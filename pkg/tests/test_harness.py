"""Harness protocol: sampling, search, experiment runs, robustness, study."""

import json

import numpy as np
import pytest

from imolab.classifiers import HyperParams
from imolab.harness import (
    EvalReport,
    ExperimentConfig,
    RobustnessTarget,
    SearchGrids,
    StudyPair,
    accuracy,
    grid_search,
    imo_performance_study,
    remap_to_source_classes,
    robustness_run,
    run_experiment,
    sample_shots,
)
from imolab.reports import csv_table, markdown_table
from imolab.store import EmbeddingSet, build_cache, l2_normalize
from imolab.synth import SynthSpec, generate, generate_pair, save_bundle

from conftest import random_cache, random_embedding_set


def make_dataset(tmp_path, spec, kappa_adapted=None, name="synth"):
    out = tmp_path / name
    if kappa_adapted is None:
        bundle = save_bundle(generate(spec), out, source=name)
        paths = {k: str(v) for k, v in bundle.items()}
    else:
        orig, adapted = generate_pair(spec, kappa_adapted)
        paths = {k: str(v) for k, v in save_bundle(orig, out, source=name).items()}
        adapted_paths = save_bundle(adapted, out, source=name + " adapted",
                                    encoder="adapted", suffix="_adapted")
        paths.update({f"{k}_adapted": str(v) for k, v in adapted_paths.items()})
    return paths


BASE_SPEC = SynthSpec(num_classes=4, per_class=(8, 6, 20), dim=16, kappa=4.0,
                      rho=1.0, tau=0.4, seed=13)


class TestSampleShots:
    def make_train(self, rng, per_class=6, num_classes=3):
        labels = np.repeat(np.arange(num_classes), per_class)
        return random_embedding_set(rng, per_class * num_classes, 8, num_classes,
                                    labels=labels)

    def test_full_class_returns_everything_ascending(self, rng):
        train = self.make_train(rng, per_class=4)
        idx = sample_shots(train, 4, seed=0)
        assert np.array_equal(idx, np.arange(12))

    def test_same_seed_is_deterministic(self, rng):
        train = self.make_train(rng, per_class=100)
        a = sample_shots(train, 5, seed=42)
        b = sample_shots(train, 5, seed=42)
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self, rng):
        train = self.make_train(rng, per_class=100)
        a = sample_shots(train, 5, seed=1)
        b = sample_shots(train, 5, seed=2)
        assert not np.array_equal(a, b)

    def test_frozen_selection_for_regression(self, rng):
        # pins the portable PRNG output; any algorithm change must show up here
        train = self.make_train(rng, per_class=10, num_classes=2)
        assert sample_shots(train, 3, seed=7).tolist() == [0, 7, 8, 10, 14, 16]

    def test_exactly_k_per_class(self, rng):
        train = self.make_train(rng, per_class=9, num_classes=4)
        idx = sample_shots(train, 2, seed=5)
        labels = train.labels[idx]
        assert np.array_equal(np.bincount(labels), [2, 2, 2, 2])
        assert len(np.unique(idx)) == 8

    def test_class_too_small_rejected(self, rng):
        train = self.make_train(rng, per_class=3)
        with pytest.raises(ValueError, match="needs"):
            sample_shots(train, 4, seed=0)


class TestAccuracy:
    def test_clear_margin_is_perfect(self):
        logits = np.eye(5) + 0.1
        assert accuracy(logits, np.arange(5)) == 100.0

    def test_uniform_logits_tie_break_to_class_zero(self):
        logits = np.ones((6, 3))
        assert accuracy(logits, np.zeros(6, dtype=int)) == 100.0
        assert accuracy(logits, np.full(6, 2)) == 0.0

    def test_counting(self):
        logits = np.zeros((10, 2))
        logits[:7, 1] = 1.0
        logits[7:, 0] = 1.0
        labels = np.ones(10, dtype=int)
        assert accuracy(logits, labels) == 70.0

    def test_row_mismatch_rejected(self):
        with pytest.raises(ValueError, match="row count"):
            accuracy(np.ones((3, 2)), np.zeros(4, dtype=int))


class TestGridSearch:
    def separable(self, rng=None):
        spec = SynthSpec(num_classes=4, per_class=(6, 10, 10), dim=16, kappa=50.0,
                         rho=1.0, tau=0.2, seed=21)
        return generate(spec)

    def test_single_point_grid_returns_it(self):
        bundle = self.separable()
        cache = build_cache(bundle.train, sample_shots(bundle.train, 2, 0))
        grids = SearchGrids(alpha=(1.25,), beta=(4.5,), gamma=(0.75,))
        hp, _ = grid_search("TA", bundle.val, cache, bundle.weights, grids,
                            HyperParams())
        assert (hp.alpha, hp.beta) == (1.25, 4.5)

    def test_tie_breaks_lexicographically(self):
        bundle = self.separable()
        cache = build_cache(bundle.train, sample_shots(bundle.train, 2, 0))
        # strongly separable: every candidate scores 100 -> smallest tuple wins
        grids = SearchGrids(alpha=(0.5, 0.25), beta=(4.0, 2.0), gamma=(1.0,))
        hp, acc = grid_search("TA", bundle.val, cache, bundle.weights, grids,
                              HyperParams())
        assert acc == 100.0
        assert (hp.alpha, hp.beta) == (0.25, 2.0)

    def test_pure_noise_cache_selects_alpha_zero(self, rng):
        spec = SynthSpec(num_classes=4, per_class=(6, 40, 10), dim=16, kappa=6.0,
                         rho=1.0, tau=0.4, seed=33)
        bundle = generate(spec)
        noise_cache = random_cache(rng, 4, 2, 16)
        hp, _ = grid_search("TA", bundle.val, noise_cache, bundle.weights,
                            SearchGrids(alpha=(0.0, 0.5, 1.0, 2.0), beta=(2.0, 5.0),
                                        gamma=(1.0,)),
                            HyperParams())
        assert hp.alpha == 0.0

    def test_zero_shot_needs_no_search(self):
        bundle = self.separable()
        hp, acc = grid_search("zero-shot", bundle.val, None, bundle.weights,
                              SearchGrids(), HyperParams())
        assert acc > 0.0

    def test_bridge_method_sweeps_gamma(self):
        bundle = self.separable()
        cache = build_cache(bundle.train, sample_shots(bundle.train, 2, 0))
        grids = SearchGrids(alpha=(0.5,), beta=(4.0,), gamma=(0.0, 0.5))
        hp, _ = grid_search("TX", bundle.val, cache, bundle.weights, grids,
                            HyperParams())
        assert hp.gamma in (0.0, 0.5)


class TestRunExperiment:
    def config(self, paths, **kw):
        defaults = dict(dataset="synth", paths=paths,
                        methods=["zero-shot", "TA"], shots=[1, 2], seeds=[0, 1],
                        alpha_grid=[0.0, 0.5, 1.0, 2.0], beta_grid=[2.0, 5.5],
                        gamma_grid=[0.0, 0.5, 1.0])
        defaults.update(kw)
        return ExperimentConfig(**defaults)

    def test_zero_shot_rows_are_constant(self, tmp_path):
        paths = make_dataset(tmp_path, BASE_SPEC)
        report = run_experiment(self.config(paths, methods=["zero-shot"]))
        values = {report.accuracies["zero-shot"][str(k)][str(s)]
                  for k in (1, 2) for s in (0, 1)}
        assert len(values) == 1

    def test_searched_cache_method_beats_zero_shot_on_separable_data(self, tmp_path):
        spec = SynthSpec(num_classes=8, per_class=(20, 12, 20), dim=32, kappa=40.0,
                         rho=1.0, tau=0.5, seed=17)
        paths = make_dataset(tmp_path, spec, name="separable")
        report = run_experiment(self.config(paths, shots=[16], seeds=[0]))
        assert report.per_method["TA"] >= report.per_method["zero-shot"]

    def test_forcing_alpha_gamma_zero_reproduces_zero_shot(self, tmp_path):
        paths = make_dataset(tmp_path, BASE_SPEC, kappa_adapted=12.0)
        config = self.config(
            paths, methods=["zero-shot", "TA", "TX", "TA++", "TX++", "APE", "APE++"],
            search=False,
            hyperparams=HyperParams(alpha=0.0, gamma=0.0))
        report = run_experiment(config)
        zero = report.per_method["zero-shot"]
        for method in config.methods:
            assert report.per_method[method] == zero

    def test_aggregates_match_recomputation(self, tmp_path):
        paths = make_dataset(tmp_path, BASE_SPEC)
        report = run_experiment(self.config(paths))
        for method in report.methods:
            for k in report.shots:
                cell_mean = np.mean([report.accuracies[method][str(k)][str(s)]
                                     for s in report.seeds])
                assert report.per_shot[method][str(k)] == pytest.approx(cell_mean, abs=1e-9)
            shot_mean = np.mean([report.per_shot[method][str(k)] for k in report.shots])
            assert report.per_method[method] == pytest.approx(shot_mean, abs=1e-9)

    def test_fail_fast_on_oversized_shot(self, tmp_path):
        paths = make_dataset(tmp_path, BASE_SPEC)
        with pytest.raises(ValueError, match="exceeds smallest class"):
            run_experiment(self.config(paths, shots=[64]))

    def test_plusplus_without_adapted_files_rejected(self, tmp_path):
        paths = make_dataset(tmp_path, BASE_SPEC)
        with pytest.raises(ValueError, match="adapted"):
            run_experiment(self.config(paths, methods=["TA++"]))

    def test_worker_count_does_not_change_results(self, tmp_path):
        paths = make_dataset(tmp_path, BASE_SPEC, kappa_adapted=12.0)
        config = self.config(paths, methods=["zero-shot", "TA", "TX++"])
        single = run_experiment(config, workers=1)
        parallel = run_experiment(config, workers=4)
        assert single.canonical_json() == parallel.canonical_json()

    def test_report_round_trips_through_json(self, tmp_path):
        paths = make_dataset(tmp_path, BASE_SPEC)
        report = run_experiment(self.config(paths))
        path = tmp_path / "report.json"
        report.to_json(path)
        back = EvalReport.from_json(path)
        assert back.canonical_json() == report.canonical_json()

    def test_attachments_include_overlap_metrics(self, tmp_path):
        paths = make_dataset(tmp_path, BASE_SPEC, kappa_adapted=12.0)
        config = self.config(paths, methods=["zero-shot"], attach_metrics=True)
        report = run_experiment(config)
        assert "imo" in report.attachments
        orig_area = report.attachments["imo"]["original"]["intersection_area"]
        adapted_area = report.attachments["imo"]["adapted"]["intersection_area"]
        assert orig_area > adapted_area

    def test_config_file_round_trip(self, tmp_path):
        paths = make_dataset(tmp_path, BASE_SPEC)
        rel_paths = {k: str(v).replace(str(tmp_path) + "/", "")
                     for k, v in paths.items()}
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({
            "dataset": "synth", "paths": rel_paths,
            "methods": ["zero-shot"], "shots": [1], "seeds": [0],
        }))
        config = ExperimentConfig.from_file(config_path)
        config.validate()
        report = run_experiment(config)
        assert report.dataset == "synth"


class TestRobustness:
    def test_source_test_as_target_matches_source_numbers(self, tmp_path):
        paths = make_dataset(tmp_path, BASE_SPEC)
        config = ExperimentConfig(
            dataset="synth", paths=paths, methods=["zero-shot", "TA"],
            shots=[2], seeds=[0], alpha_grid=[0.5, 1.0], beta_grid=[4.0],
            gamma_grid=[0.5])
        source_test = generate(BASE_SPEC).test
        result = robustness_run(config, [RobustnessTarget(name="same", test=source_test)])
        assert result.targets["same"].accuracies == result.source.accuracies

    def test_noise_degrades_monotonically(self, tmp_path):
        spec = SynthSpec(num_classes=6, per_class=(16, 8, 40), dim=16, kappa=8.0,
                         rho=1.0, tau=0.3, seed=23)
        paths = make_dataset(tmp_path, spec, name="robust")
        bundle = generate(spec)
        rng = np.random.default_rng(0)

        def noisy(scale):
            vectors = l2_normalize(bundle.test.vectors.astype(np.float64)
                                   + scale * rng.standard_normal(bundle.test.vectors.shape))
            return EmbeddingSet(vectors=vectors, labels=bundle.test.labels,
                                class_names=bundle.test.class_names, normalized=True)

        config = ExperimentConfig(
            dataset="robust", paths=paths, methods=["TA"], shots=[4], seeds=[0],
            alpha_grid=[1.0], beta_grid=[5.5], gamma_grid=[1.0], search=False)
        result = robustness_run(config, [
            RobustnessTarget(name="mild", test=noisy(0.05)),
            RobustnessTarget(name="harsh", test=noisy(0.8)),
        ])
        source_acc = result.source.per_method["TA"]
        mild_acc = result.targets["mild"].per_method["TA"]
        harsh_acc = result.targets["harsh"].per_method["TA"]
        assert mild_acc >= harsh_acc
        assert source_acc >= harsh_acc

    def test_class_name_mapping(self, tmp_path):
        bundle = generate(BASE_SPEC)
        renamed = EmbeddingSet(
            vectors=bundle.test.vectors, labels=bundle.test.labels,
            class_names=tuple(f"alias_{n}" for n in bundle.test.class_names),
            normalized=True)
        mapping = {f"alias_{n}": n for n in bundle.test.class_names}
        mapped = remap_to_source_classes(renamed, bundle.test.class_names, mapping)
        assert np.array_equal(mapped.labels, bundle.test.labels)
        assert mapped.class_names == bundle.test.class_names

    def test_unmappable_class_rejected(self, tmp_path):
        bundle = generate(BASE_SPEC)
        renamed = EmbeddingSet(
            vectors=bundle.test.vectors, labels=bundle.test.labels,
            class_names=tuple(f"mystery_{i}" for i in range(bundle.test.num_classes)),
            normalized=True)
        with pytest.raises(ValueError, match="unmappable"):
            remap_to_source_classes(renamed, bundle.test.class_names)


class TestStudy:
    def make_pair(self, seed, kappa_adapted):
        spec = SynthSpec(num_classes=6, per_class=(8, 6, 20), dim=16, kappa=2.5,
                         rho=1.0, tau=0.6, seed=seed)
        orig, adapted = generate_pair(spec, kappa_adapted)
        return StudyPair(
            name=f"pair_{seed}", train=orig.train, val=orig.val, test=orig.test,
            w=orig.weights, train_adapted=adapted.train, val_adapted=adapted.val,
            test_adapted=adapted.test)

    def test_identical_pairs_flag_degenerate(self):
        spec = SynthSpec(num_classes=4, per_class=(6, 6, 10), dim=12, kappa=3.0,
                         rho=1.0, tau=0.3, seed=3)
        bundle = generate(spec)
        pair = StudyPair(name="flat", train=bundle.train, val=bundle.val,
                         test=bundle.test, w=bundle.weights,
                         train_adapted=bundle.train, val_adapted=bundle.val,
                         test_adapted=bundle.test)
        report = imo_performance_study([pair, pair, pair], HyperParams(),
                                       shots=[1], seeds=[0])
        assert report.degenerate
        assert report.pearson_r is None

    def test_graded_adaptation_correlates(self):
        pairs = [self.make_pair(seed, ka)
                 for seed, ka in enumerate([3.0, 6.0, 12.0, 25.0])]
        report = imo_performance_study(pairs, HyperParams(alpha=1.5, beta=5.5),
                                       shots=[1, 2], seeds=[0])
        assert not report.degenerate
        assert report.pearson_r > 0.3
        assert report.slope > 0.0

    def test_too_few_pairs_rejected(self):
        pair = self.make_pair(0, 5.0)
        with pytest.raises(ValueError, match="3 dataset pairs"):
            imo_performance_study([pair, pair], HyperParams(), shots=[1], seeds=[0])


class TestEmitters:
    def reports(self, tmp_path):
        out = []
        for i, seed in enumerate((13, 14)):
            spec = SynthSpec(num_classes=4, per_class=(8, 6, 20), dim=16,
                             kappa=4.0, rho=1.0, tau=0.4, seed=seed)
            paths = make_dataset(tmp_path, spec, kappa_adapted=12.0,
                                 name=f"ds_{i}")
            config = ExperimentConfig(
                dataset=f"ds_{i}", paths=paths,
                methods=["zero-shot", "TA", "TA++"], shots=[1, 2], seeds=[0],
                search=False, hyperparams=HyperParams(alpha=1.0, beta=5.5))
            out.append(run_experiment(config))
        return out

    def test_markdown_layout(self, tmp_path):
        reports = self.reports(tmp_path)
        table = markdown_table(reports)
        lines = table.strip().splitlines()
        header = [c.strip() for c in lines[0].strip("|").split("|")]
        assert header == ["Dataset", "Zero-Shot", "Tip-Adapter (TA)",
                          "Tip-Adapter++ (TA++)", "Δ (TA++, TA)"]
        assert len(lines) == 2 + 2 + 1  # header, rule, two datasets, average
        assert lines[-1].startswith("| Average |")

    def test_per_shot_layout(self, tmp_path):
        reports = self.reports(tmp_path)
        table = markdown_table(reports, per_shot=True)
        lines = table.strip().splitlines()
        assert "Shots" in lines[0]
        assert len(lines) == 2 + 4 + 2  # header, rule, 2x2 dataset rows, 2 averages

    def test_csv_matches_markdown_columns(self, tmp_path):
        import csv as csv_module
        import io
        reports = self.reports(tmp_path)
        header = next(csv_module.reader(io.StringIO(csv_table(reports))))
        assert header == ["Dataset", "Zero-Shot", "Tip-Adapter (TA)",
                          "Tip-Adapter++ (TA++)", "Δ (TA++, TA)"]
