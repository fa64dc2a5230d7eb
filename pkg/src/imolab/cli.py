"""Command-line entry points.

`imolab` groups all subcommands; `gen-synth` is also installed standalone
because synthetic dataset generation is the usual first step.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from .harness import (
    EvalReport,
    ExperimentConfig,
    RobustnessTarget,
    StudyPair,
    imo_performance_study,
    robustness_run,
    run_experiment,
)
from .classifiers import HyperParams
from .metrics import (
    export_features_csv,
    feature_variance,
    imo_intersection,
    proxy_a_distance,
)
from .reports import csv_table, markdown_table
from .store import read_embedding_set, read_manifest, text_classifier_from_set
from .synth import SynthSpec, generate, generate_pair, save_bundle


@click.group()
def cli():
    """Training-free cache classifiers and intra-modal overlap analysis."""


@cli.command("gen-synth")
@click.option("--classes", type=int, required=True, help="Number of classes.")
@click.option("--per-class", type=str, required=True,
              help="Items per class, either one count or train,val,test.")
@click.option("--dim", type=int, required=True, help="Embedding dimension.")
@click.option("--kappa", type=float, required=True,
              help="Intra-class concentration (higher = tighter clusters).")
@click.option("--rho", type=float, default=1.0, show_default=True,
              help="Class-center dispersion in (0, 1].")
@click.option("--tau", type=float, default=0.1, show_default=True,
              help="Classifier-row noise scale.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@click.option("--kappa-adapted", type=float, default=None,
              help="Also emit an adapted twin with this concentration.")
def gen_synth(classes, per_class, dim, kappa, rho, tau, seed, out, kappa_adapted):
    """Generate seeded synthetic embedding datasets in IMOE format."""
    counts = [int(x) for x in per_class.split(",")]
    if len(counts) == 1:
        counts = counts * 3
    if len(counts) != 3:
        raise click.BadParameter("--per-class needs one count or train,val,test")
    spec = SynthSpec(num_classes=classes, per_class=tuple(counts), dim=dim,
                     kappa=kappa, rho=rho, tau=tau, seed=seed)
    source = f"synthetic seed={seed} kappa={kappa} rho={rho} tau={tau}"
    if kappa_adapted is None:
        bundle = generate(spec)
        written = save_bundle(bundle, out, source)
    else:
        original, adapted = generate_pair(spec, kappa_adapted)
        written = save_bundle(original, out, source)
        written.update(save_bundle(
            adapted, out, source + f" kappa_adapted={kappa_adapted}",
            encoder="adapted", suffix="_adapted"))
    for name, path in sorted(written.items()):
        click.echo(f"{name}: {path}")


@cli.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True, help="Report JSON path.")
@click.option("--markdown", "md_path", type=click.Path(), default=None)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
@click.option("--per-shot", is_flag=True, help="Emit per-shot tables.")
@click.option("--workers", type=int, default=1, show_default=True)
def run(config_path, out, md_path, csv_path, per_shot, workers):
    """Run the configured experiment and write the canonical report."""
    config = ExperimentConfig.from_file(config_path)
    report = run_experiment(config, workers=workers)
    report.to_json(out)
    click.echo(f"report: {out}")
    if md_path:
        Path(md_path).write_text(markdown_table([report], per_shot=per_shot))
        click.echo(f"markdown: {md_path}")
    if csv_path:
        Path(csv_path).write_text(csv_table([report], per_shot=per_shot))
        click.echo(f"csv: {csv_path}")


@cli.command("tables")
@click.argument("report_paths", nargs=-1, required=True,
                type=click.Path(exists=True))
@click.option("--markdown", "md_path", type=click.Path(), default=None)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
@click.option("--per-shot", is_flag=True)
def tables(report_paths, md_path, csv_path, per_shot):
    """Merge report JSON files into comparison tables."""
    reports = [EvalReport.from_json(p) for p in report_paths]
    if md_path:
        Path(md_path).write_text(markdown_table(reports, per_shot=per_shot))
        click.echo(f"markdown: {md_path}")
    if csv_path:
        Path(csv_path).write_text(csv_table(reports, per_shot=per_shot))
        click.echo(f"csv: {csv_path}")
    if not md_path and not csv_path:
        click.echo(markdown_table(reports, per_shot=per_shot), nl=False)


@cli.command("imo")
@click.option("--embeddings", type=click.Path(exists=True), required=True)
@click.option("--pairs-per-class", type=int, default=None)
@click.option("--bins", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "json_path", type=click.Path(), default=None)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
def imo(embeddings, pairs_per_class, bins, seed, json_path, csv_path):
    """Paired/unpaired similarity histogram intersection area."""
    es = read_embedding_set(embeddings)
    report = imo_intersection(es, pairs_per_class=pairs_per_class, bins=bins,
                              seed=seed)
    click.echo(f"intersection_area: {report.intersection_area:.4f}")
    if json_path:
        report.to_json(json_path)
    if csv_path:
        report.to_csv(csv_path)


@cli.command("pad")
@click.option("--source", type=click.Path(exists=True), required=True)
@click.option("--target", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--loss", type=click.Choice(["logistic", "hinge"]),
              default="logistic", show_default=True)
@click.option("--json", "json_path", type=click.Path(), default=None)
def pad(source, target, seed, loss, json_path):
    """Domain divergence between two embedding files."""
    report = proxy_a_distance(read_embedding_set(source),
                              read_embedding_set(target), seed=seed, loss=loss)
    click.echo(f"epsilon: {report.epsilon:.4f}  pad: {report.pad:.4f}")
    if json_path:
        report.to_json(json_path)


@cli.command("variance")
@click.option("--embeddings", type=click.Path(exists=True), required=True)
@click.option("--low-threshold", type=float, default=0.0005, show_default=True)
@click.option("--json", "json_path", type=click.Path(), default=None)
def variance(embeddings, low_threshold, json_path):
    """Per-dimension feature variance and the low-variance fraction."""
    es = read_embedding_set(embeddings)
    variances, fraction = feature_variance(es, low_threshold=low_threshold)
    click.echo(f"mean_variance: {variances.mean():.6f}  "
               f"low_variance_fraction: {fraction:.4f}")
    if json_path:
        Path(json_path).write_text(json.dumps({
            "variances": [float(v) for v in variances],
            "low_variance_fraction": fraction,
            "low_threshold": low_threshold,
        }, sort_keys=True, indent=2) + "\n")


@cli.command("export-features")
@click.option("--embeddings", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def export_features(embeddings, out):
    """Dump labels and features as CSV for external projection tools."""
    export_features_csv(read_embedding_set(embeddings), out)
    click.echo(f"csv: {out}")


@cli.command("robustness")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--target", "target_specs", type=str, multiple=True, required=True,
              help="name=test.imoe[:adapted=path][:mapping=path], repeatable.")
@click.option("--out", type=click.Path(), required=True)
@click.option("--workers", type=int, default=1, show_default=True)
def robustness(config_path, target_specs, out, workers):
    """Evaluate source-tuned methods on shifted target sets."""
    config = ExperimentConfig.from_file(config_path)
    targets = []
    for spec in target_specs:
        name, _, rest = spec.partition("=")
        parts = rest.split(":")
        test = read_embedding_set(parts[0])
        adapted = None
        mapping = None
        for extra in parts[1:]:
            key, _, value = extra.partition("=")
            if key == "adapted":
                adapted = read_embedding_set(value)
            elif key == "mapping":
                mapping = json.loads(Path(value).read_text())
            else:
                raise click.BadParameter(f"unknown target option {key!r}")
        targets.append(RobustnessTarget(name=name, test=test,
                                        test_adapted=adapted, mapping=mapping))
    report = robustness_run(config, targets, workers=workers)
    Path(out).write_text(report.canonical_json())
    click.echo(f"report: {out}")


@cli.command("imo-study")
@click.option("--spec", "spec_path", type=click.Path(exists=True), required=True,
              help="JSON listing dataset pairs and evaluation settings.")
@click.option("--out", type=click.Path(), required=True)
def imo_study(spec_path, out):
    """Correlate overlap reduction with the corrected-cache accuracy gain.

    The file holds {"pairs": [{"name", "train", "val", "test",
    "text_weights", "train_adapted", "val_adapted", "test_adapted"}...],
    "shots": [...], "seeds": [...], "hyperparams": {...}}; paths resolve
    relative to it.
    """
    spec_file = Path(spec_path)
    spec = json.loads(spec_file.read_text())
    base = spec_file.parent

    def load(rel: str):
        return read_embedding_set(base / rel)

    pairs = []
    for entry in spec["pairs"]:
        pairs.append(StudyPair(
            name=entry["name"],
            train=load(entry["train"]), val=load(entry["val"]),
            test=load(entry["test"]),
            w=text_classifier_from_set(load(entry["text_weights"])),
            train_adapted=load(entry["train_adapted"]),
            val_adapted=load(entry["val_adapted"]),
            test_adapted=load(entry["test_adapted"]),
        ))
    hp = HyperParams(**spec.get("hyperparams", {}))
    report = imo_performance_study(pairs, hp, shots=spec.get("shots", [1, 4]),
                                   seeds=spec.get("seeds", [0, 1, 2]))
    Path(out).write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    r_text = "degenerate" if report.degenerate else f"{report.pearson_r:.4f}"
    click.echo(f"pearson_r: {r_text}")


@cli.command("inspect")
@click.argument("path", type=click.Path(exists=True))
def inspect(path):
    """Validate an IMOE file and print its header summary."""
    es = read_embedding_set(path)
    click.echo(f"rows: {es.rows}")
    click.echo(f"dim: {es.dim}")
    click.echo(f"classes: {es.num_classes}")
    click.echo(f"normalized: {str(es.normalized).lower()}")
    counts = np.bincount(es.labels, minlength=es.num_classes)
    click.echo(f"per_class_min: {int(counts.min())}")
    click.echo(f"per_class_max: {int(counts.max())}")
    try:
        manifest = read_manifest(path)
    except FileNotFoundError:
        manifest = None
    if manifest:
        click.echo(f"encoder: {manifest['encoder']}")
        click.echo(f"sha256: {manifest['sha256']}")


def main():
    cli()


if __name__ == "__main__":
    main()
