"""Command-line entry points for extraction and adapter training."""

from __future__ import annotations

import click

from .extract import ExtractJob, extract_images, extract_text
from .train import AdapterTrainConfig, train_bottleneck_adapter


@click.group()
def cli():
    """Encode images and class prompts into IMOE embedding files."""


@cli.command("extract-images")
@click.option("--manifest", type=click.Path(exists=True), required=True,
              help="TSV of image path <TAB> label.")
@click.option("--encoder", required=True,
              help="Backbone spec: random:<preset>:<seed> or checkpoint path.")
@click.option("--adapter", "adapter_checkpoint", type=click.Path(exists=True),
              default=None, help="Adapter checkpoint; switches mode to adapted.")
@click.option("--out", type=click.Path(), required=True)
@click.option("--class-names", default=None,
              help="Comma-separated names; defaults to class_<index>.")
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--source", default="image extraction", show_default=True)
def extract_images_cmd(manifest, encoder, adapter_checkpoint, out, class_names,
                       batch_size, source):
    """Encode manifest images into an IMOE file."""
    job = ExtractJob(
        manifest=manifest, encoder=encoder, out=out,
        class_names=class_names.split(",") if class_names else [],
        adapter_checkpoint=adapter_checkpoint, batch_size=batch_size,
        source=source)
    path = extract_images(job)
    click.echo(f"embeddings: {path} ({job.mode})")


@cli.command("extract-text")
@click.option("--classes", required=True, help="Comma-separated class names.")
@click.option("--template", default="A photo of a {class}", show_default=True)
@click.option("--encoder", required=True)
@click.option("--out", type=click.Path(), required=True)
def extract_text_cmd(classes, template, encoder, out):
    """Encode one prompt per class into a classifier IMOE file."""
    path = extract_text(classes.split(","), template, encoder, out)
    click.echo(f"classifier: {path}")


@cli.command("train-adapter")
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--encoder", required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--bottleneck", type=int, default=64, show_default=True)
@click.option("--learning-rate", type=float, default=5e-3, show_default=True)
@click.option("--epochs", type=int, default=1, show_default=True)
@click.option("--augmentations", type=int, default=10, show_default=True,
              help="Augmented passes per sample per epoch.")
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--dry-run", is_flag=True,
              help="Skip optimization; emit identity-initialized adapters.")
@click.option("--min-images", type=int, default=1000, show_default=True)
def train_adapter_cmd(manifest, encoder, out, bottleneck, learning_rate, epochs,
                      augmentations, batch_size, seed, dry_run, min_images):
    """Fine-tune vision-tower adapters on a labeled corpus."""
    config = AdapterTrainConfig(
        manifest=manifest, encoder=encoder, out=out, bottleneck=bottleneck,
        learning_rate=learning_rate, epochs=epochs, augmentations=augmentations,
        batch_size=batch_size, seed=seed, dry_run=dry_run, min_images=min_images)
    path = train_bottleneck_adapter(config)
    click.echo(f"checkpoint: {path}")


def main():
    cli()


if __name__ == "__main__":
    main()
