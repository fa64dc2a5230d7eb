"""CLI coverage for the extractor commands."""

import json

import pytest
from click.testing import CliRunner

from imoextract.cli import cli

from conftest import TINY, write_corpus


@pytest.fixture
def runner():
    return CliRunner()


def test_extract_images_command(runner, tmp_path):
    manifest = write_corpus(tmp_path, count=8, num_classes=2)
    out = tmp_path / "set.imoe"
    result = runner.invoke(cli, [
        "extract-images", "--manifest", str(manifest), "--encoder", TINY,
        "--out", str(out), "--class-names", "cat,dog"])
    assert result.exit_code == 0, result.output
    assert "(original)" in result.output
    assert out.exists()
    sidecar = json.loads((tmp_path / "set.imoe.manifest.json").read_text())
    assert sidecar["encoder"] == "original"


def test_extract_text_command(runner, tmp_path):
    out = tmp_path / "w.imoe"
    result = runner.invoke(cli, [
        "extract-text", "--classes", "ant,bee,cow", "--encoder", TINY,
        "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert out.exists()


def test_train_then_extract_adapted(runner, tmp_path):
    corpus = write_corpus(tmp_path, count=1000, num_classes=4)
    checkpoint = tmp_path / "adapter.pt"
    result = runner.invoke(cli, [
        "train-adapter", "--manifest", str(corpus), "--encoder", TINY,
        "--out", str(checkpoint), "--bottleneck", "8", "--dry-run"])
    assert result.exit_code == 0, result.output
    assert checkpoint.exists()

    probe = write_corpus(tmp_path, count=6, num_classes=2, name="probe")
    out = tmp_path / "adapted.imoe"
    result = runner.invoke(cli, [
        "extract-images", "--manifest", str(probe), "--encoder", TINY,
        "--adapter", str(checkpoint), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "(adapted)" in result.output
