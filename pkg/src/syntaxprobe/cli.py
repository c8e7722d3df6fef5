"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 data error (malformed inputs),
3 runtime error. The cache directory may be set with the
SYNTAXPROBE_CACHE_DIR environment variable or --cache-dir.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import deplabel, pooling, probe, runner
from .errors import DataError
from .featurestore import Manifest
from .pooling import PoolCache, build_probe_dataset
from .runner import SweepConfig
from .treebank import (
    SplitSpec,
    filter_treebank,
    parse_treebank,
    serialize_treebank,
    split_dataset,
    write_filter_log,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


def _read_treebank(path: str):
    with open(path, encoding="utf-8") as fh:
        return parse_treebank(fh)


def _read_tagset(path: str | None) -> set[str] | None:
    if path is None:
        return None
    with open(path, encoding="utf-8") as fh:
        tags = {line.strip() for line in fh if line.strip()}
    if not tags:
        raise DataError(f"tagset file {path} is empty")
    return tags


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise click.UsageError("--ratios expects three comma-separated fractions, e.g. 0.8,0.1,0.1")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise click.UsageError(f"unparsable ratios {text!r}") from None


def _parse_layers(text: str | None) -> list[int] | None:
    if text is None or text == "all":
        return None
    try:
        return [int(p) for p in text.split(",") if p != ""]
    except ValueError:
        raise click.UsageError(f"unparsable layer list {text!r}") from None


@click.group()
def cli():
    """Probe speech-encoder layers for POS and dependency structure."""


@cli.command()
@click.option("--treebank", "treebank_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--tagset", "tagset_path", type=click.Path(exists=True, dir_okay=False),
              help="Allowed POS tags, one per line.")
@click.option("--log-out", type=click.Path(dir_okay=False),
              help="Write the discard log here instead of stdout.")
def validate(treebank_path, tagset_path, log_out):
    """Validate a treebank; emit one JSON line per discarded utterance."""
    tb = _read_treebank(treebank_path)
    kept, log = filter_treebank(tb, _read_tagset(tagset_path))
    if log_out:
        with open(log_out, "w", encoding="utf-8") as fh:
            write_filter_log(log, fh)
    else:
        write_filter_log(log, sys.stdout)
    click.echo(f"kept {len(kept)} / {len(tb)} utterances", err=True)


@cli.command()
@click.option("--treebank", "treebank_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--tagset", "tagset_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def split(treebank_path, tagset_path, seed, ratios, out_dir):
    """Filter a treebank, then split it into train/dev/test CoNLL-U files."""
    train_frac, dev_frac, test_frac = _parse_ratios(ratios)
    spec = SplitSpec(train_frac, dev_frac, test_frac, seed)
    tb = _read_treebank(treebank_path)
    clean, log = filter_treebank(tb, _read_tagset(tagset_path))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if log:
        with open(out / "discarded.jsonl", "w", encoding="utf-8") as fh:
            write_filter_log(log, fh)
        click.echo(f"discarded {len(log)} invalid utterances "
                   f"(see {out / 'discarded.jsonl'})", err=True)
    parts = split_dataset(clean, spec)
    for name, part in zip(("train", "dev", "test"), parts):
        with open(out / f"{name}.conllu", "w", encoding="utf-8") as fh:
            serialize_treebank(part, fh)
        click.echo(f"{name}: {len(part)} utterances", err=True)


@cli.command()
@click.option("--treebank", "treebank_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--layer", required=True, type=int)
@click.option("--task", required=True, type=click.Choice(pooling.TASKS))
@click.option("--cache-dir", type=click.Path(file_okay=False),
              help="Overrides SYNTAXPROBE_CACHE_DIR.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              help="Also dump the pooled matrix and a gold-label TSV here.")
def pool(treebank_path, manifest_path, layer, task, cache_dir, out_dir):
    """Pool one layer of token vectors for a (already split) treebank file."""
    tb = _read_treebank(treebank_path)
    manifest = Manifest.load(manifest_path)
    cache = PoolCache.from_env(cache_dir)
    ds = build_probe_dataset(tb, manifest, layer, task, cache=cache)
    click.echo(
        f"pooled {len(ds)} tokens, dim {ds.X.shape[1]}, "
        f"{len(ds.vocab)} labels, {ds.fallback_count} nearest-frame fallbacks", err=True)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        from .featurestore import write_feature_file

        write_feature_file(out / f"pooled_{task}_layer{layer:03d}.spb", ds.X[np.newaxis])
        rows = [(uid, idx, gold, "") for (uid, idx), gold in zip(ds.meta, ds.gold_labels)]
        with open(out / f"labels_{task}_layer{layer:03d}.tsv", "w", encoding="utf-8") as fh:
            deplabel.write_label_tsv(fh, rows)


@cli.command()
@click.option("--treebank", "train_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Training split.")
@click.option("--dev", "dev_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Development split.")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--layer", required=True, type=int)
@click.option("--task", required=True, type=click.Choice(pooling.TASKS))
@click.option("--lr", type=float, help="Default: 0.005 for pos, 0.001 for dep.")
@click.option("--batch", default=1024, show_default=True, type=int)
@click.option("--patience", default=10, show_default=True, type=int)
@click.option("--min-delta", default=1e-4, show_default=True, type=float)
@click.option("--momentum", default=0.99, show_default=True, type=float)
@click.option("--max-epochs", default=1000, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--cache-dir", type=click.Path(file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def train(train_path, dev_path, manifest_path, layer, task, lr, batch, patience,
          min_delta, momentum, max_epochs, seed, cache_dir, out_dir):
    """Train one probe on one layer; write checkpoint and epoch log."""
    overrides = dict(batch_size=batch, patience_epochs=patience, min_delta=min_delta,
                     momentum=momentum, max_epochs=max_epochs, seed=seed)
    if lr is not None:
        overrides["learning_rate"] = lr
    cfg = probe.TrainConfig.for_task(task, **overrides)

    manifest = Manifest.load(manifest_path)
    cache = PoolCache.from_env(cache_dir)
    train_tb = _read_treebank(train_path)
    dev_tb = _read_treebank(dev_path)
    train_ds = build_probe_dataset(train_tb, manifest, layer, task, cache=cache)
    dev_ds = build_probe_dataset(dev_tb, manifest, layer, task, train_ds.vocab, cache=cache)

    model, state = probe.train(train_ds, dev_ds, cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe.save_model(model, out / f"model_{task}_layer{layer:03d}.spm", config=cfg,
                     best_epoch=state.best_epoch, dev_accuracy=state.best_val_accuracy)
    with open(out / f"epochs_{task}_layer{layer:03d}.csv", "w", encoding="utf-8") as fh:
        probe.write_epoch_log(state.log, fh)
    click.echo(
        f"best dev accuracy {state.best_val_accuracy:.4f} at epoch "
        f"{state.best_epoch} ({state.epoch} epochs run)", err=True)


@cli.command()
@click.option("--treebank", "treebank_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--task", required=True, type=click.Choice(pooling.TASKS))
@click.option("--baseline-manifest", "baseline_path",
              type=click.Path(exists=True, dir_okay=False),
              help="Second manifest with features from a randomly re-initialized encoder.")
@click.option("--layers", default="all", show_default=True,
              help="Comma-separated layer indices, or 'all'.")
@click.option("--tagset", "tagset_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--split-seed", default=0, show_default=True, type=int)
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True)
@click.option("--lr", type=float)
@click.option("--batch", default=1024, show_default=True, type=int)
@click.option("--patience", default=10, show_default=True, type=int)
@click.option("--min-delta", default=1e-4, show_default=True, type=float)
@click.option("--momentum", default=0.99, show_default=True, type=float)
@click.option("--max-epochs", default=1000, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int, help="Training seed.")
@click.option("--jobs", default=1, show_default=True, type=int,
              help="Concurrent layer trainings; keep 1 for readable logs.")
@click.option("--cache-dir", type=click.Path(file_okay=False))
@click.option("--save-models", is_flag=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def sweep(treebank_path, manifest_path, task, baseline_path, layers, tagset_path,
          split_seed, ratios, lr, batch, patience, min_delta, momentum, max_epochs,
          seed, jobs, cache_dir, save_models, out_dir):
    """Probe every layer (and the baseline, if given); write reports."""
    train_frac, dev_frac, test_frac = _parse_ratios(ratios)
    overrides = dict(batch_size=batch, patience_epochs=patience, min_delta=min_delta,
                     momentum=momentum, max_epochs=max_epochs, seed=seed)
    if lr is not None:
        overrides["learning_rate"] = lr
    cfg = SweepConfig(
        task=task,
        treebank_path=Path(treebank_path),
        manifest_path=Path(manifest_path),
        output_dir=Path(out_dir),
        layers=_parse_layers(layers),
        train_cfg=probe.TrainConfig.for_task(task, **overrides),
        split=SplitSpec(train_frac, dev_frac, test_frac, split_seed),
        baseline_manifest_path=Path(baseline_path) if baseline_path else None,
        tagset=_read_tagset(tagset_path),
        cache_dir=Path(cache_dir) if cache_dir else None,
        jobs=jobs,
        save_models=save_models,
    )
    reports = runner.run_layer_sweep(cfg)
    failures = [r for r in reports if not r.ok]
    for r in sorted(reports, key=lambda r: (r.source, r.layer)):
        if r.ok:
            click.echo(f"{r.source} layer {r.layer}: dev {r.dev_report.accuracy:.4f} "
                       f"test {r.test_report.accuracy:.4f}", err=True)
        else:
            click.echo(f"{r.source} layer {r.layer}: FAILED ({r.error})", err=True)
    click.echo(f"wrote {Path(out_dir) / runner.SUMMARY_NAME}", err=True)
    if failures:
        click.echo(f"{len(failures)} layer(s) failed; see layer JSON reports", err=True)


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="A sweep output directory containing layer_*.json files.")
def report(out_dir):
    """Regenerate summary.csv and the best layer's per-label CSV from layer JSONs."""
    reports = runner.reload_reports(out_dir)
    summary = runner.emit_report(reports, out_dir)
    best = runner.select_best(reports)
    if best is not None:
        click.echo(f"best layer: {best.layer} (dev accuracy "
                   f"{best.dev_report.accuracy:.4f})", err=True)
    click.echo(f"wrote {summary}", err=True)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as exc:  # e.g. --help
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_RUNTIME
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps everything to exit codes
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
