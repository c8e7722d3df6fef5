"""Layer-sweep orchestration and report emission.

One probe per (feature source, layer): build datasets, train on the
training split with early stopping on dev, evaluate on test. The label
vocabulary is built once from the training split and reused everywhere,
since labels do not depend on the layer. A failing layer is recorded and
skipped so one corrupt file cannot kill a whole sweep. The optional
baseline manifest (same audio through a randomly re-initialized encoder)
runs through exactly the same code path.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import deplabel, metrics, pooling, probe
from .deplabel import LabelVocab
from .errors import DataError
from .featurestore import Manifest
from .metrics import EvalReport
from .pooling import PoolCache, build_probe_dataset
from .treebank import SplitSpec, Treebank, filter_treebank, parse_treebank, split_dataset

PRETRAINED_SOURCE = "pretrained"
BASELINE_SOURCE = "baseline"

SUMMARY_NAME = "summary.csv"
BEST_LABEL_CSV = "best_layer_per_label.csv"
BEST_LABEL_TSV = "best_layer_labels.tsv"


@dataclass
class SweepConfig:
    task: str  # "pos" | "dep"
    treebank_path: Path
    manifest_path: Path
    output_dir: Path
    layers: list[int] | None = None  # None: every layer in the manifest
    train_cfg: probe.TrainConfig | None = None  # None: task defaults
    split: SplitSpec = field(default_factory=SplitSpec)
    baseline_manifest_path: Path | None = None
    tagset: set[str] | None = None
    cache_dir: Path | None = None
    jobs: int = 1
    save_models: bool = False


@dataclass
class LayerReport:
    source: str
    layer: int
    task: str
    dev_report: EvalReport | None = None
    test_report: EvalReport | None = None
    best_epoch: int | None = None
    epochs_run: int | None = None
    log_path: str | None = None
    wallclock_s: float = 0.0
    error: str | None = None
    # retained so emit_report can dump gold/pred labels for the best layer
    test_gold: list = field(default_factory=list, repr=False)
    test_pred: list = field(default_factory=list, repr=False)
    test_meta: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "layer": self.layer,
            "task": self.task,
            "dev": self.dev_report.to_dict() if self.dev_report else None,
            "test": self.test_report.to_dict() if self.test_report else None,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "log_path": self.log_path,
            "wallclock_s": self.wallclock_s,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LayerReport":
        return cls(
            source=data["source"], layer=data["layer"], task=data["task"],
            dev_report=EvalReport.from_dict(data["dev"]) if data.get("dev") else None,
            test_report=EvalReport.from_dict(data["test"]) if data.get("test") else None,
            best_epoch=data.get("best_epoch"), epochs_run=data.get("epochs_run"),
            log_path=data.get("log_path"), wallclock_s=data.get("wallclock_s", 0.0),
            error=data.get("error"),
        )


def _run_one_layer(
    source: str,
    layer: int,
    task: str,
    splits: tuple[Treebank, Treebank, Treebank],
    manifest: Manifest,
    vocab: LabelVocab,
    cfg: probe.TrainConfig,
    out_dir: Path,
    cache: PoolCache | None,
    save_model: bool,
) -> LayerReport:
    started = time.perf_counter()
    report = LayerReport(source=source, layer=layer, task=task)
    try:
        train_tb, dev_tb, test_tb = splits
        train_ds = build_probe_dataset(train_tb, manifest, layer, task, vocab, cache=cache)
        dev_ds = build_probe_dataset(dev_tb, manifest, layer, task, vocab, cache=cache)
        test_ds = build_probe_dataset(test_tb, manifest, layer, task, vocab, cache=cache)

        model, state = probe.train(train_ds, dev_ds, cfg)

        dev_pred = probe.predict(model, np.asarray(dev_ds.X, dtype=np.float64))
        test_pred = probe.predict(model, np.asarray(test_ds.X, dtype=np.float64))
        report.dev_report = metrics.evaluate(dev_pred, dev_ds.y, vocab, dev_ds.oov_mask)
        report.test_report = metrics.evaluate(test_pred, test_ds.y, vocab, test_ds.oov_mask)
        report.best_epoch = state.best_epoch
        report.epochs_run = state.epoch
        report.test_gold = list(test_ds.gold_labels)
        report.test_pred = [vocab.labels[i] for i in test_pred]
        report.test_meta = list(test_ds.meta or [])

        log_path = out_dir / f"epochs_{source}_layer{layer:03d}.csv"
        with open(log_path, "w", encoding="utf-8") as fh:
            probe.write_epoch_log(state.log, fh)
        report.log_path = log_path.name
        if save_model:
            probe.save_model(
                model, out_dir / f"model_{source}_layer{layer:03d}.spm",
                config=cfg, best_epoch=state.best_epoch,
                dev_accuracy=state.best_val_accuracy)
    except Exception as exc:  # a broken layer must not abort the sweep
        report.error = f"{type(exc).__name__}: {exc}"
    report.wallclock_s = time.perf_counter() - started
    return report


def run_layer_sweep(cfg: SweepConfig) -> list[LayerReport]:
    """Full sweep: parse, filter, split, then one probe per (source, layer)."""
    if cfg.task not in pooling.TASKS:
        raise DataError(f"unknown task {cfg.task!r}")
    with open(cfg.treebank_path, encoding="utf-8") as fh:
        raw = parse_treebank(fh)
    clean, _ = filter_treebank(raw, cfg.tagset)
    if len(clean) == 0:
        raise DataError("no utterance survived validation")
    splits = split_dataset(clean, cfg.split)
    vocab = deplabel.build_label_vocab(pooling.split_labels(splits[0], cfg.task))

    sources: list[tuple[str, Manifest]] = [(PRETRAINED_SOURCE, Manifest.load(cfg.manifest_path))]
    if cfg.baseline_manifest_path is not None:
        sources.append((BASELINE_SOURCE, Manifest.load(cfg.baseline_manifest_path)))

    train_cfg = cfg.train_cfg or probe.TrainConfig.for_task(cfg.task)
    cache = PoolCache.from_env(cfg.cache_dir)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = []
    for source, manifest in sources:
        layers = cfg.layers if cfg.layers is not None else list(range(manifest.common_layer_count()))
        if not layers:
            raise DataError("layer list is empty")
        for layer in layers:
            tasks.append((source, layer, manifest))

    def runner(args):
        source, layer, manifest = args
        return _run_one_layer(
            source, layer, cfg.task, splits, manifest, vocab,
            train_cfg, out_dir, cache, cfg.save_models)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            reports = list(pool.map(runner, tasks))
    else:
        reports = [runner(t) for t in tasks]

    emit_report(reports, out_dir)
    return reports


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(value)


def select_best(reports: list[LayerReport]) -> LayerReport | None:
    """Highest dev accuracy among successful pretrained rows; ties pick the lower layer."""
    candidates = [r for r in reports if r.ok and r.source == PRETRAINED_SOURCE and r.dev_report]
    if not candidates:
        return None
    return max(candidates, key=lambda r: (r.dev_report.accuracy, -r.layer))


def emit_report(reports: list[LayerReport], out_dir: str | Path) -> Path:
    """Write summary.csv, one JSON per layer, and the best layer's per-label CSV."""
    if not reports:
        raise DataError("no layer reports to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    ordered = sorted(reports, key=lambda r: (r.source != PRETRAINED_SOURCE, r.source, r.layer))
    summary = out_dir / SUMMARY_NAME
    with open(summary, "w", encoding="utf-8") as fh:
        fh.write("source,layer,task,dev_acc,test_acc\n")
        for r in ordered:
            dev = _fmt(r.dev_report.accuracy if r.dev_report else None)
            test = _fmt(r.test_report.accuracy if r.test_report else None)
            fh.write(f"{r.source},{r.layer},{r.task},{dev},{test}\n")

    for r in ordered:
        with open(out_dir / f"layer_{r.source}_{r.layer:03d}.json", "w", encoding="utf-8") as fh:
            json.dump(r.to_dict(), fh, indent=2)
            fh.write("\n")

    best = select_best(ordered)
    if best is not None and best.test_report is not None:
        with open(out_dir / BEST_LABEL_CSV, "w", encoding="utf-8") as fh:
            metrics.write_per_label_csv(best.test_report, fh)
        if best.test_meta:
            rows = [
                (utt_id, tok_index, gold, pred)
                for (utt_id, tok_index), gold, pred
                in zip(best.test_meta, best.test_gold, best.test_pred)
            ]
            with open(out_dir / BEST_LABEL_TSV, "w", encoding="utf-8") as fh:
                deplabel.write_label_tsv(fh, rows)
    return summary


def reload_reports(out_dir: str | Path) -> list[LayerReport]:
    """Rebuild LayerReports from the per-layer JSON files in a sweep directory."""
    out_dir = Path(out_dir)
    paths = sorted(out_dir.glob("layer_*.json"))
    if not paths:
        raise DataError(f"no layer_*.json reports found in {out_dir}")
    reports = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            reports.append(LayerReport.from_dict(json.load(fh)))
    return reports
