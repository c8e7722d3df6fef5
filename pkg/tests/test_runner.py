import csv
import json
from pathlib import Path

import pytest

from syntaxprobe.errors import DataError
from syntaxprobe.metrics import EvalReport, LabelScore
from syntaxprobe.probe import TrainConfig
from syntaxprobe.runner import (
    LayerReport,
    SweepConfig,
    emit_report,
    reload_reports,
    run_layer_sweep,
    select_best,
)
from syntaxprobe.treebank import SplitSpec, parse_treebank, split_dataset

from conftest import majority_rate


def read_summary(path: Path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def small_sweep_config(corpus, out_dir, **overrides) -> SweepConfig:
    defaults = dict(
        task="pos",
        treebank_path=corpus.treebank_path,
        manifest_path=corpus.manifest_path,
        output_dir=out_dir,
        split=SplitSpec(seed=0),
        train_cfg=TrainConfig.for_task("pos", batch_size=256, max_epochs=200, seed=0),
    )
    defaults.update(overrides)
    return SweepConfig(**defaults)


@pytest.fixture(scope="module")
def finished_sweep(small_synth_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep_out")
    reports = run_layer_sweep(small_sweep_config(small_synth_corpus, out))
    return small_synth_corpus, out, reports


class TestSweep:
    def test_informative_layer_separates_from_noise(self, finished_sweep):
        # qualitative separation at this small scale; the tight +-0.05
        # bound runs on the bigger acceptance corpus
        corpus, _, reports = finished_sweep
        by_layer = {r.layer: r for r in reports}
        informative = by_layer[corpus.informative_layer].test_report.accuracy
        assert informative >= 0.9

        with open(corpus.treebank_path, encoding="utf-8") as fh:
            tb = parse_treebank(fh)
        _, _, test_tb = split_dataset(tb, SplitSpec(seed=0))
        majority = majority_rate(test_tb, "pos")
        for layer in range(corpus.n_layers):
            if layer == corpus.informative_layer:
                continue
            noise_acc = by_layer[layer].test_report.accuracy
            assert noise_acc <= informative - 0.25
            assert abs(noise_acc - majority) <= 0.2

    def test_outputs_exist(self, finished_sweep):
        corpus, out, reports = finished_sweep
        rows = read_summary(out / "summary.csv")
        assert len(rows) == corpus.n_layers
        assert [r["layer"] for r in rows] == ["0", "1", "2"]
        assert all(r["source"] == "pretrained" and r["task"] == "pos" for r in rows)
        for layer in range(corpus.n_layers):
            assert (out / f"layer_pretrained_{layer:03d}.json").exists()
            assert (out / f"epochs_pretrained_layer{layer:03d}.csv").exists()
        assert (out / "best_layer_per_label.csv").exists()
        assert (out / "best_layer_labels.tsv").exists()

    def test_best_layer_artifacts_consistent(self, finished_sweep):
        corpus, out, reports = finished_sweep
        best = select_best(reports)
        assert best.layer == corpus.informative_layer
        with open(out / "best_layer_per_label.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert sum(int(r["support"]) for r in rows) == best.test_report.n_items
        tsv_lines = (out / "best_layer_labels.tsv").read_text().splitlines()
        assert len(tsv_lines) == best.test_report.n_items

    def test_vocabulary_shared_across_layers(self, finished_sweep):
        _, out, reports = finished_sweep
        label_sets = []
        for r in reports:
            labels = {s.label for s in r.test_report.per_label if s.label != "OOV"}
            label_sets.append(labels)
        union = set().union(*label_sets)
        for r in reports:
            gold_support = {s.label for s in r.test_report.per_label if s.support > 0}
            assert gold_support <= union | {"OOV"}
        # same gold labels regardless of layer
        supports = [
            sorted((s.label, s.support) for s in r.test_report.per_label if s.support > 0)
            for r in reports
        ]
        assert all(s == supports[0] for s in supports)

    def test_baseline_runs_through_same_path(self, small_synth_corpus, tmp_path):
        cfg = small_sweep_config(
            small_synth_corpus, tmp_path / "out",
            layers=[0, 1],
            baseline_manifest_path=small_synth_corpus.manifest_path)
        reports = run_layer_sweep(cfg)
        rows = read_summary(tmp_path / "out" / "summary.csv")
        assert [(r["source"], r["layer"]) for r in rows] == [
            ("pretrained", "0"), ("pretrained", "1"), ("baseline", "0"), ("baseline", "1")]
        pre = {r.layer: r for r in reports if r.source == "pretrained"}
        base = {r.layer: r for r in reports if r.source == "baseline"}
        # identical feature source here, so identical results by determinism
        assert pre[1].test_report.accuracy == base[1].test_report.accuracy

    def test_failed_layer_is_isolated(self, small_synth_corpus, tmp_path):
        cfg = small_sweep_config(small_synth_corpus, tmp_path / "out", layers=[1, 99])
        reports = run_layer_sweep(cfg)
        by_layer = {r.layer: r for r in reports}
        assert by_layer[1].ok
        assert not by_layer[99].ok and "99" in by_layer[99].error
        rows = read_summary(tmp_path / "out" / "summary.csv")
        failed = next(r for r in rows if r["layer"] == "99")
        assert failed["dev_acc"] == "" and failed["test_acc"] == ""

    def test_empty_layer_list_rejected(self, small_synth_corpus, tmp_path):
        with pytest.raises(DataError, match="empty"):
            run_layer_sweep(small_sweep_config(small_synth_corpus, tmp_path / "o", layers=[]))

    def test_unknown_task_rejected(self, small_synth_corpus, tmp_path):
        with pytest.raises(DataError, match="task"):
            run_layer_sweep(small_sweep_config(small_synth_corpus, tmp_path / "o", task="lemma"))

    def test_dep_task_runs(self, small_synth_corpus, tmp_path):
        cfg = small_sweep_config(
            small_synth_corpus, tmp_path / "out", task="dep",
            layers=[1],
            train_cfg=TrainConfig.for_task("dep", batch_size=256, max_epochs=60, seed=0))
        reports = run_layer_sweep(cfg)
        assert reports[0].ok
        assert reports[0].test_report.n_items > 0


class TestEmitReport:
    @staticmethod
    def fake_report(layer, dev_acc, source="pretrained"):
        ev = EvalReport(accuracy=dev_acc, per_label=(LabelScore("A", 1, 1, 1, 5),),
                        n_items=5, oov_errors=0)
        return LayerReport(source=source, layer=layer, task="pos",
                           dev_report=ev, test_report=ev)

    def test_best_is_highest_dev_accuracy(self, tmp_path):
        reports = [self.fake_report(0, 0.50), self.fake_report(1, 0.52)]
        emit_report(reports, tmp_path)
        assert select_best(reports).layer == 1

    def test_tie_takes_lower_layer(self):
        reports = [self.fake_report(3, 0.7), self.fake_report(2, 0.7)]
        assert select_best(reports).layer == 2

    def test_baseline_not_selected_as_best(self):
        reports = [self.fake_report(0, 0.2), self.fake_report(5, 0.99, source="baseline")]
        assert select_best(reports).layer == 0

    def test_empty_reports_rejected(self, tmp_path):
        with pytest.raises(DataError):
            emit_report([], tmp_path)

    def test_reload_then_emit_reproduces_summary(self, finished_sweep):
        _, out, _ = finished_sweep
        original = (out / "summary.csv").read_bytes()
        reports = reload_reports(out)
        emit_report(reports, out)
        assert (out / "summary.csv").read_bytes() == original

    def test_reload_missing_dir(self, tmp_path):
        with pytest.raises(DataError):
            reload_reports(tmp_path)
