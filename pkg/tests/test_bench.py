import json
from dataclasses import replace

import numpy as np
import pytest

from fsood.bench import (
    PIPELINES,
    BenchReport,
    bundle_digest,
    emit_report,
    report_csv,
    run_benchmark,
    variant_divergence_witness,
)
from fsood.config import ALL_METHODS, FUSED_VARIANTS, RunConfig
from fsood.core import validate_bundle
from fsood.errors import ConfigError, FSOODError
from fsood.evaluation import auroc
from fsood.io import save_bundle
from fsood.knn import build_index, knn_score_batch
from fsood.synth import SynthConfig, synth_bundle


class TestSynth:
    def test_valid_and_shaped(self, default_bundle):
        validate_bundle(default_bundle)
        cfg = SynthConfig()
        assert default_bundle.train_orig.shape == (cfg.n_classes * cfg.train_per_class, cfg.d_o)
        assert default_bundle.id_test_ft.shape == (cfg.n_classes * cfg.test_per_class, cfg.d_ft)
        assert default_bundle.train_orig.dtype == np.float32
        assert default_bundle.train_labels.dtype == np.int64
        assert [s.name for s in default_bundle.ood_sets] == ["ood0", "ood1"]

    def test_deterministic(self):
        assert bundle_digest(synth_bundle()) == bundle_digest(synth_bundle())
        assert bundle_digest(synth_bundle()) != bundle_digest(synth_bundle(SynthConfig(seed=8)))

    def test_orig_stream_detects_better(self, default_bundle):
        b = default_bundle

        def stream_auroc(stream):
            index = build_index(getattr(b, f"train_{stream}"))
            ids = knn_score_batch(index, getattr(b, f"id_test_{stream}"))
            return np.mean([auroc(ids, knn_score_batch(index, getattr(s, stream))) for s in b.ood_sets])

        assert stream_auroc("orig") > stream_auroc("ft")

    def test_invalid(self):
        with pytest.raises(ConfigError):
            SynthConfig(n_classes=1)
        with pytest.raises(ConfigError):
            SynthConfig(noise=0.0)


class TestGrid:
    def test_complete(self, small_bundle):
        rep = run_benchmark(small_bundle, shots=(2, 4))
        assert set(rep.grid) == {(s, p) for s in (2, 4) for p in PIPELINES}
        for cell in rep.grid.values():
            assert cell.methods == list(ALL_METHODS)
            assert all(set(v) == {"ood0", "ood1"} for v in cell.cells.values())
            assert 0.0 <= cell.id_accuracy <= 1.0
        assert set(rep.variants) == {(s, v) for s in (2, 4) for v in FUSED_VARIANTS}

    def test_single_method(self, small_bundle):
        rep = run_benchmark(small_bundle, shots=(2,), methods=["energy"])
        assert all(c.methods == ["energy"] for c in rep.grid.values())

    def test_configured_variant_feeds_knn(self, small_bundle):
        for v in FUSED_VARIANTS:
            rep = run_benchmark(small_bundle, shots=(2,), methods=["knn"], cfg=RunConfig(variant=v))
            assert rep.cell(2, "dsgf").cells["knn"] == rep.variants[(2, v)]

    def test_supplied_logits(self, small_bundle):
        cfg = RunConfig(ft_logits="supplied", methods=("msp",))
        rep = run_benchmark(small_bundle, shots=(2, 4), cfg=cfg)
        # supplied logits do not depend on the few-shot subset
        assert rep.cell(2, "baseline-ft").cells == rep.cell(4, "baseline-ft").cells

    def test_supplied_logits_missing(self, small_bundle):
        b = replace(small_bundle, id_test_logits=None)
        with pytest.raises(FSOODError, match="shot=2 pipeline=baseline-ft"):
            run_benchmark(b, shots=(2,), cfg=RunConfig(ft_logits="supplied"))

    def test_error_names_cell(self, small_bundle):
        with pytest.raises(FSOODError, match="shot=16"):
            run_benchmark(small_bundle, shots=(2, 16))

    def test_bad_arguments(self, small_bundle):
        with pytest.raises(ConfigError):
            run_benchmark(small_bundle, shots=())
        with pytest.raises(ConfigError):
            run_benchmark(small_bundle, pipelines=("oracle",))
        with pytest.raises(ConfigError, match="valid variants"):
            run_benchmark(small_bundle, variants=("sum",))
        with pytest.raises(FSOODError, match="valid methods"):
            run_benchmark(small_bundle, methods=["foo"])

    def test_manifest_source(self, small_bundle, tmp_path):
        manifest = save_bundle(small_bundle, tmp_path / "b")
        a = run_benchmark(manifest, shots=(2,))
        b = run_benchmark(small_bundle, shots=(2,))
        assert a.metadata["bundle_sha256"] == b.metadata["bundle_sha256"]
        assert a.metadata["source"]["kind"] == "manifest"
        assert {k: v.cells for k, v in a.grid.items()} == {k: v.cells for k, v in b.grid.items()}

    def test_metadata(self, small_bundle):
        rep = run_benchmark(small_bundle, shots=(2,), cfg=RunConfig(seed=5), timestamp="2026-01-01T00:00:00+00:00")
        m = rep.metadata
        assert m["seed"] == 5 and m["shots"] == [2] and m["ood_sets"] == ["ood0", "ood1"]
        assert m["timestamp"] == "2026-01-01T00:00:00+00:00"
        assert len(m["config_hash"]) == 64
        other = run_benchmark(small_bundle, shots=(2,), cfg=RunConfig(seed=6))
        assert other.metadata["config_hash"] != m["config_hash"]


TINY = SynthConfig(n_classes=3, train_per_class=6, test_per_class=8, d_o=4, d_ft=4, n_ood=10, seed=2)


@pytest.fixture(scope="module")
def report():
    return run_benchmark(TINY, shots=(2,))


class TestEmit:
    def test_json_round_trip(self, report, tmp_path):
        emit_report(report, "json", tmp_path / "r.json")
        d = json.loads((tmp_path / "r.json").read_text())
        assert set(d) == {"metadata", "grid", "fused_knn_variants", "variant_witness"}
        back = BenchReport.from_dict(d)
        emit_report(back, "json", tmp_path / "r2.json")
        assert (tmp_path / "r.json").read_bytes() == (tmp_path / "r2.json").read_bytes()

    def test_csv_rows(self, report, tmp_path):
        emit_report(report, "csv", tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "shot,pipeline,method,ood_set,fpr95,auroc"
        assert len(lines) == 1 + len(PIPELINES) * len(ALL_METHODS) * 2
        assert report_csv(report) == (tmp_path / "r.csv").read_text()

    def test_reemission_identical(self, tmp_path):
        for i in range(2):
            emit_report(run_benchmark(TINY, shots=(2,)), "json", tmp_path / f"{i}.json")
        assert (tmp_path / "0.json").read_bytes() == (tmp_path / "1.json").read_bytes()

    def test_bad_format(self, report, tmp_path):
        with pytest.raises(ConfigError):
            emit_report(report, "xml", tmp_path / "r.xml")


def test_witness():
    w = variant_divergence_witness()
    assert w["orderings_agree"] is False
    assert w["more_ood"]["normalize-then-concat"] == "A"
    assert w["more_ood"]["score-sum"] == "B"
    assert w["scores"]["normalize-then-concat"]["A"] == pytest.approx(-0.5)
    assert w["scores"]["normalize-then-concat"]["B"] == pytest.approx(-np.sqrt(0.5))
    assert w["scores"]["score-sum"]["A"] == pytest.approx(-2.0)
    assert w["scores"]["score-sum"]["B"] == pytest.approx(-np.sqrt(2.0))


def test_default_bundle_ordering_at_two_and_four_shots():
    rep = run_benchmark(None, shots=(2, 4), methods=["knn"])
    for shot in (2, 4):
        knn = {p: rep.cell(shot, p).averages()["knn"]["auroc"] for p in PIPELINES}
        assert knn["baseline-orig"] > knn["baseline-ft"]
        assert knn["dsgf"] >= max(knn["baseline-orig"], knn["baseline-ft"]) - 0.02
