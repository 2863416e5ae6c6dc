import json
import math
import os

import numpy as np
import pytest

from bandfuse.datasets import save_dataset
from bandfuse.errors import ConfigError, DataError
from bandfuse.kernels import KernelSpec
from bandfuse.pipeline import (
    ExperimentConfig,
    METHODS,
    PipelineContext,
    config_from_dict,
    load_config,
    per_class_accuracy,
    rank_kernels,
    run_full,
    run_grouper_scan,
    run_inter_method,
    run_intra_method,
)
from bandfuse.synth import make_synthetic


def small_config(**overrides):
    base = dict(
        seed=1,
        groupers=("clodd_c",),
        clodd_alphas=(0.5,),
        clodd_min_size=4,
        clodd_max_size=10,
        clodd_restarts=3,
        clodd_proposals_per_band=40,
        p_values=(1.01, math.inf),
        top_k_intra=(2,),
        top_k_inter=(1,),
        c_reg=0.3,
        save_models=False,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def small_ctx():
    ds, _ = make_synthetic(1, n_per_class=80, bands=24, classes=3, groups=4)
    cfg = small_config()
    ctx = PipelineContext(cfg, ds)
    for measure in cfg.measures():
        run_grouper_scan(ctx, "clodd_c", measure)
    return ctx


class TestConfig:
    def test_defaults_match_protocol(self):
        cfg = ExperimentConfig()
        assert cfg.clodd_alphas == tuple(round(0.1 * k, 1) for k in range(10))
        assert cfg.bg_thresholds == (0.90, 0.95, 0.98, 0.99)
        assert cfg.bg_max_size == 30
        assert cfg.clodd_gamma == 3.0
        assert (cfg.clodd_min_size, cfg.clodd_max_size) == (5, 20)
        assert len(cfg.sigmas) == 10
        assert cfg.p_values == (1.01, 2.0, 100.0, math.inf)

    def test_invalid_entries(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(groupers=("kmeans",))
        with pytest.raises(ConfigError):
            ExperimentConfig(methods=("M9",))
        with pytest.raises(ConfigError):
            ExperimentConfig(p_values=(0.5,))
        with pytest.raises(ConfigError):
            ExperimentConfig(top_k_intra=(11,))

    def test_config_file_round_trip(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(
            "[dataset]\npath = data.csv\n\n[split]\nseed = 9\n\n"
            "[clodd]\nalphas = 0.2,0.4\nmin_size = 3\n\n"
            "[mkl]\np_values = 2,inf\ntop_k_intra = 2,all\n\n"
            "[output]\ndir = out\n"
        )
        cfg = load_config(str(path))
        assert cfg.dataset_path == "data.csv"
        assert cfg.seed == 9
        assert cfg.clodd_alphas == (0.2, 0.4)
        assert cfg.p_values == (2.0, math.inf)
        assert cfg.top_k_intra == (2, "all")
        assert cfg.out_dir == "out"

    def test_unknown_section_and_key(self, tmp_path):
        bad1 = tmp_path / "bad1.ini"
        bad1.write_text("[nonsense]\nx = 1\n")
        with pytest.raises(ConfigError, match="section"):
            load_config(str(bad1))
        bad2 = tmp_path / "bad2.ini"
        bad2.write_text("[clodd]\nbogus = 1\n")
        with pytest.raises(ConfigError, match="bogus"):
            load_config(str(bad2))

    def test_unknown_dict_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            config_from_dict({"not_a_key": 1})

    def test_method_measures(self):
        cfg = ExperimentConfig(methods=("M1", "M2"))
        assert cfg.measures() == ("squared_euclidean",)
        assert ExperimentConfig().measures() == ("squared_euclidean", "correlation")


class TestGrouperScan:
    def test_scan_evaluates_every_setting(self):
        ds, _ = make_synthetic(3, n_per_class=60, bands=24, classes=3, groups=4)
        cfg = small_config(clodd_alphas=(0.2, 0.5, 0.8), seed=3)
        ctx = PipelineContext(cfg, ds)
        run_grouper_scan(ctx, "clodd_c", "squared_euclidean")
        evaluated = [
            e for e in ctx.scan_log
            if e.get("setting", "").startswith("alpha=") and "best_validation_accuracy" in e
        ]
        assert len(evaluated) == 3

    def test_single_setting_returned_without_comparison(self, small_ctx):
        part = small_ctx.partitions[("clodd_c", "squared_euclidean")]
        assert part is not None
        selected = [e for e in small_ctx.scan_log if "selected" in e]
        assert any(e["selected"] == "alpha=0.5" for e in selected)

    def test_bg_mean_threshold_scan(self):
        ds, _ = make_synthetic(4, n_per_class=60, bands=24, classes=3, groups=4)
        cfg = small_config(groupers=("bg_mean",), bg_thresholds=(0.9, 0.99), seed=4)
        ctx = PipelineContext(cfg, ds)
        part = run_grouper_scan(ctx, "bg_mean", "squared_euclidean")
        part.validate_cover()

    def test_infeasible_hierarchical_settings_skipped(self):
        ds, _ = make_synthetic(5, n_per_class=50, bands=24, classes=3, groups=4)
        cfg = small_config(groupers=("hierarchical",), seed=5)
        ctx = PipelineContext(cfg, ds)
        part = run_grouper_scan(ctx, "hierarchical", "correlation")
        assert part.feasible


class TestRankKernels:
    def test_ranking_length_and_order(self, small_ctx):
        ranked = rank_kernels(small_ctx, "clodd_c", "M1")
        assert len(ranked) == 10
        accs = [acc for _, acc in ranked]
        assert accs == sorted(accs, reverse=True)
        assert all(spec.family == "rbf" for spec, _ in ranked)

    def test_tie_break_smaller_sigma_first(self, small_ctx):
        ranked = rank_kernels(small_ctx, "clodd_c", "M2")
        for (s1, a1), (s2, a2) in zip(ranked[:-1], ranked[1:]):
            if a1 == a2:
                assert s1.sigma < s2.sigma

    def test_rerank_deterministic(self, small_ctx):
        small_ctx.rankings.pop(("clodd_c", "M1"), None)
        a = rank_kernels(small_ctx, "clodd_c", "M1")
        small_ctx.rankings.pop(("clodd_c", "M1"), None)
        b = rank_kernels(small_ctx, "clodd_c", "M1")
        assert a == b


class TestFusionRows:
    def test_intra_row_shape(self, small_ctx):
        rows = run_intra_method(small_ctx, "clodd_c")
        # per method: 1 top-1 SVM row + |topk| * |p| fusion rows
        expected = len(small_ctx.cfg.methods) * (1 + 1 * 2)
        assert len(rows) == expected
        svm_rows = [r for r in rows if r["trainer"] == "svm"]
        assert all(r["topk"] == "1" for r in svm_rows)
        for row in rows:
            assert 0.0 <= row["overall_acc"] <= 100.0
            assert len(row["per_class_acc"]) == 3

    def test_top1_linf_equals_top1_svm(self, small_ctx):
        from bandfuse.pipeline import _fusion_row

        ranked = rank_kernels(small_ctx, "clodd_c", "M1")
        top1 = [("M1", ranked[0][0])]
        svm_row, _ = _fusion_row(small_ctx, "clodd_c", ("M1",), top1, "svm", None, 1)
        linf_row, _ = _fusion_row(small_ctx, "clodd_c", ("M1",), top1, "linf_mkl", math.inf, 1)
        assert svm_row["overall_acc"] == linf_row["overall_acc"]

    def test_inter_scenarios_and_kernel_counts(self, small_ctx):
        rows = run_inter_method(small_ctx, "clodd_c")
        scenarios = {r["method"] for r in rows}
        assert scenarios == {"M1+M2+M3+M4", "M1+M2", "M3+M4", "M1+M3", "M2+M4"}
        four_way_top1 = [
            r for r in rows if r["method"] == "M1+M2+M3+M4" and r["topk"] == "1"
        ]
        assert all(len(r["kernels"]) == 4 for r in four_way_top1)

    def test_method_subset_skips_missing(self):
        ds, _ = make_synthetic(6, n_per_class=50, bands=24, classes=3, groups=4)
        cfg = small_config(methods=("M1", "M2"), seed=6)
        ctx = PipelineContext(cfg, ds)
        run_grouper_scan(ctx, "clodd_c", "squared_euclidean")
        rows = run_inter_method(ctx, "clodd_c")
        assert {r["method"] for r in rows} == {"M1+M2"}


class TestGuards:
    def test_selection_never_touches_test_rows(self, small_ctx):
        train = set(small_ctx.train_rows.tolist())
        val = set(small_ctx.val_rows.tolist())
        test = set(small_ctx.test_rows.tolist())
        assert not (train & test) and not (val & test)
        with pytest.raises(DataError, match="leaked"):
            small_ctx._assert_no_test_rows(small_ctx.test_rows[:1])

    def test_per_class_accuracy(self):
        pred = np.array([1, 2, 2, 3])
        truth = np.array([1, 2, 3, 3])
        accs = per_class_accuracy(pred, truth, 3)
        assert accs == [100.0, 100.0, 50.0]


class TestRunFullAndReports:
    def test_end_to_end_outputs(self, tmp_path):
        ds, _ = make_synthetic(7, n_per_class=60, bands=24, classes=3, groups=4)
        data_path = str(tmp_path / "d.csv")
        save_dataset(ds, data_path)
        out_dir = str(tmp_path / "out")
        cfg = small_config(
            dataset_path=data_path,
            out_dir=out_dir,
            seed=7,
            groupers=("clodd_c", "bg_mean"),
            save_models=True,
        )
        ctx, intra, inter, outputs = run_full(cfg)
        assert os.path.exists(outputs["intra_csv"])
        assert os.path.exists(outputs["inter_csv"])
        assert len(outputs["images"]) == 6  # 2 measures x 3 panels
        header = open(outputs["intra_csv"]).readline().strip().split(",")
        assert header == [
            "clustering", "method", "trainer", "p", "topk", "overall_acc",
            "class1_acc", "class2_acc", "class3_acc",
        ]
        log_kinds = {json.loads(line)["kind"] for line in open(outputs["log"])}
        assert {"config", "grouper_scan", "kernel_ranking", "report_row"} <= log_kinds
        model_paths = [r["model_path"] for r in intra + inter]
        assert all(p and os.path.exists(p) for p in model_paths)

    def test_byte_identical_reruns(self, tmp_path):
        ds, _ = make_synthetic(8, n_per_class=50, bands=24, classes=3, groups=4)
        data_path = str(tmp_path / "d.csv")
        save_dataset(ds, data_path)
        outputs = []
        for name in ("a", "b"):
            out_dir = str(tmp_path / name)
            cfg = small_config(dataset_path=data_path, out_dir=out_dir, seed=8)
            run_full(cfg)
            outputs.append(out_dir)
        for fname in ("intra.csv", "inter.csv"):
            a = open(os.path.join(outputs[0], fname), "rb").read()
            b = open(os.path.join(outputs[1], fname), "rb").read()
            assert a == b


class TestProvenance:
    def test_reported_accuracy_recomputable_from_artifacts(self, tmp_path):
        from bandfuse.datasets import load_dataset
        from bandfuse.modelio import load_ensemble

        ds, _ = make_synthetic(9, n_per_class=50, bands=24, classes=3, groups=4)
        data_path = str(tmp_path / "d.csv")
        save_dataset(ds, data_path)
        out_dir = str(tmp_path / "out")
        cfg = small_config(dataset_path=data_path, out_dir=out_dir, seed=9, save_models=True)
        ctx, intra, inter, outputs = run_full(cfg)

        split = {}
        for line in open(outputs["split"]):
            name, *idx = line.split()
            split[name] = np.array([int(t) for t in idx])
        reloaded = load_dataset(data_path)
        for row in (intra + inter)[:6]:
            model = load_ensemble(row["model_path"])
            pred = model.predict(reloaded)
            test = split["test"]
            acc = 100.0 * float(np.mean(pred[test] == reloaded.labels[test]))
            assert acc == pytest.approx(row["overall_acc"], abs=1e-9)

    def test_ten_alpha_scan_evaluates_ten_candidates(self):
        ds, _ = make_synthetic(10, n_per_class=40, bands=18, classes=2, groups=3)
        cfg = small_config(
            seed=10,
            clodd_alphas=tuple(round(0.1 * k, 1) for k in range(10)),
            clodd_min_size=4,
            clodd_max_size=8,
            methods=("M1",),
        )
        ctx = PipelineContext(cfg, ds)
        run_grouper_scan(ctx, "clodd_c", "squared_euclidean")
        evaluated = [
            e for e in ctx.scan_log
            if e.get("setting", "").startswith("alpha=") and "best_validation_accuracy" in e
        ]
        assert len(evaluated) == 10


def test_noncontiguous_groupers_run_end_to_end(tmp_path):
    ds, _ = make_synthetic(12, n_per_class=50, bands=24, classes=3, groups=4)
    data_path = str(tmp_path / "d.csv")
    save_dataset(ds, data_path)
    cfg = small_config(
        dataset_path=data_path,
        seed=12,
        groupers=("clodd_n", "hierarchical"),
        methods=("M1", "M4"),
        out_dir=str(tmp_path / "out"),
    )
    ctx, intra, inter, outputs = run_full(cfg)
    assert {r["clustering"] for r in intra} == {"clodd_n", "hierarchical"}
    part = ctx.partitions[("clodd_n", "squared_euclidean")]
    assert part.mode == "noncontiguous"
    part.validate_cover()
    assert os.path.exists(outputs["intra_csv"])
