"""Experiment protocol: grouper parameter scans driven by validation
accuracy, per-method kernel ranking, intra- and inter-method fusion, and
deterministic report emission.

Row-set discipline: parameter selection (grouper scans, kernel ranking)
fits on the training rows and scores on the validation rows; final models
are refit on train+validation and scored once on the held-out test rows.
Dissimilarity matrices are computed on train+validation only.
"""

from __future__ import annotations

import configparser
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .datasets import (
    HsiDataset,
    SplitSpec,
    apply_band_exclusion,
    filter_classes,
    load_dataset,
    make_split,
)
from .errors import ConfigError, DataError
from .features import FeatureMatrix, extract_group_means, standardize
from .grouping import (
    BandPartition,
    CloddParams,
    bg_mean_partition,
    clodd_c,
    clodd_n,
    hierarchical_partition,
)
from .kernels import (
    CORRELATION_KERNEL,
    GramKernel,
    KernelSpec,
    RBF,
    build_gram,
    sigma_grid,
)
from .matrixio import write_matrix_text, write_permutation, write_pgm
from .mkl import OvrEnsemble, predict, train_ovr
from .modelio import FeatureSetSpec, ensemble_from_training, save_ensemble, save_partition
from .ordering import ivat_enhance, vat_order
from .proximity import (
    CORRELATION,
    SQUARED_EUCLIDEAN,
    correlation_dm,
    normalize_dm,
    squared_euclidean_dm,
)

GROUPERS = ("clodd_c", "clodd_n", "bg_mean", "hierarchical")


@dataclass(frozen=True)
class MethodId:
    """One feature-generation method: the dissimilarity measure that drives
    the band grouping plus the kernel family applied to the features."""

    dm_measure: str
    kernel_family: str

    @property
    def name(self) -> str:
        return _METHOD_NAMES[(self.dm_measure, self.kernel_family)]


METHODS: dict[str, MethodId] = {
    "M1": MethodId(SQUARED_EUCLIDEAN, RBF),
    "M2": MethodId(SQUARED_EUCLIDEAN, CORRELATION_KERNEL),
    "M3": MethodId(CORRELATION, RBF),
    "M4": MethodId(CORRELATION, CORRELATION_KERNEL),
}
_METHOD_NAMES = {(m.dm_measure, m.kernel_family): name for name, m in METHODS.items()}

INTER_SCENARIOS: tuple[tuple[str, ...], ...] = (
    ("M1", "M2", "M3", "M4"),
    ("M1", "M2"),
    ("M3", "M4"),
    ("M1", "M3"),
    ("M2", "M4"),
)

CSV_BASE_COLUMNS = ("clustering", "method", "trainer", "p", "topk", "overall_acc")


def _default_alphas() -> tuple[float, ...]:
    return tuple(round(0.1 * k, 1) for k in range(10))


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str = ""
    dataset_format: str = "csv"
    exclude_bands: tuple[int, ...] = ()
    keep_classes: tuple[int, ...] | None = None
    seed: int = 0
    train_fraction: float = 0.2
    validation_fraction_of_train: float = 0.5
    groupers: tuple[str, ...] = GROUPERS
    clodd_alphas: tuple[float, ...] = field(default_factory=_default_alphas)
    clodd_gamma: float = 3.0
    clodd_min_size: int = 5
    clodd_max_size: int = 20
    clodd_search: str = "annealed"
    clodd_restarts: int = 20
    clodd_proposals_per_band: int = 200
    bg_thresholds: tuple[float, ...] = (0.90, 0.95, 0.98, 0.99)
    bg_max_size: int = 30
    hier_linkage: str = "single"
    methods: tuple[str, ...] = ("M1", "M2", "M3", "M4")
    sigmas: tuple[float, ...] = field(default_factory=lambda: tuple(sigma_grid()))
    p_values: tuple[float, ...] = (1.01, 2.0, 100.0, math.inf)
    c_reg: float = 1.0
    tol: float = 1e-3
    top_k_intra: tuple = (2, 3, "all")
    top_k_inter: tuple[int, ...] = (1, 2, 3)
    out_dir: str = ""
    save_models: bool = True
    strict: bool = False

    def __post_init__(self):
        for g in self.groupers:
            if g not in GROUPERS:
                raise ConfigError(f"unknown grouper {g!r}")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")
        if not self.methods:
            raise ConfigError("method list is empty")
        if not self.sigmas:
            raise ConfigError("sigma grid is empty")
        for p in self.p_values:
            if not (p > 1.0):
                raise ConfigError("p values must be > 1 (use 1.01 for the l1 column)")
        for k in tuple(self.top_k_intra) + tuple(self.top_k_inter):
            if k != "all" and not (1 <= int(k) <= 10):
                raise ConfigError("top-k must lie in 1..10 or be 'all'")
        if self.hier_linkage not in ("single", "ward"):
            raise ConfigError(f"unknown linkage {self.hier_linkage!r}")

    def measures(self) -> tuple[str, ...]:
        seen = []
        for m in self.methods:
            meas = METHODS[m].dm_measure
            if meas not in seen:
                seen.append(meas)
        return tuple(seen)


def _parse_seq(raw: str, conv):
    return tuple(conv(t.strip()) for t in raw.split(",") if t.strip())


def _parse_p_token(tok: str) -> float:
    return math.inf if tok.lower() in ("inf", "linf", "infinity") else float(tok)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from a flat dict of strings/values (service payloads,
    INI sections, CLI overrides)."""
    kwargs: dict = {}
    converters = {
        "dataset_path": str,
        "dataset_format": str,
        "exclude_bands": lambda v: tuple(int(t) for t in v),
        "keep_classes": lambda v: None if v is None else tuple(int(t) for t in v),
        "seed": int,
        "train_fraction": float,
        "validation_fraction_of_train": float,
        "groupers": lambda v: tuple(str(t) for t in v),
        "clodd_alphas": lambda v: tuple(float(t) for t in v),
        "clodd_gamma": float,
        "clodd_min_size": int,
        "clodd_max_size": int,
        "clodd_search": str,
        "clodd_restarts": int,
        "clodd_proposals_per_band": int,
        "bg_thresholds": lambda v: tuple(float(t) for t in v),
        "bg_max_size": int,
        "hier_linkage": str,
        "methods": lambda v: tuple(str(t) for t in v),
        "sigmas": lambda v: tuple(float(t) for t in v),
        "p_values": lambda v: tuple(_parse_p_token(str(t)) for t in v),
        "c_reg": float,
        "tol": float,
        "top_k_intra": lambda v: tuple("all" if str(t) == "all" else int(t) for t in v),
        "top_k_inter": lambda v: tuple(int(t) for t in v),
        "out_dir": str,
        "save_models": lambda v: bool(v) if not isinstance(v, str) else v.lower() in ("1", "true", "yes"),
        "strict": lambda v: bool(v) if not isinstance(v, str) else v.lower() in ("1", "true", "yes"),
    }
    for key, value in data.items():
        if key not in converters:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kwargs[key] = converters[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for config key {key!r}: {exc}") from exc
    return ExperimentConfig(**kwargs)


_LIST_KEYS = {
    "exclude_bands",
    "keep_classes",
    "groupers",
    "clodd_alphas",
    "bg_thresholds",
    "methods",
    "sigmas",
    "p_values",
    "top_k_intra",
    "top_k_inter",
}

_SECTION_PREFIXES = {
    "dataset": ("dataset_path", "dataset_format", "exclude_bands", "keep_classes"),
    "split": ("seed", "train_fraction", "validation_fraction_of_train"),
    "groupers": ("groupers",),
    "clodd": (
        "clodd_alphas",
        "clodd_gamma",
        "clodd_min_size",
        "clodd_max_size",
        "clodd_search",
        "clodd_restarts",
        "clodd_proposals_per_band",
    ),
    "bg_mean": ("bg_thresholds", "bg_max_size"),
    "hierarchical": ("hier_linkage",),
    "kernels": ("sigmas",),
    "mkl": ("p_values", "c_reg", "tol", "top_k_intra", "top_k_inter"),
    "methods": ("methods",),
    "output": ("out_dir", "save_models", "strict"),
}

_SECTION_KEY_ALIASES = {
    ("dataset", "path"): "dataset_path",
    ("dataset", "format"): "dataset_format",
    ("groupers", "run"): "groupers",
    ("clodd", "alphas"): "clodd_alphas",
    ("clodd", "gamma"): "clodd_gamma",
    ("clodd", "min_size"): "clodd_min_size",
    ("clodd", "max_size"): "clodd_max_size",
    ("clodd", "search"): "clodd_search",
    ("clodd", "restarts"): "clodd_restarts",
    ("clodd", "proposals_per_band"): "clodd_proposals_per_band",
    ("bg_mean", "thresholds"): "bg_thresholds",
    ("bg_mean", "max_size"): "bg_max_size",
    ("hierarchical", "linkage"): "hier_linkage",
    ("methods", "run"): "methods",
    ("output", "dir"): "out_dir",
}


def load_config(path: str) -> ExperimentConfig:
    """Parse the key = value section-per-stage config file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    flat: dict = {}
    for section in parser.sections():
        if section not in _SECTION_PREFIXES:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            canonical = _SECTION_KEY_ALIASES.get((section, key), key)
            if canonical not in _SECTION_PREFIXES[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            if canonical in _LIST_KEYS:
                flat[canonical] = [t.strip() for t in raw.split(",") if t.strip()]
            else:
                flat[canonical] = raw
    return config_from_dict(flat)


def load_experiment_dataset(cfg: ExperimentConfig) -> HsiDataset:
    ds = load_dataset(cfg.dataset_path, cfg.dataset_format)
    if cfg.exclude_bands:
        ds = apply_band_exclusion(ds, cfg.exclude_bands)
    if cfg.keep_classes:
        ds = filter_classes(ds, cfg.keep_classes)
    return ds


def overall_accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    return 100.0 * float(np.mean(pred == truth))


def per_class_accuracy(pred: np.ndarray, truth: np.ndarray, n_classes: int) -> list[float]:
    out = []
    for cls in range(1, n_classes + 1):
        mask = truth == cls
        out.append(100.0 * float(np.mean(pred[mask] == cls)) if mask.any() else 0.0)
    return out


class PipelineContext:
    """Caches the split, dissimilarity matrices, partitions, features, and
    Gram matrices for one experiment run."""

    def __init__(self, cfg: ExperimentConfig, ds: HsiDataset):
        self.cfg = cfg
        self.ds = ds
        spec = SplitSpec(
            seed=cfg.seed,
            train_fraction=cfg.train_fraction,
            validation_fraction_of_train=cfg.validation_fraction_of_train,
        )
        self.train_rows, self.val_rows, self.test_rows = make_split(ds, spec)
        self.final_rows = np.sort(np.concatenate([self.train_rows, self.val_rows]))
        self._dms: dict[str, object] = {}
        self.partitions: dict[tuple[str, str], BandPartition] = {}
        self.scan_accuracies: dict[tuple[str, str], dict[KernelSpec, float]] = {}
        self.scan_log: list[dict] = []
        self._features: dict[tuple, FeatureMatrix] = {}
        self._grams: dict[tuple, GramKernel] = {}
        self.rankings: dict[tuple[str, str], list[tuple[KernelSpec, float]]] = {}

    # -- guards ---------------------------------------------------------
    def _assert_no_test_rows(self, rows: np.ndarray) -> None:
        if np.intersect1d(rows, self.test_rows).size:
            raise DataError("test rows leaked into a selection stage")

    # -- shared artifacts -------------------------------------------------
    def dm(self, measure: str):
        if measure not in self._dms:
            self._assert_no_test_rows(self.final_rows)
            fn = squared_euclidean_dm if measure == SQUARED_EUCLIDEAN else correlation_dm
            self._dms[measure] = normalize_dm(fn(self.ds, self.final_rows))
        return self._dms[measure]

    def build_partition(self, grouper: str, measure: str, setting) -> BandPartition:
        cfg = self.cfg
        dm = self.dm(measure)
        if grouper in ("clodd_c", "clodd_n"):
            params = CloddParams(
                alpha=float(setting),
                gamma=cfg.clodd_gamma,
                min_size=cfg.clodd_min_size,
                max_size=cfg.clodd_max_size,
                search=cfg.clodd_search,
                seed=cfg.seed + 1,
                restarts=cfg.clodd_restarts,
                proposals_per_band=cfg.clodd_proposals_per_band,
            )
            return clodd_c(dm, params) if grouper == "clodd_c" else clodd_n(dm, params)
        if grouper == "bg_mean":
            return bg_mean_partition(dm, float(setting), cfg.bg_max_size)
        if grouper == "hierarchical":
            return hierarchical_partition(
                dm,
                cfg.hier_linkage,
                int(setting),
                min_size=cfg.clodd_min_size,
                max_size=cfg.clodd_max_size,
            )
        raise ConfigError(f"unknown grouper {grouper!r}")

    def grouper_settings(self, grouper: str, measure: str):
        cfg = self.cfg
        if grouper in ("clodd_c", "clodd_n"):
            return [("alpha", a) for a in cfg.clodd_alphas]
        if grouper == "bg_mean":
            return [("threshold", t) for t in cfg.bg_thresholds]
        b = self.dm(measure).n_bands
        lo = max(1, -(-b // cfg.clodd_max_size))  # ceil
        hi = max(lo, b // cfg.clodd_min_size)
        return [("c", c) for c in range(lo, hi + 1)]

    def features_for(self, grouper: str, measure: str, stage: str) -> FeatureMatrix:
        """stage 'fit' standardizes on the training rows, 'final' on
        train+validation."""
        key = (grouper, measure, stage)
        if key not in self._features:
            part = self.partitions[(grouper, measure)]
            raw = extract_group_means(self.ds, part)
            rows = self.train_rows if stage == "fit" else self.final_rows
            self._features[key] = standardize(raw, rows)
        return self._features[key]

    def gram(self, grouper: str, measure: str, spec: KernelSpec, kind: str) -> GramKernel:
        """kind: 'fit' (train square), 'fit_val' (train x validation),
        'final' (train+val square), 'final_test' (train+val x test)."""
        key = (grouper, measure, spec, kind)
        if key not in self._grams:
            if kind in ("fit", "fit_val"):
                fm = self.features_for(grouper, measure, "fit")
                rows_a = self.train_rows
                rows_e = self.train_rows if kind == "fit" else self.val_rows
                self._assert_no_test_rows(np.concatenate([rows_a, rows_e]))
            else:
                fm = self.features_for(grouper, measure, "final")
                rows_a = self.final_rows
                rows_e = self.final_rows if kind == "final" else self.test_rows
            self._grams[key] = build_gram(fm, rows_a, rows_e, spec)
        return self._grams[key]

    def all_specs(self) -> list[KernelSpec]:
        specs = []
        for family in (RBF, CORRELATION_KERNEL):
            specs.extend(KernelSpec(family, s) for s in self.cfg.sigmas)
        return specs


def _validation_accuracy(ctx: PipelineContext, grouper: str, measure: str, spec: KernelSpec) -> float:
    gram_fit = ctx.gram(grouper, measure, spec, "fit")
    ensemble = train_ovr(
        gram_fit, ctx.ds.labels[ctx.train_rows], trainer="svm", c_reg=ctx.cfg.c_reg, tol=ctx.cfg.tol
    )
    cross = ctx.gram(grouper, measure, spec, "fit_val")
    pred = predict(ensemble, cross)
    return overall_accuracy(pred, ctx.ds.labels[ctx.val_rows])


def run_grouper_scan(ctx: PipelineContext, grouper: str, measure: str) -> BandPartition:
    """Evaluate every parameter setting of the grouper by its best
    single-kernel validation accuracy and keep the winning partition.

    Both kernel families are scanned since both downstream methods of this
    measure consume the same partition. Ties keep the first setting in
    scan order. The winner's per-kernel accuracies are cached so the
    kernel ranking step can reuse them.
    """
    best = None
    for name, value in ctx.grouper_settings(grouper, measure):
        part = ctx.build_partition(grouper, measure, value)
        if not part.feasible:
            ctx.scan_log.append(
                {
                    "grouper": grouper,
                    "measure": measure,
                    "setting": f"{name}={value}",
                    "skipped": "infeasible",
                }
            )
            continue
        ctx.partitions[(grouper, measure)] = part
        ctx._features = {
            k: v for k, v in ctx._features.items() if k[:2] != (grouper, measure)
        }
        ctx._grams = {k: v for k, v in ctx._grams.items() if k[:2] != (grouper, measure)}
        accs: dict[KernelSpec, float] = {}
        for spec in ctx.all_specs():
            accs[spec] = _validation_accuracy(ctx, grouper, measure, spec)
        best_acc = max(accs.values())
        ctx.scan_log.append(
            {
                "grouper": grouper,
                "measure": measure,
                "setting": f"{name}={value}",
                "groups": [g.tolist() for g in part.groups],
                "objective_value": part.objective_value,
                "best_validation_accuracy": best_acc,
            }
        )
        if best is None or best_acc > best[0]:
            best = (best_acc, part, accs, f"{name}={value}")
    if best is None:
        raise DataError(f"every {grouper} setting was infeasible for measure {measure}")
    _, part, accs, setting = best
    ctx.partitions[(grouper, measure)] = part
    ctx.scan_accuracies[(grouper, measure)] = accs
    ctx._features = {k: v for k, v in ctx._features.items() if k[:2] != (grouper, measure)}
    ctx._grams = {k: v for k, v in ctx._grams.items() if k[:2] != (grouper, measure)}
    ctx.scan_log.append(
        {
            "grouper": grouper,
            "measure": measure,
            "selected": setting,
            "groups": [g.tolist() for g in part.groups],
        }
    )
    return part


def rank_kernels(ctx: PipelineContext, grouper: str, method_name: str):
    """Widths of the method's kernel family sorted by validation accuracy,
    descending; equal accuracies order by smaller sigma."""
    method = METHODS[method_name]
    key = (grouper, method_name)
    if key in ctx.rankings:
        return ctx.rankings[key]
    cached = ctx.scan_accuracies.get((grouper, method.dm_measure), {})
    entries = []
    for sigma in ctx.cfg.sigmas:
        spec = KernelSpec(method.kernel_family, sigma)
        acc = cached.get(spec)
        if acc is None:
            acc = _validation_accuracy(ctx, grouper, method.dm_measure, spec)
        entries.append((spec, acc))
    entries.sort(key=lambda e: (-e[1], e[0].sigma))
    ctx.rankings[key] = entries
    return entries


def _fusion_row(
    ctx: PipelineContext,
    grouper: str,
    method_names: tuple[str, ...],
    kernel_sets: list[tuple[str, KernelSpec]],
    trainer: str,
    p: float | None,
    topk,
):
    """Train on train+validation with the given (method, spec) kernels and
    score on the test rows."""
    t0 = time.perf_counter()
    grams = [
        ctx.gram(grouper, METHODS[m].dm_measure, spec, "final") for m, spec in kernel_sets
    ]
    labels_final = ctx.ds.labels[ctx.final_rows]
    if trainer == "svm":
        ensemble = train_ovr(
            grams[0], labels_final, trainer="svm", c_reg=ctx.cfg.c_reg, tol=ctx.cfg.tol
        )
    else:
        ensemble = train_ovr(
            grams,
            labels_final,
            trainer=trainer,
            p=p,
            c_reg=ctx.cfg.c_reg,
            tol=ctx.cfg.tol,
        )
    crosses = [
        ctx.gram(grouper, METHODS[m].dm_measure, spec, "final_test") for m, spec in kernel_sets
    ]
    pred = predict(ensemble, crosses if trainer != "svm" else crosses[0])
    truth = ctx.ds.labels[ctx.test_rows]
    row = {
        "clustering": grouper,
        "method": "+".join(method_names),
        "trainer": trainer,
        "p": "" if p is None else ("inf" if math.isinf(p) else format(p, "g")),
        "topk": str(topk),
        "overall_acc": overall_accuracy(pred, truth),
        "per_class_acc": per_class_accuracy(pred, truth, ctx.ds.n_classes),
        "kernels": [f"{m}:{spec.label()}" for m, spec in kernel_sets],
        "converged": all(getattr(m, "converged", True) for m in ensemble.models),
        "wall_clock": time.perf_counter() - t0,
        "seed": ctx.cfg.seed,
    }
    return row, ensemble


def _persist_model(ctx: PipelineContext, row: dict, ensemble: OvrEnsemble, kernel_sets) -> str | None:
    if not (ctx.cfg.out_dir and ctx.cfg.save_models):
        return None
    model_dir = os.path.join(ctx.cfg.out_dir, "models")
    os.makedirs(model_dir, exist_ok=True)
    grouper = row["clustering"]
    measures = []
    for m, _ in kernel_sets:
        meas = METHODS[m].dm_measure
        if meas not in measures:
            measures.append(meas)
    feature_sets = []
    fs_index = {}
    for meas in measures:
        part = ctx.partitions[(grouper, meas)]
        fm = ctx.features_for(grouper, meas, "final")
        fs_index[meas] = len(feature_sets)
        feature_sets.append(
            FeatureSetSpec(
                group_band_ids=[np.sort(ctx.ds.band_ids[g]) for g in part.groups],
                mean=fm.mean,
                std=fm.std,
                train_features=fm.values[ctx.final_rows],
            )
        )
    kernel_refs = [(fs_index[METHODS[m].dm_measure], spec) for m, spec in kernel_sets]
    class_ids = (
        ctx.ds.original_class_ids
        if ctx.ds.original_class_ids is not None
        else np.arange(1, ctx.ds.n_classes + 1)
    )
    trainer = row["trainer"]
    p = None
    if row["p"]:
        p = math.inf if row["p"] == "inf" else float(row["p"])
    saved = ensemble_from_training(
        ensemble,
        trainer=trainer,
        p=p,
        c_reg=ctx.cfg.c_reg,
        tol=ctx.cfg.tol,
        class_ids=class_ids,
        feature_sets=feature_sets,
        kernel_refs=kernel_refs,
    )
    name = "{}_{}_{}_p{}_top{}.model".format(
        row["clustering"], row["method"].replace("+", ""), trainer, row["p"] or "na", row["topk"]
    )
    path = os.path.join(model_dir, name)
    save_ensemble(saved, path)
    return path


def run_intra_method(ctx: PipelineContext, grouper: str) -> list[dict]:
    """Per method: the top-1 single-kernel SVM column plus lp / sum-kernel
    fusion of the top-k ranked kernels."""
    rows = []
    for mname in ctx.cfg.methods:
        ranked = rank_kernels(ctx, grouper, mname)
        top1 = [(mname, ranked[0][0])]
        row, ensemble = _fusion_row(ctx, grouper, (mname,), top1, "svm", None, 1)
        row["model_path"] = _persist_model(ctx, row, ensemble, top1)
        rows.append(row)
        for topk in ctx.cfg.top_k_intra:
            k = len(ranked) if topk == "all" else int(topk)
            kernel_sets = [(mname, spec) for spec, _ in ranked[:k]]
            for p in ctx.cfg.p_values:
                trainer = "linf_mkl" if math.isinf(p) else "lp_mkl"
                row, ensemble = _fusion_row(
                    ctx, grouper, (mname,), kernel_sets, trainer, p, topk
                )
                row["model_path"] = _persist_model(ctx, row, ensemble, kernel_sets)
                rows.append(row)
    return rows


def run_inter_method(ctx: PipelineContext, grouper: str, scenarios=INTER_SCENARIOS) -> list[dict]:
    """Fuse the top-k kernels from each method of a scenario, for each p."""
    rows = []
    for scenario in scenarios:
        if any(m not in ctx.cfg.methods for m in scenario):
            continue
        for topk in ctx.cfg.top_k_inter:
            kernel_sets = []
            for mname in scenario:
                ranked = rank_kernels(ctx, grouper, mname)
                kernel_sets.extend((mname, spec) for spec, _ in ranked[: int(topk)])
            for p in ctx.cfg.p_values:
                trainer = "linf_mkl" if math.isinf(p) else "lp_mkl"
                row, ensemble = _fusion_row(
                    ctx, grouper, scenario, kernel_sets, trainer, p, topk
                )
                row["model_path"] = _persist_model(ctx, row, ensemble, kernel_sets)
                rows.append(row)
    return rows


def export_dm_images(ctx: PipelineContext, outdir: str) -> list[str]:
    """Per measure: raw, enhanced (contiguous route), and ordered+enhanced
    (non-contiguous route) matrices as PGM images plus text exports."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for measure in ctx.cfg.measures():
        dm = ctx.dm(measure)
        tag = "sqe" if measure == SQUARED_EUCLIDEAN else "corr"
        raw_path = os.path.join(outdir, f"dm_{tag}_raw.pgm")
        write_pgm(dm.values, raw_path)
        write_matrix_text(dm.values, os.path.join(outdir, f"dm_{tag}_raw.txt"))
        enhanced = ivat_enhance(dm, source="raw")
        iv_path = os.path.join(outdir, f"dm_{tag}_ivat.pgm")
        write_pgm(enhanced.values, iv_path)
        vat = vat_order(dm)
        both = ivat_enhance(vat.ordered_dm, source="vat_ordered")
        vi_path = os.path.join(outdir, f"dm_{tag}_vat_ivat.pgm")
        write_pgm(both.values, vi_path)
        write_permutation(vat.permutation, os.path.join(outdir, f"dm_{tag}_vat_order.txt"))
        paths.extend([raw_path, iv_path, vi_path])
    return paths


def _format_row(row: dict, n_classes: int) -> str:
    cells = [
        row["clustering"],
        row["method"],
        row["trainer"],
        row["p"],
        row["topk"],
        f"{row['overall_acc']:.6f}",
    ]
    cells.extend(f"{a:.6f}" for a in row["per_class_acc"][:n_classes])
    return ",".join(cells)


def emit_reports(ctx: PipelineContext, intra_rows: list[dict], inter_rows: list[dict]) -> dict:
    """Write the long-format CSV tables, provenance log, split file,
    partition files, and the DM image panel. CSVs are byte-stable for a
    fixed (config, seed)."""
    outdir = ctx.cfg.out_dir
    if not outdir:
        raise ConfigError("emit_reports needs an output directory")
    if not (intra_rows or inter_rows):
        raise DataError("no report rows to emit")
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {outdir}: {exc}") from exc
    n_classes = ctx.ds.n_classes
    header = ",".join(
        CSV_BASE_COLUMNS + tuple(f"class{c}_acc" for c in range(1, n_classes + 1))
    )
    outputs: dict[str, object] = {}
    for name, rows in (("intra", intra_rows), ("inter", inter_rows)):
        if not rows:
            continue
        path = os.path.join(outdir, f"{name}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(_format_row(row, n_classes) + "\n")
        outputs[f"{name}_csv"] = path

    split_path = os.path.join(outdir, "split.txt")
    with open(split_path, "w", encoding="utf-8") as fh:
        for name, rows_ in (
            ("train", ctx.train_rows),
            ("validation", ctx.val_rows),
            ("test", ctx.test_rows),
        ):
            fh.write(f"{name} " + " ".join(map(str, rows_.tolist())) + "\n")
    outputs["split"] = split_path

    part_paths = []
    for (grouper, measure), part in sorted(ctx.partitions.items()):
        tag = "sqe" if measure == SQUARED_EUCLIDEAN else "corr"
        path = os.path.join(outdir, f"partition_{grouper}_{tag}.txt")
        save_partition(part, path, band_ids=ctx.ds.band_ids)
        part_paths.append(path)
    outputs["partitions"] = part_paths

    outputs["images"] = export_dm_images(ctx, outdir)

    log_path = os.path.join(outdir, "run_log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:

        def emit(kind: str, payload: dict):
            fh.write(json.dumps({"kind": kind, **payload}, sort_keys=True) + "\n")

        cfg_dict = {
            k: (str(v) if isinstance(v, float) and math.isinf(v) else v)
            for k, v in ctx.cfg.__dict__.items()
        }
        cfg_dict["p_values"] = [
            "inf" if math.isinf(p) else p for p in ctx.cfg.p_values
        ]
        emit("config", {"config": cfg_dict})
        for entry in ctx.scan_log:
            emit("grouper_scan", entry)
        for (grouper, mname), ranked in sorted(ctx.rankings.items()):
            emit(
                "kernel_ranking",
                {
                    "grouper": grouper,
                    "method": mname,
                    "ranking": [
                        {"kernel": spec.label(), "validation_accuracy": acc}
                        for spec, acc in ranked
                    ],
                },
            )
        for row in intra_rows + inter_rows:
            emit("report_row", row)
    outputs["log"] = log_path
    return outputs


def run_full(cfg: ExperimentConfig):
    """The complete protocol; returns (context, intra rows, inter rows,
    outputs written)."""
    ds = load_experiment_dataset(cfg)
    ctx = PipelineContext(cfg, ds)
    for grouper in cfg.groupers:
        for measure in cfg.measures():
            run_grouper_scan(ctx, grouper, measure)
    intra_rows, inter_rows = [], []
    for grouper in cfg.groupers:
        intra_rows.extend(run_intra_method(ctx, grouper))
        inter_rows.extend(run_inter_method(ctx, grouper))
    outputs = emit_reports(ctx, intra_rows, inter_rows) if cfg.out_dir else {}
    return ctx, intra_rows, inter_rows, outputs
