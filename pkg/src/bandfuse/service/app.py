"""FastAPI service wrapping the band-grouping and fusion pipeline.

Endpoints operate on files reachable from the server process (the service
is designed for localhost or shared-volume deployments); heavy stages run
synchronously in the request.
"""

from __future__ import annotations

import os

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..datasets import (
    HsiDataset,
    SplitSpec,
    apply_band_exclusion,
    filter_classes,
    load_dataset,
    make_split,
    save_dataset,
)
from ..errors import BandfuseError, ConfigError
from ..grouping import (
    BandPartition,
    CloddParams,
    bg_mean_partition,
    clodd_c,
    clodd_n,
    hierarchical_partition,
)
from ..kernels import sigma_grid
from ..matrixio import write_matrix_text, write_permutation, write_pgm
from ..modelio import load_ensemble, save_partition
from ..ordering import ivat_enhance, vat_order
from ..pipeline import (
    ExperimentConfig,
    METHODS,
    PipelineContext,
    config_from_dict,
    load_config,
    rank_kernels,
    run_full,
    run_grouper_scan,
    run_inter_method,
    run_intra_method,
)
from ..proximity import CORRELATION, SQUARED_EUCLIDEAN, correlation_dm, normalize_dm, squared_euclidean_dm
from ..synth import make_synthetic
from . import schemas

app = FastAPI(
    title="bandfuse",
    description="Hyperspectral band grouping and multi-kernel feature fusion",
    version=__version__,
)


def _http_error(exc: BandfuseError) -> HTTPException:
    code = "config" if isinstance(exc, ConfigError) else "data"
    return HTTPException(status_code=400, detail={"code": code, "message": str(exc)})


def _load_ref(ref: schemas.DatasetRef) -> HsiDataset:
    ds = load_dataset(ref.path, ref.format)
    if ref.exclude_bands:
        ds = apply_band_exclusion(ds, ref.exclude_bands)
    if ref.keep_classes:
        ds = filter_classes(ds, ref.keep_classes)
    return ds


def _dm_rows(ds: HsiDataset, split: schemas.SplitRef | None):
    if split is None:
        return None
    spec = SplitSpec(split.seed, split.train_fraction, split.validation_fraction_of_train)
    train, val, _ = make_split(ds, spec)
    return np.sort(np.concatenate([train, val]))


def _compute_dm(ds: HsiDataset, measure: str, rows, normalize: bool):
    if measure == SQUARED_EUCLIDEAN:
        dm = squared_euclidean_dm(ds, rows)
    elif measure == CORRELATION:
        dm = correlation_dm(ds, rows)
    else:
        raise ConfigError(f"unknown dissimilarity measure {measure!r}")
    return normalize_dm(dm) if normalize else dm


@app.get("/health", response_model=schemas.HealthResponse)
def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/synth", response_model=schemas.SynthResponse)
def synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
    try:
        ds, planted = make_synthetic(
            req.seed,
            n_per_class=req.n_per_class,
            bands=req.bands,
            classes=req.classes,
            groups=req.groups,
        )
        os.makedirs(os.path.dirname(os.path.abspath(req.out_path)), exist_ok=True)
        save_dataset(ds, req.out_path)
    except BandfuseError as exc:
        raise _http_error(exc) from exc
    return schemas.SynthResponse(
        path=req.out_path,
        rows=ds.n_rows,
        bands=ds.n_bands,
        classes=ds.n_classes,
        planted_groups=[g.tolist() for g in planted],
    )


@app.post("/dm", response_model=schemas.DmResponse)
def dm(req: schemas.DmRequest) -> schemas.DmResponse:
    try:
        ds = _load_ref(req.dataset)
        rows = _dm_rows(ds, req.split)
        matrix = _compute_dm(ds, req.measure, rows, req.normalize)
        text_path = None
        image_paths: list[str] = []
        if req.out_prefix:
            os.makedirs(os.path.dirname(os.path.abspath(req.out_prefix)) or ".", exist_ok=True)
            text_path = req.out_prefix + ".txt"
            write_matrix_text(matrix.values, text_path)
            if req.images:
                if not matrix.normalized:
                    raise ConfigError("PGM export expects a normalized matrix")
                raw_path = req.out_prefix + "_raw.pgm"
                write_pgm(matrix.values, raw_path)
                enhanced = ivat_enhance(matrix, source="raw")
                iv_path = req.out_prefix + "_ivat.pgm"
                write_pgm(enhanced.values, iv_path)
                vat = vat_order(matrix)
                both = ivat_enhance(vat.ordered_dm, source="vat_ordered")
                vi_path = req.out_prefix + "_vat_ivat.pgm"
                write_pgm(both.values, vi_path)
                write_permutation(vat.permutation, req.out_prefix + "_vat_order.txt")
                image_paths = [raw_path, iv_path, vi_path]
    except BandfuseError as exc:
        raise _http_error(exc) from exc
    return schemas.DmResponse(
        measure=matrix.measure,
        bands=matrix.n_bands,
        normalized=matrix.normalized,
        max_value=float(matrix.values.max()),
        text_path=text_path,
        image_paths=image_paths,
    )


def _build_partition(req: schemas.BandRequest, ds: HsiDataset) -> BandPartition:
    rows = _dm_rows(ds, req.split)
    matrix = _compute_dm(ds, req.measure, rows, normalize=True)
    if req.grouper in ("clodd_c", "clodd_n"):
        opts = req.clodd
        params = CloddParams(
            alpha=opts.alpha,
            gamma=opts.gamma,
            min_size=opts.min_size,
            max_size=opts.max_size,
            search=opts.search,
            seed=opts.seed,
            restarts=opts.restarts,
            proposals_per_band=opts.proposals_per_band,
        )
        return clodd_c(matrix, params) if req.grouper == "clodd_c" else clodd_n(matrix, params)
    if req.grouper == "bg_mean":
        return bg_mean_partition(matrix, req.bg_mean.threshold, req.bg_mean.max_size)
    if req.grouper == "hierarchical":
        opts = req.hierarchical
        return hierarchical_partition(
            matrix, opts.linkage, opts.clusters, min_size=opts.min_size, max_size=opts.max_size
        )
    raise ConfigError(f"unknown grouper {req.grouper!r}")


@app.post("/band", response_model=schemas.BandResponse)
def band(req: schemas.BandRequest) -> schemas.BandResponse:
    try:
        ds = _load_ref(req.dataset)
        part = _build_partition(req, ds)
        path = None
        if req.out_path:
            save_partition(part, req.out_path, band_ids=ds.band_ids)
            path = req.out_path
    except BandfuseError as exc:
        raise _http_error(exc) from exc
    groups = [np.sort(ds.band_ids[g]).tolist() for g in part.groups]
    return schemas.BandResponse(
        grouper=req.grouper,
        mode=part.mode,
        groups=groups,
        objective_value=part.objective_value,
        feasible=part.feasible,
        path=path,
    )


@app.post("/rank", response_model=schemas.RankResponse)
def rank(req: schemas.RankRequest) -> schemas.RankResponse:
    try:
        if req.method not in METHODS:
            raise ConfigError(f"unknown method {req.method!r}")
        cfg = ExperimentConfig(
            dataset_path=req.dataset.path,
            dataset_format=req.dataset.format,
            exclude_bands=tuple(req.dataset.exclude_bands),
            keep_classes=tuple(req.dataset.keep_classes) if req.dataset.keep_classes else None,
            seed=req.split.seed,
            train_fraction=req.split.train_fraction,
            validation_fraction_of_train=req.split.validation_fraction_of_train,
            groupers=(req.grouper,),
            methods=(req.method,),
            clodd_alphas=(req.clodd.alpha,),
            clodd_gamma=req.clodd.gamma,
            clodd_min_size=req.clodd.min_size,
            clodd_max_size=req.clodd.max_size,
            clodd_search=req.clodd.search,
            clodd_restarts=req.clodd.restarts,
            clodd_proposals_per_band=req.clodd.proposals_per_band,
            bg_thresholds=(req.bg_mean.threshold,),
            bg_max_size=req.bg_mean.max_size,
            hier_linkage=req.hier_linkage,
            sigmas=tuple(req.sigmas) if req.sigmas else tuple(sigma_grid()),
            c_reg=req.c_reg,
            tol=req.tol,
            out_dir="",
            save_models=False,
        )
        ds = _load_ref(req.dataset)
        ctx = PipelineContext(cfg, ds)
        measure = METHODS[req.method].dm_measure
        run_grouper_scan(ctx, req.grouper, measure)
        ranked = rank_kernels(ctx, req.grouper, req.method)
    except BandfuseError as exc:
        raise _http_error(exc) from exc
    return schemas.RankResponse(
        grouper=req.grouper,
        method=req.method,
        ranking=[
            schemas.RankedKernel(family=spec.family, sigma=spec.sigma, validation_accuracy=acc)
            for spec, acc in ranked
        ],
    )


def _config_from_request(req: schemas.RunRequest) -> ExperimentConfig:
    if req.config_path:
        cfg = load_config(req.config_path)
        if req.config:
            merged = dict(cfg.__dict__)
            merged.update(req.config)
            cfg = config_from_dict(merged)
        return cfg
    if req.config:
        return config_from_dict(req.config)
    raise ConfigError("provide config_path or an inline config")


def _rows_converged(rows: list[dict]) -> bool:
    return all(row.get("converged", True) for row in rows)


@app.post("/fuse", response_model=schemas.FuseResponse)
def fuse(req: schemas.FuseRequest) -> schemas.FuseResponse:
    try:
        if req.scope not in ("intra", "inter", "both"):
            raise ConfigError(f"unknown fuse scope {req.scope!r}")
        cfg = _config_from_request(req)
        ds = _load_ref(
            schemas.DatasetRef(
                path=cfg.dataset_path,
                format=cfg.dataset_format,
                exclude_bands=list(cfg.exclude_bands),
                keep_classes=list(cfg.keep_classes) if cfg.keep_classes else None,
            )
        )
        ctx = PipelineContext(cfg, ds)
        for grouper in cfg.groupers:
            for measure in cfg.measures():
                run_grouper_scan(ctx, grouper, measure)
        rows: list[dict] = []
        for grouper in cfg.groupers:
            if req.scope in ("intra", "both"):
                rows.extend(run_intra_method(ctx, grouper))
            if req.scope in ("inter", "both"):
                rows.extend(run_inter_method(ctx, grouper))
    except BandfuseError as exc:
        raise _http_error(exc) from exc
    return schemas.FuseResponse(
        rows=[schemas.ReportRow(**_row_payload(r)) for r in rows],
        converged=_rows_converged(rows),
    )


def _row_payload(row: dict) -> dict:
    keys = (
        "clustering",
        "method",
        "trainer",
        "p",
        "topk",
        "overall_acc",
        "per_class_acc",
        "kernels",
        "model_path",
    )
    return {k: row.get(k) for k in keys}


@app.post("/run", response_model=schemas.RunResponse)
def run(req: schemas.RunRequest) -> schemas.RunResponse:
    try:
        cfg = _config_from_request(req)
        if not cfg.out_dir:
            raise ConfigError("the run protocol needs an output directory")
        ctx, intra_rows, inter_rows, outputs = run_full(cfg)
    except BandfuseError as exc:
        raise _http_error(exc) from exc
    flat_outputs = {
        key: val if isinstance(val, (str, int, float)) else list(val)
        for key, val in outputs.items()
    }
    return schemas.RunResponse(
        out_dir=cfg.out_dir,
        intra_rows=len(intra_rows),
        inter_rows=len(inter_rows),
        outputs=flat_outputs,
        converged=_rows_converged(intra_rows + inter_rows),
    )


@app.post("/predict", response_model=schemas.PredictResponse)
def predict_endpoint(req: schemas.PredictRequest) -> schemas.PredictResponse:
    try:
        model = load_ensemble(req.model_path)
        ds = _load_ref(req.dataset)
        pred = model.predict(ds)
        accuracy = None
        if ds.labels.size:
            truth = (
                np.asarray(ds.original_class_ids)[ds.labels - 1]
                if ds.original_class_ids is not None
                else ds.labels
            )
            accuracy = 100.0 * float(np.mean(pred == truth))
        path = None
        if req.out_path:
            with open(req.out_path, "w", encoding="utf-8") as fh:
                for value in pred.tolist():
                    fh.write(f"{value}\n")
            path = req.out_path
    except BandfuseError as exc:
        raise _http_error(exc) from exc
    return schemas.PredictResponse(predictions=pred.tolist(), accuracy=accuracy, path=path)
