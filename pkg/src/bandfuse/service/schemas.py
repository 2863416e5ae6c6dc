"""Pydantic request/response models for the band-grouping service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class DatasetRef(BaseModel):
    path: str
    format: str = "csv"
    exclude_bands: list[int] = Field(default_factory=list)
    keep_classes: list[int] | None = None


class SplitRef(BaseModel):
    seed: int = 0
    train_fraction: float = 0.2
    validation_fraction_of_train: float = 0.5


class HealthResponse(BaseModel):
    status: str
    version: str


class SynthRequest(BaseModel):
    out_path: str
    seed: int = 0
    n_per_class: int = 500
    bands: int = 60
    classes: int = 4
    groups: int = 12


class SynthResponse(BaseModel):
    path: str
    rows: int
    bands: int
    classes: int
    planted_groups: list[list[int]]


class DmRequest(BaseModel):
    dataset: DatasetRef
    split: SplitRef | None = None  # when set, the DM uses train+validation rows
    measure: str = "squared_euclidean"
    normalize: bool = True
    out_prefix: str | None = None  # writes text/PGM exports when set
    images: bool = True


class DmResponse(BaseModel):
    measure: str
    bands: int
    normalized: bool
    max_value: float
    text_path: str | None = None
    image_paths: list[str] = Field(default_factory=list)


class CloddOptions(BaseModel):
    alpha: float = 0.5
    gamma: float = 3.0
    min_size: int = 5
    max_size: int = 20
    search: str = "annealed"
    seed: int = 0
    restarts: int = 20
    proposals_per_band: int = 200


class BgMeanOptions(BaseModel):
    threshold: float = 0.95
    max_size: int = 30


class HierarchicalOptions(BaseModel):
    linkage: str = "single"
    clusters: int = 10
    min_size: int = 1
    max_size: int | None = None


class BandRequest(BaseModel):
    dataset: DatasetRef
    split: SplitRef | None = None
    measure: str = "squared_euclidean"
    grouper: str = "clodd_c"
    clodd: CloddOptions = Field(default_factory=CloddOptions)
    bg_mean: BgMeanOptions = Field(default_factory=BgMeanOptions)
    hierarchical: HierarchicalOptions = Field(default_factory=HierarchicalOptions)
    out_path: str | None = None


class BandResponse(BaseModel):
    grouper: str
    mode: str
    groups: list[list[int]]  # original band ids
    objective_value: float | None
    feasible: bool
    path: str | None = None


class RankRequest(BaseModel):
    dataset: DatasetRef
    split: SplitRef = Field(default_factory=SplitRef)
    grouper: str = "clodd_c"
    method: str = "M1"
    clodd: CloddOptions = Field(default_factory=CloddOptions)
    bg_mean: BgMeanOptions = Field(default_factory=BgMeanOptions)
    hier_linkage: str = "single"
    c_reg: float = 1.0
    tol: float = 1e-3
    sigmas: list[float] | None = None


class RankedKernel(BaseModel):
    family: str
    sigma: float
    validation_accuracy: float


class RankResponse(BaseModel):
    grouper: str
    method: str
    ranking: list[RankedKernel]


class RunRequest(BaseModel):
    config_path: str | None = None
    config: dict = Field(default_factory=dict)  # overrides config_path keys


class ReportRow(BaseModel):
    clustering: str
    method: str
    trainer: str
    p: str
    topk: str
    overall_acc: float
    per_class_acc: list[float]
    kernels: list[str]
    model_path: str | None = None


class FuseRequest(RunRequest):
    scope: str = "intra"  # "intra" | "inter" | "both"


class FuseResponse(BaseModel):
    rows: list[ReportRow]
    converged: bool


class RunResponse(BaseModel):
    out_dir: str
    intra_rows: int
    inter_rows: int
    outputs: dict
    converged: bool


class PredictRequest(BaseModel):
    model_path: str
    dataset: DatasetRef
    out_path: str | None = None


class PredictResponse(BaseModel):
    predictions: list[int]
    accuracy: float | None = None
    path: str | None = None


class ErrorBody(BaseModel):
    code: str  # "config" | "data" | "nonconvergence"
    message: str
