"""On-disk formats for partitions and trained fusion ensembles.

The model file is a UTF-8 text header (trainer, norms, kernel specs,
per-class weights and biases) terminated by a `---` line, followed by the
declared little-endian float64 arrays: per-feature-set training features
and standardization statistics, then per-class dual coefficients. It
carries everything needed to predict on new data without the original
training files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasets import HsiDataset
from .errors import DataError
from .grouping import BandPartition
from .kernels import KernelSpec, kernel_values
from .mkl import MklModel, OvrEnsemble

MODEL_MAGIC = "BANDFUSE-MODEL 1"
PARTITION_MAGIC = "# bandfuse-partition 1"


def save_partition(part: BandPartition, path: str, band_ids: np.ndarray | None = None) -> None:
    """One line per group, comma-separated original band ids, with header
    comments recording mode, params, and the achieved objective."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PARTITION_MAGIC + "\n")
        fh.write(f"# mode = {part.mode}\n")
        for key in sorted(part.params):
            fh.write(f"# {key} = {part.params[key]}\n")
        if part.objective_value is not None:
            fh.write(f"# objective_value = {part.objective_value!r}\n")
        for g in part.groups:
            cols = np.sort(g)
            ids = cols if band_ids is None else np.asarray(band_ids)[cols]
            fh.write(",".join(str(int(i)) for i in ids.tolist()) + "\n")


def load_partition_ids(path: str) -> tuple[list[np.ndarray], dict]:
    """Returns (groups of original band ids, header metadata)."""
    groups = []
    meta: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if "=" in body:
                    key, val = (s.strip() for s in body.split("=", 1))
                    meta[key] = val
                continue
            groups.append(np.array([int(t) for t in line.split(",")], dtype=np.int64))
    if not groups:
        raise DataError(f"no groups in partition file {path}")
    return groups, meta


def groups_to_columns(group_ids: list[np.ndarray], band_ids: np.ndarray) -> list[np.ndarray]:
    """Map original band ids back to column positions of a dataset."""
    lookup = {int(b): i for i, b in enumerate(np.asarray(band_ids).tolist())}
    cols = []
    for g in group_ids:
        missing = [int(i) for i in g.tolist() if int(i) not in lookup]
        if missing:
            raise DataError(f"band ids {missing} not present in the dataset")
        cols.append(np.array(sorted(lookup[int(i)] for i in g.tolist()), dtype=np.int64))
    return cols


@dataclass(eq=False)
class FeatureSetSpec:
    """Everything needed to rebuild one fused feature space on new pixels."""

    group_band_ids: list[np.ndarray]
    mean: np.ndarray
    std: np.ndarray
    train_features: np.ndarray

    def features_for(self, ds: HsiDataset) -> np.ndarray:
        cols = groups_to_columns(self.group_band_ids, ds.band_ids)
        feats = np.empty((ds.n_rows, len(cols)), dtype=np.float64)
        for i, g in enumerate(cols):
            feats[:, i] = ds.pixels[:, g].mean(axis=1)
        scale = np.where(self.std == 0.0, 1.0, self.std)
        return (feats - self.mean) / scale


@dataclass(eq=False)
class SavedEnsemble:
    trainer: str
    p: float | None
    c_reg: float
    tol: float
    class_ids: np.ndarray
    feature_sets: list[FeatureSetSpec]
    kernel_refs: list[tuple[int, KernelSpec]]  # (feature set index, spec)
    biases: np.ndarray
    weights: np.ndarray  # (L, M) per-class kernel weights
    dual_coefs: np.ndarray  # (L, n_train)
    converged: np.ndarray

    def decision_matrix(self, ds: HsiDataset) -> np.ndarray:
        new_feats = [fs.features_for(ds) for fs in self.feature_sets]
        crosses = [
            kernel_values(spec, self.feature_sets[f].train_features, new_feats[f])
            for f, spec in self.kernel_refs
        ]
        n_classes = self.class_ids.size
        scores = np.empty((ds.n_rows, n_classes))
        for ell in range(n_classes):
            combined = np.zeros_like(crosses[0])
            for w, cross in zip(self.weights[ell], crosses):
                combined += w * cross
            scores[:, ell] = self.dual_coefs[ell] @ combined + self.biases[ell]
        return scores

    def predict(self, ds: HsiDataset) -> np.ndarray:
        """Predicted original class ids; ties go to the smallest class id."""
        scores = self.decision_matrix(ds)
        return self.class_ids[np.argmax(scores, axis=1)]


def ensemble_from_training(
    ensemble: OvrEnsemble,
    trainer: str,
    p: float | None,
    c_reg: float,
    tol: float,
    class_ids: np.ndarray,
    feature_sets: list[FeatureSetSpec],
    kernel_refs: list[tuple[int, KernelSpec]],
) -> SavedEnsemble:
    n_kernels = len(kernel_refs)
    biases, weights, duals, conv = [], [], [], []
    for model in ensemble.models:
        if isinstance(model, MklModel):
            biases.append(model.inner_svm.bias)
            weights.append(np.asarray(model.kernel_weights, dtype=np.float64))
            duals.append(model.inner_svm.dual_coef)
            conv.append(model.converged)
        else:
            biases.append(model.bias)
            weights.append(np.ones(n_kernels))
            duals.append(model.dual_coef)
            conv.append(model.converged)
    return SavedEnsemble(
        trainer=trainer,
        p=p,
        c_reg=c_reg,
        tol=tol,
        class_ids=np.asarray(class_ids, dtype=np.int64),
        feature_sets=feature_sets,
        kernel_refs=kernel_refs,
        biases=np.array(biases),
        weights=np.vstack(weights),
        dual_coefs=np.vstack(duals),
        converged=np.array(conv, dtype=bool),
    )


def _fmt_p(p: float | None) -> str:
    if p is None:
        return "none"
    return "inf" if math.isinf(p) else repr(float(p))


def _parse_p(raw: str) -> float | None:
    if raw == "none":
        return None
    return math.inf if raw == "inf" else float(raw)


def save_ensemble(model: SavedEnsemble, path: str) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    lines = [MODEL_MAGIC]
    lines.append(f"trainer = {model.trainer}")
    lines.append(f"p = {_fmt_p(model.p)}")
    lines.append(f"c_reg = {float(model.c_reg)!r}")
    lines.append(f"tol = {float(model.tol)!r}")
    lines.append("class_ids = " + ",".join(str(int(c)) for c in model.class_ids))
    lines.append(f"feature_sets = {len(model.feature_sets)}")
    for f, fs in enumerate(model.feature_sets):
        groups = ";".join(
            ",".join(str(int(i)) for i in g.tolist()) for g in fs.group_band_ids
        )
        lines.append(f"feature_set {f} groups = {groups}")
        arrays.append((f"fs{f}_features", fs.train_features))
        arrays.append((f"fs{f}_mean", fs.mean))
        arrays.append((f"fs{f}_std", fs.std))
    lines.append(f"kernels = {len(model.kernel_refs)}")
    for idx, (f, spec) in enumerate(model.kernel_refs):
        lines.append(f"kernel {idx} = {f} {spec.family} {spec.sigma!r}")
    for ell, cid in enumerate(model.class_ids):
        lines.append(f"class {int(cid)} bias = {float(model.biases[ell])!r}")
        lines.append(
            f"class {int(cid)} weights = "
            + ",".join(repr(float(w)) for w in model.weights[ell])
        )
        lines.append(f"class {int(cid)} converged = {int(model.converged[ell])}")
    arrays.append(("dual_coefs", model.dual_coefs))

    lines.append("arrays = " + str(len(arrays)))
    for name, arr in arrays:
        shape = " ".join(str(s) for s in arr.shape)
        lines.append(f"array {name} = {shape}")
    lines.append("---")
    with open(path, "wb") as fh:
        fh.write("\n".join(lines).encode("utf-8") + b"\n")
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_ensemble(path: str) -> SavedEnsemble:
    with open(path, "rb") as fh:
        blob = fh.read()
    sep = blob.find(b"\n---\n")
    if sep < 0 or not blob.startswith(MODEL_MAGIC.encode()):
        raise DataError(f"{path} is not a bandfuse model file")
    header = blob[:sep].decode("utf-8").splitlines()
    binary = blob[sep + 5 :]

    fields: dict[str, str] = {}
    for line in header[1:]:
        if "=" in line:
            key, val = (s.strip() for s in line.split("=", 1))
            fields[key] = val

    class_ids = np.array([int(t) for t in fields["class_ids"].split(",")], dtype=np.int64)
    n_fs = int(fields["feature_sets"])
    n_kernels = int(fields["kernels"])

    array_meta = []
    for key, val in fields.items():
        if key.startswith("array "):
            name = key.split(" ", 1)[1]
            shape = tuple(int(t) for t in val.split())
            array_meta.append((name, shape))
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in array_meta:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(binary, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        arrays[name] = arr.reshape(shape).copy()

    feature_sets = []
    for f in range(n_fs):
        group_raw = fields[f"feature_set {f} groups"]
        groups = [
            np.array([int(t) for t in grp.split(",")], dtype=np.int64)
            for grp in group_raw.split(";")
        ]
        feature_sets.append(
            FeatureSetSpec(
                group_band_ids=groups,
                mean=arrays[f"fs{f}_mean"],
                std=arrays[f"fs{f}_std"],
                train_features=arrays[f"fs{f}_features"],
            )
        )
    kernel_refs = []
    for idx in range(n_kernels):
        f, family, sigma = fields[f"kernel {idx}"].split()
        kernel_refs.append((int(f), KernelSpec(family, float(sigma))))

    biases, weights, conv = [], [], []
    for cid in class_ids:
        biases.append(float(fields[f"class {int(cid)} bias"]))
        weights.append([float(t) for t in fields[f"class {int(cid)} weights"].split(",")])
        conv.append(bool(int(fields[f"class {int(cid)} converged"])))
    return SavedEnsemble(
        trainer=fields["trainer"],
        p=_parse_p(fields["p"]),
        c_reg=float(fields["c_reg"]),
        tol=float(fields["tol"]),
        class_ids=class_ids,
        feature_sets=feature_sets,
        kernel_refs=kernel_refs,
        biases=np.array(biases),
        weights=np.array(weights),
        dual_coefs=arrays["dual_coefs"],
        converged=np.array(conv, dtype=bool),
    )
