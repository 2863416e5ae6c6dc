"""Hyperspectral band grouping and multi-kernel feature fusion."""

__version__ = "0.1.0"

from .datasets import HsiDataset, SplitSpec, load_dataset, make_split
from .grouping import BandPartition, CloddParams
from .kernels import GramKernel, KernelSpec, sigma_grid
from .ordering import ivat_enhance, vat_order
from .proximity import DissimilarityMatrix, correlation_dm, normalize_dm, squared_euclidean_dm

__all__ = [
    "__version__",
    "HsiDataset",
    "SplitSpec",
    "load_dataset",
    "make_split",
    "BandPartition",
    "CloddParams",
    "GramKernel",
    "KernelSpec",
    "sigma_grid",
    "ivat_enhance",
    "vat_order",
    "DissimilarityMatrix",
    "correlation_dm",
    "normalize_dm",
    "squared_euclidean_dm",
]
