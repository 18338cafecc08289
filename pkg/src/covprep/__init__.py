"""Covariance matrices versus ensemble-average density matrices for
amplitude-encoded data: moments, spectral comparisons, PCA pipelines and
variational diagonalization costs."""

from .dataset import (MixedStateEnsemble, PureStateEnsemble, RawDataset, aggregate_duplicates, amplitude_encode,
                      mixed_to_effective, outer_product_map, symmetrize)
from .errors import CovprepError
from .moments import covariance_matrix, ensemble_density, mean_vector, moments
from .numkernel import SpectralDecomposition, hermitian_eigendecompose

__version__ = "0.1.0"

__all__ = [
    "CovprepError",
    "MixedStateEnsemble",
    "PureStateEnsemble",
    "RawDataset",
    "SpectralDecomposition",
    "aggregate_duplicates",
    "amplitude_encode",
    "covariance_matrix",
    "ensemble_density",
    "hermitian_eigendecompose",
    "mean_vector",
    "mixed_to_effective",
    "moments",
    "outer_product_map",
    "symmetrize",
]
