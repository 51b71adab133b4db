"""
Feature Service
Spectral reduction (per-band standardization + PCA) and fusion with
min-max normalized pixel coordinates into x = [h'; m; n].
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.decomposition import PCA
from sklearn.preprocessing import StandardScaler

from gwcl.errors import DataFormatError, ReductionError
from gwcl.services import raw_store
from gwcl.services.hsi_data import HsiCube, PixelIndex

logger = logging.getLogger("gwcl.features")

# Relative eigenvalue below which a component is treated as numerically absent
RANK_TOLERANCE = 1e-12


@dataclass
class PcaModel:
    """Standardize-then-project model; transform(h) = ((h - mean) / scale) @ projection"""

    mean: np.ndarray
    scale: np.ndarray
    projection: np.ndarray
    explained_variance: np.ndarray

    @property
    def bands(self) -> int:
        return self.projection.shape[0]

    @property
    def beta(self) -> int:
        return self.projection.shape[1]

    def transform(self, spectra: np.ndarray) -> np.ndarray:
        if spectra.shape[1] != self.bands:
            raise DataFormatError(f"Model expects {self.bands} bands, got {spectra.shape[1]}")
        return ((spectra - self.mean) / self.scale) @ self.projection

    def save(self, stem: str | Path) -> None:
        stem = Path(stem)
        raw_store.write_array(stem.with_name(stem.name + "_mean"), self.mean)
        raw_store.write_array(stem.with_name(stem.name + "_scale"), self.scale)
        raw_store.write_array(stem.with_name(stem.name + "_projection"), self.projection, beta=self.beta)
        raw_store.write_array(stem.with_name(stem.name + "_variance"), self.explained_variance)

    @classmethod
    def load(cls, stem: str | Path) -> "PcaModel":
        stem = Path(stem)
        parts = {}
        for name in ("mean", "scale", "projection", "variance"):
            parts[name], _ = raw_store.read_array(stem.with_name(f"{stem.name}_{name}"))
        return cls(parts["mean"], parts["scale"], parts["projection"], parts["variance"])


@dataclass
class FeatureMatrix:
    """P x (beta + 2) matrix [h'_1..h'_beta, m_norm, n_norm] in PixelIndex order"""

    values: np.ndarray
    beta: int

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.beta + 2:
            raise DataFormatError(f"Feature matrix must be P x {self.beta + 2}, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataFormatError("Feature matrix contains non-finite entries")

    @property
    def n_pixels(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def classifier_inputs(self, spatial: bool = True) -> np.ndarray:
        """x for the classifier, or h' only when spatial input is disabled"""
        return self.values if spatial else self.values[:, : self.beta]

    def column_stats(self) -> dict:
        v = self.values
        return {"min": v.min(axis=0), "max": v.max(axis=0), "mean": v.mean(axis=0), "std": v.std(axis=0)}

    def save(self, stem: str | Path) -> Path:
        return raw_store.write_array(stem, self.values, beta=self.beta)

    @classmethod
    def load(cls, stem: str | Path) -> "FeatureMatrix":
        values, header = raw_store.read_array(stem)
        return cls(values=values.astype(np.float64), beta=int(header["beta"]))


def fit_reduce(cube: HsiCube, index: PixelIndex, beta: int) -> PcaModel:
    """
    Fit the spectral reducer on the non-background pixels

    Args:
        cube: Source cube
        index: Non-background pixel set
        beta: Number of components to keep

    Returns:
        PcaModel with components in decreasing variance order

    Raises:
        ReductionError: beta out of range or above the data rank
    """
    n_pixels = len(index)
    if not 1 <= beta <= cube.bands:
        raise ReductionError(f"beta must be in [1, {cube.bands}], got {beta}")
    if n_pixels < beta:
        raise ReductionError(f"Need at least beta={beta} pixels, got {n_pixels}")

    spectra = cube.pixels(index)
    scaler = StandardScaler().fit(spectra)
    standardized = scaler.transform(spectra)
    pca = PCA(n_components=beta, svd_solver="full").fit(standardized)

    variance = pca.explained_variance_
    if variance[-1] <= RANK_TOLERANCE * max(variance[0], 1.0):
        raise ReductionError(f"Covariance rank is below beta={beta} (smallest kept variance {variance[-1]:.3e})")

    # fold the PCA centering into the band means so transform is one affine map
    mean = scaler.mean_ + scaler.scale_ * pca.mean_
    model = PcaModel(
        mean=mean,
        scale=scaler.scale_.copy(),
        projection=pca.components_.T.copy(),
        explained_variance=pca.explained_variance_ratio_.copy(),
    )
    logger.info(
        f"Reduced {cube.bands} bands to {beta} components "
        f"({model.explained_variance.sum():.4f} of variance)"
    )
    return model


def _min_max(column: np.ndarray, name: str) -> np.ndarray:
    lo, hi = column.min(), column.max()
    if hi == lo:
        logger.warning(f"Constant {name} column; setting it to 0.5")
        return np.full_like(column, 0.5, dtype=np.float64)
    return (column - lo) / (hi - lo)


def assemble_features(
    cube: HsiCube,
    model: PcaModel,
    index: PixelIndex,
    normalize_spectral: bool = True,
) -> FeatureMatrix:
    """
    Build x = [h'; m; n] for every non-background pixel

    Args:
        cube: Source cube
        model: Fitted reducer for the same band count
        index: Non-background pixel set (row order of the result)
        normalize_spectral: Min-max normalize each spectral column to [0, 1]
    """
    if model.bands != cube.bands:
        raise DataFormatError(f"Model fitted on {model.bands} bands, cube has {cube.bands}")
    reduced = model.transform(cube.pixels(index))
    if normalize_spectral:
        reduced = np.column_stack([_min_max(reduced[:, k], f"spectral {k}") for k in range(model.beta)])
    m_norm = _min_max(index.rows.astype(np.float64), "row coordinate")
    n_norm = _min_max(index.cols.astype(np.float64), "column coordinate")
    values = np.column_stack([reduced, m_norm, n_norm])
    return FeatureMatrix(values=values, beta=model.beta)
