"""
HSI Data Service
Loads hyperspectral cubes and ground-truth rasters, masks background and
draws reproducible labeled/test splits.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from gwcl.errors import DataFormatError, SplitError
from gwcl.services import raw_store

logger = logging.getLogger("gwcl.data")

CUBE_DTYPES = ("f32", "f64", "u16")
DEFAULT_QUOTA = 30
DEFAULT_FALLBACK = 15


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator: portable, documented, 64-bit seeded"""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass
class HsiCube:
    """M x N x alpha raster held band-sequential as float64 (bands, M, N)"""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise DataFormatError(f"Cube must be (bands, height, width) with all dims >= 1, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataFormatError("Cube contains non-finite values")

    @property
    def bands(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def pixels(self, index: "PixelIndex") -> np.ndarray:
        """Spectra of the indexed pixels as a P x alpha matrix"""
        return self.values[:, index.rows, index.cols].T.copy()


@dataclass
class LabelRaster:
    """Per-pixel class codes; 0 is background"""

    codes: np.ndarray
    mapping: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.codes.ndim != 2:
            raise DataFormatError(f"Label raster must be 2-D, got shape {self.codes.shape}")
        present = np.unique(self.codes)
        present = present[present > 0]
        if present.size and not np.array_equal(present, np.arange(1, present.size + 1)):
            raise DataFormatError(f"Class codes are not contiguous 1..c: {present.tolist()}")

    @property
    def height(self) -> int:
        return self.codes.shape[0]

    @property
    def width(self) -> int:
        return self.codes.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.codes.max()) if self.codes.size else 0

    def class_populations(self) -> Dict[int, int]:
        counts = np.bincount(self.codes.ravel(), minlength=self.n_classes + 1)
        return {k: int(counts[k]) for k in range(1, self.n_classes + 1)}

    def index(self) -> "PixelIndex":
        return PixelIndex.from_mask(self.codes > 0)


class PixelIndex:
    """Bijection between flat indices over the non-background set and (row, col)"""

    def __init__(self, rows: np.ndarray, cols: np.ndarray, shape: Tuple[int, int]):
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.shape = shape
        self._lookup = np.full(shape, -1, dtype=np.int64)
        self._lookup[self.rows, self.cols] = np.arange(self.rows.size)

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "PixelIndex":
        rows, cols = np.nonzero(mask)
        return cls(rows, cols, mask.shape)

    def __len__(self) -> int:
        return int(self.rows.size)

    def to_coords(self, i: int) -> Tuple[int, int]:
        return int(self.rows[i]), int(self.cols[i])

    def to_flat(self, m: int, n: int) -> int:
        i = int(self._lookup[m, n])
        if i < 0:
            raise KeyError(f"Pixel ({m}, {n}) is background")
        return i


@dataclass
class Split:
    """Labeled/test partition over flat pixel indices"""

    labeled: np.ndarray
    labeled_classes: np.ndarray
    test: np.ndarray
    test_classes: np.ndarray
    unlabeled: np.ndarray
    seed: int
    per_class_quota: int

    def counts(self) -> Dict[int, Tuple[int, int]]:
        """Class code -> (train, test) counts"""
        classes = np.union1d(self.labeled_classes, self.test_classes)
        return {
            int(k): (int(np.sum(self.labeled_classes == k)), int(np.sum(self.test_classes == k)))
            for k in classes
        }


def _header_int(header: Dict[str, str], key: str, path) -> int:
    try:
        return int(header[key])
    except KeyError as e:
        raise DataFormatError(f"{raw_store.header_path(path)} lacks '{key}'") from e
    except ValueError as e:
        raise DataFormatError(f"{raw_store.header_path(path)}: '{key}' is not an integer") from e


def _read_raster(path: str | Path) -> Tuple[np.ndarray, Dict[str, str]]:
    header = raw_store.read_header(path)
    height = _header_int(header, "height", path)
    width = _header_int(header, "width", path)
    bands = _header_int(header, "bands", path)
    if min(height, width, bands) < 1:
        raise DataFormatError(f"Non-positive dimensions in {raw_store.header_path(path)}")
    code = header.get("dtype", "")
    data = raw_store.read_payload(path, code, header.get("byteorder", "little"), height * width * bands)
    return data.reshape(bands, height, width), header


def load_cube(path: str | Path) -> HsiCube:
    """
    Load a band-sequential cube from ``<name>.raw`` + ``<name>.hdr.txt``

    Args:
        path: Either file of the pair, or the shared stem

    Returns:
        Validated HsiCube with float64 values

    Raises:
        DataFormatError: size mismatch, non-finite values or unsupported dtype
    """
    header = raw_store.read_header(path)
    if header.get("dtype") not in CUBE_DTYPES:
        raise DataFormatError(f"Unsupported cube element type '{header.get('dtype')}' (expected {CUBE_DTYPES})")
    data, header = _read_raster(path)
    values = data.astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise DataFormatError(f"Cube {raw_store.raw_path(path)} contains non-finite values")
    cube = HsiCube(values=values)
    logger.info(f"Loaded cube {raw_store.stem_of(path).name}: {cube.height}x{cube.width}x{cube.bands}")
    return cube


def load_labels(path: str | Path, cube: Optional[HsiCube] = None, remap: bool = False) -> LabelRaster:
    """
    Load a ground-truth raster (bands: 1, dtype: u16)

    Args:
        path: Raster path or stem
        cube: Optional cube whose height/width must match
        remap: Remap sparse class codes to dense 1..c instead of rejecting gaps

    Returns:
        Validated LabelRaster
    """
    data, _ = _read_raster(path)
    if data.shape[0] != 1:
        raise DataFormatError(f"Label raster must have 1 band, got {data.shape[0]}")
    codes = data[0].astype(np.int64)
    if cube is not None and codes.shape != (cube.height, cube.width):
        raise DataFormatError(
            f"Label raster {codes.shape} does not match cube {(cube.height, cube.width)}"
        )
    mapping: Dict[int, int] = {}
    present = np.unique(codes)
    present = present[present > 0]
    if remap and present.size and not np.array_equal(present, np.arange(1, present.size + 1)):
        mapping = {int(src): dst for dst, src in enumerate(present, 1)}
        lut = np.zeros(int(present.max()) + 1, dtype=np.int64)
        for src, dst in mapping.items():
            lut[src] = dst
        codes = lut[codes]
        logger.warning(f"Remapped sparse class codes: {mapping}")
    labels = LabelRaster(codes=codes, mapping=mapping)
    logger.info(f"Loaded labels: {labels.n_classes} classes, populations {labels.class_populations()}")
    return labels


def write_cube(path: str | Path, values: np.ndarray, dtype: str = "f32") -> Path:
    """Write a (bands, M, N) array in the cube raw+header scheme"""
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[None]
    bands, height, width = values.shape
    raw_store.write_header(path, {
        "height": height,
        "width": width,
        "bands": bands,
        "dtype": dtype,
        "byteorder": "little",
        "interleave": "bsq",
    })
    return raw_store.write_payload(path, values, dtype)


def write_labels(path: str | Path, codes: np.ndarray) -> Path:
    return write_cube(path, np.asarray(codes, dtype=np.uint16)[None], dtype="u16")


def convert_mat(mat_path: str | Path, out_path: str | Path, kind: str = "cube", key: Optional[str] = None) -> Path:
    """
    Convert a MATLAB ``.mat`` dataset (M x N x alpha cube or M x N ground truth)

    Args:
        mat_path: Source .mat file
        out_path: Output stem
        kind: "cube" or "labels"
        key: Variable name; defaults to the only array variable in the file
    """
    from scipy.io import loadmat

    contents = {k: v for k, v in loadmat(str(mat_path)).items() if not k.startswith("__")}
    if key is None:
        arrays = [k for k, v in contents.items() if isinstance(v, np.ndarray) and v.ndim >= 2]
        if len(arrays) != 1:
            raise DataFormatError(f"{mat_path}: pass --key, candidates are {arrays}")
        key = arrays[0]
    if key not in contents:
        raise DataFormatError(f"{mat_path} has no variable '{key}'")
    array = np.asarray(contents[key])
    if kind == "labels":
        if array.ndim != 2:
            raise DataFormatError(f"Ground truth must be 2-D, got {array.shape}")
        return write_labels(out_path, array)
    if array.ndim != 3:
        raise DataFormatError(f"Cube must be 3-D (M, N, bands), got {array.shape}")
    dtype = "u16" if array.dtype == np.uint16 else ("f64" if array.dtype == np.float64 else "f32")
    return write_cube(out_path, np.moveaxis(array, 2, 0), dtype=dtype)


def train_count(population: int, quota: int = DEFAULT_QUOTA, fallback: int = DEFAULT_FALLBACK) -> int:
    """Labeled pixels drawn from a class of the given population"""
    return quota if population >= quota else fallback


def make_split(
    labels: LabelRaster,
    quota: int = DEFAULT_QUOTA,
    fallback: int = DEFAULT_FALLBACK,
    seed: int = 0,
) -> Split:
    """
    Draw ``quota`` labeled pixels per class (``fallback`` for classes smaller than quota)

    Args:
        labels: Ground truth
        quota: Labeled pixels for classes with at least ``quota`` pixels
        fallback: Labeled pixels for smaller classes
        seed: PCG64 seed; identical (labels, seed) give identical splits

    Returns:
        Split over flat indices of ``labels.index()``

    Raises:
        SplitError: a class would be left without test pixels
    """
    index = labels.index()
    codes = labels.codes[index.rows, index.cols]
    rng = make_rng(seed)
    labeled: List[np.ndarray] = []
    for k in range(1, labels.n_classes + 1):
        members = np.flatnonzero(codes == k)
        n_train = train_count(members.size, quota, fallback)
        if members.size < n_train + 1:
            raise SplitError(
                f"Class {k} has {members.size} pixels; need at least {n_train + 1} "
                f"to draw {n_train} labeled and keep one test pixel"
            )
        labeled.append(np.sort(rng.permutation(members)[:n_train]))
    labeled_idx = np.concatenate(labeled) if labeled else np.empty(0, dtype=np.int64)
    is_labeled = np.zeros(len(index), dtype=bool)
    is_labeled[labeled_idx] = True
    rest = np.flatnonzero(~is_labeled)
    split = Split(
        labeled=labeled_idx,
        labeled_classes=codes[labeled_idx],
        test=rest,
        test_classes=codes[rest],
        unlabeled=rest.copy(),
        seed=int(seed),
        per_class_quota=quota,
    )
    logger.debug(f"Split seed={seed}: {labeled_idx.size} labeled, {rest.size} test")
    return split


def write_split(path: str | Path, split: Split, index: PixelIndex) -> Path:
    """Audit export: ``index,row,col,class,role`` lines"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [(int(i), int(k), "train") for i, k in zip(split.labeled, split.labeled_classes)]
    rows += [(int(i), int(k), "test") for i, k in zip(split.test, split.test_classes)]
    rows.sort()
    lines = ["index,row,col,class,role"]
    for i, k, role in rows:
        m, n = index.to_coords(i)
        lines.append(f"{i},{m},{n},{k},{role}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_split(path: str | Path, seed: int = -1, quota: int = DEFAULT_QUOTA) -> Split:
    """Re-read an exported split; the unlabeled pool is the test set"""
    table = np.loadtxt(path, delimiter=",", skiprows=1, dtype=str, ndmin=2)
    if table.size == 0:
        raise SplitError(f"Split file {path} is empty")
    idx = table[:, 0].astype(np.int64)
    cls = table[:, 3].astype(np.int64)
    train = table[:, 4] == "train"
    return Split(
        labeled=idx[train],
        labeled_classes=cls[train],
        test=idx[~train],
        test_classes=cls[~train],
        unlabeled=idx[~train].copy(),
        seed=seed,
        per_class_quota=quota,
    )
