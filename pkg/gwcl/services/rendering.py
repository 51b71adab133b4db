"""
Rendering
Class maps (prediction / ground-truth grids to PNG) and pseudocolor
composites of the cube, drawn with Pillow.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from gwcl.errors import ConfigError, DataFormatError
from gwcl.services.hsi_data import HsiCube, PixelIndex

logger = logging.getLogger("gwcl.render")

# Background first, then 16 class colors
DEFAULT_PALETTE: List[str] = [
    "#000000",
    "#ff0000", "#00ff00", "#0000ff", "#ffff00",
    "#00ffff", "#ff00ff", "#c0c0c0", "#808080",
    "#800000", "#808000", "#008000", "#800080",
    "#008080", "#000080", "#ffa500", "#ffd700",
]


def parse_palette(text: str) -> List[Tuple[int, int, int]]:
    """'#rrggbb,#rrggbb,...' to RGB tuples"""
    colors = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        h = item.lstrip("#")
        if len(h) != 6:
            raise ConfigError(f"Bad palette color '{item}'")
        try:
            colors.append((int(h[0:2], 16), int(h[2:4], 16), int(h[4:6], 16)))
        except ValueError as e:
            raise ConfigError(f"Bad palette color '{item}'") from e
    return colors


def default_palette() -> List[Tuple[int, int, int]]:
    return parse_palette(",".join(DEFAULT_PALETTE))


@dataclass
class ClassMap:
    """M x N grid of class codes (0 = background), its palette and the class count c"""

    codes: np.ndarray
    palette: Sequence[Tuple[int, int, int]]
    n_classes: Optional[int] = None

    @classmethod
    def from_predictions(cls, predictions: np.ndarray, index: PixelIndex, palette,
                         n_classes: Optional[int] = None) -> "ClassMap":
        if predictions.shape[0] != len(index):
            raise DataFormatError(f"{predictions.shape[0]} predictions for {len(index)} pixels")
        grid = np.zeros(index.shape, dtype=np.int64)
        grid[index.rows, index.cols] = predictions
        return cls(codes=grid, palette=palette, n_classes=n_classes)

    def to_rgb(self) -> np.ndarray:
        top = int(self.codes.max()) if self.codes.size else 0
        if self.n_classes is not None and top > self.n_classes:
            raise DataFormatError(f"Class code {top} above the class count {self.n_classes}")
        needed = (self.n_classes if self.n_classes is not None else top) + 1
        if len(self.palette) < needed:
            raise ConfigError(f"Palette has {len(self.palette)} colors, map needs {needed}")
        lut = np.asarray(self.palette, dtype=np.uint8)
        return lut[self.codes]


def render_map(class_map: ClassMap, path: str | Path) -> Path:
    """Write the class map as a lossless PNG"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(class_map.to_rgb()).save(path, format="PNG")
    logger.info(f"Wrote class map {path} ({class_map.codes.shape[0]}x{class_map.codes.shape[1]})")
    return path


def render_pseudocolor(cube: HsiCube, bands: Sequence[int], path: str | Path,
                       clip: Tuple[float, float] = (2.0, 98.0)) -> Path:
    """
    Three-band composite with a per-band percentile stretch

    Args:
        cube: Source cube
        bands: (red, green, blue) band indices, 0-based
        path: Output PNG
        clip: Lower/upper percentiles mapped to 0 / 255
    """
    if len(bands) != 3:
        raise ConfigError(f"Need exactly 3 bands for a pseudocolor image, got {list(bands)}")
    if any(b < 0 or b >= cube.bands for b in bands):
        raise ConfigError(f"Band index out of range [0, {cube.bands})")
    channels = []
    for b in bands:
        band = cube.values[b]
        lo, hi = np.percentile(band, clip)
        scaled = np.zeros_like(band) if hi <= lo else np.clip((band - lo) / (hi - lo), 0.0, 1.0)
        channels.append(np.round(scaled * 255.0).astype(np.uint8))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.dstack(channels)).save(path, format="PNG")
    return path
