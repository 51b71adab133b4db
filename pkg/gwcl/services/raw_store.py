"""
Raw array store
Every artifact (cubes, label rasters, PCA models, graphs, checkpoints) is a
raw little-endian payload ``<stem>.raw`` next to a plain-text sidecar
``<stem>.hdr.txt`` of ``key: value`` lines.
"""
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from gwcl.errors import DataFormatError

HEADER_SUFFIX = ".hdr.txt"
RAW_SUFFIX = ".raw"

DTYPES: Dict[str, str] = {
    "f32": "f4",
    "f64": "f8",
    "u16": "u2",
    "u8": "u1",
    "i32": "i4",
    "i64": "i8",
}
BYTEORDERS = {"little": "<", "big": ">"}


def stem_of(path: str | Path) -> Path:
    """Strip ``.raw`` / ``.hdr.txt`` so either file name can be passed"""
    p = Path(path)
    name = p.name
    if name.endswith(HEADER_SUFFIX):
        return p.with_name(name[: -len(HEADER_SUFFIX)])
    if name.endswith(RAW_SUFFIX):
        return p.with_name(name[: -len(RAW_SUFFIX)])
    return p


def header_path(stem: str | Path) -> Path:
    stem = stem_of(stem)
    return stem.with_name(stem.name + HEADER_SUFFIX)


def raw_path(stem: str | Path) -> Path:
    stem = stem_of(stem)
    return stem.with_name(stem.name + RAW_SUFFIX)


def read_header(stem: str | Path) -> Dict[str, str]:
    """Parse a sidecar header into a dict (keys lower-cased, values stripped)"""
    path = header_path(stem)
    if not path.exists():
        raise DataFormatError(f"Missing header file: {path}")
    header: Dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise DataFormatError(f"{path}:{lineno}: expected 'key: value', got {line!r}")
        key, value = line.split(":", 1)
        header[key.strip().lower()] = value.strip()
    return header


def write_header(stem: str | Path, header: Dict[str, object]) -> Path:
    path = header_path(stem)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}: {value}" for key, value in header.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def numpy_dtype(code: str, byteorder: str = "little") -> np.dtype:
    """Map a header dtype code + byte order to a numpy dtype"""
    if code not in DTYPES:
        raise DataFormatError(f"Unsupported element type '{code}' (expected one of {sorted(DTYPES)})")
    if byteorder not in BYTEORDERS:
        raise DataFormatError(f"Unsupported byte order '{byteorder}'")
    return np.dtype(BYTEORDERS[byteorder] + DTYPES[code])


def dtype_code(dtype: np.dtype) -> str:
    kind = np.dtype(dtype).newbyteorder("=").str[1:]
    for code, spec in DTYPES.items():
        if spec == kind:
            return code
    raise DataFormatError(f"No header code for dtype {dtype}")


def read_payload(stem: str | Path, code: str, byteorder: str, count: int) -> np.ndarray:
    """
    Read exactly ``count`` elements from ``<stem>.raw``

    Raises:
        DataFormatError: payload size does not match the header
    """
    path = raw_path(stem)
    if not path.exists():
        raise DataFormatError(f"Missing payload file: {path}")
    dtype = numpy_dtype(code, byteorder)
    expected = count * dtype.itemsize
    actual = path.stat().st_size
    if actual != expected:
        raise DataFormatError(
            f"Size mismatch for {path}: header declares {count} x {code} "
            f"({expected} bytes), payload has {actual} bytes"
        )
    return np.fromfile(path, dtype=dtype, count=count)


def write_payload(stem: str | Path, array: np.ndarray, code: str) -> Path:
    path = raw_path(stem)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(array, dtype=numpy_dtype(code, "little")).tofile(path)
    return path


def write_array(stem: str | Path, array: np.ndarray, **meta: object) -> Path:
    """
    Write a C-ordered array with a ``shape`` header plus extra metadata

    Args:
        stem: Output path without suffix
        array: Array to store; its dtype picks the element type
        meta: Extra header lines

    Returns:
        Path of the raw payload
    """
    array = np.asarray(array)
    code = dtype_code(array.dtype)
    header: Dict[str, object] = {
        "shape": ",".join(str(s) for s in array.shape),
        "dtype": code,
        "byteorder": "little",
    }
    header.update(meta)
    write_header(stem, header)
    return write_payload(stem, array, code)


def read_array(stem: str | Path) -> Tuple[np.ndarray, Dict[str, str]]:
    """Read an array written by :func:`write_array`; returns (array, header)"""
    header = read_header(stem)
    try:
        shape = tuple(int(s) for s in header["shape"].split(",") if s.strip() != "")
        code = header["dtype"]
    except KeyError as e:
        raise DataFormatError(f"{header_path(stem)} lacks required key {e}") from e
    except ValueError as e:
        raise DataFormatError(f"{header_path(stem)} has a malformed shape: {header['shape']}") from e
    count = int(np.prod(shape)) if shape else 1
    data = read_payload(stem, code, header.get("byteorder", "little"), count)
    return data.astype(data.dtype.newbyteorder("=")).reshape(shape), header
