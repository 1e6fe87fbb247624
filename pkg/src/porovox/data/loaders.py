"""Volume and mask file I/O for Porovox.

A volume is stored as a pair of files: ``<name>.json`` holding the header and
``<name>.raw`` holding the payload (little-endian, x-fastest). Masks use the
same layout with dtype ``u8``.
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from loguru import logger

from .models import DEFAULT_SPACING, Spacing, Volume

PathLike = Union[str, Path]

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


class VolumeFormatError(ValueError):
    """Raised when a header/raw pair cannot be decoded into a volume."""


def header_path(path: PathLike) -> Path:
    """Header file for ``path`` (``.json`` suffix added when missing)."""
    path = Path(path)
    return path if path.suffix == ".json" else path.with_suffix(".json")


class VolumeLoader:
    """Loader for one header+raw pair."""

    def __init__(self, file_path: PathLike):
        """Initialize the loader.

        Args:
            file_path: Header path, with or without the ``.json`` suffix.
        """
        self.file_path = header_path(file_path)
        self._header: Optional[Dict[str, Any]] = None

    @property
    def header(self) -> Dict[str, Any]:
        if self._header is None:
            self._header = self._read_header()
        return self._header

    def _read_header(self) -> Dict[str, Any]:
        if not self.file_path.exists():
            raise FileNotFoundError(f"Volume header not found: {self.file_path}")
        try:
            header = json.loads(self.file_path.read_text())
        except json.JSONDecodeError as e:
            raise VolumeFormatError(f"Invalid volume header {self.file_path}: {e}") from e

        missing = [key for key in ("dims", "dtype", "data_file") if key not in header]
        if missing:
            raise VolumeFormatError(
                f"Volume header {self.file_path} is missing field(s): {', '.join(missing)}"
            )
        if header["dtype"] not in _DTYPES:
            raise VolumeFormatError(
                f"Unsupported dtype '{header['dtype']}' in {self.file_path}; expected f32 or u8"
            )
        if header.get("order", "xyz") != "xyz":
            raise VolumeFormatError(f"Unsupported voxel order '{header['order']}'; expected xyz")
        dims = header["dims"]
        if len(dims) != 3 or any(int(n) < 1 for n in dims):
            raise VolumeFormatError(f"Header dims must be 3 positive integers, got {dims}")
        return header

    def _read_payload(self) -> np.ndarray:
        header = self.header
        raw_path = self.file_path.parent / header["data_file"]
        if not raw_path.exists():
            raise FileNotFoundError(f"Volume payload not found: {raw_path}")

        dims = tuple(int(n) for n in header["dims"])
        payload = np.fromfile(raw_path, dtype=_DTYPES[header["dtype"]])
        expected = int(np.prod(dims))
        if payload.size != expected:
            raise VolumeFormatError(
                f"Payload {raw_path.name} holds {payload.size} values, header dims {list(dims)} "
                f"require {expected}"
            )
        return payload.reshape(dims, order="F")

    @property
    def spacing(self) -> Spacing:
        return tuple(float(s) for s in self.header.get("spacing_um", DEFAULT_SPACING))  # type: ignore[return-value]

    def load_data(self) -> Volume:
        """Load the pair as a float32 volume."""
        logger.info(f"Loading volume from {self.file_path}")
        data = self._read_payload()
        if not np.isfinite(data).all():
            raise VolumeFormatError(f"Volume {self.file_path} contains non-finite values")
        volume = Volume(data=data, spacing=self.spacing)
        logger.info(f"Loaded volume with dims {list(volume.dims)}")
        return volume

    def load_mask(self) -> np.ndarray:
        """Load the pair as a boolean mask."""
        logger.info(f"Loading mask from {self.file_path}")
        data = self._read_payload()
        if self.header["dtype"] == "u8" and np.any(data > 1):
            raise VolumeFormatError(f"Mask {self.file_path} holds values other than 0 and 1")
        return np.asarray(data != 0)


def _write_pair(
    array: np.ndarray, path: PathLike, dtype: str, spacing: Spacing
) -> Path:
    target = header_path(path)
    raw_path = target.with_suffix(".raw")
    header = {
        "dims": [int(n) for n in array.shape],
        "spacing_um": [float(s) for s in spacing],
        "dtype": dtype,
        "order": "xyz",
        "data_file": raw_path.name,
    }
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        np.asarray(array, dtype=_DTYPES[dtype]).ravel(order="F").tofile(raw_path)
        target.write_text(json.dumps(header, indent=2))
    except OSError as e:
        logger.error(f"Failed to write {target}: {e}")
        raise
    return target


def load_volume(path: PathLike) -> Volume:
    return VolumeLoader(path).load_data()


def save_volume(volume: Volume, path: PathLike) -> Path:
    """Write ``volume`` as a header+raw pair and return the header path."""
    target = _write_pair(volume.data, path, "f32", volume.spacing)
    logger.info(f"Saved volume {list(volume.dims)} to {target}")
    return target


def load_mask(path: PathLike) -> np.ndarray:
    return VolumeLoader(path).load_mask()


def save_mask(mask: np.ndarray, path: PathLike, spacing: Spacing = DEFAULT_SPACING) -> Path:
    """Write a boolean mask as a ``u8`` header+raw pair."""
    mask = np.asarray(mask)
    if mask.ndim != 3:
        raise VolumeFormatError(f"Mask must be 3D, got {mask.ndim}D")
    target = _write_pair(mask.astype(bool), path, "u8", spacing)
    logger.info(f"Saved mask with {int(mask.sum())} true voxels to {target}")
    return target


def load_mask_with_spacing(path: PathLike) -> Tuple[np.ndarray, Spacing]:
    loader = VolumeLoader(path)
    return loader.load_mask(), loader.spacing
