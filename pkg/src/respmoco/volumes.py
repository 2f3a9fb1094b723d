"""Dense volume and displacement-field containers with flat-binary file IO.

Conventions used throughout the package:

* volume arrays are indexed ``(z, y, x)``,
* displacement fields are ``(3, z, y, x)`` with component order ``(z, y, x)``
  and values in voxel units,
* files are flat little-endian binaries in z-major order with a JSON sidecar
  (same path + ``.json``) describing shape, spacing and units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import DimensionError, ParseError

DEFAULT_SPACING_MM = (2.0, 4.0, 4.0)
DEFAULT_SHAPE = (108, 152, 152)


@dataclass
class Volume3D:
    """A 3D scalar grid of activity or detected counts."""

    data: np.ndarray
    spacing_mm: tuple[float, float, float] = DEFAULT_SPACING_MM
    units: str = "activity"  # "activity" | "counts"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise DimensionError(f"volume must be 3D, got shape {self.data.shape}")
        if self.units not in ("activity", "counts"):
            raise ValueError(f"unknown units {self.units!r}")
        if np.any(self.data < 0):
            raise ValueError("volume values must be non-negative")
        self.spacing_mm = tuple(float(s) for s in self.spacing_mm)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def tensor(self, dtype=torch.float32) -> torch.Tensor:
        return torch.as_tensor(np.ascontiguousarray(self.data), dtype=dtype)

    def total(self) -> float:
        return float(self.data.sum())

    def like(self, data: np.ndarray, units: str | None = None) -> "Volume3D":
        """New volume sharing this one's spacing/units."""
        return Volume3D(data, self.spacing_mm, units or self.units, dict(self.meta))


@dataclass
class FlowField:
    """Per-voxel displacement ``u`` in voxel units, components ordered (z, y, x).

    ``warp.warp_with_flow`` applies it backward: output voxel ``x`` reads the
    input at ``x + u(x)``.
    """

    u: np.ndarray
    spacing_mm: tuple[float, float, float] = DEFAULT_SPACING_MM

    def __post_init__(self):
        self.u = np.asarray(self.u)
        if self.u.ndim != 4 or self.u.shape[0] != 3:
            raise DimensionError(f"flow must be (3, D, H, W), got {self.u.shape}")
        if not np.all(np.isfinite(self.u)):
            raise ValueError("flow contains non-finite values")
        self.spacing_mm = tuple(float(s) for s in self.spacing_mm)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.u.shape[1:]

    def tensor(self, dtype=torch.float32) -> torch.Tensor:
        return torch.as_tensor(np.ascontiguousarray(self.u), dtype=dtype)

    def mm(self) -> np.ndarray:
        """Displacements converted to mm, componentwise."""
        sp = np.asarray(self.spacing_mm).reshape(3, 1, 1, 1)
        return self.u * sp


def save_volume(vol: Volume3D, path: str | Path) -> None:
    path = Path(path)
    dtype = "<i4" if vol.units == "counts" else "<f4"
    vol.data.astype(dtype).tofile(path)
    sidecar = {
        "shape": list(vol.shape),
        "spacing_mm": list(vol.spacing_mm),
        "units": vol.units,
        "dtype": dtype,
        **vol.meta,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=1))


def load_volume(path: str | Path) -> Volume3D:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise ParseError(f"missing sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    shape = tuple(meta.pop("shape"))
    spacing = tuple(meta.pop("spacing_mm"))
    units = meta.pop("units")
    dtype = meta.pop("dtype", "<i4" if units == "counts" else "<f4")
    data = np.fromfile(path, dtype=dtype)
    if data.size != int(np.prod(shape)):
        raise ParseError(f"{path}: expected {np.prod(shape)} values, found {data.size}")
    return Volume3D(data.reshape(shape), spacing, units, meta)


def save_flow(flow: FlowField, path: str | Path) -> None:
    path = Path(path)
    flow.u.astype("<f4").tofile(path)
    sidecar = {
        "shape": list(flow.shape),
        "spacing_mm": list(flow.spacing_mm),
        "component_order": "zyx",
        "units": "voxel",
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=1))


def load_flow(path: str | Path) -> FlowField:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise ParseError(f"missing sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    shape = tuple(meta["shape"])
    u = np.fromfile(path, dtype="<f4")
    if u.size != 3 * int(np.prod(shape)):
        raise ParseError(f"{path}: expected {3 * np.prod(shape)} values, found {u.size}")
    return FlowField(u.reshape((3,) + shape), tuple(meta["spacing_mm"]))
