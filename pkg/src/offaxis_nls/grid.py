"""Periodic split grids and complex fields living on them.

The box ``[-L_i/2, L_i/2)`` approximates R^d with coordinates split as
``x in R^(d-k)`` (first ``d - k`` axes) and ``y in R^k`` (last ``k`` axes).
Transforms are unitary (``norm="ortho"``) so that sums of squares are
preserved exactly and integral norms only pick up the cell volume.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridSpec",
    "Field",
    "Gauge",
    "Space",
    "build_grid",
    "to_spectral",
    "to_physical",
    "save_field",
    "load_field",
    "set_fft_workers",
]

_FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    """Set the thread count used by every transform in the package."""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


def fftn(a: np.ndarray, axes=None) -> np.ndarray:
    return sfft.fftn(a, axes=axes, norm="ortho", workers=_FFT_WORKERS)


def ifftn(a: np.ndarray, axes=None) -> np.ndarray:
    return sfft.ifftn(a, axes=axes, norm="ortho", workers=_FFT_WORKERS)


class Gauge(str, enum.Enum):
    U = "U"  # physical unknown u
    V = "V"  # transformed unknown v = P_eps^{1/2} u


class Space(str, enum.Enum):
    PHYSICAL = "physical"
    SPECTRAL = "spectral"


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Uniform periodic grid on a d-dimensional box with k off-axis directions.

    Attributes
    ----------
    d : int
        Spatial dimension, 1 <= d <= 3.
    k : int
        Number of off-axis (y) directions; these are the last ``k`` axes.
    epsilon : float
        Strength of the off-axis operator ``P_eps = 1 - eps^2 Delta_y``.
    box_lengths : tuple of float
        Box side lengths.
    resolutions : tuple of int
        Even number of points per axis.
    """

    d: int
    k: int
    epsilon: float
    box_lengths: tuple[float, ...]
    resolutions: tuple[int, ...]
    wavenumbers: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 1 <= self.d <= 3:
            raise ValueError(f"dimension d must be in [1, 3], got {self.d}")
        if not 0 <= self.k <= self.d:
            raise ValueError(f"off-axis count k must satisfy 0 <= k <= d, got k={self.k}, d={self.d}")
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ValueError(f"epsilon must be a nonnegative real, got {self.epsilon}")
        if len(self.box_lengths) != self.d or len(self.resolutions) != self.d:
            raise ValueError("box_lengths and resolutions must have d entries")
        for L in self.box_lengths:
            if not L > 0:
                raise ValueError(f"box lengths must be positive, got {L}")
        for n in self.resolutions:
            if n <= 0 or n % 2:
                raise ValueError(f"resolutions must be positive even integers, got {n}")
        ks = tuple(
            2.0 * np.pi * np.fft.fftfreq(n, d=L / n)
            for L, n in zip(self.box_lengths, self.resolutions)
        )
        object.__setattr__(self, "wavenumbers", ks)

    # equality and hashing by parameters, not by the cached arrays
    def _key(self) -> tuple:
        return (self.d, self.k, float(self.epsilon), tuple(map(float, self.box_lengths)),
                tuple(map(int, self.resolutions)))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GridSpec) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.resolutions)

    @property
    def size(self) -> int:
        return int(np.prod(self.resolutions))

    @property
    def x_axes(self) -> tuple[int, ...]:
        return tuple(range(self.d - self.k))

    @property
    def y_axes(self) -> tuple[int, ...]:
        return tuple(range(self.d - self.k, self.d))

    @property
    def xi(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers of the x-axes."""
        return self.wavenumbers[: self.d - self.k]

    @property
    def eta(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers of the y-axes (empty when k = 0)."""
        return self.wavenumbers[self.d - self.k:]

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.box_lengths, self.resolutions))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def volume(self) -> float:
        return float(np.prod(self.box_lengths))

    def axis_coordinates(self, axis: int) -> np.ndarray:
        L, n = self.box_lengths[axis], self.resolutions[axis]
        return -L / 2 + (L / n) * np.arange(n)

    def coordinates(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        return [self._broadcast(self.axis_coordinates(i), i) for i in range(self.d)]

    def _broadcast(self, v: np.ndarray, axis: int) -> np.ndarray:
        shape = [1] * self.d
        shape[axis] = v.size
        return v.reshape(shape)

    @cached_property
    def k_squared(self) -> np.ndarray:
        """|xi|^2 + |eta|^2 on the full spectral grid."""
        out = np.zeros(self.shape)
        for i, kk in enumerate(self.wavenumbers):
            out = out + self._broadcast(kk**2, i)
        return out

    @cached_property
    def eta_squared(self) -> np.ndarray:
        """|eta|^2 broadcast on the full spectral grid (zeros if k = 0)."""
        out = np.zeros(self.shape)
        for i in self.y_axes:
            out = out + self._broadcast(self.wavenumbers[i] ** 2, i)
        return out

    @cached_property
    def peps_symbol(self) -> np.ndarray:
        """Symbol 1 + eps^2 |eta|^2 of P_eps."""
        return 1.0 + self.epsilon**2 * self.eta_squared

    def band_mask(self, fraction: float) -> np.ndarray:
        """Boolean mask of modes with |n_i| <= fraction * N_i / 2 on every axis."""
        mask = np.ones(self.shape, dtype=bool)
        for i, n in enumerate(self.resolutions):
            idx = np.abs(np.fft.fftfreq(n, d=1.0 / n))
            mask = mask & self._broadcast(idx <= fraction * n / 2, i)
        return mask

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Modes kept by the 2/3 rule."""
        return self.band_mask(2.0 / 3.0)

    @cached_property
    def tail_mask(self) -> np.ndarray:
        """Outer third of the dealiased band: kept by 2/3 rule but outside 4/9 of Nyquist."""
        return self.dealias_mask & ~self.band_mask(4.0 / 9.0)

    def fingerprint(self) -> str:
        return hashlib.sha1(repr(self._key()).encode()).hexdigest()[:12]

    def with_params(self, **changes) -> GridSpec:
        params = dict(d=self.d, k=self.k, epsilon=self.epsilon,
                      box_lengths=self.box_lengths, resolutions=self.resolutions)
        params.update(changes)
        return build_grid(**params)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "k": self.k,
            "epsilon": float(self.epsilon),
            "box_lengths": [float(v) for v in self.box_lengths],
            "resolutions": [int(v) for v in self.resolutions],
        }


def build_grid(d, k, epsilon, box_lengths, resolutions) -> GridSpec:
    """Validate parameters and return a :class:`GridSpec`."""
    lengths = tuple(float(v) for v in np.atleast_1d(box_lengths))
    res = np.atleast_1d(resolutions)
    if np.any(res != np.round(res)):
        raise ValueError(f"resolutions must be integers, got {list(res)}")
    return GridSpec(int(d), int(k), float(epsilon), lengths, tuple(int(v) for v in res))


@dataclass(frozen=True, eq=False)
class Field:
    """Complex array on a grid, tagged with its gauge and representation."""

    grid: GridSpec
    data: np.ndarray
    gauge: Gauge = Gauge.U
    space: Space = Space.PHYSICAL

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.shape != self.grid.shape:
            raise ValueError(f"data shape {arr.shape} does not match grid {self.grid.shape}")
        if not np.iscomplexobj(arr):
            arr = arr.astype(np.complex128)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "gauge", Gauge(self.gauge))
        object.__setattr__(self, "space", Space(self.space))

    def with_data(self, data: np.ndarray, **changes) -> Field:
        return replace(self, data=data, **changes)

    def conj(self) -> Field:
        if self.space is not Space.PHYSICAL:
            raise ValueError("conjugation is defined on physical-space fields")
        return self.with_data(np.conj(self.data))

    def __add__(self, other: Field) -> Field:
        _check_compatible(self, other)
        return self.with_data(self.data + other.data)

    def __sub__(self, other: Field) -> Field:
        _check_compatible(self, other)
        return self.with_data(self.data - other.data)

    def __mul__(self, c) -> Field:
        return self.with_data(c * self.data)

    __rmul__ = __mul__

    def l2_norm(self) -> float:
        """Quadrature L^2 norm (either representation; unitary transform)."""
        return float(np.sqrt(self.grid.cell_volume * np.vdot(self.data, self.data).real))

    @classmethod
    def from_function(cls, grid: GridSpec, fn, gauge: Gauge = Gauge.U) -> Field:
        return cls(grid, np.broadcast_to(fn(*grid.coordinates()), grid.shape).astype(np.complex128),
                   gauge=gauge)

    @classmethod
    def zeros(cls, grid: GridSpec, gauge: Gauge = Gauge.U) -> Field:
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128), gauge=gauge)


def _check_compatible(a: Field, b: Field) -> None:
    if a.grid != b.grid or a.gauge != b.gauge or a.space != b.space:
        raise ValueError("fields live on different grids, gauges or representations")


def to_spectral(f: Field) -> Field:
    if f.space is not Space.PHYSICAL:
        raise ValueError("to_spectral expects a physical-space field")
    return f.with_data(fftn(f.data), space=Space.SPECTRAL)


def to_physical(f: Field) -> Field:
    if f.space is not Space.SPECTRAL:
        raise ValueError("to_physical expects a spectral-space field")
    return f.with_data(ifftn(f.data), space=Space.PHYSICAL)


# Binary container:
#   bytes 0..7   magic b"OANLSFLD"
#   bytes 8..11  little-endian uint32 header length H
#   next H bytes UTF-8 JSON header: d, k, epsilon, box_lengths, resolutions,
#                gauge, space, dtype ("complex128" | "complex64")
#   remainder    row-major (C order) little-endian complex payload
_MAGIC = b"OANLSFLD"


def save_field(f: Field, path, dtype: str = "complex128") -> Path:
    if dtype not in ("complex128", "complex64"):
        raise ValueError(f"unsupported payload dtype {dtype}")
    header = f.grid.to_dict()
    header.update(gauge=f.gauge.value, space=f.space.value, dtype=dtype)
    blob = json.dumps(header, sort_keys=True).encode()
    payload = np.ascontiguousarray(f.data, dtype=np.dtype(dtype).newbyteorder("<"))
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload.tobytes(order="C"))
    return path


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a field container")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode())
        raw = fh.read()
    grid = build_grid(header["d"], header["k"], header["epsilon"],
                      header["box_lengths"], header["resolutions"])
    dt = np.dtype(header["dtype"]).newbyteorder("<")
    data = np.frombuffer(raw, dtype=dt).reshape(grid.shape).astype(np.complex128)
    return Field(grid, data, gauge=Gauge(header["gauge"]), space=Space(header["space"]))
