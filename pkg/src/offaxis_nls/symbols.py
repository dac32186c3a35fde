"""Fourier multipliers: powers of P_eps, the Laplacian and the linear group.

All multipliers are diagonal in Fourier space and applied exactly.  The
public functions accept fields in either representation and return the
result in the same representation as the input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .grid import Field, Gauge, GridSpec, Space, fftn, ifftn

__all__ = [
    "MultiplierKind",
    "MultiplierSpec",
    "symbol",
    "apply_multiplier",
    "apply_peps_power",
    "apply_laplacian",
    "propagate_linear",
    "propagator_phase",
    "scaling_bounds_check",
]


class MultiplierKind(str, enum.Enum):
    PEPS_POWER = "peps_power"
    LAPLACIAN = "laplacian"
    PROPAGATOR_PHASE = "propagator_phase"


@dataclass(frozen=True)
class MultiplierSpec:
    kind: MultiplierKind
    epsilon: float
    s: float = 0.0  # power for PEPS_POWER
    t: float = 0.0  # time for PROPAGATOR_PHASE


def peps_power_symbol(grid: GridSpec, s: float, epsilon: float | None = None) -> np.ndarray:
    """(1 + eps^2 |eta|^2)^(s/2) on the spectral grid."""
    eps = grid.epsilon if epsilon is None else epsilon
    if s == 0 or eps == 0 or grid.k == 0:
        return np.ones(grid.shape)
    return (1.0 + eps**2 * grid.eta_squared) ** (s / 2.0)


def propagator_phase(grid: GridSpec, t: float, epsilon: float | None = None) -> np.ndarray:
    """exp(-i (|xi|^2 + |eta|^2) t / (1 + eps^2 |eta|^2)), the symbol of S_eps(t)."""
    eps = grid.epsilon if epsilon is None else epsilon
    omega = grid.k_squared / (1.0 + eps**2 * grid.eta_squared)
    return np.exp(-1j * t * omega)


def symbol(grid: GridSpec, spec: MultiplierSpec) -> np.ndarray:
    if spec.kind is MultiplierKind.PEPS_POWER:
        return peps_power_symbol(grid, spec.s, spec.epsilon)
    if spec.kind is MultiplierKind.LAPLACIAN:
        return -grid.k_squared
    if spec.kind is MultiplierKind.PROPAGATOR_PHASE:
        return propagator_phase(grid, spec.t, spec.epsilon)
    raise ValueError(f"unknown multiplier kind {spec.kind}")


def apply_multiplier(f: Field, m: np.ndarray, **changes) -> Field:
    if f.space is Space.SPECTRAL:
        return f.with_data(m * f.data, **changes)
    return f.with_data(ifftn(m * fftn(f.data)), **changes)


def apply_peps_power(f: Field, s: float) -> Field:
    """Apply P_eps^{s/2}, i.e. multiply by (1 + eps^2|eta|^2)^{s/2}.

    ``s = 1`` maps the U gauge to the V gauge and ``s = -1`` maps back; the
    gauge tag is updated accordingly.  Other powers leave the tag alone.
    """
    gauge = f.gauge
    if s == 1 and f.gauge is Gauge.U:
        gauge = Gauge.V
    elif s == -1 and f.gauge is Gauge.V:
        gauge = Gauge.U
    if s == 0:
        return f.with_data(f.data.copy(), gauge=gauge)
    return apply_multiplier(f, peps_power_symbol(f.grid, s), gauge=gauge)


def apply_laplacian(f: Field) -> Field:
    return apply_multiplier(f, -f.grid.k_squared)


def propagate_linear(f: Field, t: float) -> Field:
    """Exact linear flow S_eps(t) = exp(i t P_eps^{-1} Delta)."""
    if t == 0:
        return f.with_data(f.data.copy())
    return apply_multiplier(f, propagator_phase(f.grid, t))


def scaling_bounds_check(f: Field, s: float, rtol: float = 1e-10) -> tuple[bool, bool]:
    """Check the eps-scaling sandwich between ||P_eps^{s/2} f|| and ||f||_{H^s}.

    For s >= 0:  eps^s ||f||_{H^s} <= ||P_eps^{s/2} f||_{L^2} <= ||f||_{H^s}.
    For s < 0:   ||f||_{H^s} <= ||P_eps^{s/2} f||_{L^2} <= eps^s ||f||_{H^s}.

    ``H^s`` is the y-Sobolev norm with weight (1 + |eta|^2)^{s/2} over L^2_x.
    """
    from .norms import mixed_norm

    g = f if f.space is Space.PHYSICAL else f.with_data(ifftn(f.data), space=Space.PHYSICAL)
    hs = mixed_norm(g, 2.0, s)
    mid = apply_peps_power(g, s).l2_norm()
    eps = f.grid.epsilon
    slack = rtol * max(hs, mid, np.finfo(float).tiny)
    with np.errstate(divide="ignore"):
        scale = eps**s if eps > 0 else (0.0 if s > 0 else (1.0 if s == 0 else np.inf))
    if s >= 0:
        lower, upper = scale * hs, hs
    else:
        lower, upper = hs, scale * hs
    return bool(lower <= mid + slack), bool(mid <= upper + slack)
