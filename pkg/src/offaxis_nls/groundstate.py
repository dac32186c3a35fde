"""Ground state Q of  -Q + Delta Q + |Q|^{2 sigma} Q = 0.

Normalized gradient flow in pseudo-time: a semi-implicit step of
``Q_tau = Delta Q - Q + |Q|^{2 sigma} Q`` followed by an amplitude rescaling
onto the Nehari manifold

    ||grad Q||^2 + ||Q||^2 = ||Q||_{2 sigma + 2}^{2 sigma + 2},

on which the ground state is the action minimizer.  Fixed-mass
normalization is avoided because in the L^2-critical case every mass other
than ||Q||^2 has no minimizer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import Field, Gauge, GridSpec, fftn, ifftn, load_field, save_field

__all__ = ["GroundState", "GroundStateError", "compute_ground_state", "stationary_residual",
           "cached_ground_state"]

log = logging.getLogger(__name__)


class GroundStateError(RuntimeError):
    def __init__(self, msg: str, residual: float):
        super().__init__(f"{msg} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class GroundState:
    field: Field
    l2_norm: float
    sigma: float
    d_eff: int
    residual: float
    iterations: int = 0
    actions: tuple[float, ...] = ()


def stationary_residual(q: np.ndarray, grid: GridSpec, sigma: float) -> float:
    """||-Q + Delta Q + |Q|^{2 sigma} Q||_{L^2} with a spectral Laplacian."""
    qh = fftn(q)
    res = ifftn(-(1.0 + grid.k_squared) * qh) + np.abs(q) ** (2 * sigma) * q
    return float(np.sqrt(grid.cell_volume * np.sum(np.abs(res) ** 2)))


def compute_ground_state(d_eff: int, sigma: float, grid: GridSpec, tol: float = 1e-10,
                         tau: float = 1.0, max_iter: int = 20000) -> GroundState:
    """Normalized gradient flow from a unit Gaussian seed.

    The full Laplacian of ``grid`` is used; ``k`` and ``epsilon`` of the grid
    play no role in the stationary problem.
    """
    if d_eff not in (1, 2):
        raise ValueError(f"d_eff must be 1 or 2, got {d_eff}")
    if grid.d != d_eff:
        raise ValueError(f"grid dimension {grid.d} differs from d_eff={d_eff}")
    if not sigma > 0 or (d_eff > 2 and sigma >= 2.0 / (d_eff - 2)):
        raise ValueError(f"no ground state for sigma={sigma} in d={d_eff}")
    if tol <= 0:
        raise ValueError("tol must be positive")

    dv = grid.cell_volume
    ksq = grid.k_squared
    r2 = sum(c**2 for c in grid.coordinates())
    q = np.exp(-r2 / 2.0).astype(float)
    denom = 1.0 + tau * (1.0 + ksq)
    p = 2 * sigma + 2

    def quad(qh: np.ndarray) -> float:
        return dv * float(np.sum((1.0 + ksq) * np.abs(qh) ** 2))

    def to_nehari(qr: np.ndarray) -> tuple[np.ndarray, float]:
        qh = fftn(qr)
        a = quad(qh)
        b = dv * float(np.sum(np.abs(qr) ** p))
        c = (a / b) ** (1.0 / (2 * sigma))
        return c * qr, sigma / p * a * c * c

    q, action = to_nehari(q)
    actions = [action]
    res = stationary_residual(q, grid, sigma)
    it = 0
    while res > tol:
        if it >= max_iter:
            raise GroundStateError("ground-state iteration did not converge", res)
        qh = fftn(q)
        g = np.abs(q) ** (2 * sigma) * q
        q = ifftn((qh + tau * fftn(g)) / denom).real
        q, action = to_nehari(q)
        actions.append(action)
        res = stationary_residual(q, grid, sigma)
        it += 1
    if np.min(q) <= 0:
        raise GroundStateError("profile is not strictly positive; enlarge the box", res)
    log.info("ground state d=%d sigma=%g: %d iterations, residual %.2e", d_eff, sigma, it, res)
    fld = Field(grid, q.astype(np.complex128), gauge=Gauge.U)
    return GroundState(field=fld, l2_norm=fld.l2_norm(), sigma=sigma, d_eff=d_eff,
                       residual=res, iterations=it, actions=tuple(actions))


def cached_ground_state(d_eff: int, sigma: float, grid: GridSpec, cache_dir, tol: float = 1e-10) -> GroundState:
    """Ground state read from / written to ``cache_dir`` keyed by (d_eff, sigma, grid)."""
    path = Path(cache_dir) / f"groundstate_d{d_eff}_s{sigma:g}_{grid.fingerprint()}.fld"
    if path.exists():
        fld = load_field(path)
        if fld.grid == grid:
            q = fld.data.real
            res = stationary_residual(q, grid, sigma)
            if res <= tol:
                return GroundState(fld, fld.l2_norm(), sigma, d_eff, res)
    gs = compute_ground_state(d_eff, sigma, grid, tol=tol)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_field(gs.field, path)
    return gs
