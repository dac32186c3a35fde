"""Mixed Lebesgue-Sobolev norms, Strichartz admissibility and conserved quantities.

The mixed norm ``L^p_x H^s_y`` uses the eps-independent weight
``<eta>^s = (1 + |eta|^2)^{s/2}``: take the partial transform in y, weight,
take the L^2 norm over eta at every x, then the L^p norm over x.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import Field, GridSpec, Space, fftn, ifftn

__all__ = [
    "AdmissiblePair",
    "delta_exponent",
    "is_admissible",
    "lane_pair_for_sigma",
    "mixed_norm",
    "y_profile",
    "w_exponents",
    "w_norm_accumulate",
    "time_norm",
    "energy",
    "modified_mass",
    "grad_l2",
    "h1_norm",
    "spectral_tail",
]

log = logging.getLogger(__name__)

_ADM_TOL = 1e-12


def _inv(r: float) -> float:
    return 0.0 if math.isinf(r) else 1.0 / r


def delta_exponent(r: float, d: int, k: int) -> float:
    """delta(r) = (d - k)(1/2 - 1/r), with 1/inf = 0."""
    if r < 2:
        raise ValueError(f"r must be >= 2, got {r}")
    if not d > k >= 0:
        raise ValueError(f"need d > k >= 0, got d={d}, k={k}")
    return (d - k) * (0.5 - _inv(r))


def _is_endpoint(q: float, r: float, d: int, k: int) -> bool:
    m = d - k
    if m < 2 or q != 2:
        return False
    if m == 2:
        return math.isinf(r)
    return abs(r - 2.0 * m / (m - 2)) <= _ADM_TOL * r


def is_admissible(q: float, r: float, d: int, k: int) -> bool:
    if not (2 <= q and 2 <= r) or not d > k >= 0:
        return False
    if abs(2.0 * _inv(q) - delta_exponent(r, d, k)) > _ADM_TOL:
        return False
    return not _is_endpoint(q, r, d, k)


@dataclass(frozen=True)
class AdmissiblePair:
    q: float
    r: float
    d: int
    k: int

    def __post_init__(self) -> None:
        if not is_admissible(self.q, self.r, self.d, self.k):
            raise ValueError(f"(q, r) = ({self.q}, {self.r}) is not admissible for d={self.d}, k={self.k}")

    @property
    def delta(self) -> float:
        return delta_exponent(self.r, self.d, self.k)


def lane_pair_for_sigma(sigma: float, d: int, k: int) -> AdmissiblePair:
    """Pair (gamma, rho) = (4(sigma+1)/((d-k) sigma), 2(sigma+1)) of the contraction argument."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not d > k:
        raise ValueError("the contraction pair needs d > k")
    gamma = 4.0 * (sigma + 1.0) / ((d - k) * sigma)
    rho = 2.0 * (sigma + 1.0)
    if gamma < 2 or (gamma == 2 and d - k >= 2):
        raise ValueError(f"sigma={sigma} gives an endpoint or inadmissible pair for d-k={d - k}")
    # gamma is computed by division; snap to exact admissibility.
    return AdmissiblePair(2.0 / delta_exponent(rho, d, k), rho, d, k)


def _physical(f: Field) -> np.ndarray:
    return f.data if f.space is Space.PHYSICAL else ifftn(f.data)


def y_profile(f: Field, s: float) -> np.ndarray:
    """||f(x, .)||_{H^s_y} on the x-grid (a scalar array when k = d)."""
    g = f.grid
    data = _physical(f)
    if g.k == 0:
        return np.abs(data)
    ya = g.y_axes
    ft = fftn(data, axes=ya)
    if s != 0:
        eta2 = np.zeros([g.resolutions[i] if i in ya else 1 for i in range(g.d)])
        for i in ya:
            shape = [1] * g.d
            shape[i] = g.resolutions[i]
            eta2 = eta2 + (g.wavenumbers[i] ** 2).reshape(shape)
        ft = ft * (1.0 + eta2) ** (s / 2.0)
    dvy = float(np.prod([g.spacings[i] for i in ya]))
    return np.sqrt(dvy * np.sum(np.abs(ft) ** 2, axis=ya))


def _lp_over_x(vals: np.ndarray, grid: GridSpec, p: float) -> float:
    if grid.d == grid.k:
        return float(vals)
    if math.isinf(p):
        return float(np.max(vals))
    dvx = float(np.prod([grid.spacings[i] for i in grid.x_axes]))
    m = float(np.max(vals))
    if m == 0:
        return 0.0
    # scale before powering to avoid overflow for large p
    return m * float(dvx * np.sum((vals / m) ** p)) ** (1.0 / p)


def mixed_norm(f: Field, p: float, s: float) -> float:
    """||f||_{L^p_x H^s_y}; p = inf is the grid maximum over x."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return _lp_over_x(y_profile(f, s), f.grid, p)


def w_exponents(d: int, k: int) -> dict:
    """Exponents of the critical space-time norm.

    Returns the Lebesgue exponent q = 2(d-k+2)/(d-k) together with the two
    y-regularity indices in circulation: ``s_w = -(d-k)/(d-k+2)`` (the one
    used here) and ``s_alt = 2/(d-k+2)`` (the one stated with the blow-up
    alternative).  They disagree; both are logged.
    """
    m = d - k
    if m <= 0:
        raise ValueError("W-norm needs d > k")
    return {"q": 2.0 * (m + 2) / m, "s_w": -m / (m + 2.0), "s_alt": 2.0 / (m + 2.0)}


def time_norm(values: Sequence[float], times: Sequence[float], q: float) -> float:
    """Trapezoid L^q_t norm of sampled nonnegative values."""
    v = np.asarray(values, dtype=float)
    t = np.asarray(times, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two time samples")
    if math.isinf(q):
        return float(np.max(v))
    m = float(np.max(v))
    if m == 0:
        return 0.0
    return m * float(np.trapezoid((v / m) ** q, t)) ** (1.0 / q)


def w_norm_accumulate(series: Sequence[Field], interval: tuple[float, float]) -> float:
    """||series||_{W(I)} with trapezoid in time on a uniform partition of ``interval``."""
    series = list(series)
    if len(series) < 2:
        raise ValueError("W-norm needs at least two samples")
    g = series[0].grid
    ex = w_exponents(g.d, g.k)
    log.debug("W-norm exponents q=%g s_w=%g (alternative s=%g)", ex["q"], ex["s_w"], ex["s_alt"])
    times = np.linspace(interval[0], interval[1], len(series))
    vals = [mixed_norm(f, ex["q"], ex["s_w"]) for f in series]
    return time_norm(vals, times, ex["q"])


def _spectral(f: Field) -> np.ndarray:
    return f.data if f.space is Space.SPECTRAL else fftn(f.data)


def grad_l2(f: Field) -> float:
    fh = _spectral(f)
    return float(np.sqrt(f.grid.cell_volume * np.sum(f.grid.k_squared * np.abs(fh) ** 2)))


def h1_norm(f: Field) -> float:
    fh = _spectral(f)
    return float(np.sqrt(f.grid.cell_volume * np.sum((1.0 + f.grid.k_squared) * np.abs(fh) ** 2)))


def modified_mass(f: Field) -> float:
    """||P_eps^{1/2} u||^2; for a V-gauge field this is the plain ||v||^2."""
    fh = _spectral(f)
    w = 1.0 if f.gauge.value == "V" else f.grid.peps_symbol
    return float(f.grid.cell_volume * np.sum(w * np.abs(fh) ** 2))


def energy(f: Field, sigma: float = 1.0, focusing: bool = True) -> float:
    """1/2 ||grad u||^2 -+ 1/(2 sigma + 2) ||u||_{2 sigma + 2}^{2 sigma + 2} (minus when focusing)."""
    kin = 0.5 * grad_l2(f) ** 2
    u = _physical(f)
    pot = f.grid.cell_volume * float(np.sum(np.abs(u) ** (2 * sigma + 2))) / (2 * sigma + 2)
    return kin - pot if focusing else kin + pot


def spectral_tail(f: Field) -> float:
    """Fraction of l^2 mass in the outer third of the dealiased band."""
    fh = _spectral(f)
    p = np.abs(fh) ** 2
    total = float(np.sum(p))
    if total == 0:
        return 0.0
    return float(np.sum(p[f.grid.tail_mask])) / total
