"""Measured decay of the linear group and finite-horizon Strichartz quotients.

Two forms of the dispersive bound are measured:

``"P"``  ||S(t) phi||_{L^r_x L^2_y} <= |4 pi t|^{-delta} ||P_eps^{delta} phi||_{L^{r'}_x L^2_y}
``"H"``  ||S(t) phi||_{L^r_x H^{-delta}_y} <= |4 pi t|^{-delta} ||phi||_{L^{r'}_x H^{delta}_y}

with delta = delta(r).  On a periodic box these can only be evidenced, so
each measurement checks that the wrapped-around mass stays negligible.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from .grid import Field, Space, fftn, ifftn
from .norms import AdmissiblePair, delta_exponent, mixed_norm
from .symbols import peps_power_symbol, propagator_phase

__all__ = ["DecayFit", "WrapAroundError", "measure_decay", "strichartz_quotient", "edge_fraction",
           "VARIANTS"]

VARIANTS = ("P", "H")


class WrapAroundError(RuntimeError):
    """Too much mass reached the box edge; the periodic surrogate is invalid."""


@dataclass
class DecayFit:
    r: float
    epsilon: float
    variant: str
    times: list[float]
    norms: list[float]
    rhs_norm: float
    fitted_exponent: float
    predicted_exponent: float
    constant_ratio_max: float
    ratios: list[float]

    def to_json(self) -> str:
        d = asdict(self)
        d["r"] = "inf" if math.isinf(self.r) else self.r
        return json.dumps(d)


def _dual(r: float) -> float:
    if math.isinf(r):
        return 1.0
    return r / (r - 1.0)


def edge_fraction(f: Field, margin: float = 0.4) -> float:
    """Fraction of mass with |x_i| >= margin * L_i on some x-axis."""
    g = f.grid
    if g.d == g.k:
        return 0.0
    data = f.data if f.space is Space.PHYSICAL else ifftn(f.data)
    p = np.abs(data) ** 2
    total = float(np.sum(p))
    if total == 0:
        return 0.0
    mask = np.zeros(g.shape, dtype=bool)
    for i in g.x_axes:
        mask = mask | (np.abs(g.coordinates()[i]) >= margin * g.box_lengths[i])
    return float(np.sum(p[mask])) / total


def _norm_pair(phi: Field, r: float, variant: str):
    """(lhs(f), rhs value) for the chosen form of the bound."""
    g = phi.grid
    delta = delta_exponent(r, g.d, g.k)
    rd = _dual(r)
    if variant == "P":
        rhs = mixed_norm(phi.with_data(ifftn(peps_power_symbol(g, 2 * delta) * fftn(phi.data))), rd, 0.0)
        return (lambda f: mixed_norm(f, r, 0.0)), rhs
    if variant == "H":
        rhs = mixed_norm(phi, rd, delta)
        return (lambda f: mixed_norm(f, r, -delta)), rhs
    raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def measure_decay(phi: Field, r: float, t_grid: Sequence[float], epsilon: float | None = None,
                  variant: str = "P", wrap_tol: float = 1e-6) -> DecayFit:
    """Evolve ``phi`` under S_eps, fit log-norm against log-t.

    ``epsilon`` overrides the grid's value when given.
    """
    if phi.space is not Space.PHYSICAL:
        raise ValueError("measure_decay expects a physical-space field")
    times = np.asarray(t_grid, dtype=float)
    if times.size < 2 or np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("t_grid must be strictly increasing and positive")
    if epsilon is not None and epsilon != phi.grid.epsilon:
        phi = Field(phi.grid.with_params(epsilon=epsilon), phi.data, gauge=phi.gauge)
    g = phi.grid
    delta = delta_exponent(r, g.d, g.k)
    lhs, rhs = _norm_pair(phi, r, variant)
    ph = fftn(phi.data)
    norms = []
    for t in times:
        norms.append(lhs(phi.with_data(ifftn(propagator_phase(g, t) * ph))))
    last = phi.with_data(ifftn(propagator_phase(g, times[-1]) * ph))
    wrap = edge_fraction(last)
    if wrap > wrap_tol:
        raise WrapAroundError(f"edge mass fraction {wrap:.2e} exceeds {wrap_tol:.1e} at t={times[-1]:g}; "
                              "use a larger box")
    norms = np.array(norms)
    slope = float(np.polyfit(np.log(times), np.log(norms), 1)[0])
    ratios = norms * (4 * np.pi * times) ** delta / rhs
    return DecayFit(r=float(r), epsilon=float(g.epsilon), variant=variant, times=times.tolist(),
                    norms=norms.tolist(), rhs_norm=float(rhs), fitted_exponent=slope,
                    predicted_exponent=-delta, constant_ratio_max=float(np.max(ratios)),
                    ratios=ratios.tolist())


def strichartz_quotient(phi: Field, pair: AdmissiblePair, horizon: float, epsilon: float | None = None,
                        n_times: int = 801, wrap_tol: float = 1e-4) -> float:
    """||S(t) phi||_{L^q_t([0, horizon]) L^r_x H^{-delta(r)}_y} / ||phi||_{L^2}."""
    g = phi.grid
    if not isinstance(pair, AdmissiblePair):
        pair = AdmissiblePair(*pair)
    if (pair.d, pair.k) != (g.d, g.k):
        raise ValueError("pair dimensions do not match the grid")
    delta = pair.delta
    if not 0 < delta < 1:
        raise ValueError(f"need 0 < delta(r) < 1, got {delta}")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if epsilon is not None and epsilon != g.epsilon:
        phi = Field(g.with_params(epsilon=epsilon), phi.data, gauge=phi.gauge)
        g = phi.grid
    l2 = phi.l2_norm()
    if l2 == 0:
        return 0.0
    if n_times % 2 == 0:
        n_times += 1
    times = np.linspace(0.0, horizon, n_times)
    ph = fftn(phi.data)
    vals = np.array([mixed_norm(phi.with_data(ifftn(propagator_phase(g, t) * ph)), pair.r, -delta)
                     for t in times])
    last = phi.with_data(ifftn(propagator_phase(g, horizon) * ph))
    wrap = edge_fraction(last)
    if wrap > wrap_tol:
        raise WrapAroundError(f"edge mass fraction {wrap:.2e} at t={horizon:g}; use a larger box")
    q = pair.q
    if math.isinf(q):
        return float(np.max(vals)) / l2
    m = float(np.max(vals))
    return m * float(simpson((vals / m) ** q, x=times)) ** (1.0 / q) / l2

