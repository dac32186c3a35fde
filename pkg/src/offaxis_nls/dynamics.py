"""Nonlinear evolution of  i P_eps u_t + Delta u + |u|^{2 sigma} u = 0.

Applying P_eps^{-1} gives  u_t = L u + N(u)  with the stiff linear part
``L = i P_eps^{-1} Delta`` (diagonal in Fourier space, integrated exactly)
and the nonlocal nonlinear part ``N(u) = i P_eps^{-1}(|u|^{2 sigma} u)``.
Because N is nonlocal there is no exact nonlinear substep to split off, so
time stepping uses the integrating-factor (Lawson) RK4 scheme.

The solver state is kept in Fourier space; diagnostics come straight from
the spectral coefficients.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_simpson

from .grid import Field, Gauge, GridSpec, Space, fftn, ifftn
from .norms import w_exponents, y_profile
from .symbols import peps_power_symbol, propagator_phase

__all__ = [
    "Sign",
    "Regime",
    "classify_regime",
    "NonlinearitySpec",
    "Controls",
    "BlowupThresholds",
    "DiagnosticsRecord",
    "TerminationKind",
    "Termination",
    "RunResult",
    "BlowUpSignal",
    "PicardDivergence",
    "PicardReport",
    "nonlinear_term",
    "step_ifrk4",
    "integrate_fixed",
    "evolve",
    "detect_blowup",
    "picard_verify",
    "gauge_convert",
    "diagnostics",
    "write_diagnostics_csv",
    "read_diagnostics_csv",
    "CSV_COLUMNS",
]

log = logging.getLogger(__name__)


class BlowUpSignal(FloatingPointError):
    """Raised when a stage evaluation produces non-finite values."""


class PicardDivergence(RuntimeError):
    """The Duhamel iteration failed to contract; the time window is too long."""


class Sign(str, enum.Enum):
    FOCUSING = "focusing"
    DEFOCUSING = "defocusing"


class Regime(str, enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    FULL_OFF_AXIS = "full_off_axis"
    UNCOVERED = "uncovered"


def _h1_critical_power(d: int) -> float:
    """2/(d-2)_+, infinite for d <= 2."""
    return math.inf if d <= 2 else 2.0 / (d - 2)


def classify_regime(sigma: float, d: int, k: int, tol: float = 1e-12) -> Regime:
    """Which global well-posedness result covers (sigma, d, k)."""
    if k == d:
        return Regime.FULL_OFF_AXIS if sigma <= _h1_critical_power(d) + tol else Regime.UNCOVERED
    crit = 2.0 / (d - k)
    if k <= 2:
        if abs(sigma - crit) <= tol * crit:
            return Regime.CRITICAL
        if sigma < crit:
            return Regime.SUBCRITICAL
        return Regime.UNCOVERED
    if sigma <= 2.0 / (d - 2) + tol:
        return Regime.SUBCRITICAL
    return Regime.UNCOVERED


@dataclass(frozen=True)
class NonlinearitySpec:
    sigma: float = 1.0
    sign: Sign = Sign.FOCUSING
    enabled: bool = True

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "sign", Sign(self.sign))

    @property
    def focusing(self) -> bool:
        return self.sign is Sign.FOCUSING

    def regime(self, d: int, k: int) -> Regime:
        return classify_regime(self.sigma, d, k)


@dataclass(frozen=True)
class BlowupThresholds:
    grad_growth: float = 10.0
    tail: float = 0.01


@dataclass(frozen=True)
class Controls:
    """Solver knobs for :func:`evolve`.

    ``rtol`` is the per-step relative L^2 tolerance of step doubling.
    ``diag_interval`` is the spacing of recorded diagnostics; steps are
    shortened to land on every recording time.
    """

    rtol: float = 1e-9
    dt_init: float = 1e-3
    dt_min: float = 1e-8
    dt_max: float = 1e-2
    diag_interval: float = 0.01
    thresholds: BlowupThresholds = field(default_factory=BlowupThresholds)
    tail_exhausted: float = 0.1
    dealias: bool = True
    csv_path: str | None = None
    max_steps: int = 2_000_000

    def __post_init__(self) -> None:
        if not (0 < self.dt_min <= self.dt_init and self.dt_min <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init and dt_min <= dt_max")
        if self.rtol <= 0 or self.diag_interval <= 0:
            raise ValueError("rtol and diag_interval must be positive")


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    modified_mass: float
    energy: float
    grad_l2: float
    h1_norm: float
    spectral_tail: float
    w_norm_running: float
    dt: float = 0.0


CSV_COLUMNS = ("t", "modified_mass", "energy", "grad_l2", "h1_norm",
               "spectral_tail", "w_norm_running", "dt")


class TerminationKind(str, enum.Enum):
    HORIZON_REACHED = "HorizonReached"
    BLOW_UP_DETECTED = "BlowUpDetected"
    RESOLUTION_EXHAUSTED = "ResolutionExhausted"


@dataclass(frozen=True)
class Termination:
    kind: TerminationKind
    t: float
    reason: str = ""


@dataclass
class RunResult:
    final: Field
    diagnostics: list[DiagnosticsRecord]
    termination: Termination
    t_end: float
    steps_accepted: int = 0
    steps_rejected: int = 0
    max_edge_fraction: float = 0.0

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.diagnostics])

    def drift(self, name: str) -> float:
        """max_t |q(t) - q(0)| / |q(0)| over the recorded samples."""
        s = self.series(name)
        return float(np.max(np.abs(s - s[0])) / abs(s[0])) if s[0] != 0 else float(np.max(np.abs(s)))


# --------------------------------------------------------------------------
# spectral model

class _Model:
    """Cached multipliers for one (grid, nonlinearity) pair."""

    def __init__(self, grid: GridSpec, nl: NonlinearitySpec, dealias: bool = True):
        self.grid = grid
        self.nl = nl
        self.sigma = nl.sigma
        self.inv_p = 1.0 / grid.peps_symbol
        self.coef = (1j if nl.focusing else -1j) * self.inv_p
        self.mask = grid.dealias_mask if dealias else None
        self._phases: dict[float, np.ndarray] = {}

    def phase(self, dt: float) -> np.ndarray:
        ph = self._phases.get(dt)
        if ph is None:
            if len(self._phases) > 16:
                self._phases.clear()
            ph = self._phases[dt] = propagator_phase(self.grid, dt)
        return ph

    def power(self, u: np.ndarray) -> np.ndarray:
        """|u|^{2 sigma} u, continuous extension 0 at u = 0."""
        a2 = u.real**2 + u.imag**2
        if self.sigma == 1:
            return a2 * u
        if self.sigma == 2:
            return a2 * a2 * u
        return a2**self.sigma * u

    def rhs(self, uh: np.ndarray) -> np.ndarray:
        """Spectral N(u) for spectral u."""
        if not self.nl.enabled:
            return np.zeros_like(uh)
        u = ifftn(uh)
        g = self.power(u)
        if not np.all(np.isfinite(g)):
            raise BlowUpSignal("non-finite values in the nonlinear term")
        gh = fftn(g)
        if self.mask is not None:
            gh = gh * self.mask
        return self.coef * gh

    def step(self, uh: np.ndarray, dt: float) -> np.ndarray:
        """One Lawson (integrating-factor) RK4 step."""
        if not self.nl.enabled:
            return self.phase(dt) * uh
        e_half = self.phase(0.5 * dt)
        e_full = self.phase(dt)
        k1 = self.rhs(uh)
        k2 = self.rhs(e_half * (uh + 0.5 * dt * k1))
        k3 = self.rhs(e_half * uh + 0.5 * dt * k2)
        k4 = self.rhs(e_full * uh + dt * (e_half * k3))
        out = e_full * (uh + dt / 6.0 * k1) + e_half * (dt / 3.0 * (k2 + k3)) + dt / 6.0 * k4
        if not np.all(np.isfinite(out)):
            raise BlowUpSignal("non-finite values after an IFRK4 step")
        return out


def _require_physical_u(f: Field, what: str) -> None:
    if f.space is not Space.PHYSICAL:
        raise ValueError(f"{what} expects a physical-space field")
    if f.gauge is not Gauge.U:
        raise ValueError(f"{what} expects a U-gauge field")


def nonlinear_term(f: Field, nl: NonlinearitySpec = NonlinearitySpec(), dealias: bool = True) -> Field:
    """N(u) = i P_eps^{-1}(|u|^{2 sigma} u), pointwise power then dealiased."""
    _require_physical_u(f, "nonlinear_term")
    if not np.all(np.isfinite(f.data)):
        raise BlowUpSignal("non-finite values in the input field")
    model = _Model(f.grid, nl, dealias)
    return f.with_data(ifftn(model.rhs(fftn(f.data))))


def step_ifrk4(f: Field, dt: float, nl: NonlinearitySpec = NonlinearitySpec(),
               dealias: bool = True) -> Field:
    """Advance a physical U-gauge field by one integrating-factor RK4 step."""
    _require_physical_u(f, "step_ifrk4")
    if not dt > 0:
        raise ValueError("dt must be positive")
    model = _Model(f.grid, nl, dealias)
    return f.with_data(ifftn(model.step(fftn(f.data), dt)))


def integrate_fixed(f: Field, nl: NonlinearitySpec, horizon: float, dt: float,
                    dealias: bool = True) -> Field:
    """Constant-step IFRK4 from 0 to ``horizon``; ``horizon/dt`` is rounded to whole steps."""
    _require_physical_u(f, "integrate_fixed")
    n = max(1, int(round(horizon / dt)))
    h = horizon / n
    model = _Model(f.grid, nl, dealias)
    uh = fftn(f.data)
    for _ in range(n):
        uh = model.step(uh, h)
    return f.with_data(ifftn(uh))


# --------------------------------------------------------------------------
# diagnostics

def _spectral_quantities(grid: GridSpec, uh: np.ndarray) -> tuple[float, float, float, float]:
    """(modified mass, grad_l2, h1 norm, spectral tail) from spectral u."""
    p = uh.real**2 + uh.imag**2
    dv = grid.cell_volume
    total = float(np.sum(p))
    ksq = float(np.sum(grid.k_squared * p))
    mm = dv * float(np.sum(grid.peps_symbol * p))
    tail = float(np.sum(p[grid.tail_mask])) / total if total > 0 else 0.0
    return mm, math.sqrt(dv * ksq), math.sqrt(dv * (total + ksq)), tail


class _WAccumulator:
    """Running trapezoid of ||v(t)||_{L^q_x H^{s}_y}^q over recorded samples."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.active = grid.d > grid.k
        if self.active:
            ex = w_exponents(grid.d, grid.k)
            self.q, self.s = ex["q"], ex["s_w"]
            self.half_p = peps_power_symbol(grid, 1.0)
        self.integral = 0.0
        self.last: tuple[float, float] | None = None

    def add(self, t: float, uh: np.ndarray) -> float:
        if not self.active:
            return 0.0
        v = Field(self.grid, ifftn(self.half_p * uh), gauge=Gauge.V)
        prof = y_profile(v, self.s)
        dvx = float(np.prod([self.grid.spacings[i] for i in self.grid.x_axes]))
        val = float(dvx * np.sum(prof**self.q))
        if self.last is not None:
            t0, v0 = self.last
            self.integral += 0.5 * (t - t0) * (v0 + val)
        self.last = (t, val)
        return self.integral ** (1.0 / self.q)


def diagnostics(f: Field, nl: NonlinearitySpec, t: float = 0.0, w_running: float = 0.0,
                dt: float = 0.0) -> DiagnosticsRecord:
    """Diagnostics record of a U-gauge field."""
    uh = f.data if f.space is Space.SPECTRAL else fftn(f.data)
    return _record(f.grid, nl, uh, t, w_running, dt)


def _record(grid: GridSpec, nl: NonlinearitySpec, uh: np.ndarray, t: float, w: float,
            dt: float) -> DiagnosticsRecord:
    mm, g, h1, tail = _spectral_quantities(grid, uh)
    u = ifftn(uh)
    pot = grid.cell_volume * float(np.sum(np.abs(u) ** (2 * nl.sigma + 2))) / (2 * nl.sigma + 2)
    if not nl.enabled:
        pot = 0.0
    e = 0.5 * g * g + (-pot if nl.focusing else pot)
    return DiagnosticsRecord(t=t, modified_mass=mm, energy=e, grad_l2=g, h1_norm=h1,
                             spectral_tail=tail, w_norm_running=w, dt=dt)


def _edge_fraction(grid: GridSpec, uh: np.ndarray) -> float:
    """Fraction of mass within the outer 10% of the box along the x-axes."""
    if grid.d == grid.k:
        return 0.0
    p = np.abs(ifftn(uh)) ** 2
    total = float(np.sum(p))
    if total == 0:
        return 0.0
    mask = np.zeros(grid.shape, dtype=bool)
    for i, c in enumerate(grid.coordinates()):
        if i in grid.x_axes:
            mask = mask | (np.abs(c) >= 0.4 * grid.box_lengths[i])
    return float(np.sum(p[mask])) / total


def detect_blowup(record: DiagnosticsRecord, baseline: DiagnosticsRecord,
                  thresholds: BlowupThresholds = BlowupThresholds()) -> bool:
    """Gradient growth AND spectral tail both above threshold.

    Growth without a tail is a resolution warning, not a blow-up.
    """
    if baseline.grad_l2 <= 0:
        return False
    ratio = record.grad_l2 / baseline.grad_l2
    return ratio > thresholds.grad_growth and record.spectral_tail > thresholds.tail


# --------------------------------------------------------------------------
# evolution

def evolve(f0: Field, nl: NonlinearitySpec, horizon: float,
           controls: Controls = Controls()) -> RunResult:
    """Adaptive IFRK4 evolution with step-doubling error control.

    Each trial step of size h is compared against two steps of size h/2; the
    half-step result is kept when their relative L^2 difference is within
    ``controls.rtol``.  The run ends at the horizon, when
    :func:`detect_blowup` fires, or when resolution runs out: the spectral
    tail exceeds ``controls.tail_exhausted`` or the error cannot be met at
    ``dt_min``.
    """
    _require_physical_u(f0, "evolve")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    grid = f0.grid
    model = _Model(grid, nl, controls.dealias)
    uh = fftn(f0.data)
    if controls.dealias:
        uh = uh * grid.dealias_mask
    th = controls.thresholds

    wacc = _WAccumulator(grid)
    base = _record(grid, nl, uh, 0.0, wacc.add(0.0, uh), 0.0)
    records = [base]
    sink = _CsvSink(controls.csv_path)
    sink.write(base)

    t = 0.0
    dt = min(controls.dt_init, controls.dt_max)
    next_out = min(controls.diag_interval, horizon)
    accepted = rejected = 0
    edge = _edge_fraction(grid, uh)
    termination = None
    tiny = 1e-12 * max(1.0, horizon)

    def finish(kind: TerminationKind, reason: str, h: float) -> Termination:
        if t > records[-1].t:
            rec = _record(grid, nl, uh, t, wacc.add(t, uh), h)
            records.append(rec)
            sink.write(rec)
        return Termination(kind, t, reason)

    try:
        while horizon - t > tiny:
            if accepted + rejected >= controls.max_steps:
                termination = finish(TerminationKind.RESOLUTION_EXHAUSTED, "step budget exhausted", dt)
                break
            h = min(dt, next_out - t, horizon - t)
            full = model.step(uh, h)
            mid = model.step(uh, 0.5 * h)
            half = model.step(mid, 0.5 * h)
            nrm = math.sqrt(float(np.vdot(half, half).real))
            err = math.sqrt(float(np.vdot(half - full, half - full).real)) / nrm if nrm > 0 else 0.0
            at_floor = h <= controls.dt_min * (1 + 1e-9)
            if err > controls.rtol and not at_floor:
                rejected += 1
                dt = max(controls.dt_min, h * max(0.2, 0.9 * (controls.rtol / err) ** 0.2))
                continue

            uh = half
            t = t + h if next_out - (t + h) > tiny else next_out
            accepted += 1
            mm, g, h1, tail = _spectral_quantities(grid, uh)
            if accepted % 500 == 0:
                log.debug("t=%.6g dt=%.3g grad=%.4g tail=%.3g", t, h, g, tail)
            probe = DiagnosticsRecord(t, mm, 0.0, g, h1, tail, 0.0, h)
            if detect_blowup(probe, base, th):
                termination = finish(TerminationKind.BLOW_UP_DETECTED,
                                     f"grad ratio {g / base.grad_l2:.3g}, tail {tail:.3g}", h)
                break
            if tail > controls.tail_exhausted:
                termination = finish(TerminationKind.RESOLUTION_EXHAUSTED,
                                     f"spectral tail {tail:.3g} above {controls.tail_exhausted}", h)
                break
            if err > controls.rtol:
                termination = finish(TerminationKind.RESOLUTION_EXHAUSTED,
                                     f"error {err:.3g} above tolerance at dt_min", h)
                break

            if abs(t - next_out) <= tiny:
                rec = _record(grid, nl, uh, t, wacc.add(t, uh), h)
                records.append(rec)
                sink.write(rec)
                edge = max(edge, _edge_fraction(grid, uh))
                next_out = min(next_out + controls.diag_interval, horizon)

            fac = 2.0 if err == 0 else min(2.0, max(0.2, 0.9 * (controls.rtol / err) ** 0.2))
            new_dt = h * fac
            if h < dt:  # shortened to hit an output time
                new_dt = max(new_dt, dt)
            dt = min(controls.dt_max, max(controls.dt_min, new_dt))
        else:
            termination = Termination(TerminationKind.HORIZON_REACHED, t)
    except BlowUpSignal as exc:
        ratio = records[-1].grad_l2 / base.grad_l2 if base.grad_l2 > 0 else 0.0
        kind = (TerminationKind.BLOW_UP_DETECTED if ratio > th.grad_growth
                else TerminationKind.RESOLUTION_EXHAUSTED)
        termination = Termination(kind, t, str(exc))
    finally:
        sink.close()

    if termination.kind is not TerminationKind.HORIZON_REACHED:
        log.info("evolution stopped at t=%.6g: %s (%s)", t, termination.kind.value, termination.reason)
    final = Field(grid, ifftn(uh), gauge=Gauge.U)
    return RunResult(final=final, diagnostics=records, termination=termination,
                     t_end=records[-1].t, steps_accepted=accepted, steps_rejected=rejected,
                     max_edge_fraction=edge)


class _CsvSink:
    def __init__(self, path):
        self._fh = None
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w", newline="")
            self._w = csv.writer(self._fh)
            self._w.writerow(CSV_COLUMNS)

    def write(self, rec: DiagnosticsRecord) -> None:
        if self._fh is not None:
            self._w.writerow([repr(float(getattr(rec, c))) for c in CSV_COLUMNS])

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def write_diagnostics_csv(records: Sequence[DiagnosticsRecord], path) -> Path:
    sink = _CsvSink(path)
    for r in records:
        sink.write(r)
    sink.close()
    return Path(path)


def read_diagnostics_csv(path) -> list[DiagnosticsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [DiagnosticsRecord(**{c: float(row[c]) for c in CSV_COLUMNS}) for row in rows]


# --------------------------------------------------------------------------
# gauge change and the Duhamel iteration

def gauge_convert(f: Field) -> Field:
    """U -> V applies P_eps^{1/2}; V -> U applies P_eps^{-1/2}."""
    from .symbols import apply_peps_power

    return apply_peps_power(f, 1.0 if f.gauge is Gauge.U else -1.0)


@dataclass
class PicardReport:
    ratios: list[float]
    differences: list[float]
    solution: Field  # last iterate at time T, V gauge
    times: np.ndarray
    converged: bool


def picard_verify(v0: Field, nl: NonlinearitySpec, T: float, n_iters: int = 8,
                  n_nodes: int = 65, dealias: bool = True, floor_rtol: float = 1e-12) -> PicardReport:
    """Iterate the Duhamel map for the V-gauge equation on [0, T].

    Phi(v)(t) = S(t) v0 + i int_0^t S(t-s) P^{-1/2} g(P^{-1/2} v(s)) ds

    The time integral is written as S(t) int_0^t S(-s) G(s) ds and evaluated
    by cumulative composite Simpson on ``n_nodes`` equispaced nodes.
    Successive differences are measured in L^inf_t L^2.  Once a difference
    falls below ``floor_rtol * ||v||`` the iteration has hit roundoff and stops.
    """
    if v0.gauge is not Gauge.V or v0.space is not Space.PHYSICAL:
        raise ValueError("picard_verify expects a physical-space V-gauge field")
    if n_iters < 3:
        raise ValueError("n_iters must be at least 3")
    if T <= 0 or n_nodes < 3:
        raise ValueError("need T > 0 and at least 3 time nodes")
    grid = v0.grid
    times = np.linspace(0.0, T, n_nodes)
    model = _Model(grid, nl, dealias)
    mhalf = peps_power_symbol(grid, -1.0)
    vh0 = fftn(v0.data)
    fwd = np.stack([propagator_phase(grid, t) for t in times])
    dv = grid.cell_volume

    v = fwd * vh0  # zeroth iterate: free evolution
    scale = math.sqrt(dv * float(np.max(np.sum(np.abs(v) ** 2, axis=tuple(range(1, grid.d + 1))))))
    ratios: list[float] = []
    diffs: list[float] = []
    over = 0
    converged = scale == 0
    if converged:
        ratios = [0.0] * (n_iters - 1)
        diffs = [0.0] * n_iters
    else:
        for _ in range(n_iters):
            integrand = np.empty_like(v)
            for j in range(n_nodes):
                gh = fftn(model.power(ifftn(mhalf * v[j])))
                if model.mask is not None:
                    gh = gh * model.mask
                integrand[j] = np.conj(fwd[j]) * (mhalf * gh)
            cum = (cumulative_simpson(integrand.real, x=times, axis=0, initial=0)
                   + 1j * cumulative_simpson(integrand.imag, x=times, axis=0, initial=0))
            coef = 1j if nl.focusing else -1j
            new = fwd * (vh0 + coef * cum) if nl.enabled else fwd * vh0
            diff = math.sqrt(dv * float(np.max(np.sum(np.abs(new - v) ** 2,
                                                       axis=tuple(range(1, grid.d + 1))))))
            v = new
            if diffs:
                r = diff / diffs[-1] if diffs[-1] > 0 else 0.0
                ratios.append(r)
                over = over + 1 if r > 1 else 0
                if over >= 2:
                    raise PicardDivergence(f"contraction ratio above 1 twice in a row (T={T} too large)")
            diffs.append(diff)
            if diff <= floor_rtol * scale:
                converged = True
                break
        else:
            converged = diffs[-1] <= 1e-10 * scale
    sol = Field(grid, ifftn(v[-1]), gauge=Gauge.V)
    return PicardReport(ratios=ratios, differences=diffs, solution=sol, times=times,
                        converged=converged)


def record_dict(rec: DiagnosticsRecord) -> dict:
    return asdict(rec)
