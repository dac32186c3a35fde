"""Scenario execution, artifacts and run comparison.

Every run writes into ``<out_dir>/<name>/``:

``config.toml``      the validated configuration
``result.json``      summary (termination, drifts, fitted exponents, ...)
``diagnostics.csv``  time series of the evolution (evolve kind)
``initial.fld`` / ``final.fld``  field snapshots in the binary container
``decay.jsonl``      one fit per line (decay kind)

Result JSON is written with sorted keys and no timestamps, so identical
config and seed give identical bytes.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import traceback
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..dispersion import measure_decay
from ..dynamics import (DiagnosticsRecord, Regime, RunResult, Termination, TerminationKind, evolve,
                        gauge_convert, picard_verify, read_diagnostics_csv)
from ..grid import Field, Gauge, GridSpec, ifftn, load_field, save_field
from ..groundstate import cached_ground_state, compute_ground_state
from ..norms import w_exponents
from .config import ScenarioConfig, dump_config, load_config, parse_config

__all__ = ["ScenarioOutcome", "CompareReport", "make_initial_data", "run_scenario", "compare_runs",
           "load_run", "builtin_names", "builtin_config", "resolve_config", "plot_diagnostics"]

log = logging.getLogger(__name__)

_BUILTIN_PKG = "offaxis_nls.experiments.builtins"


# --------------------------------------------------------------------------
# builtins

def builtin_names() -> list[str]:
    root = resources.files(_BUILTIN_PKG)
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def builtin_config(name: str) -> ScenarioConfig:
    root = resources.files(_BUILTIN_PKG)
    path = root / f"{name}.toml"
    if not path.is_file():
        raise KeyError(f"no builtin scenario {name!r}; available: {', '.join(builtin_names())}")
    return parse_config(path.read_text())


def resolve_config(spec: str) -> ScenarioConfig:
    """A path to a TOML file, or the name of a builtin scenario."""
    p = Path(spec)
    if p.suffix == ".toml" or p.exists():
        return load_config(p)
    return builtin_config(spec)


# --------------------------------------------------------------------------
# initial data

def _gaussian(grid: GridSpec, amp, widths, center, modulation) -> np.ndarray:
    coords = grid.coordinates()
    widths = widths or (1.0,) * grid.d
    center = center or (0.0,) * grid.d
    modulation = modulation or (0.0,) * grid.d
    expo = sum((c - c0) ** 2 / (2 * w * w) for c, c0, w in zip(coords, center, widths))
    phase = sum(kap * c for c, kap in zip(coords, modulation))
    return amp * np.exp(-expo) * np.exp(1j * phase)


def make_initial_data(cfg: ScenarioConfig, seed: int, cache_dir: Path | None = None) -> Field:
    grid = cfg.grid.build()
    ic = cfg.initial_data
    if ic.type in ("gaussian", "plane_wave_packet"):
        return Field(grid, _gaussian(grid, ic.amplitude, ic.widths, ic.center, ic.modulation))
    if ic.type == "ground_state_multiple":
        sigma = cfg.nonlinearity.sigma
        if cache_dir is not None:
            gs = cached_ground_state(grid.d, sigma, grid, cache_dir)
        else:
            gs = compute_ground_state(grid.d, sigma, grid)
        return Field(grid, ic.factor * gs.field.data)
    if ic.type == "from_file":
        f = load_field(ic.path)
        if f.grid != grid:
            raise ValueError(f"field in {ic.path} lives on a different grid")
        return Field(grid, f.data, gauge=f.gauge)
    if ic.type == "random_band_limited":
        rng = np.random.default_rng(seed)
        coeffs = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        coeffs = coeffs * grid.band_mask(ic.cutoff)
        raw = ifftn(coeffs)
        env = np.abs(_gaussian(grid, 1.0, ic.widths or tuple(L / 8 for L in grid.box_lengths), ic.center, None))
        data = raw * env
        peak = np.max(np.abs(data))
        return Field(grid, ic.amplitude * data / peak if peak > 0 else data)
    raise ValueError(f"unknown initial data type {ic.type!r}")


# --------------------------------------------------------------------------
# running

@dataclass
class ScenarioOutcome:
    config: ScenarioConfig
    out_dir: Path
    summary: dict
    result: RunResult | None = None

    @property
    def ok(self) -> bool:
        return self.summary.get("status") == "ok"


def _write_json(obj: dict, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _num(x: float):
    """JSON-safe float: infinities become strings."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


def run_scenario(cfg: ScenarioConfig, out_dir, seed: int | None = None, plot: bool | None = None) -> ScenarioOutcome:
    """Run one scenario and write its artifacts under ``out_dir/cfg.name``.

    Failures during the computation are caught and recorded in the result
    JSON (``status: "error"``); whatever was produced before the failure
    stays on disk.
    """
    seed = cfg.seed if seed is None else seed
    cfg = cfg.replace(seed=seed)
    run_dir = Path(out_dir) / cfg.name
    run_dir.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, run_dir / "config.toml")

    grid = cfg.grid.build()
    nl = cfg.nonlinearity.build()
    regime = nl.regime(grid.d, grid.k)
    if regime is Regime.UNCOVERED:
        log.warning("%s: (sigma=%g, d=%d, k=%d) lies outside the proven range; running anyway",
                    cfg.name, nl.sigma, grid.d, grid.k)
    else:
        log.info("%s: regime %s", cfg.name, regime.value)
    summary = {"name": cfg.name, "kind": cfg.kind, "seed": seed, "regime": regime.value,
               "status": "ok"}
    result = None
    try:
        if cfg.kind == "evolve":
            result = _run_evolve(cfg, run_dir, summary, seed)
        elif cfg.kind == "decay":
            _run_decay(cfg, run_dir, summary, seed)
        elif cfg.kind == "picard":
            _run_picard(cfg, run_dir, summary, seed)
        elif cfg.kind == "groundstate":
            _run_groundstate(cfg, run_dir, summary)
    except Exception as exc:  # recorded, not raised: partial artifacts stay usable
        log.error("%s failed: %s", cfg.name, exc)
        summary["status"] = "error"
        summary["error"] = f"{type(exc).__name__}: {exc}"
        summary["traceback_tail"] = traceback.format_exc().strip().splitlines()[-3:]
    _write_json(summary, run_dir / "result.json")
    if (cfg.outputs.plot if plot is None else plot) and (run_dir / "diagnostics.csv").exists():
        plot_diagnostics(run_dir / "diagnostics.csv", run_dir / "diagnostics.png")
    return ScenarioOutcome(cfg, run_dir, summary, result)


def _run_evolve(cfg: ScenarioConfig, run_dir: Path, summary: dict, seed: int) -> RunResult:
    grid = cfg.grid.build()
    nl = cfg.nonlinearity.build()
    u0 = make_initial_data(cfg, seed, run_dir.parent / "groundstate-cache")
    if u0.gauge is not Gauge.U:
        u0 = gauge_convert(u0)
    if cfg.outputs.snapshots:
        save_field(u0, run_dir / "initial.fld")
    csv_path = str(run_dir / "diagnostics.csv") if cfg.outputs.csv else None
    summary["l2_initial"] = u0.l2_norm()
    res = evolve(u0, nl, cfg.horizon, cfg.controls.build(csv_path))
    if cfg.outputs.snapshots:
        save_field(res.final, run_dir / "final.fld")
    grad = res.series("grad_l2")
    h1 = res.series("h1_norm")
    ex = w_exponents(grid.d, grid.k) if grid.d > grid.k else {}
    summary.update({
        "termination": {"kind": res.termination.kind.value, "t": res.termination.t,
                        "reason": res.termination.reason},
        "t_end": res.t_end,
        "horizon": cfg.horizon,
        "steps_accepted": res.steps_accepted,
        "steps_rejected": res.steps_rejected,
        "n_records": len(res.diagnostics),
        "drift": {"modified_mass": res.drift("modified_mass"), "energy": res.drift("energy")},
        "grad_ratio_max": float(np.max(grad) / grad[0]) if grad[0] > 0 else 0.0,
        "grad_ratio_max_over_min": float(np.max(grad) / np.min(grad)) if np.min(grad) > 0 else 0.0,
        "h1_ratio_max": float(np.max(h1) / h1[0]) if h1[0] > 0 else 0.0,
        "spectral_tail_max": float(np.max(res.series("spectral_tail"))),
        "max_edge_fraction": res.max_edge_fraction,
        "w_norm_final": res.diagnostics[-1].w_norm_running,
        "w_exponents": {k: _num(v) for k, v in ex.items()},
        "l2_final": res.final.l2_norm(),
    })
    return res


def _run_decay(cfg: ScenarioConfig, run_dir: Path, summary: dict, seed: int) -> None:
    dc = cfg.decay
    phi = make_initial_data(cfg, seed, run_dir.parent / "groundstate-cache")
    if cfg.outputs.snapshots:
        save_field(phi, run_dir / "initial.fld")
    times = np.logspace(math.log10(dc.t_min), math.log10(dc.t_max), dc.n_times)
    eps_list = dc.epsilons if dc.epsilons is not None else (cfg.grid.epsilon,)
    fits = []
    with open(run_dir / "decay.jsonl", "w") as fh:
        for eps in eps_list:
            for variant in dc.variants:
                for r in dc.r:
                    fit = measure_decay(phi, r, times, epsilon=eps, variant=variant, wrap_tol=dc.wrap_tol)
                    fh.write(fit.to_json() + "\n")
                    fh.flush()
                    fits.append({"epsilon": eps, "variant": variant, "r": _num(r),
                                 "fitted_exponent": fit.fitted_exponent,
                                 "predicted_exponent": fit.predicted_exponent,
                                 "constant_ratio_max": fit.constant_ratio_max})
    summary["fits"] = fits
    summary["max_exponent_error"] = max(abs(f["fitted_exponent"] - f["predicted_exponent"]) for f in fits)
    summary["max_constant_ratio"] = max(f["constant_ratio_max"] for f in fits)


def _run_picard(cfg: ScenarioConfig, run_dir: Path, summary: dict, seed: int) -> None:
    pc = cfg.picard
    nl = cfg.nonlinearity.build()
    u0 = make_initial_data(cfg, seed, run_dir.parent / "groundstate-cache")
    v0 = gauge_convert(u0) if u0.gauge is Gauge.U else u0
    if cfg.outputs.snapshots:
        save_field(v0, run_dir / "initial.fld")
    rep = picard_verify(v0, nl, pc.T, n_iters=pc.n_iters, n_nodes=pc.n_nodes,
                        dealias=cfg.controls.dealias)
    if cfg.outputs.snapshots:
        save_field(rep.solution, run_dir / "final.fld")
    summary.update({"T": pc.T, "ratios": rep.ratios, "differences": rep.differences,
                    "converged": rep.converged})
    if pc.compare_evolve:
        ctl = dataclasses.replace(cfg.controls.build(), diag_interval=pc.T)
        u = evolve(gauge_convert(v0), nl, pc.T, ctl).final
        diff = (gauge_convert(rep.solution) - u).l2_norm()
        summary["evolve_l2_distance"] = diff
        summary["evolve_rel_distance"] = diff / u.l2_norm() if u.l2_norm() > 0 else 0.0


def _run_groundstate(cfg: ScenarioConfig, run_dir: Path, summary: dict) -> None:
    grid = cfg.grid.build()
    gs = compute_ground_state(grid.d, cfg.nonlinearity.sigma, grid, tol=cfg.controls.rtol)
    save_field(gs.field, run_dir / "groundstate.fld")
    summary.update({"d_eff": gs.d_eff, "sigma": gs.sigma, "l2_norm": gs.l2_norm,
                    "mass": gs.l2_norm ** 2, "residual": gs.residual, "iterations": gs.iterations,
                    "peak": float(np.max(gs.field.data.real))})


# --------------------------------------------------------------------------
# loading and comparing

def load_run(run_dir) -> RunResult:
    """Rebuild a :class:`RunResult` from the artifacts of an evolve run."""
    run_dir = Path(run_dir)
    summary = json.loads((run_dir / "result.json").read_text())
    if summary.get("kind") != "evolve":
        raise ValueError(f"{run_dir} is not an evolve run")
    final = load_field(run_dir / "final.fld")
    diags = read_diagnostics_csv(run_dir / "diagnostics.csv")
    term = summary["termination"]
    termination = Termination(TerminationKind(term["kind"]), term["t"], term.get("reason", ""))
    return RunResult(final=final, diagnostics=diags, termination=termination, t_end=summary["t_end"],
                     steps_accepted=summary.get("steps_accepted", 0),
                     steps_rejected=summary.get("steps_rejected", 0),
                     max_edge_fraction=summary.get("max_edge_fraction", 0.0))


@dataclass
class CompareReport:
    times: np.ndarray
    series: dict[str, tuple[np.ndarray, np.ndarray]]
    final_l2_distance: float | None
    final_rel_distance: float | None  # relative to ||a.final||
    grad_ratio_a: float
    grad_ratio_b: float
    divergent: bool
    terminations: tuple[str, str]
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(),
                "series": {k: {"a": a.tolist(), "b": b.tolist()} for k, (a, b) in self.series.items()},
                "final_l2_distance": self.final_l2_distance,
                "final_rel_distance": self.final_rel_distance,
                "grad_ratio_a": self.grad_ratio_a, "grad_ratio_b": self.grad_ratio_b,
                "divergent": self.divergent, "terminations": list(self.terminations),
                "notes": self.notes}


_COMPARED = ("grad_l2", "energy", "modified_mass")


def compare_runs(a: RunResult, b: RunResult, divergence_factor: float = 2.0) -> CompareReport:
    """Side-by-side time series and final-state distance of two runs.

    The grids must agree in dimension, box and resolution; ``k`` and
    ``epsilon`` may differ, which is the point of the comparison.  The
    ``grad_l2`` trajectories are flagged divergent when their peak growth
    ratios differ by more than ``divergence_factor`` or exactly one run
    detected blow-up.
    """
    ga, gb = a.final.grid, b.final.grid
    if (ga.d, ga.box_lengths, ga.resolutions) != (gb.d, gb.box_lengths, gb.resolutions):
        raise ValueError("runs live on incompatible grids")
    ta = np.array([r.t for r in a.diagnostics])
    tb = np.array([r.t for r in b.diagnostics])
    t_hi = min(ta[-1], tb[-1])
    times = ta[ta <= t_hi * (1 + 1e-12)]
    series = {}
    for name in _COMPARED:
        sa = np.array([getattr(r, name) for r in a.diagnostics])[: times.size]
        sb = np.interp(times, tb, np.array([getattr(r, name) for r in b.diagnostics]))
        series[name] = (sa, sb)

    notes = []
    dist = rel = None
    both_done = (a.termination.kind is TerminationKind.HORIZON_REACHED
                 and b.termination.kind is TerminationKind.HORIZON_REACHED)
    if both_done and math.isclose(a.t_end, b.t_end, rel_tol=1e-12, abs_tol=1e-12):
        diff = a.final.data - b.final.data
        dist = float(math.sqrt(ga.cell_volume) * np.linalg.norm(diff))
        ref = a.final.l2_norm()
        rel = dist / ref if ref > 0 else 0.0
    else:
        notes.append("final distance omitted: runs did not both reach the same horizon")

    def peak(r: RunResult) -> float:
        g = np.array([x.grad_l2 for x in r.diagnostics])
        return float(np.max(g) / g[0]) if g[0] > 0 else 0.0

    pa, pb = peak(a), peak(b)
    blow = [r.termination.kind is TerminationKind.BLOW_UP_DETECTED for r in (a, b)]
    divergent = (blow[0] != blow[1]) or max(pa, pb) > divergence_factor * max(min(pa, pb), 1e-300)
    return CompareReport(times=times, series=series, final_l2_distance=dist, final_rel_distance=rel,
                         grad_ratio_a=pa, grad_ratio_b=pb, divergent=bool(divergent),
                         terminations=(a.termination.kind.value, b.termination.kind.value), notes=notes)


# --------------------------------------------------------------------------
# plots

def plot_diagnostics(csv_path, png_path) -> Path | None:
    """Static plot of the diagnostics CSV; skipped when matplotlib is missing."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not installed; skipping plot")
        return None
    recs: list[DiagnosticsRecord] = read_diagnostics_csv(csv_path)
    t = np.array([r.t for r in recs])
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    for ax, name in zip(axes.flat, ("grad_l2", "modified_mass", "energy", "spectral_tail")):
        ax.plot(t, [getattr(r, name) for r in recs])
        ax.set_title(name)
        if name == "spectral_tail":
            ax.set_yscale("log")
    for ax in axes[1]:
        ax.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(png_path, dpi=100)
    plt.close(fig)
    return Path(png_path)
