import math

import numpy as np
import pytest

from offaxis_nls.dynamics import (BlowUpSignal, Controls, DiagnosticsRecord, NonlinearitySpec,
                                  PicardDivergence, Regime, Sign, TerminationKind, classify_regime,
                                  detect_blowup, diagnostics, evolve, gauge_convert, integrate_fixed,
                                  nonlinear_term, picard_verify, read_diagnostics_csv, step_ifrk4,
                                  write_diagnostics_csv)
from offaxis_nls.grid import Field, Gauge, build_grid, to_spectral
from offaxis_nls.norms import modified_mass
from offaxis_nls.symbols import propagate_linear

OFF = NonlinearitySpec(enabled=False)


def rand_field(g, seed=0, band=True):
    rng = np.random.default_rng(seed)
    f = Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    if band:  # keep it inside the dealiased band so the nonlinear solver sees the same data
        fh = to_spectral(f).data * g.dealias_mask
        f = f.with_data(np.fft.ifftn(fh, norm="ortho"))
    return f


def gaussian_1d(L=32.0, N=128, k=1, eps=0.5, amp=1.0):
    g = build_grid(1, k, eps, [L], [N])
    return Field.from_function(g, lambda x: amp * np.exp(-x**2 / 2))


# ---------------------------------------------------------------- regime

@pytest.mark.parametrize("sigma,d,k,regime", [
    (1.0, 2, 0, Regime.CRITICAL),
    (0.5, 2, 0, Regime.SUBCRITICAL),
    (1.0, 2, 1, Regime.SUBCRITICAL),
    (2.0, 2, 1, Regime.CRITICAL),
    (1.0, 2, 2, Regime.FULL_OFF_AXIS),
    (1.0, 3, 3, Regime.FULL_OFF_AXIS),
    (3.0, 3, 3, Regime.UNCOVERED),
    (1.5, 2, 0, Regime.UNCOVERED),
    (1.0, 3, 1, Regime.CRITICAL),
])
def test_classify_regime(sigma, d, k, regime):
    assert classify_regime(sigma, d, k) is regime
    assert NonlinearitySpec(sigma).regime(d, k) is regime


def test_nonlinearity_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        NonlinearitySpec(0.0)
    assert NonlinearitySpec(sign="defocusing").sign is Sign.DEFOCUSING


# ---------------------------------------------------------------- nonlinear term

def test_nonlinear_term_zero():
    g = build_grid(2, 1, 0.5, [8.0, 8.0], [16, 16])
    assert np.all(nonlinear_term(Field.zeros(g)).data == 0)


def test_nonlinear_term_eps0_pointwise():
    g = build_grid(1, 1, 0.0, [20.0], [64])
    f = Field.from_function(g, lambda x: 0.3 * np.exp(-x**2))
    out = nonlinear_term(f, dealias=False).data
    np.testing.assert_allclose(out, 1j * np.abs(f.data) ** 2 * f.data, atol=1e-15)


def test_nonlinear_term_constant():
    g = build_grid(2, 1, 0.8, [5.0, 7.0], [16, 16])
    c = 0.6 + 0.3j
    f = Field(g, np.full(g.shape, c))
    np.testing.assert_allclose(nonlinear_term(f).data, 1j * abs(c) ** 2 * c, atol=1e-14)


def test_nonlinear_term_non_integer_power_at_zero():
    g = build_grid(1, 0, 0.0, [4.0], [16])
    f = Field(g, np.zeros(16, dtype=complex))
    out = nonlinear_term(f, NonlinearitySpec(0.3), dealias=False)
    assert np.all(np.isfinite(out.data)) and np.all(out.data == 0)


def test_nonlinear_term_rejects_nonfinite():
    g = build_grid(1, 0, 0.0, [4.0], [16])
    data = np.zeros(16, dtype=complex)
    data[3] = np.nan
    with pytest.raises(BlowUpSignal):
        nonlinear_term(Field(g, data))


def test_nonlinear_term_requires_u_gauge():
    g = build_grid(1, 1, 0.5, [4.0], [16])
    with pytest.raises(ValueError):
        nonlinear_term(Field(g, np.ones(16, dtype=complex), gauge=Gauge.V))


# ---------------------------------------------------------------- stepping

@pytest.mark.parametrize("eps", [0.0, 0.5, 2.0])
def test_step_without_nonlinearity_is_linear_flow(eps):
    g = build_grid(2, 1, eps, [6.0, 6.0], [32, 32])
    f = rand_field(g, 1)
    a = step_ifrk4(f, 0.37, OFF).data
    b = propagate_linear(f, 0.37).data
    assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(b)


def test_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        step_ifrk4(gaussian_1d(), 0.0)


def test_integrator_order():
    u0 = gaussian_1d(L=40.0, N=256, k=0, eps=0.0, amp=2.0)
    nl = NonlinearitySpec(1.0)
    dt = 0.02
    ref = integrate_fixed(u0, nl, 1.0, dt / 8)
    e1 = (integrate_fixed(u0, nl, 1.0, dt) - ref).l2_norm()
    e2 = (integrate_fixed(u0, nl, 1.0, dt / 2) - ref).l2_norm()
    assert math.log2(e1 / e2) >= 3.7


def test_single_step_mass_defect_is_fifth_order():
    u0 = gaussian_1d(L=32.0, N=128, k=1, eps=0.5, amp=1.5)
    nl = NonlinearitySpec(1.0)
    m0 = modified_mass(u0)
    defects = [abs(modified_mass(step_ifrk4(u0, h, nl)) - m0) / m0 for h in (0.08, 0.04)]
    assert math.log2(defects[0] / defects[1]) >= 4.5


# ---------------------------------------------------------------- blow-up rule

def _rec(grad, tail):
    return DiagnosticsRecord(0.0, 1.0, 0.0, grad, grad, tail, 0.0)


def test_detect_blowup_examples():
    base = _rec(1.0, 1e-8)
    assert not detect_blowup(base, base)
    assert detect_blowup(_rec(50.0, 0.2), base)
    assert not detect_blowup(_rec(50.0, 1e-6), base)
    assert not detect_blowup(_rec(5.0, 0.5), base)


# ---------------------------------------------------------------- evolve

@pytest.mark.parametrize("eps", [0.0, 0.5, 1.5])
def test_linear_evolution_conserves_mass(eps):
    g = build_grid(2, 1, eps, [16.0, 16.0], [32, 32])
    u0 = Field.from_function(g, lambda x, y: np.exp(-(x**2 + y**2) / 2) * np.exp(1j * x))
    res = evolve(u0, OFF, 1.0, Controls(diag_interval=0.1))
    assert res.termination.kind is TerminationKind.HORIZON_REACHED
    assert res.drift("modified_mass") <= 1e-12
    ref = propagate_linear(Field(g, np.fft.ifftn(to_spectral(u0).data * g.dealias_mask, norm="ortho")), 1.0)
    assert (res.final - ref).l2_norm() <= 1e-10 * ref.l2_norm()


def test_evolve_timestamps_and_t_end(tmp_path):
    u0 = gaussian_1d()
    path = tmp_path / "diag.csv"
    res = evolve(u0, NonlinearitySpec(), 0.25, Controls(diag_interval=0.05, csv_path=str(path)))
    ts = res.series("t")
    assert np.all(np.diff(ts) > 0)
    assert res.t_end == ts[-1] == pytest.approx(0.25)
    assert len(ts) == 6
    back = read_diagnostics_csv(path)
    assert back == res.diagnostics


def test_diagnostics_csv_round_trip(tmp_path):
    recs = [DiagnosticsRecord(0.1 * i, 1.0 + i, -0.5 * i, 2.0, 3.0, 1e-17, 0.1, 1e-3) for i in range(4)]
    assert read_diagnostics_csv(write_diagnostics_csv(recs, tmp_path / "x.csv")) == recs


def test_diagnostics_entries_nonnegative():
    rec = diagnostics(gaussian_1d(amp=2.0), NonlinearitySpec())
    for name in ("modified_mass", "grad_l2", "h1_norm", "spectral_tail", "w_norm_running"):
        assert getattr(rec, name) >= 0
    assert rec.energy < 0  # focusing, large amplitude


def test_tail_exhaustion_reported():
    # a badly under-resolved large-amplitude pulse cannot be continued
    g = build_grid(1, 0, 0.0, [20.0], [32])
    u0 = Field.from_function(g, lambda x: 4.0 / np.cosh(2 * x))
    res = evolve(u0, NonlinearitySpec(), 1.0, Controls(tail_exhausted=0.01, diag_interval=0.1))
    assert res.termination.kind is TerminationKind.RESOLUTION_EXHAUSTED


def test_reversibility_small():
    u0 = gaussian_1d(amp=1.2)
    nl = NonlinearitySpec()
    ctl = Controls(rtol=1e-11, diag_interval=0.25)
    fwd = evolve(u0, nl, 0.5, ctl).final
    back = evolve(fwd.conj(), nl, 0.5, ctl).final.conj()
    assert (back - u0).l2_norm() <= 1e-8 * u0.l2_norm()


def test_epsilon_continuity():
    nl = NonlinearitySpec()
    ctl = Controls(rtol=1e-11, diag_interval=0.25)
    a = evolve(gaussian_1d(eps=1e-3, amp=0.5), nl, 0.5, ctl).final
    b = evolve(gaussian_1d(eps=0.0, amp=0.5), nl, 0.5, ctl).final
    diff = math.sqrt(a.grid.cell_volume) * np.linalg.norm(a.data - b.data)
    assert diff <= 1e-4 * gaussian_1d(amp=0.5).l2_norm()


# ---------------------------------------------------------------- gauge

def test_gauge_round_trip():
    g = build_grid(2, 1, 0.7, [6.0, 6.0], [16, 16])
    f = rand_field(g, 2, band=False)
    v = gauge_convert(f)
    assert v.gauge is Gauge.V
    back = gauge_convert(v)
    assert back.gauge is Gauge.U
    assert np.linalg.norm(back.data - f.data) <= 1e-12 * np.linalg.norm(f.data)
    assert v.l2_norm() ** 2 == pytest.approx(modified_mass(f), rel=1e-12)


def test_gauge_eps0_identity():
    g = build_grid(2, 1, 0.0, [6.0, 6.0], [16, 16])
    f = rand_field(g, 3, band=False)
    np.testing.assert_allclose(gauge_convert(f).data, f.data, atol=1e-14)


# ---------------------------------------------------------------- Picard

def _v0(amp):
    return gauge_convert(gaussian_1d(amp=amp))


def test_picard_zero_data():
    rep = picard_verify(_v0(0.0), NonlinearitySpec(), 0.1, n_iters=4)
    assert rep.ratios == [0.0, 0.0, 0.0] and rep.converged


def test_picard_small_data_contracts_and_matches_evolve():
    rep = picard_verify(_v0(0.1), NonlinearitySpec(), 0.1)
    assert rep.ratios and all(r < 0.5 for r in rep.ratios)
    assert rep.converged
    u = evolve(gaussian_1d(amp=0.1), NonlinearitySpec(), 0.1, Controls(rtol=1e-12, diag_interval=0.05)).final
    assert (gauge_convert(rep.solution) - u).l2_norm() <= 1e-6 * u.l2_norm()


def test_picard_amplitude_scaling():
    r1 = picard_verify(_v0(0.1), NonlinearitySpec(), 0.1, n_iters=3).ratios[0]
    r2 = picard_verify(_v0(0.2), NonlinearitySpec(), 0.1, n_iters=3).ratios[0]
    assert r2 / r1 == pytest.approx(4.0, rel=0.1)


def test_picard_divergence_raises():
    with pytest.raises(PicardDivergence):
        picard_verify(_v0(3.0), NonlinearitySpec(), 3.0, n_iters=12, n_nodes=129)


def test_picard_rejects_u_gauge():
    with pytest.raises(ValueError):
        picard_verify(gaussian_1d(), NonlinearitySpec(), 0.1)
