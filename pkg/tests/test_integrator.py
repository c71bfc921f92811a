import numpy as np
import pytest

from reltraj.dynamics import initial_state
from reltraj.errors import (
    ConfigurationError,
    LightConeViolation,
    NumericalBreakdown,
    SpanError,
)
from reltraj.integrator import (
    IntegratorConfig,
    _check_accepted,
    dense_eval,
    dense_eval_many,
    evolve,
)
from reltraj.dynamics import pack
from reltraj.model import GridSpec, PhysicalParams, build_grid
from reltraj.observables import slice_coverage_stop
from reltraj.verify import metric_history


@pytest.mark.parametrize("kwargs", [dict(rtol=0.0), dict(atol=-1.0), dict(t_span=(1.0, 2.0)),
                                    dict(t_span=(0.0, 1.0), output_times=(2.0,)),
                                    dict(max_step=0.0)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        IntegratorConfig(**kwargs)


def test_fixed_point_run():
    p = PhysicalParams(a=0.0, c=1.5)
    g = build_grid(GridSpec(), 0.0)
    rec = evolve(initial_state(p, g), IntegratorConfig(t_span=(0.0, 10.0)), p, g)
    assert rec.taus[-1] == 10.0
    assert np.max(np.abs(rec.component("x") - g.C)) < 1e-9
    assert np.max(np.abs(rec.component("t") - rec.taus[:, None])) < 1e-9
    st = dense_eval(rec, 3.7)
    np.testing.assert_allclose(st.t, 3.7, rtol=1e-14)


def test_output_times_are_stored_steps(ref_fixed):
    for tau in range(11):
        k = ref_fixed.index_of(float(tau))
        assert ref_fixed.taus[k] == float(tau)
    with pytest.raises(SpanError):
        ref_fixed.index_of(0.123456)


def test_dense_eval_at_stored_step_is_exact(ref_fixed):
    k = ref_fixed.taus.size // 3
    st = dense_eval(ref_fixed, float(ref_fixed.taus[k]))
    np.testing.assert_array_equal(st.as_vector(), ref_fixed.Y[k])


def test_dense_eval_many_matches_single(ref_fixed):
    taus = np.linspace(0.05, 9.95, 7)
    many = dense_eval_many(ref_fixed, taus)
    for tau, row in zip(taus, many):
        np.testing.assert_allclose(dense_eval(ref_fixed, float(tau)).as_vector(), row,
                                   rtol=1e-14, atol=1e-14)


def test_dense_eval_outside_span(ref_fixed):
    with pytest.raises(SpanError):
        dense_eval(ref_fixed, 10.5)


def test_dense_midpoint_agrees_with_halted_run(ref_params, ref_grid):
    cfg = IntegratorConfig(t_span=(0.0, 5.0))
    rec = evolve(initial_state(ref_params, ref_grid), cfg, ref_params, ref_grid)
    k = rec.taus.size // 2
    mid = 0.5 * (rec.taus[k] + rec.taus[k + 1])
    halted = evolve(initial_state(ref_params, ref_grid), IntegratorConfig(t_span=(0.0, mid)),
                    ref_params, ref_grid)
    y, y2 = dense_eval(rec, mid).as_vector(), halted.Y[-1]
    assert np.max(np.abs(y - y2)) / np.max(np.abs(y2)) < 10 * cfg.rtol


def test_tolerance_halving_contract(ref_params, ref_grid):
    times = [float(k) for k in range(11)]
    inner = np.abs(ref_grid.C) <= 3
    gam = {}
    for rtol in (1e-8, 5e-9, 1e-11):
        cfg = IntegratorConfig(rtol=rtol, atol=rtol / 100, t_span=(0.0, 10.0), output_times=times)
        rec = evolve(initial_state(ref_params, ref_grid), cfg, ref_params, ref_grid)
        gam[rtol] = metric_history(rec, times, ref_grid)[:, inner]
    previous_error = np.max(np.abs(gam[1e-8] - gam[1e-11]))
    change = np.max(np.abs(gam[5e-9] - gam[1e-8]))
    assert change < previous_error


def test_u0_positive_and_subluminal(ref_record, ref_params):
    u0 = ref_record.component("u0")
    u1 = ref_record.component("u1")
    assert np.all(u0 > 0)
    assert np.all(np.abs(u1 / u0) < ref_params.c)


def test_time_reversal_symmetry(ref_params, ref_grid):
    times = (-6.0, -3.0, 3.0, 6.0)
    cfg = IntegratorConfig(t_span=(-6.0, 6.0), output_times=times)
    rec = evolve(initial_state(ref_params, ref_grid), cfg, ref_params, ref_grid)
    assert rec.stats["backward_steps"] > 0
    tol = 10 * (cfg.rtol + cfg.atol)
    for tau in (3.0, 6.0):
        fwd, bwd = rec.state(rec.index_of(tau)), rec.state(rec.index_of(-tau))
        scale = 1 + np.max(np.abs(fwd.as_vector()))
        assert np.max(np.abs(bwd.t + fwd.t)) < tol * scale
        assert np.max(np.abs(bwd.x - fwd.x)) < tol * scale
        assert np.max(np.abs(bwd.u0 - fwd.u0)) < tol * scale
        assert np.max(np.abs(bwd.u1 + fwd.u1)) < tol * scale


def test_spatial_parity(ref_fixed):
    tol = 10 * (ref_fixed.config.rtol + ref_fixed.config.atol)
    t, x = ref_fixed.component("t"), ref_fixed.component("x")
    scale = 1 + np.max(np.abs(ref_fixed.Y))
    assert np.max(np.abs(t - t[:, ::-1])) < tol * scale
    assert np.max(np.abs(x + x[:, ::-1])) < tol * scale


def test_coverage_stop_ends_passes_early(ref_params, ref_grid):
    stop = slice_coverage_stop(-2.0, 4.0, ref_params.c)
    cfg = IntegratorConfig(t_span=(-100.0, 100.0))
    rec = evolve(initial_state(ref_params, ref_grid), cfg, ref_params, ref_grid, stop=stop)
    assert rec.stats["stopped_early"] == {"forward": True, "backward": True}
    T = rec.component("t")
    assert T[-1].min() >= 4.0 and T[-2].min() < 4.0
    assert T[0].max() <= -2.0 and T[1].max() > -2.0


def test_light_cone_check():
    p = PhysicalParams(c=1.5)
    y = pack(np.zeros(3), np.zeros(3), np.ones(3), np.array([0.0, 1.6, 0.0]))
    with pytest.raises(LightConeViolation):
        _check_accepted(1.0, y, p)
    y = pack(np.zeros(3), np.zeros(3), np.array([1.0, -1.0, 1.0]), np.zeros(3))
    with pytest.raises(NumericalBreakdown):
        _check_accepted(1.0, y, p)


def test_coarse_uniform_grid_breaks_down_cleanly():
    p = PhysicalParams()
    g = build_grid(GridSpec(kind="uniform", n_points=15), p.a)
    # the step cap keeps the test fast; either way the failure is classified
    cfg = IntegratorConfig(t_span=(0.0, 10.0), max_steps=3000)
    with pytest.raises(NumericalBreakdown):
        evolve(initial_state(p, g), cfg, p, g)


def test_determinism(ref_params, ref_grid):
    cfg = IntegratorConfig(t_span=(0.0, 2.0))
    a = evolve(initial_state(ref_params, ref_grid), cfg, ref_params, ref_grid)
    b = evolve(initial_state(ref_params, ref_grid), cfg, ref_params, ref_grid)
    np.testing.assert_array_equal(a.Y, b.Y)
    np.testing.assert_array_equal(a.taus, b.taus)


def test_initial_state_must_start_at_zero(ref_params, ref_grid):
    st = initial_state(ref_params, ref_grid)
    st.tau_ens = 1.0
    with pytest.raises(ConfigurationError):
        evolve(st, IntegratorConfig(), ref_params, ref_grid)
