import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sepmp.engine import (
    StateCoefficients, TimeGrid, brownian_integral, draw_noise, euler_batch, exact_loglinear_path,
    exact_loglinear_state, pack, simulate_state, state_rows,
)
from sepmp.errors import ConfigError, NonFiniteState, PositivityViolation
from sepmp.policy import ControlPolicy
from sepmp.process import IntensityModel, MarkKernel

from conftest import hand_path

ZERO_PI = ControlPolicy.deterministic(0.0)
MODEL = IntensityModel(1.0, 1.0, 0.5)
KERNEL = MarkKernel.constant(0.5)


def test_grid_contains_events_once():
    g = TimeGrid.build(1.0, 4, [0.25, 0.3])
    assert g.knots.tolist() == [0.0, 0.25, 0.3, 0.5, 0.75, 1.0]
    assert g.knots[g.event_knots].tolist() == [0.25, 0.3]
    assert g.is_event.sum() == 2


def test_zero_dynamics_constant():
    p = hand_path([0.3, 0.9], [1.0, 2.0])
    g = TimeGrid.build(2.0, 16, p.times)
    s = simulate_state(StateCoefficients.zero(), ZERO_PI, p, g, np.random.default_rng(0), x0=3.0)
    assert np.all(s.x_post == 3.0) and np.all(s.x_pre == 3.0)


def test_single_euler_step():
    c = StateCoefficients.general(lambda t, x, pi: 2.0 + 0 * x, lambda t, x, pi: 0.5 + 0 * x,
                                  lambda t, x, pi: 0 * x)
    g = TimeGrid.build(0.01, 1)
    s = simulate_state(c, ZERO_PI, hand_path([], [], horizon=0.01), g, x0=1.0, brownian=np.array([0.1]))
    assert s.x_post[-1] == pytest.approx(1.07, abs=1e-15)


def test_deterministic_euler_first_order():
    r = 0.7
    c = StateCoefficients.loglinear(r, 0.0, 0.0)
    errs = []
    for n in (64, 128, 256, 512):
        g = TimeGrid.build(1.0, n)
        s = simulate_state(c, ZERO_PI, hand_path([], [], horizon=1.0), g, x0=1.0,
                           brownian=np.zeros(n))
        errs.append(abs(s.x_post[-1] - math.exp(r)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 1.8) & (ratios < 2.2))


def test_jump_bookkeeping_exact_general_form():
    c = StateCoefficients.general(lambda t, x, pi: 0.1 * x, lambda t, x, pi: 0.2 * x,
                                  lambda t, x, pi: 0.3 * x)
    noise = draw_noise(MODEL, KERNEL, 3.0, 64, 4, 0)
    s = simulate_state(c, ZERO_PI, noise.events, noise.grid, x0=1.0, brownian=noise.dB)
    k = noise.grid.event_knots
    assert k.size > 0
    assert np.array_equal(s.x_post[k] - s.x_pre[k], 0.3 * s.x_pre[k] * noise.events.marks)
    off = np.ones(s.x_pre.size, bool)
    off[k] = False
    assert np.array_equal(s.x_pre[off], s.x_post[off])


def test_fast_path_agrees_with_loop():
    c = StateCoefficients.loglinear(0.1, 0.3, 0.2)
    pol = ControlPolicy.deterministic(lambda t: 1 / (2 - t))
    noises = [draw_noise(MODEL, KERNEL, 1.0, 64, 1, i) for i in range(20)]
    P = pack(noises)
    a = euler_batch(c, pol, P, 1.0, fast=True)
    b = euler_batch(c, pol, P, 1.0, fast=False)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12)
    k = noises[0].grid.event_knots
    np.testing.assert_allclose(a[1][0, k] - a[0][0, k], 0.2 * a[0][0, k] * noises[0].events.marks,
                               rtol=1e-12)


def test_refinement_keeps_events():
    a = draw_noise(MODEL, KERNEL, 2.0, 32, 8, 5)
    b = draw_noise(MODEL, KERNEL, 2.0, 512, 8, 5)
    assert np.array_equal(a.events.times, b.events.times)
    assert np.array_equal(a.events.marks, b.events.marks)


def test_positivity_violation():
    c = StateCoefficients.loglinear(-200.0, 0.0, 0.0)
    with pytest.raises(PositivityViolation):
        simulate_state(c, ZERO_PI, hand_path([], [], horizon=1.0), TimeGrid.build(1.0, 1),
                       x0=1.0, brownian=np.zeros(1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_state():
    c = StateCoefficients.general(lambda t, x, pi: 1e300 * x * x, lambda t, x, pi: 0 * x,
                                  lambda t, x, pi: 0 * x)
    with pytest.raises(NonFiniteState):
        simulate_state(c, ZERO_PI, hand_path([], [], horizon=1.0), TimeGrid.build(1.0, 8),
                       x0=1.0, brownian=np.zeros(8))


def test_negative_kappa_rejected():
    with pytest.raises(ConfigError) as err:
        StateCoefficients.loglinear(0.1, 0.2, -0.1)
    assert err.value.field == "kappa"


def _exact(c, pol, path, t, x0=1.0, dB=None):
    g = TimeGrid.build(path.horizon, 64, path.times)
    dB = np.zeros(g.knots.size - 1) if dB is None else dB
    return exact_loglinear_state(c, pol, path, brownian_integral(g, dB), t, x0, g)


def test_exact_flat_when_drift_cancels():
    c = StateCoefficients.loglinear(0.4, 0.0, 0.0)
    path = hand_path([0.5], [1.0])
    assert _exact(c, ControlPolicy.deterministic(0.4), path, 1.5, x0=2.5) == 2.5


def test_exact_deterministic_exponential():
    c = StateCoefficients.loglinear(0.3, 0.0, 0.0)
    assert _exact(c, ZERO_PI, hand_path([], []), 1.7) == pytest.approx(math.exp(0.3 * 1.7), rel=1e-14)


def test_exact_single_jump_value():
    # exponent -0.5*0.2^2*2^2 + 0.2*2 = 0.32
    c = StateCoefficients.loglinear(0.0, 0.0, 0.2)
    val = _exact(c, ZERO_PI, hand_path([0.4], [2.0]), 1.0)
    assert val == pytest.approx(1.3771277643359572, rel=1e-14)
    assert val == pytest.approx(1.37713, abs=5e-6)


def test_exact_rejects_general_form():
    with pytest.raises(ConfigError):
        _exact(StateCoefficients.zero(), ZERO_PI, hand_path([], []), 1.0)


def test_exact_path_matches_pointwise():
    c = StateCoefficients.loglinear(0.1, 0.3, 0.0)
    noise = draw_noise(MODEL, KERNEL, 1.0, 32, 2, 0)
    s = simulate_state(c, ZERO_PI, noise.events, noise.grid, x0=1.0, brownian=noise.dB)
    full = exact_loglinear_path(c, ZERO_PI, s, 1.0)
    bi = brownian_integral(noise.grid, noise.dB, c.vol)
    for k in (5, 17, noise.grid.knots.size - 1):
        t = noise.grid.knots[k]
        assert full[k] == pytest.approx(
            exact_loglinear_state(c, ZERO_PI, noise.events, bi, t, 1.0, noise.grid), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0.1, 3), st.floats(-2, 2))
def test_loglinear_partials_match_fd(alpha, vol, kappa, x, pi):
    c = StateCoefficients.loglinear(alpha, vol, kappa)
    g = StateCoefficients.general(c.b, c.sigma, c.gamma)
    for a, b in zip(c.partials(0.3, x, pi), g.partials(0.3, x, pi)):
        assert float(a) == pytest.approx(float(b), rel=1e-6, abs=1e-8)


def test_state_rows_columns():
    noise = draw_noise(MODEL, KERNEL, 1.0, 8, 0, 3)
    s = simulate_state(StateCoefficients.loglinear(0.1, 0.2, 0.1), ZERO_PI, noise.events,
                       noise.grid, x0=1.0, brownian=noise.dB)
    rows = list(state_rows(s))
    assert len(rows) == noise.grid.knots.size
    assert rows[0] == (3, 0.0, 1.0, 1.0, 1.0, 0, 0.0)
    assert rows[-1][5] == noise.events.n_events
