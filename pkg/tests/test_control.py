import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sepmp.control import (
    MCConfig, PathPrefix, RunningReward, derivative_process, directional_derivative,
    gamma_process, hamiltonian, hamiltonian_dpi, hamiltonian_dx, linear_bsde_solve, performance,
    performance_samples,
)
from sepmp.engine import StateCoefficients, draw_noise, simulate_state
from sepmp.errors import AdmissibilityError
from sepmp.policy import ControlPolicy, indicator
from sepmp.process import IntensityModel, MarkKernel
from sepmp.rng import substream

MODEL = IntensityModel(1.0, 1.0, 0.5)
KERNEL = MarkKernel.constant(0.5)
LOG = RunningReward.log_utility(1.0)
LL = StateCoefficients.loglinear(0.1, 0.3, 0.2)
PI_HAT = ControlPolicy.deterministic(lambda t: 1 / (2 - t), (1e-3, 1e3), "optimal")


def H_args(**kw):
    base = dict(t=0.0, x=1.0, pi=1.0, p=1.0, q=0.0, w=0.0, ybar=1.0, lam=2.0)
    base.update(kw)
    return base


def test_hamiltonian_worked_value():
    assert hamiltonian(**H_args(), coeffs=LL, reward=LOG) == pytest.approx(-0.5, abs=1e-15)


def test_hamiltonian_reward_only():
    a = H_args(x=1.7, pi=0.4, p=0.0)
    assert hamiltonian(**a, coeffs=LL, reward=LOG) == pytest.approx(math.log(1.7 * 0.4), rel=1e-15)


def test_hamiltonian_without_jumps():
    c = StateCoefficients.loglinear(0.1, 0.3, 0.0)
    a = H_args(x=2.0, pi=0.5, p=0.7, q=0.2, ybar=3.3, lam=5.0)
    expect = math.log(1.0) + 2.0 * (0.1 - 0.5) * 0.7 + 2.0 * 0.3 * 0.2
    assert hamiltonian(**a, coeffs=c, reward=LOG) == pytest.approx(expect, rel=1e-14)


def test_dx_worked_value():
    c = StateCoefficients.loglinear(0.4, 0.3, 0.0)
    assert hamiltonian_dx(**H_args(x=2.0, pi=0.4, p=1.3), coeffs=c, reward=LOG) == pytest.approx(0.5)


def test_dx_zero_when_nothing_depends_on_x():
    c = StateCoefficients.general(lambda t, x, pi: pi + 0 * x, lambda t, x, pi: 0 * x,
                                  lambda t, x, pi: 0 * x)
    r = RunningReward(lambda t, x, pi: pi + 0 * x, lambda x: 0 * x, lambda x: 0 * x)
    assert hamiltonian_dx(**H_args(p=0.0), coeffs=c, reward=r) == 0.0


def test_dpi_worked_values():
    assert hamiltonian_dpi(**H_args(pi=0.5, p=1.0, x=1.0), coeffs=LL, reward=LOG) == 1.0
    assert hamiltonian_dpi(**H_args(pi=1 / (0.8 * 2.5), p=0.8, x=2.5), coeffs=LL,
                           reward=LOG) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0.2, 3), st.floats(0.1, 3),
       st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 3), st.floats(0.1, 5))
def test_closed_form_partials_match_fd(alpha, vol, kappa, x, pi, p, q, w, ybar, lam):
    c = StateCoefficients.loglinear(alpha, vol, kappa)
    g = StateCoefficients.general(c.b, c.sigma, c.gamma)
    r = RunningReward(LOG.h, LOG.g, LOG.g_prime)
    args = dict(t=0.5, x=x, pi=pi, p=p, q=q, w=w, ybar=ybar, lam=lam)
    for fn in (hamiltonian_dx, hamiltonian_dpi):
        exact = float(fn(**args, coeffs=c, reward=LOG))
        fd = float(fn(**args, coeffs=g, reward=r))
        assert fd == pytest.approx(exact, rel=1e-6, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(*[st.floats(-3, 3)] * 6)
def test_dx_affine_in_adjoints(p1, q1, w1, p2, q2, w2):
    f = lambda p, q, w: float(hamiltonian_dx(0.2, 1.5, 0.6, p, q, w, 0.5, 1.7, LL, LOG))
    assert f(p1 + p2, q1 + q2, w1 + w2) == pytest.approx(
        f(p1, q1, w1) + f(p2, q2, w2) - f(0, 0, 0), abs=1e-12)


def _degenerate(c):
    coeffs = StateCoefficients.zero()
    reward = RunningReward.log_utility(2.0)
    return coeffs, reward, ControlPolicy.deterministic(c, (1e-3, 10.0))


def test_performance_degenerate_exact():
    coeffs, reward, pol = _degenerate(0.7)
    mc = MCConfig(paths=50, horizon=1.5, base_steps=32)
    est = performance(pol, MODEL, KERNEL, coeffs, reward, mc)
    assert est.mean == pytest.approx(1.5 * math.log(0.7), rel=1e-13)
    assert est.stderr < 1e-14


def test_performance_bitwise_reproducible():
    mc = MCConfig(paths=300, base_steps=32, master_seed=4)
    a = performance(PI_HAT, MODEL, KERNEL, LL, LOG, mc)
    b = performance(PI_HAT, MODEL, KERNEL, LL, LOG, mc)
    assert a == b


def test_performance_independent_of_workers():
    mc1 = MCConfig(paths=2500, base_steps=16, workers=1)
    mc4 = MCConfig(paths=2500, base_steps=16, workers=4)
    assert np.array_equal(performance_samples([PI_HAT], MODEL, KERNEL, LL, LOG, mc1),
                          performance_samples([PI_HAT], MODEL, KERNEL, LL, LOG, mc4))


def test_optimal_beats_shifted_policy():
    shifted = ControlPolicy.deterministic(lambda t: 1 / (2 - t) + 0.2, (1e-3, 1e3))
    J = performance_samples([PI_HAT, shifted], MODEL, KERNEL, LL, LOG, MCConfig(paths=2000, base_steps=64))
    d = J[:, 0] - J[:, 1]
    assert d.mean() / (d.std(ddof=1) / math.sqrt(d.size)) > 2


def test_performance_needs_two_paths():
    with pytest.raises(Exception):
        performance(PI_HAT, MODEL, KERNEL, LL, LOG, MCConfig(paths=1))


def test_directional_derivative_zero_direction():
    est = directional_derivative(PI_HAT, lambda t: 0.0, MODEL, KERNEL, LL, LOG, MCConfig(paths=200))
    assert est.mean == 0.0 and est.stderr == 0.0


def test_directional_derivative_degenerate_closed_form():
    c, y, T = 0.7, 1e-3, 1.5
    coeffs, reward, pol = _degenerate(c)
    est = directional_derivative(pol, lambda t: 1.0, MODEL, KERNEL, coeffs, reward,
                                 MCConfig(paths=20, horizon=T, base_steps=16), y_step=y)
    # (ln(c+y) - ln(c-y)) / 2y = 1/c + y^2 / (3 c^3) + O(y^4)
    assert est.mean == pytest.approx(T / c, rel=1e-5)
    assert est.mean - T / c == pytest.approx(T * y * y / (3 * c ** 3), rel=1e-2)


def test_directional_derivative_antisymmetric():
    mc = MCConfig(paths=500, base_steps=32)
    d = indicator(0.25)
    a = directional_derivative(PI_HAT, d, MODEL, KERNEL, LL, LOG, mc)
    b = directional_derivative(PI_HAT, lambda t: -d(t), MODEL, KERNEL, LL, LOG, mc)
    assert a.mean == -b.mean and a.stderr == b.stderr


def test_perturbation_admissibility():
    pol = ControlPolicy.deterministic(0.5, (0.1, 1.0))
    with pytest.raises(AdmissibilityError):
        directional_derivative(pol, lambda t: 1.0, MODEL, KERNEL, LL, LOG, MCConfig(paths=10),
                               y_step=0.6)


def test_gamma_trivial_and_deterministic():
    noise = draw_noise(MODEL, KERNEL, 1.0, 128, 0, 0)
    assert np.all(gamma_process(0.0, 0.0, 0.0, noise) == 1.0)
    G = gamma_process(0.8, 0.0, 0.0, noise)
    assert abs(G[-1] - math.exp(0.8)) < 0.8 ** 2 * math.exp(0.8) / 128


def test_gamma_exponential_martingale_mean():
    from sepmp.engine import pack
    noises = [draw_noise(MODEL, KERNEL, 1.0, 32, 3, i) for i in range(20000)]
    G = gamma_process(0.0, 0.5, 0.0, pack(noises))
    m, s = G[:, -1].mean(), G[:, -1].std(ddof=1) / math.sqrt(20000)
    assert abs(m - 1.0) < 3 * s


def _prefix(t=0.25):
    return PathPrefix(t, 1.0, 1.0, 0.5)


def test_bsde_constant_terminal():
    mc = MCConfig(paths=1, inner_paths=64, base_steps=16)
    est = linear_bsde_solve(lambda t, x: 0.0 * t, lambda x: 3.5, (0.0, 0.0, 0.0), _prefix(),
                            MODEL, KERNEL, mc, substream(0, 0))
    assert est.mean == 3.5 and est.stderr == 0.0


def test_bsde_time_integral():
    mc = MCConfig(paths=1, inner_paths=64, base_steps=16)
    for t in (0.0, 0.25, 0.5, 0.75):
        est = linear_bsde_solve(lambda s, x: 1.0 + 0 * s, lambda x: 0.0, (0.0, 0.0, 0.0), _prefix(t),
                                MODEL, KERNEL, mc, substream(0, 1))
        assert est.mean == pytest.approx(1.0 - t, rel=1e-13)


def test_bsde_rejects_off_grid_time():
    mc = MCConfig(paths=1, inner_paths=8, base_steps=16)
    with pytest.raises(ValueError):
        linear_bsde_solve(lambda s, x: 0.0 * s, lambda x: 1.0, (0.0, 0.0, 0.0), _prefix(0.3),
                          MODEL, KERNEL, mc, substream(0, 2))


def test_bsde_needs_inner_paths():
    with pytest.raises(Exception):
        linear_bsde_solve(lambda s, x: 0.0 * s, lambda x: 1.0, (0.0, 0.0, 0.0), _prefix(),
                          MODEL, KERNEL, MCConfig(paths=1, inner_paths=1, base_steps=16),
                          substream(0, 3))


def test_derivative_process_zero_direction():
    noise = draw_noise(MODEL, KERNEL, 1.0, 64, 0, 0)
    pre, post = derivative_process(LL, PI_HAT, 0.0, noise)
    assert np.all(pre == 0) and np.all(post == 0)


def test_derivative_process_pure_drift():
    c = StateCoefficients.general(lambda t, x, pi: pi + 0 * x, lambda t, x, pi: 0 * x,
                                  lambda t, x, pi: 0 * x)
    noise = draw_noise(MODEL, KERNEL, 1.0, 64, 0, 1)
    _, post = derivative_process(c, ControlPolicy.deterministic(0.3), 1.0, noise)
    np.testing.assert_allclose(post, noise.grid.knots, rtol=1e-9, atol=1e-12)


def test_derivative_process_matches_finite_difference():
    y = 1e-4
    for pid in range(5):
        noise = draw_noise(MODEL, KERNEL, 1.0, 128, 2, pid)
        _, xs = derivative_process(LL, PI_HAT, 1.0, noise)
        base = simulate_state(LL, PI_HAT, noise.events, noise.grid, x0=1.0, brownian=noise.dB)
        bump = simulate_state(LL, PI_HAT.perturbed(lambda t: 1.0, y), noise.events, noise.grid,
                              x0=1.0, brownian=noise.dB)
        fd = (bump.x_post - base.x_post) / y
        np.testing.assert_allclose(xs[1:], fd[1:], rtol=1e-2)
