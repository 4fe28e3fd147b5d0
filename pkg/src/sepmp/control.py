"""Performance functional, Hamiltonian and adjoint machinery for the control problem.

The performance of a control is ``J(pi) = E[int_0^T h(t, X_t, pi_t) dt + g(X_T)]``.
The Hamiltonian replaces the indicator sums over ``(T_{i-1}, T_i]`` by the
marker value ``ybar`` of the current segment:

    H = h + (b + ybar lam gamma) p + sigma q + lam (ybar^2 gamma + ybar x) w.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .engine import (
    Packed, PathNoise, StateCoefficients, StatePath, base_grid, central_difference,
    draw_noise, euler_batch, pack, pack_batch, simulate_state,
)
from .errors import ConfigError, NonFiniteState
from .mc import MCEstimate, map_paths
from .policy import ControlPolicy, indicator, time_function
from .process import IntensityModel, MarkKernel, simulate_events_batch

__all__ = [
    "AdjointTriple", "ControlPolicy", "MCConfig", "PathPrefix", "RunningReward",
    "derivative_process", "directional_derivative", "gamma_process", "hamiltonian",
    "hamiltonian_dpi", "hamiltonian_dx", "indicator", "linear_bsde_solve", "performance",
    "performance_samples",
]


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo sizes, grid and seed shared by every estimator in this module."""

    paths: int = 10_000
    master_seed: int = 0
    horizon: float = 1.0
    base_steps: int = 256
    inner_paths: int = 256
    max_events: int = 10**6
    workers: Optional[int] = None

    def __post_init__(self):
        if self.paths < 1:
            raise ConfigError("paths", f"must be positive, got {self.paths}")
        if not self.horizon > 0:
            raise ConfigError("horizon", f"must be positive, got {self.horizon}")
        if self.base_steps < 1:
            raise ConfigError("base_steps", f"must be positive, got {self.base_steps}")


@dataclass(frozen=True, eq=False)
class RunningReward:
    """Running reward ``h(t, x, pi)`` and terminal reward ``g(x)`` with its derivative."""

    h: Callable
    g: Callable
    g_prime: Callable
    h_dx: Optional[Callable] = None
    h_dpi: Optional[Callable] = None

    @classmethod
    def log_utility(cls, theta: float) -> "RunningReward":
        return cls(
            h=lambda t, x, pi: np.log(x * pi),
            g=lambda x: theta * np.log(x),
            g_prime=lambda x: theta / np.asarray(x, dtype=float),
            h_dx=lambda t, x, pi: 1.0 / np.asarray(x, dtype=float),
            h_dpi=lambda t, x, pi: 1.0 / np.asarray(pi, dtype=float),
        )

    def dx(self, t, x, pi):
        if self.h_dx is not None:
            return self.h_dx(t, x, pi)
        return central_difference(lambda s: self.h(t, s, pi), x)

    def dpi(self, t, x, pi):
        if self.h_dpi is not None:
            return self.h_dpi(t, x, pi)
        return central_difference(lambda s: self.h(t, x, s), pi)


@dataclass(frozen=True, eq=False)
class AdjointTriple:
    """Adjoint processes as functions of time; ``w`` is used through its left limit."""

    p: Callable
    q: Callable = field(default=lambda t: 0.0)
    w: Callable = field(default=lambda t: 0.0)


def hamiltonian(t, x, pi, p, q, w, ybar, lam, coeffs: StateCoefficients, reward: RunningReward):
    b, s, g = coeffs.b(t, x, pi), coeffs.sigma(t, x, pi), coeffs.gamma(t, x, pi)
    return reward.h(t, x, pi) + (b + ybar * lam * g) * p + s * q + lam * (ybar ** 2 * g + ybar * x) * w


def hamiltonian_dx(t, x, pi, p, q, w, ybar, lam, coeffs: StateCoefficients, reward: RunningReward):
    """``dH/dx``; affine in ``(p, q, w)``."""
    bx, _, sx, _, gx, _ = coeffs.partials(t, x, pi)
    return (reward.dx(t, x, pi) + (bx + ybar * lam * gx) * p + sx * q
            + lam * w * (ybar + ybar ** 2 * gx))


def hamiltonian_dpi(t, x, pi, p, q, w, ybar, lam, coeffs: StateCoefficients, reward: RunningReward):
    _, bp, _, sp, _, gp = coeffs.partials(t, x, pi)
    return reward.dpi(t, x, pi) + (bp + ybar * lam * gp) * p + sp * q + lam * w * ybar ** 2 * gp


def _running_integral(h, policy, P: Packed, pre, post):
    """Trapezoid of ``h`` over each row using post-jump left and pre-jump right values."""
    tl, tr = P.knots[:, :-1], P.knots[:, 1:]
    xl, xr = post[:, :-1], pre[:, 1:]
    if policy.is_deterministic:
        pl, pr = policy(tl), policy(tr)
    else:
        pl, pr = policy(tl, xl), policy(tr, xr)
    return np.sum(P.dt * (h(tl, xl, pl) + h(tr, xr, pr)), axis=1) / 2.0


def _noise_chunk(model, kernel, mc: MCConfig, ids):
    return [draw_noise(model, kernel, mc.horizon, mc.base_steps, mc.master_seed, pid, mc.max_events)
            for pid in ids]


def performance_samples(policies: Sequence[ControlPolicy], model: IntensityModel,
                        kernel: MarkKernel, coeffs: StateCoefficients, reward: RunningReward,
                        mc: MCConfig, x0: float = 1.0) -> np.ndarray:
    """Per-path realisations of ``J`` for several policies on common random numbers.

    Returns an array of shape ``(mc.paths, len(policies))``; row ``k`` uses the
    substreams of path ``k`` for every policy.
    """
    policies = list(policies)

    def work(ids):
        noises = _noise_chunk(model, kernel, mc, ids)
        P = pack(noises)
        out = np.empty((len(noises), len(policies)))
        for j, pol in enumerate(policies):
            pre, post = euler_batch(coeffs, pol, P, x0, list(ids))
            out[:, j] = _running_integral(reward.h, pol, P, pre, post) + reward.g(post[:, -1])
        return out

    return np.concatenate(map_paths(work, mc.paths, mc.workers), axis=0)


def performance(policy: ControlPolicy, model: IntensityModel, kernel: MarkKernel,
                coeffs: StateCoefficients, reward: RunningReward, mc: MCConfig,
                x0: float = 1.0) -> MCEstimate:
    """Monte Carlo estimate of ``J(policy)``."""
    if mc.paths < 2:
        raise ConfigError("paths", "performance needs at least 2 paths")
    return MCEstimate.from_samples(performance_samples([policy], model, kernel, coeffs, reward, mc, x0)[:, 0])


def directional_derivative(policy: ControlPolicy, direction, model: IntensityModel,
                           kernel: MarkKernel, coeffs: StateCoefficients, reward: RunningReward,
                           mc: MCConfig, y_step: float = 1e-3, x0: float = 1.0) -> MCEstimate:
    """Central difference ``(J(pi + y d) - J(pi - y d)) / 2y`` on shared substreams."""
    return directional_derivatives(policy, [direction], model, kernel, coeffs, reward, mc,
                                   y_step, x0)[0]


def directional_derivatives(policy, directions, model, kernel, coeffs, reward, mc,
                            y_step: float = 1e-3, x0: float = 1.0):
    """Several directions at once; all evaluations share the same paths."""
    if not y_step > 0:
        raise ConfigError("y_step", f"must be positive, got {y_step}")
    pols = []
    for d in directions:
        pols += [policy.perturbed(d, y_step), policy.perturbed(d, -y_step)]
    J = performance_samples(pols, model, kernel, coeffs, reward, mc, x0)
    return [MCEstimate.from_samples((J[:, 2 * i] - J[:, 2 * i + 1]) / (2 * y_step))
            for i in range(len(directions))]


def gamma_process(alpha, vol, kappa, noise, start_value: float = 1.0):
    """``dGamma = Gamma_{t-}(alpha dt + vol dB + kappa dU)`` on a path's own noise.

    ``noise`` is a :class:`PathNoise` (returns a 1-d array of post-jump values
    at the knots) or a :class:`Packed` batch (returns a 2-d array).
    """
    P = pack([noise]) if isinstance(noise, PathNoise) else noise
    _, post = _gamma(alpha, vol, kappa, P, start_value)
    return post[0] if isinstance(noise, PathNoise) else post


def _gamma(alpha, vol, kappa, P: Packed, start_value=1.0):
    coeffs = StateCoefficients.loglinear(alpha, vol, kappa)
    return euler_batch(coeffs, ControlPolicy.deterministic(0.0), P, start_value, fast=True)


@dataclass(frozen=True)
class PathPrefix:
    """What a continuation from time ``t`` needs to know about an outer path."""

    t: float
    x: float
    lam: float
    pending_mark: float
    path_id: int = 0

    @classmethod
    def at(cls, state: StatePath, t: float) -> "PathPrefix":
        ev = state.events
        k = int(np.searchsorted(state.grid.knots, t))
        if k >= state.grid.knots.size or state.grid.knots[k] != t:
            raise ValueError(f"t={t} is not a knot of the path grid")
        n = ev.count(t)
        pending = ev.marks[n] if n < ev.n_events else ev.pending_mark
        return cls(float(t), float(state.x_post[k]), float(ev.intensity(t)), float(pending),
                   ev.path_id)


def continuation_batch(prefix: PathPrefix, model: IntensityModel, kernel: MarkKernel,
                       mc: MCConfig, rng: np.random.Generator, n: int) -> Packed:
    """Fresh noise for ``n`` continuations of ``prefix`` on ``[t, horizon]``.

    The base grid of the continuation is the tail of the outer base grid, so
    ``t`` must be an outer base knot.
    """
    T = mc.horizon
    steps = round(mc.base_steps * (T - prefix.t) / T)
    if steps < 1:
        raise ValueError(f"no base steps left after t={prefix.t}")
    if not math.isclose(base_grid(0.0, T, mc.base_steps)[mc.base_steps - steps], prefix.t,
                        rel_tol=0, abs_tol=1e-12):
        raise ValueError(f"t={prefix.t} is not on the base grid")
    batch = simulate_events_batch(model, kernel, prefix.t, T, np.full(n, prefix.lam),
                                  prefix.pending_mark, rng, mc.max_events)
    return pack_batch(prefix.t, T, steps, batch, rng)


def linear_bsde_solve(phi: Callable, terminal: Callable, gamma_coeffs: tuple, prefix: PathPrefix,
                      model: IntensityModel, kernel: MarkKernel, mc: MCConfig,
                      rng: np.random.Generator, state: Optional[tuple] = None) -> MCEstimate:
    """Nested Monte Carlo for the first component of a linear BSDE at ``prefix.t``.

    ``p_t = E[(Gamma_T / Gamma_t) F + int_t^T (Gamma_s / Gamma_t) phi_s ds | F_t]``
    with ``Gamma`` driven by ``gamma_coeffs = (alpha, vol, kappa)``.  When
    ``state = (coeffs, policy)`` the state is simulated from ``prefix.x`` on the
    same continuation noise and ``phi(s, X_s)`` / ``terminal(X_T)`` see it;
    otherwise they receive ``x=None``.
    """
    n = mc.inner_paths
    if n < 2:
        raise ConfigError("inner_paths", f"need at least 2 inner paths, got {n}")
    P = continuation_batch(prefix, model, kernel, mc, rng, n)
    G_pre, G_post = _gamma(*gamma_coeffs, P)
    if state is not None:
        coeffs, policy = state
        X_pre, X_post = euler_batch(coeffs, policy, P, prefix.x)
        xl, xr, xT = X_post[:, :-1], X_pre[:, 1:], X_post[:, -1]
    else:
        xl = xr = xT = None
    tl, tr = P.knots[:, :-1], P.knots[:, 1:]
    integrand = G_post[:, :-1] * phi(tl, xl) + G_pre[:, 1:] * phi(tr, xr)
    samples = G_post[:, -1] * terminal(xT) + np.sum(P.dt * integrand, axis=1) / 2.0
    return MCEstimate.from_samples(samples)


def derivative_process(coeffs: StateCoefficients, policy: ControlPolicy, direction,
                       noise: PathNoise, x0: float = 1.0, state: Optional[StatePath] = None):
    """Euler solution of the linear sensitivity SDE with ``x_0 = 0`` on the path's noise.

    ``dx = (b_x x + b_pi d) dt + (sigma_x x + sigma_pi d) dB + (gamma_x x_- + gamma_pi d_-) dU``
    with partials evaluated along the state under ``policy``.  Returns
    ``(x_pre, x_post)`` at the knots.
    """
    d = time_function(direction)
    if state is None:
        state = simulate_state(coeffs, policy, noise.events, noise.grid, x0=x0, brownian=noise.dB)
    knots = noise.grid.knots
    is_event = noise.grid.is_event
    jump = np.zeros(knots.size)
    jump[noise.grid.event_knots] = noise.events.marks
    dt = np.diff(knots)
    X_pre, X_post = state.x_pre, state.x_post
    pi_post = policy(knots, X_post)
    pi_pre = policy(knots, X_pre)
    bx, bp, sx, sp, _, _ = coeffs.partials(knots, X_post, pi_post)
    _, _, _, _, gx, gp = coeffs.partials(knots, X_pre, pi_pre)
    beta = d(knots)
    out_pre = np.zeros(knots.size)
    out_post = np.zeros(knots.size)
    xs = 0.0
    for k in range(knots.size - 1):
        xs = (xs + (bx[k] * xs + bp[k] * beta[k]) * dt[k]
              + (sx[k] * xs + sp[k] * beta[k]) * noise.dB[k])
        out_pre[k + 1] = xs
        if is_event[k + 1]:
            xs = xs + (gx[k + 1] * xs + gp[k + 1] * beta[k + 1]) * jump[k + 1]
        out_post[k + 1] = xs
    if not np.all(np.isfinite(out_post)):
        raise NonFiniteState("sensitivity process became non-finite", noise.path_id)
    return out_pre, out_post
