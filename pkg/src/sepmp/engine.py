"""Joint simulation of Brownian noise, self-exciting inputs and the controlled state.

The state equation

    dX_t = b(t, X_t, pi_t) dt + sigma(t, X_t, pi_t) dB_t + gamma(t-, X_{t-}, pi_{t-}) dU_t

is stepped by Euler-Maruyama on a grid that contains every event time; at an
event knot the jump ``gamma * Y`` is applied with pre-jump arguments.  Paths
are simulated in batches (rows of padded knot matrices) so that many paths
advance together while every path keeps its own random substreams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, NonFiniteState, PositivityViolation
from .policy import ControlPolicy, time_function
from .process import EventBatch, EventPath, IntensityModel, MarkKernel, simulate_events
from .rng import PathStreams


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Uniform base grid on ``[start, horizon]`` merged with the event times of one path."""

    horizon: float
    base_steps: int
    knots: np.ndarray
    event_knots: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    start: float = 0.0

    @classmethod
    def build(cls, horizon: float, base_steps: int, event_times=(), start: float = 0.0) -> "TimeGrid":
        if base_steps < 1:
            raise ConfigError("base_steps", f"must be positive, got {base_steps}")
        base = base_grid(start, horizon, base_steps)
        ev = np.asarray(event_times, dtype=float)
        if ev.size and (ev.min() <= start or ev.max() > horizon):
            raise ValueError("event times must lie in (start, horizon]")
        knots = np.union1d(base, ev)
        return cls(float(horizon), int(base_steps), knots,
                   np.searchsorted(knots, ev).astype(np.int64), float(start))

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.knots)

    @property
    def is_event(self) -> np.ndarray:
        flags = np.zeros(self.knots.size, bool)
        flags[self.event_knots] = True
        return flags


def base_grid(start: float, horizon: float, steps: int) -> np.ndarray:
    g = start + (horizon - start) * np.arange(steps + 1) / steps
    g[-1] = horizon
    return g


def _vector(fn: Callable) -> Callable:
    def wrapped(t, x, pi):
        t = np.asarray(t, dtype=float)
        shape = np.broadcast(t, np.asarray(x), np.asarray(pi)).shape
        return np.broadcast_to(np.asarray(fn(t, x, pi), dtype=float), shape)
    return wrapped


@dataclass(frozen=True, eq=False)
class StateCoefficients:
    """Drift ``b``, diffusion ``sigma`` and jump coefficient ``gamma`` of the state SDE.

    Callables take ``(t, x, pi)`` and must accept numpy arrays.  Use
    :meth:`loglinear` for ``b = x(alpha_t - pi)``, ``sigma = x vol_t``,
    ``gamma = x kappa_t``, which also supplies closed-form partial derivatives.
    """

    b: Callable
    sigma: Callable
    gamma: Callable
    form: str = "general"
    alpha: Optional[Callable] = None
    vol: Optional[Callable] = None
    kappa: Optional[Callable] = None
    spec: Optional[dict] = None

    @classmethod
    def general(cls, b, sigma, gamma) -> "StateCoefficients":
        return cls(_vector(b), _vector(sigma), _vector(gamma))

    @classmethod
    def zero(cls) -> "StateCoefficients":
        z = lambda t, x, pi: 0.0 * x
        return cls.general(z, z, z)

    @classmethod
    def loglinear(cls, alpha, vol, kappa) -> "StateCoefficients":
        a, v, k = time_function(alpha), time_function(vol), time_function(kappa)
        spec = None
        if all(hasattr(f, "constant") for f in (a, v, k)):
            spec = {"form": "loglinear", "alpha": a.constant, "vol": v.constant, "kappa": k.constant}
            if k.constant < 0:
                raise ConfigError("kappa", f"must be non-negative, got {k.constant}")
        return cls(
            b=_vector(lambda t, x, pi: x * (a(t) - pi)),
            sigma=_vector(lambda t, x, pi: x * v(t)),
            gamma=_vector(lambda t, x, pi: x * k(t)),
            form="loglinear", alpha=a, vol=v, kappa=k, spec=spec)

    @property
    def is_loglinear(self) -> bool:
        return self.form == "loglinear"

    def partials(self, t, x, pi):
        """``(db/dx, db/dpi, dsigma/dx, dsigma/dpi, dgamma/dx, dgamma/dpi)``.

        Closed form for the log-linear family, central differences otherwise.
        """
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        pi = np.asarray(pi, dtype=float)
        if self.is_loglinear:
            zero = np.zeros(np.broadcast(t, x, pi).shape)
            return (self.alpha(t) - pi + zero, -x + zero, self.vol(t) + zero, zero,
                    self.kappa(t) + zero, zero)
        out = []
        for f in (self.b, self.sigma, self.gamma):
            out.append(central_difference(lambda s: f(t, s, pi), x))
            out.append(central_difference(lambda s: f(t, x, s), pi))
        return tuple(out)


def central_difference(fn: Callable, at, rel_step: float = 1e-6):
    at = np.asarray(at, dtype=float)
    h = rel_step * np.maximum(1.0, np.abs(at))
    return (fn(at + h) - fn(at - h)) / (2 * h)


@dataclass(frozen=True, eq=False)
class PathNoise:
    """All randomness of one path: events, the merged grid and Brownian increments."""

    path_id: int
    events: EventPath
    grid: TimeGrid
    dB: np.ndarray


def draw_noise(model: IntensityModel, kernel: MarkKernel, horizon: float, base_steps: int,
               master_seed: int, path_id: int, max_events: int = 10**6) -> PathNoise:
    streams = PathStreams(master_seed, path_id)
    events = simulate_events(model, kernel, horizon, streams, max_events)
    grid = TimeGrid.build(horizon, base_steps, events.times)
    dB = brownian_increments(grid, streams.brownian)
    return PathNoise(path_id, events, grid, dB)


def brownian_increments(grid: TimeGrid, rng: np.random.Generator) -> np.ndarray:
    return np.sqrt(grid.dt) * rng.standard_normal(grid.knots.size - 1)


@dataclass(frozen=True, eq=False)
class Packed:
    """Rows of padded knot matrices; padding repeats the horizon with zero steps."""

    knots: np.ndarray     # (n, K)
    dt: np.ndarray        # (n, K-1)
    dB: np.ndarray        # (n, K-1)
    is_event: np.ndarray  # (n, K)
    jump: np.ndarray      # (n, K) mark at event knots, else 0
    lengths: np.ndarray   # (n,)

    @property
    def shape(self):
        return self.knots.shape


def pack(noises: Sequence[PathNoise]) -> Packed:
    n = len(noises)
    K = max(p.grid.knots.size for p in noises)
    knots = np.empty((n, K))
    dB = np.zeros((n, K - 1))
    is_event = np.zeros((n, K), bool)
    jump = np.zeros((n, K))
    lengths = np.empty(n, dtype=np.int64)
    for r, p in enumerate(noises):
        m = p.grid.knots.size
        knots[r, :m] = p.grid.knots
        knots[r, m:] = p.grid.knots[-1]
        dB[r, :m - 1] = p.dB
        is_event[r, p.grid.event_knots] = True
        jump[r, p.grid.event_knots] = p.events.marks
        lengths[r] = m
    return Packed(knots, np.diff(knots, axis=1), dB, is_event, jump, lengths)


def pack_batch(start: float, horizon: float, base_steps: int, batch: EventBatch,
               rng: np.random.Generator) -> Packed:
    """Pack nested continuations: base grid on ``[start, horizon]`` plus each row's events."""
    n = batch.count.size
    base = base_grid(start, horizon, base_steps)
    m = base.size
    allk = np.concatenate([np.broadcast_to(base, (n, m)), batch.times], axis=1)
    flags = np.concatenate([np.zeros((n, m), bool), np.ones(batch.times.shape, bool)], axis=1)
    marks = np.concatenate([np.zeros((n, m)), batch.marks], axis=1)
    order = np.argsort(allk, axis=1, kind="stable")
    knots = np.take_along_axis(allk, order, axis=1)
    is_event = np.take_along_axis(flags, order, axis=1)
    jump = np.take_along_axis(marks, order, axis=1)
    pad = ~np.isfinite(knots)
    knots[pad] = horizon
    is_event &= ~pad
    jump[pad] = 0.0
    dt = np.diff(knots, axis=1)
    dB = np.sqrt(dt) * rng.standard_normal(dt.shape)
    return Packed(knots, dt, dB, is_event, jump, m + batch.count)


def _check(X, loglinear, ids=None):
    bad = ~np.isfinite(X)
    if bad.any():
        r = int(np.argwhere(bad)[0][0])
        raise NonFiniteState("state became non-finite", None if ids is None else ids[r])
    if loglinear and np.any(X <= 0):
        r = int(np.argwhere(X <= 0)[0][0])
        raise PositivityViolation("log-linear state is not positive", None if ids is None else ids[r])


def euler_batch(coeffs: StateCoefficients, policy: ControlPolicy, P: Packed, x0,
                path_ids=None, fast: Optional[bool] = None):
    """Euler-Maruyama over packed rows. Returns ``(X_pre, X_post)``, each ``(n, K)``.

    Log-linear coefficients with a deterministic policy use the equivalent
    product form ``X_{k+1} = X_k (1 + (alpha - pi) dt + vol dB)``, evaluated
    with cumulative products.
    """
    n, K = P.shape
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (n,))
    if fast is None:
        fast = coeffs.is_loglinear and policy.is_deterministic
    if fast:
        t = P.knots[:, :-1]
        step = 1.0 + (coeffs.alpha(t) - policy(t)) * P.dt + coeffs.vol(t) * P.dB
        jf = np.where(P.is_event, 1.0 + coeffs.kappa(P.knots) * P.jump, 1.0)
        post = np.empty((n, K))
        post[:, 0] = x0
        post[:, 1:] = x0[:, None] * np.cumprod(step * jf[:, 1:], axis=1)
        pre = np.empty((n, K))
        pre[:, 0] = x0
        pre[:, 1:] = post[:, :-1] * step
        _check(post, True, path_ids)
        _check(pre, True, path_ids)
        return pre, post
    pre = np.empty((n, K))
    post = np.empty((n, K))
    pre[:, 0] = post[:, 0] = x0
    for k in range(K - 1):
        t = P.knots[:, k]
        x = post[:, k]
        pi = policy(t, x)
        xn = x + coeffs.b(t, x, pi) * P.dt[:, k] + coeffs.sigma(t, x, pi) * P.dB[:, k]
        pre[:, k + 1] = xn
        ev = P.is_event[:, k + 1]
        if ev.any():
            xn = xn.copy()
            t1 = P.knots[ev, k + 1]
            xm = xn[ev]
            xn[ev] = xm + coeffs.gamma(t1, xm, policy(t1, xm)) * P.jump[ev, k + 1]
        post[:, k + 1] = xn
    _check(post, coeffs.is_loglinear, path_ids)
    _check(pre, coeffs.is_loglinear, path_ids)
    return pre, post


@dataclass(frozen=True, eq=False)
class StatePath:
    """State at the knots of ``grid``; ``x_pre`` differs from ``x_post`` only at event knots."""

    grid: TimeGrid
    x_pre: np.ndarray
    x_post: np.ndarray
    brownian_increments: np.ndarray
    events: EventPath

    @property
    def x(self) -> np.ndarray:
        return self.x_post

    def brownian_path(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.brownian_increments)))


def simulate_state(coeffs: StateCoefficients, policy: ControlPolicy, events: EventPath,
                   grid: TimeGrid, rng_stream=None, x0: float = 1.0, *,
                   brownian: Optional[np.ndarray] = None, fast: Optional[bool] = None) -> StatePath:
    """Simulate one state path on ``grid``, which must contain every event time.

    Brownian increments come from ``rng_stream`` (a :class:`PathStreams` or a
    generator) unless given explicitly via ``brownian``.
    """
    if not math.isfinite(x0):
        raise ConfigError("x0", f"must be finite, got {x0}")
    if events.n_events and not np.all(np.isin(events.times, grid.knots)):
        raise ValueError("grid does not contain all event times")
    if brownian is None:
        rng = rng_stream.brownian if isinstance(rng_stream, PathStreams) else rng_stream
        brownian = brownian_increments(grid, rng)
    noise = PathNoise(events.path_id, events, grid, np.asarray(brownian, dtype=float))
    pre, post = euler_batch(coeffs, policy, pack([noise]), x0, [events.path_id], fast=fast)
    return StatePath(grid, pre[0], post[0], noise.dB, events)


def brownian_integral(grid: TimeGrid, dB: np.ndarray, vol: Callable = None) -> Callable:
    """``t -> int_0^t vol_s dB_s`` from left-point sums at knots, linear between knots."""
    w = dB if vol is None else time_function(vol)(grid.knots[:-1]) * dB
    cum = np.concatenate(([0.0], np.cumsum(w)))
    return lambda t: float(np.interp(t, grid.knots, cum))


def _trapezoid(y, x):
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1])) / 2.0) if x.size > 1 else 0.0


def exact_loglinear_state(coeffs: StateCoefficients, policy: ControlPolicy, events: EventPath,
                          brownian_integral: Callable, t: float, x0: float,
                          grid: Optional[TimeGrid] = None) -> float:
    """Explicit solution of the log-linear state equation at time ``t``.

    ``x0 * exp(int (alpha - pi - vol^2/2) ds - 1/2 sum kappa^2 Y^2 + int vol dB + sum kappa Y)``.
    Time integrals use the trapezoid rule on ``grid`` (restricted to ``[0, t]``);
    jump sums are exact.  ``policy`` must be deterministic.
    """
    if not coeffs.is_loglinear:
        raise ConfigError("form", "exact solution requires log-linear coefficients")
    if not x0 > 0:
        raise ConfigError("x0", f"must be positive, got {x0}")
    if not policy.is_deterministic:
        raise ConfigError("policy", "exact solution requires a deterministic policy")
    if grid is None:
        grid = TimeGrid.build(events.horizon, 1024, events.times)
    s = grid.knots[grid.knots < t]
    s = np.append(s, t)
    drift = coeffs.alpha(s) - policy(s) - 0.5 * coeffs.vol(s) ** 2
    n = events.count(t)
    k = coeffs.kappa(events.times[:n]) * events.marks[:n]
    expo = _trapezoid(drift, s) - 0.5 * math.fsum(k ** 2) + brownian_integral(t) + math.fsum(k)
    return float(x0 * math.exp(expo))


def exact_loglinear_path(coeffs: StateCoefficients, policy: ControlPolicy, path: StatePath,
                         x0: float) -> np.ndarray:
    """Explicit solution at every knot of ``path.grid`` driven by the path's own noise."""
    if not coeffs.is_loglinear:
        raise ConfigError("form", "exact solution requires log-linear coefficients")
    knots = path.grid.knots
    drift = coeffs.alpha(knots) - policy(knots) - 0.5 * coeffs.vol(knots) ** 2
    det = np.concatenate(([0.0], np.cumsum(np.diff(knots) * (drift[1:] + drift[:-1]) / 2.0)))
    stoch = np.concatenate(([0.0], np.cumsum(coeffs.vol(knots[:-1]) * path.brownian_increments)))
    jumps = np.zeros(knots.size)
    ev = path.events
    if ev.n_events:
        k = coeffs.kappa(ev.times) * ev.marks
        jumps[path.grid.event_knots] = k - 0.5 * k ** 2
    return x0 * np.exp(det + stoch + np.cumsum(jumps))


STATE_CSV_COLUMNS = ("path_id", "time", "X_pre", "X_post", "lambda", "N", "U")


def state_rows(path: StatePath, path_id: Optional[int] = None):
    pid = path.events.path_id if path_id is None else path_id
    ev = path.events
    cumU = np.concatenate(([0.0], np.cumsum(ev.marks)))
    for k, t in enumerate(path.grid.knots):
        n = ev.count(t)
        yield (pid, float(t), float(path.x_pre[k]), float(path.x_post[k]),
               float(ev.intensity(t)), int(n), float(cumU[n]))
