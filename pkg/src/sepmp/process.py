"""SDE-driven self-exciting jump processes.

The counting process ``N`` has intensity ``lambda`` solving

    d lambda_t = delta * (lambda0 - lambda_t) dt + beta dU_t,   lambda_0 = lambda0,

where ``U_t = sum_{i <= N_t} Y_i`` accumulates the marks.  Between events the
intensity follows the explicit mean-reverting flow, so events can be generated
exactly by thinning against the running majorant ``max(lambda_t, lambda0)``.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, ExplosionError, SupportViolation
from .rng import PathStreams

PREDICTABLE = "predictable"
ATJUMP = "atjump"
MODES = (PREDICTABLE, ATJUMP)

SUPPORT_TOL = 1e-12
_BLOCK = 32


@dataclass(frozen=True)
class IntensityModel:
    """Baseline ``lambda0``, jump scale ``beta`` and drift of the intensity SDE.

    ``drift`` is ``"mean_reverting"`` (drift ``delta * (lambda0 - lambda)``) or
    ``"zero"`` (intensity constant between events).
    """

    lambda0: float = 1.0
    beta: float = 0.0
    delta: float = 0.0
    drift: str = "mean_reverting"

    def __post_init__(self):
        if not (self.lambda0 > 0 and math.isfinite(self.lambda0)):
            raise ConfigError("lambda0", f"must be positive, got {self.lambda0}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ConfigError("beta", f"must be non-negative, got {self.beta}")
        if self.drift not in ("mean_reverting", "zero"):
            raise ConfigError("drift", f"unknown drift kind {self.drift!r}")
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise ConfigError("delta", f"must be non-negative, got {self.delta}")

    @classmethod
    def poisson(cls, rate: float) -> "IntensityModel":
        return cls(lambda0=rate, beta=0.0, delta=0.0, drift="zero")

    @property
    def decay(self) -> float:
        return self.delta if self.drift == "mean_reverting" else 0.0

    def flow(self, lam, dt):
        return intensity_flow(self, lam, dt)

    def flow_integral(self, lam, dt):
        """``int_0^dt`` of the inter-event flow started at ``lam``."""
        d = self.decay
        lam = np.asarray(lam, dtype=float)
        dt = np.asarray(dt, dtype=float)
        if d == 0.0:
            out = lam * dt
        else:
            out = self.lambda0 * dt - (lam - self.lambda0) * np.expm1(-d * dt) / d
        return out if out.ndim else float(out)

    def majorant(self, lam):
        """Upper bound of the flow on ``[t, inf)`` started at ``lam``."""
        if self.decay == 0.0:
            return lam
        return np.maximum(lam, self.lambda0)

    def to_dict(self):
        return {"lambda0": self.lambda0, "beta": self.beta, "delta": self.delta, "drift": self.drift}


def intensity_flow(model: IntensityModel, lambda_start, dt):
    """Intensity after ``dt`` time units with no event (``dU = 0``)."""
    d = model.decay
    lam = np.asarray(lambda_start, dtype=float)
    if d == 0.0:
        out = lam + 0.0 * np.asarray(dt, dtype=float)
    else:
        out = model.lambda0 + (lam - model.lambda0) * np.exp(-d * np.asarray(dt, dtype=float))
    return out if out.ndim else float(out)


def _as_affine(value, name):
    """Accept a number, an ``(a, b)`` pair meaning ``a + b*lambda``, or a callable."""
    if callable(value):
        return value, None
    if np.ndim(value) == 0:
        a, b = float(value), 0.0
    else:
        if len(value) != 2:
            raise ConfigError(name, "affine coefficient must be a number or a pair (a, b)")
        a, b = map(float, value)
    return (lambda lam: a + b * np.asarray(lam, dtype=float)), (a, b)


@dataclass(frozen=True)
class MarkKernel:
    """Jump-size law ``nu(lambda, .)`` together with the time at which marks are drawn.

    ``constant``: every mark equals ``c``.
    ``shifted_exponential``: ``Y = shift(lambda) + Exp(rate(lambda))``.

    In ``predictable`` mode ``Y_i`` is drawn right after event ``i-1`` (``Y_1`` at
    the start) from the post-jump intensity there, making the marker processes
    predictable.  In ``atjump`` mode ``Y_i`` is drawn at ``T_i`` from the
    pre-jump intensity.
    """

    kind: str
    c: float = 0.0
    rate_fn: Optional[Callable] = field(default=None, compare=False)
    shift_fn: Optional[Callable] = field(default=None, compare=False)
    mode: str = PREDICTABLE
    rate_spec: Optional[tuple] = None
    shift_spec: Optional[tuple] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {self.mode!r}")
        if self.kind == "constant":
            if not (self.c > 0 and math.isfinite(self.c)):
                raise ConfigError("c", f"constant mark must be positive, got {self.c}")
        elif self.kind == "shifted_exponential":
            if self.rate_fn is None or self.shift_fn is None:
                raise ConfigError("kernel", "shifted_exponential needs rate and shift")
        else:
            raise ConfigError("kind", f"unknown mark kernel {self.kind!r}")

    @classmethod
    def constant(cls, c: float, mode: str = PREDICTABLE) -> "MarkKernel":
        return cls(kind="constant", c=float(c), mode=mode)

    @classmethod
    def shifted_exponential(cls, rate, shift=0.0, mode: str = PREDICTABLE) -> "MarkKernel":
        rate_fn, rate_spec = _as_affine(rate, "rate")
        shift_fn, shift_spec = _as_affine(shift, "shift")
        return cls(kind="shifted_exponential", rate_fn=rate_fn, shift_fn=shift_fn,
                   mode=mode, rate_spec=rate_spec, shift_spec=shift_spec)

    def with_mode(self, mode: str) -> "MarkKernel":
        return MarkKernel(self.kind, self.c, self.rate_fn, self.shift_fn, mode,
                          self.rate_spec, self.shift_spec)

    @property
    def random(self) -> bool:
        return self.kind != "constant"

    def draw(self, lam: float, rng: Optional[np.random.Generator]) -> float:
        if self.kind == "constant":
            return self.c
        rate = float(self.rate_fn(lam))
        if not rate > 0:
            raise ConfigError("rate", f"rate({lam}) = {rate} is not positive")
        return float(self.shift_fn(lam)) + rng.standard_exponential() / rate

    def draw_many(self, lam, rng: np.random.Generator):
        """Vectorised draw; always consumes ``len(lam)`` variates for random kernels."""
        lam = np.asarray(lam, dtype=float)
        if self.kind == "constant":
            return np.full(lam.shape, self.c)
        rate = np.broadcast_to(self.rate_fn(lam), lam.shape)
        if not np.all(rate > 0):
            raise ConfigError("rate", "rate(lambda) must be positive")
        return np.broadcast_to(self.shift_fn(lam), lam.shape) + rng.standard_exponential(lam.shape) / rate

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "c": self.c, "mode": self.mode}
        if self.rate_spec is None or self.shift_spec is None:
            raise ConfigError("kernel", "callable kernels cannot be serialised")
        return {"kind": "shifted_exponential", "rate": list(self.rate_spec),
                "shift": list(self.shift_spec), "mode": self.mode}


@dataclass(frozen=True, eq=False)
class EventPath:
    """One realised path of ``(N, U, lambda)`` on ``[start, horizon]``.

    ``lambda_pre``/``lambda_post`` hold the intensity just before and after each
    event.  ``pending_mark`` is the mark the next event would carry: drawn in
    advance in predictable mode, drawn at the horizon from the pre-jump
    intensity in atjump mode (only used for the open last segment of the
    compensator).
    """

    model: IntensityModel
    horizon: float
    times: np.ndarray
    marks: np.ndarray
    lambda_pre: np.ndarray
    lambda_post: np.ndarray
    pending_mark: float
    mode: str = PREDICTABLE
    start: float = 0.0
    lambda_start: float = 1.0
    max_events_hit: bool = False
    path_id: int = -1

    @property
    def n_events(self) -> int:
        return len(self.times)

    def _check_t(self, t):
        if not (self.start <= t <= self.horizon):
            raise ValueError(f"t={t} outside [{self.start}, {self.horizon}]")

    def count(self, t: float) -> int:
        """``N_t`` relative to ``start``; right-continuous."""
        self._check_t(t)
        return bisect_right(self.times, t)

    def intensity(self, t: float) -> float:
        """``lambda_t`` (post-jump value at event times)."""
        i = self.count(t)
        if i == 0:
            return intensity_flow(self.model, self.lambda_start, t - self.start)
        return intensity_flow(self.model, self.lambda_post[i - 1], t - self.times[i - 1])

    def intensity_left(self, t: float) -> float:
        """``lambda_{t-}``."""
        self._check_t(t)
        i = int(np.searchsorted(self.times, t, side="left"))
        if i == 0:
            return intensity_flow(self.model, self.lambda_start, t - self.start)
        return intensity_flow(self.model, self.lambda_post[i - 1], t - self.times[i - 1])

    def segment_integrals(self):
        """``int lambda ds`` over ``(T_{i-1}, T_i]`` for each event plus the open last segment."""
        bounds = np.concatenate(([self.start], self.times, [self.horizon]))
        lam0 = np.concatenate(([self.lambda_start], self.lambda_post))
        return np.asarray(self.model.flow_integral(lam0, np.diff(bounds)), dtype=float)


def simulate_events(model: IntensityModel, kernel: MarkKernel, horizon: float,
                    streams: PathStreams, max_events: int = 10**6, *,
                    start: float = 0.0, lambda_start: Optional[float] = None,
                    pending_mark: Optional[float] = None) -> EventPath:
    """Exact thinning simulation of the self-exciting process on ``[start, horizon]``.

    Candidates come from a homogeneous process at the current majorant; a
    candidate at ``s`` is kept with probability ``lambda_{s-} / majorant``.  A
    rejected candidate still advances time and tightens the majorant.  When
    ``max_events`` is reached the path is truncated and flagged.
    """
    if not horizon > start:
        raise ConfigError("horizon", f"must exceed start={start}, got {horizon}")
    lam = model.lambda0 if lambda_start is None else float(lambda_start)
    lam_first = lam
    predictable = kernel.mode == PREDICTABLE
    mrng = streams.marks if kernel.random else None
    if predictable and pending_mark is None:
        pending_mark = kernel.draw(lam, mrng)
    erng = streams.events
    exps = erng.standard_exponential(_BLOCK)
    unis = erng.random(_BLOCK)
    j = 0
    t = start
    times, marks, pre, post = [], [], [], []
    hit = False
    beta, lambda0 = model.beta, model.lambda0
    while True:
        if j == _BLOCK:
            exps = erng.standard_exponential(_BLOCK)
            unis = erng.random(_BLOCK)
            j = 0
        bound = max(lam, lambda0) if model.decay > 0 else lam
        dt = exps[j] / bound
        u = unis[j]
        j += 1
        if t + dt > horizon:
            break
        t += dt
        lam = intensity_flow(model, lam, dt)
        if u * bound > lam:
            continue
        y = pending_mark if predictable else kernel.draw(lam, mrng)
        new = lam + beta * y
        if not math.isfinite(new):
            raise ExplosionError(f"intensity became {new} at t={t}", streams.path_id)
        if beta > 0 and new < lambda0 - SUPPORT_TOL:
            raise SupportViolation(
                f"mark {y} at t={t} drives intensity to {new} < lambda0={lambda0}", streams.path_id)
        times.append(t)
        marks.append(y)
        pre.append(lam)
        post.append(new)
        lam = new
        if predictable:
            pending_mark = kernel.draw(lam, mrng)
        if len(times) >= max_events:
            hit = True
            break
    if not predictable:
        pending_mark = kernel.draw(intensity_flow(model, lam, horizon - t), mrng)
    return EventPath(
        model=model, horizon=float(horizon), times=np.array(times), marks=np.array(marks),
        lambda_pre=np.array(pre), lambda_post=np.array(post), pending_mark=float(pending_mark),
        mode=kernel.mode, start=float(start), lambda_start=float(lam_first),
        max_events_hit=hit, path_id=streams.path_id)


@dataclass
class EventBatch:
    """Events of many independent continuations, padded to a common width."""

    times: np.ndarray   # (n, cap), +inf beyond count
    marks: np.ndarray   # (n, cap), 0 beyond count
    count: np.ndarray   # (n,)
    max_events_hit: np.ndarray


def simulate_events_batch(model: IntensityModel, kernel: MarkKernel, start: float, horizon: float,
                          lambda_start, pending_mark, rng: np.random.Generator,
                          max_events: int = 10**6) -> EventBatch:
    """Same thinning scheme as :func:`simulate_events`, vectorised over continuations.

    All rows share ``rng``; each round consumes one exponential and one uniform
    per row whether or not the row is still active, so row ``k`` is a fixed
    function of the generator state.
    """
    lam = np.array(lambda_start, dtype=float)
    n = lam.size
    predictable = kernel.mode == PREDICTABLE
    pending = np.array(np.broadcast_to(pending_mark, (n,)), dtype=float) if predictable else None
    t = np.full(n, float(start))
    alive = np.ones(n, bool)
    cap = 8
    times = np.full((n, cap), np.inf)
    marks = np.zeros((n, cap))
    count = np.zeros(n, dtype=np.int64)
    hit = np.zeros(n, bool)
    rows = np.arange(n)
    while alive.any():
        e = rng.standard_exponential(n)
        u = rng.random(n)
        bound = model.majorant(lam)
        tc = t + e / bound
        alive &= tc <= horizon
        if not alive.any():
            break
        idx = rows[alive]
        dt = tc[idx] - t[idx]
        t[idx] = tc[idx]
        lam[idx] = intensity_flow(model, lam[idx], dt)
        acc = idx[u[idx] * bound[idx] <= lam[idx]]
        if acc.size == 0:
            continue
        if predictable:
            y = pending[acc]
        else:
            y = kernel.draw_many(lam[acc], rng)
        new = lam[acc] + model.beta * y
        if not np.all(np.isfinite(new)):
            raise ExplosionError("intensity became non-finite in nested continuation")
        if model.beta > 0 and np.any(new < model.lambda0 - SUPPORT_TOL):
            raise SupportViolation("mark drives intensity below lambda0 in nested continuation")
        if count[acc].max() >= cap:
            grow = cap
            times = np.hstack([times, np.full((n, grow), np.inf)])
            marks = np.hstack([marks, np.zeros((n, grow))])
            cap += grow
        times[acc, count[acc]] = t[acc]
        marks[acc, count[acc]] = y
        count[acc] += 1
        lam[acc] = new
        if predictable:
            pending[acc] = kernel.draw_many(new, rng)
        full = acc[count[acc] >= max_events]
        hit[full] = True
        alive[full] = False
    width = int(count.max()) if n else 0
    return EventBatch(times[:, :width], marks[:, :width], count, hit)


def jump_process_value(path: EventPath, t: float) -> float:
    """``U_t``: sum of marks of events at or before ``t``."""
    i = path.count(t)
    return math.fsum(path.marks[:i])


def quadratic_variation_of_U(path: EventPath, t: float) -> float:
    """``[U]_t``: sum of squared marks of events at or before ``t``."""
    i = path.count(t)
    return math.fsum(path.marks[:i] ** 2)


EVENT_CSV_COLUMNS = ("path_id", "event_index", "time", "mark", "intensity_pre_jump", "intensity_post_jump")


def event_rows(path: EventPath, path_id: Optional[int] = None):
    pid = path.path_id if path_id is None else path_id
    for i in range(path.n_events):
        yield (pid, i + 1, float(path.times[i]), float(path.marks[i]),
               float(path.lambda_pre[i]), float(path.lambda_post[i]))
