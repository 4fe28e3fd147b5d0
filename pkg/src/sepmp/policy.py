"""Control policies: deterministic in time, state feedback, or a perturbed base policy."""
from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .errors import AdmissibilityError


def time_function(value) -> Callable:
    """Wrap a constant or a callable of ``t`` into a function returning arrays shaped like ``t``."""
    if callable(value):
        def fn(t):
            t = np.asarray(t, dtype=float)
            return np.broadcast_to(np.asarray(value(t), dtype=float), t.shape)
        fn.__wrapped__ = value
        return fn
    c = float(value)

    def const(t):
        return np.full(np.shape(t), c)
    const.constant = c
    return const


def indicator(s: float, scale: float = 1.0) -> Callable:
    """Direction ``1_{[s, T]}(t) * scale``."""
    def fn(t):
        return np.where(np.asarray(t, dtype=float) >= s, scale, 0.0)
    return fn


class ControlPolicy:
    """A rule ``(t, x) -> pi`` with an admissible interval.

    Values outside ``bounds`` raise :class:`AdmissibilityError` rather than being
    clipped.  A perturbed policy evaluates ``base + y * direction(t)`` and is
    deterministic whenever its base is.
    """

    def __init__(self, fn: Callable, kind: str = "deterministic", bounds=(-math.inf, math.inf),
                 name: str = "", base: Optional["ControlPolicy"] = None,
                 direction: Optional[Callable] = None, y: float = 0.0):
        if kind not in ("deterministic", "feedback", "perturbed"):
            raise ValueError(f"unknown policy kind {kind!r}")
        lo, hi = bounds
        if not lo <= hi:
            raise ValueError(f"empty admissible interval {bounds}")
        self.fn = fn
        self.kind = kind
        self.bounds = (float(lo), float(hi))
        self.name = name
        self.base = base
        self.direction = direction
        self.y = float(y)

    @classmethod
    def deterministic(cls, fn, bounds=(-math.inf, math.inf), name="") -> "ControlPolicy":
        return cls(time_function(fn), "deterministic", bounds, name)

    @classmethod
    def feedback(cls, fn, bounds=(-math.inf, math.inf), name="") -> "ControlPolicy":
        return cls(fn, "feedback", bounds, name)

    def perturbed(self, direction: Callable, y: float, name: str = "") -> "ControlPolicy":
        return ControlPolicy(None, "perturbed", self.bounds, name or self.name, base=self,
                             direction=time_function(direction), y=y)

    def scaled(self, factor: float, name: str = "") -> "ControlPolicy":
        base = self
        if self.is_deterministic:
            return ControlPolicy.deterministic(lambda t: factor * base(t), self.bounds, name)
        return ControlPolicy.feedback(lambda t, x: factor * base(t, x), self.bounds, name)

    @property
    def is_deterministic(self) -> bool:
        if self.kind == "perturbed":
            return self.base.is_deterministic
        return self.kind == "deterministic"

    def raw(self, t, x=None):
        if self.kind == "deterministic":
            return self.fn(t)
        if self.kind == "feedback":
            t = np.asarray(t, dtype=float)
            return np.broadcast_to(np.asarray(self.fn(t, x), dtype=float), np.broadcast(t, x).shape)
        return self.base.raw(t, x) + self.y * self.direction(t)

    def __call__(self, t, x=None):
        v = self.raw(t, x)
        lo, hi = self.bounds
        if np.any(v < lo) or np.any(v > hi) or not np.all(np.isfinite(v)):
            bad = np.asarray(v)[(np.asarray(v) < lo) | (np.asarray(v) > hi) | ~np.isfinite(v)]
            raise AdmissibilityError(
                f"policy {self.name or self.kind!r} value {bad.flat[0]} outside [{lo}, {hi}]")
        return v

    def __repr__(self):
        return f"ControlPolicy({self.kind}, name={self.name!r}, bounds={self.bounds})"
