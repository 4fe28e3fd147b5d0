"""Marker processes, compensated martingales and realised covariation.

With the marker ``Xbar_s = Y_i`` for ``s`` in ``(T_{i-1}, T_i]`` we have
``U_t = int Xbar dN`` and ``[U]_t = int Xbar^2 dN``; subtracting
``int Xbar lambda ds`` (resp. ``int Xbar^2 lambda ds``) leaves a martingale
when the marks are predictable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import ModeError
from .mc import MCEstimate
from .process import PREDICTABLE, EventPath, IntensityModel
from .report import TestReport

LINEAR = "linear"
SQUARED = "squared"


@dataclass(frozen=True, eq=False)
class MarkerProcess:
    kind: str
    path: EventPath

    def __post_init__(self):
        if self.kind not in (LINEAR, SQUARED):
            raise ValueError(f"marker kind must be {LINEAR!r} or {SQUARED!r}")

    def segment_marks(self) -> np.ndarray:
        """Marker value on each segment, the open last one carrying the pending mark."""
        m = np.append(self.path.marks, self.path.pending_mark)
        return m if self.kind == LINEAR else m ** 2

    def __call__(self, s):
        return marker_value(self, s)


def marker_value(marker: MarkerProcess, s):
    """Left-continuous marker: the mark of the segment ``(T_{i-1}, T_i]`` containing ``s``."""
    path = marker.path
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= path.start) or np.any(s_arr > path.horizon):
        raise ValueError(f"marker defined on ({path.start}, {path.horizon}], got {s}")
    idx = np.searchsorted(path.times, s_arr, side="left")
    out = marker.segment_marks()[idx]
    return float(out) if out.ndim == 0 else out


class CompensatedPair:
    """``raw`` (``U`` or ``[U]``), its compensator ``int marker * lambda ds`` and their difference.

    The compensator includes the open segment after the last event, integrated
    in closed form from the intensity flow.  ``scale`` multiplies the
    compensator (used to build deliberately wrong compensators).
    """

    def __init__(self, path: EventPath, kind: str = LINEAR, scale: float = 1.0):
        self.path = path
        self.kind = kind
        self.marker = MarkerProcess(kind, path)
        self.scale = float(scale)
        seg = path.segment_integrals()
        marks = self.marker.segment_marks()
        self._closed = np.concatenate(([0.0], np.cumsum(marks[:-1] * seg[:-1])))
        self._jumps = np.concatenate(([0.0], np.cumsum(marks[:-1])))
        self._marks = marks

    def raw(self, t):
        return self._jumps[self._counts(t)]

    def _counts(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.path.start) or np.any(t > self.path.horizon):
            raise ValueError(f"t outside [{self.path.start}, {self.path.horizon}]")
        return np.searchsorted(self.path.times, t, side="right")

    def compensator(self, t):
        p = self.path
        i = self._counts(t)
        last_time = np.concatenate(([p.start], p.times))[i]
        last_lam = np.concatenate(([p.lambda_start], p.lambda_post))[i]
        partial = p.model.flow_integral(last_lam, np.asarray(t, dtype=float) - last_time)
        return self.scale * (self._closed[i] + self._marks[i] * partial)

    def martingale(self, t):
        return self.raw(t) - self.compensator(t)


def build_compensated(path: EventPath, model: Optional[IntensityModel] = None, kind: str = LINEAR,
                      *, allow_atjump: bool = False, scale: float = 1.0) -> CompensatedPair:
    """Compensated ``U`` (``kind='linear'``) or ``[U]`` (``kind='squared'``) for one path."""
    if model is not None and model != path.model:
        raise ValueError("model does not match the one the path was simulated with")
    if path.mode != PREDICTABLE and not allow_atjump:
        raise ModeError("martingale property requires predictable marks; pass allow_atjump=True")
    return CompensatedPair(path, kind, scale)


DEFAULT_WITNESSES = {
    "one": lambda p, s: 1.0,
    "N": lambda p, s: float(p.count(s)),
    "lambda": lambda p, s: float(p.intensity(s)),
    "U": lambda p, s: float(p.marks[:p.count(s)].sum()),
}


def default_checkpoints(path_or_horizon, n: int = 4) -> list:
    T = getattr(path_or_horizon, "horizon", path_or_horizon)
    return [T * j / n for j in range(n + 1)]


def martingale_test(ensemble: Iterable[CompensatedPair], checkpoints: Sequence[float],
                    witnesses: Optional[dict] = None, threshold: float = 3.0,
                    min_paths: int = 10_000, name: str = "martingale_test") -> TestReport:
    """Orthogonality of martingale increments to adapted witnesses.

    For consecutive checkpoints ``s < t`` and each witness ``g`` (evaluated on
    the path up to ``s``), estimates ``E[(M_t - M_s) g_s]`` and flags
    ``|z| > threshold``.
    """
    witnesses = DEFAULT_WITNESSES if witnesses is None else witnesses
    cps = np.asarray(sorted(checkpoints), dtype=float)
    if cps.size < 2:
        raise ValueError("need at least two checkpoints")
    names = list(witnesses)
    M_rows, G_rows = [], []
    for pair in ensemble:
        M_rows.append(pair.martingale(cps))
        G_rows.append([[witnesses[w](pair.path, s) for w in names] for s in cps[:-1]])
    n = len(M_rows)
    if n < min_paths:
        raise ValueError(f"martingale_test needs at least {min_paths} paths, got {n}")
    M = np.asarray(M_rows)
    G = np.asarray(G_rows)
    report = TestReport(name, meta={
        "n_paths": n, "threshold": threshold, "checkpoints": cps.tolist(), "witnesses": names,
        "bonferroni_note": (f"{(cps.size - 1) * len(names)} correlated tests at |z|<={threshold}; "
                            "family-wise false alarm rate is above the per-test rate"),
    })
    for j in range(cps.size - 1):
        inc = M[:, j + 1] - M[:, j]
        for w_i, w in enumerate(names):
            est = MCEstimate.from_samples(inc * G[:, j, w_i])
            z = est.z()
            report.add(test_id=f"{name}:{cps[j]!r}->{cps[j + 1]!r}:{w}", s=float(cps[j]),
                       t=float(cps[j + 1]), witness=w, estimate=est.mean, stderr=est.stderr,
                       z=z, **{"pass": bool(abs(z) <= threshold)})
    return report


@dataclass(frozen=True)
class SampledPath:
    knots: np.ndarray
    values: np.ndarray


def _values(p, other):
    if isinstance(p, SampledPath):
        if isinstance(other, SampledPath) and not np.array_equal(p.knots, other.knots):
            raise ValueError("paths are sampled on different grids")
        return np.asarray(p.values, dtype=float)
    return np.asarray(p, dtype=float)


def realized_covariation(a, b) -> float:
    """``sum_k (a_{k+1} - a_k)(b_{k+1} - b_k)`` over a common grid."""
    va, vb = _values(a, b), _values(b, a)
    if va.shape != vb.shape:
        raise ValueError(f"grid mismatch: {va.shape} vs {vb.shape}")
    return math.fsum(np.diff(va) * np.diff(vb))


def sample_U(path: EventPath, knots) -> SampledPath:
    knots = np.asarray(knots, dtype=float)
    cum = np.concatenate(([0.0], np.cumsum(path.marks)))
    return SampledPath(knots, cum[np.searchsorted(path.times, knots, side="right")])


def synthetic_covariation(path: EventPath, grid_knots, dB, q: Callable, s: Callable,
                          w: Callable, g: Callable):
    """Paths ``da = q dB + w dU`` and ``db = s dB + g dU`` on ``grid_knots``.

    Returns ``(a, b, target)`` where ``target = int q s dt + sum w g Y^2``
    (adaptive quadrature for the time integral).  Jump coefficients are
    evaluated at the event times, i.e. as left limits of continuous functions.
    """
    knots = np.asarray(grid_knots, dtype=float)
    left = knots[:-1]
    at = np.searchsorted(knots, path.times)
    if not np.array_equal(knots[at], path.times):
        raise ValueError("grid does not contain all event times")
    ja = np.zeros(knots.size)
    jb = np.zeros(knots.size)
    ja[at] = w(path.times) * path.marks
    jb[at] = g(path.times) * path.marks
    a = np.concatenate(([0.0], np.cumsum(q(left) * dB + ja[1:])))
    bb = np.concatenate(([0.0], np.cumsum(s(left) * dB + jb[1:])))
    cont, _ = quad(lambda u: float(q(u) * s(u)), knots[0], knots[-1], limit=200)
    target = cont + math.fsum(w(path.times) * g(path.times) * path.marks ** 2)
    return SampledPath(knots, a), SampledPath(knots, bb), target


def poisson_check(counts, rate: float, horizon: float, threshold: float = 3.0) -> TestReport:
    """Sample mean and variance of ``N_T`` against ``rate * horizon``.

    The variance estimate is the mean of ``n/(n-1) (N - mean)^2`` and its
    standard error is that of the same samples.
    """
    N = np.asarray(counts, dtype=float)
    n = N.size
    if n < 2:
        raise ValueError("need at least two paths")
    target = rate * horizon
    mean = MCEstimate.from_samples(N)
    var = MCEstimate.from_samples((N - mean.mean) ** 2 * (n / (n - 1)))
    report = TestReport("poisson_check", meta={"n_paths": n, "rate": rate, "horizon": horizon,
                                               "threshold": threshold})
    for stat, est in (("mean", mean), ("variance", var)):
        z = est.z(target)
        report.add(test_id=f"N_T_{stat}", statistic=stat, target=target, estimate=est.mean,
                   stderr=est.stderr, z=z, **{"pass": bool(abs(z) <= threshold)})
    return report


def default_synthetic_coefficients(horizon: float):
    """Smooth deterministic ``(q, s, w, g)`` used by the covariation experiment."""
    T = float(horizon)
    q = lambda t: 1.0 + np.asarray(t, dtype=float) / T
    s = lambda t: 2.0 - np.asarray(t, dtype=float) / T
    w = lambda t: 1.0 + 0.0 * np.asarray(t, dtype=float)
    g = lambda t: 0.5 + 0.5 * np.asarray(t, dtype=float) / T
    return q, s, w, g


def _refinement_data(path: EventPath, finest: int, levels, rng):
    """Nested grids sharing one Brownian path; level grids are subsets of the finest one."""
    from .engine import TimeGrid, base_grid, brownian_increments
    fine = TimeGrid.build(path.horizon, finest, path.times, start=path.start)
    B = np.concatenate(([0.0], np.cumsum(brownian_increments(fine, rng))))
    out = []
    for steps in levels:
        keep = np.isin(fine.knots, base_grid(path.start, path.horizon, steps)) | fine.is_event
        out.append((fine.knots[keep], np.diff(B[keep])))
    return out


def covariation_experiment(model: IntensityModel, kernel, horizon: float, paths: int,
                           master_seed: int = 0, levels=(64, 128, 256, 512),
                           coefficients=None, max_slope: float = -0.4,
                           qv_tol: float = 1e-12) -> TestReport:
    """Realised covariation of synthetic semimartingales under grid refinement.

    For each path and each number of base steps in ``levels`` (nested grids
    that always contain the event times, one shared Brownian path) the error
    ``|[a, b]_T - (int q s dt + sum w g Y^2)|`` is recorded; the RMS error over
    paths is regressed on ``log(steps)`` and must have slope ``<= max_slope``.
    Also checks pathwise that the realised variation of ``U`` equals
    ``sum Y_i^2`` to relative ``qv_tol``.
    """
    from .process import quadratic_variation_of_U, simulate_events
    from .rng import PathStreams
    levels = sorted(int(v) for v in levels)
    if len(levels) < 2:
        raise ValueError("need at least two refinement levels")
    q, s, w, g = coefficients or default_synthetic_coefficients(horizon)
    errs = np.empty((paths, len(levels)))
    qv_rel = np.empty(paths)
    for pid in range(paths):
        streams = PathStreams(master_seed, pid)
        path = simulate_events(model, kernel, horizon, streams)
        data = _refinement_data(path, levels[-1], levels, streams.brownian)
        for j, (knots, dB) in enumerate(data):
            a, b, target = synthetic_covariation(path, knots, dB, q, s, w, g)
            errs[pid, j] = abs(realized_covariation(a, b) - target)
        knots = data[-1][0]
        U = sample_U(path, knots)
        qv = quadratic_variation_of_U(path, horizon)
        rc = realized_covariation(U, U)
        qv_rel[pid] = 0.0 if qv == rc else abs(rc - qv) / max(abs(qv), 1e-300)
    rms = np.sqrt(np.mean(errs ** 2, axis=0))
    slope = float(np.polyfit(np.log(levels), np.log(rms), 1)[0])
    report = TestReport("covariation_experiment", meta={
        "n_paths": paths, "levels": levels, "rms_error": rms.tolist(), "max_slope": max_slope})
    report.add(test_id="covariation_error_slope", estimate=slope, target=max_slope,
               **{"pass": bool(slope <= max_slope)})
    worst = float(qv_rel.max()) if paths else 0.0
    report.add(test_id="quadratic_variation_of_U", estimate=worst, target=qv_tol,
               **{"pass": bool(worst <= qv_tol)})
    return report
