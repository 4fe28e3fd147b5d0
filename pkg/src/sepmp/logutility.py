"""Log-utility control of a linear self-exciting wealth equation.

State ``dX = X_{t-}((alpha_t - pi_t) dt + vol_t dB + kappa_{t-} dU)`` and
performance ``E[int_0^T ln(X_t pi_t) dt + theta ln X_T]``.  With a constant
terminal weight the adjoint is ``p_t = (theta + T - t) / X_t`` and the optimal
control ``1 / (theta + T - t)`` does not depend on the path.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .control import (
    MCConfig, PathPrefix, RunningReward, directional_derivatives, hamiltonian_dpi,
    linear_bsde_solve, performance_samples,
)
from .engine import StateCoefficients, draw_noise, simulate_state
from .errors import ConfigError
from .mc import MCEstimate, map_paths
from .policy import ControlPolicy, indicator, time_function
from .process import IntensityModel, MarkKernel
from .rng import PathStreams
from .report import TestReport

ROUNDING_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class LogUtilityConfig:
    """Coefficients (constants or functions of ``t``), terminal weight and admissible range."""

    alpha: object = 0.1
    vol: object = 0.3
    kappa: object = 0.2
    theta: float = 1.0
    x0: float = 1.0
    horizon: float = 1.0
    pi_min: float = 1e-3
    pi_max: float = 1e3

    def __post_init__(self):
        if not self.theta > 0:
            raise ConfigError("theta", f"must be a positive constant, got {self.theta}")
        if not self.x0 > 0:
            raise ConfigError("x0", f"must be positive, got {self.x0}")
        if not self.horizon > 0:
            raise ConfigError("horizon", f"must be positive, got {self.horizon}")
        if not 0 < self.pi_min < self.pi_max:
            raise ConfigError("pi_min", f"need 0 < pi_min < pi_max, got [{self.pi_min}, {self.pi_max}]")
        lo, hi = 1.0 / (self.theta + self.horizon), 1.0 / self.theta
        if lo < self.pi_min or hi > self.pi_max:
            raise ConfigError("pi_max", f"optimal control range [{lo}, {hi}] leaves "
                                        f"[{self.pi_min}, {self.pi_max}]")
        kap = time_function(self.kappa)(np.linspace(0, self.horizon, 65))
        if np.any(kap < 0):
            raise ConfigError("kappa", "must be non-negative so that wealth stays positive")

    @property
    def bounds(self):
        return (self.pi_min, self.pi_max)

    def coefficients(self) -> StateCoefficients:
        return StateCoefficients.loglinear(self.alpha, self.vol, self.kappa)

    def reward(self) -> RunningReward:
        return RunningReward.log_utility(self.theta)

    def optimal_policy(self) -> ControlPolicy:
        theta, T = self.theta, self.horizon
        return ControlPolicy.deterministic(lambda t: 1.0 / (theta + T - t), self.bounds, "optimal")

    def mc(self, paths: int, master_seed: int = 0, base_steps: int = 256, **kw) -> MCConfig:
        return MCConfig(paths=paths, master_seed=master_seed, horizon=self.horizon,
                        base_steps=base_steps, **kw)

    def to_dict(self):
        out = {}
        for name in ("alpha", "vol", "kappa"):
            v = getattr(self, name)
            if callable(v):
                raise ConfigError(name, "time-dependent coefficients cannot be serialised")
            out[name] = float(v)
        out.update(theta=self.theta, x0=self.x0, horizon=self.horizon,
                   pi_min=self.pi_min, pi_max=self.pi_max)
        return out


def optimal_control(config: LogUtilityConfig, t):
    """``1 / (theta + T - t)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > config.horizon):
        raise ValueError(f"t must lie in [0, {config.horizon}]")
    out = 1.0 / (config.theta + config.horizon - t)
    return float(out) if out.ndim == 0 else out


def adjoint_closed_form(config: LogUtilityConfig, t, x_t):
    """``(theta + T - t) / X_t``."""
    x_t = np.asarray(x_t, dtype=float)
    if np.any(x_t <= 0):
        raise ValueError("wealth must be positive")
    out = (config.theta + config.horizon - np.asarray(t, dtype=float)) / x_t
    return float(out) if out.ndim == 0 else out


def first_order_condition_check(config: LogUtilityConfig, model: IntensityModel, kernel: MarkKernel,
                                mc: MCConfig, checkpoints: Optional[Sequence[float]] = None,
                                threshold: float = 3.0) -> TestReport:
    """Check ``1/pi_hat - p X = 0`` exactly and the nested-MC adjoint against its closed form.

    For every outer path simulated under the optimal control and every
    checkpoint ``t``, the linear BSDE with ``Gamma = X``, ``phi = 1/X`` and
    ``F = theta / X_T`` is solved by ``mc.inner_paths`` continuations; the outer
    average of ``p_hat X_t`` is compared with ``theta + T - t``.  Each inner
    sample equals ``theta + T - t`` up to rounding, so the comparison allows a
    relative rounding floor of ``1e-12`` on top of ``threshold`` standard errors.
    """
    T, theta = config.horizon, config.theta
    if checkpoints is None:
        checkpoints = [0.0, T / 4, T / 2, 3 * T / 4]
    checkpoints = [float(c) for c in checkpoints]
    coeffs = config.coefficients()
    reward = config.reward()
    pol = config.optimal_policy()
    pi_fn = pol.fn
    alpha = time_function(config.alpha)
    gamma_coeffs = (lambda t: alpha(t) - pi_fn(t), config.vol, config.kappa)
    phi = lambda t, x: 1.0 / x
    terminal = lambda x: theta / x

    def work(ids):
        rows = []
        for pid in ids:
            noise = draw_noise(model, kernel, T, mc.base_steps, mc.master_seed, pid, mc.max_events)
            state = simulate_state(coeffs, pol, noise.events, noise.grid, x0=config.x0, brownian=noise.dB)
            streams = PathStreams(mc.master_seed, pid)
            row = []
            for j, t in enumerate(checkpoints):
                pre = PathPrefix.at(state, t)
                p_hat = linear_bsde_solve(phi, terminal, gamma_coeffs, pre, model, kernel, mc,
                                          streams.inner(j), state=(coeffs, pol))
                p_cf = adjoint_closed_form(config, t, pre.x)
                pi_t = optimal_control(config, t)
                resid = float(hamiltonian_dpi(t, pre.x, pi_t, p_cf, 0.0, 0.0, 0.0, 0.0, coeffs, reward))
                row.append((p_hat.mean * pre.x, resid))
            rows.append(row)
        return rows

    rows = [r for chunk in map_paths(work, mc.paths, mc.workers, chunk=100) for r in chunk]
    arr = np.asarray(rows)
    report = TestReport("first_order_condition_check", meta={
        "n_outer": mc.paths, "n_inner": mc.inner_paths, "theta": theta, "horizon": T,
        "threshold": threshold, "rounding_floor": ROUNDING_FLOOR})
    for j, t in enumerate(checkpoints):
        resid = float(np.max(np.abs(arr[:, j, 1])))
        report.add(test_id=f"foc_algebraic:t={t!r}", t=t, estimate=resid, stderr=0.0, z=0.0,
                   **{"pass": resid <= 1e-12})
        est = MCEstimate.from_samples(arr[:, j, 0])
        target = theta + T - t
        tol = threshold * est.stderr + ROUNDING_FLOOR * abs(target)
        gap = est.mean - target
        report.add(test_id=f"adjoint_nested_mc:t={t!r}", t=t, target=target, estimate=est.mean,
                   stderr=est.stderr, z=est.z(target), gap=gap, **{"pass": abs(gap) <= tol})
    return report


def default_rivals(config: LogUtilityConfig):
    opt = config.optimal_policy()
    rivals = [opt.scaled(f, f"optimal*{f!r}") for f in (0.5, 0.8, 1.25, 2.0)]
    c0 = optimal_control(config, 0.0)
    rivals.append(ControlPolicy.deterministic(c0, config.bounds, "constant_pi0"))
    return rivals


def dominance_experiment(config: LogUtilityConfig, model: IntensityModel, kernel: MarkKernel,
                         mc: MCConfig, rivals: Optional[Sequence[ControlPolicy]] = None,
                         threshold: float = 3.0) -> TestReport:
    """Paired estimates of ``J(pi_hat) - J(rival)`` on common random numbers.

    A record fails when the rival beats the optimal control by more than
    ``threshold`` standard errors.  Records are ranked by estimated ``J``.
    """
    rivals = default_rivals(config) if rivals is None else list(rivals)
    opt = config.optimal_policy()
    J = performance_samples([opt, *rivals], model, kernel, config.coefficients(), config.reward(),
                            mc, config.x0)
    base = MCEstimate.from_samples(J[:, 0])
    rows = [("optimal", base, MCEstimate(0.0, 0.0, mc.paths))]
    for j, pol in enumerate(rivals, start=1):
        rows.append((pol.name or f"rival{j}", MCEstimate.from_samples(J[:, j]),
                     MCEstimate.from_samples(J[:, 0] - J[:, j])))
    rows.sort(key=lambda r: -r[1].mean)
    report = TestReport("dominance_experiment", meta={"n_paths": mc.paths, "threshold": threshold,
                                                      "master_seed": mc.master_seed})
    for rank, (name, est, diff) in enumerate(rows, start=1):
        z = diff.z()
        report.add(policy_id=name, rank=rank, J_estimate=est.mean, stderr=est.stderr,
                   diff_vs_optimal=diff.mean, diff_stderr=diff.stderr, z=z,
                   **{"pass": bool(z >= -threshold)})
    return report


def gradient_check(config: LogUtilityConfig, model: IntensityModel, kernel: MarkKernel, mc: MCConfig,
                   starts: Optional[Sequence[float]] = None, y_step: float = 1e-3,
                   policy: Optional[ControlPolicy] = None, threshold: float = 3.0) -> TestReport:
    """Directional derivatives of ``J`` along ``1_{[s, T]}`` at ``policy`` (default optimal)."""
    T = config.horizon
    starts = [0.0, T / 4, T / 2] if starts is None else list(starts)
    policy = config.optimal_policy() if policy is None else policy
    ests = directional_derivatives(policy, [indicator(s) for s in starts], model, kernel,
                                   config.coefficients(), config.reward(), mc, y_step, config.x0)
    report = TestReport("gradient_check", meta={"policy": policy.name, "y_step": y_step,
                                                "n_paths": mc.paths, "threshold": threshold})
    for s, est in zip(starts, ests):
        z = est.z()
        report.add(test_id=f"directional_derivative:s={s!r}", s=s, estimate=est.mean,
                   stderr=est.stderr, z=z, **{"pass": bool(abs(z) <= threshold)})
    return report


def hamiltonian_concavity(config: LogUtilityConfig, t: float, x: float, p: float,
                          pis=None) -> np.ndarray:
    """Second differences of ``pi -> H`` on a grid; non-positive for ``p > 0``."""
    from .control import hamiltonian
    pis = np.linspace(config.pi_min, min(config.pi_max, 10.0), 201) if pis is None else np.asarray(pis)
    H = hamiltonian(t, x, pis, p, 0.0, 0.0, 1.0, 1.0, config.coefficients(), config.reward())
    return H[2:] - 2 * H[1:-1] + H[:-2]
