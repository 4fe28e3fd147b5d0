"""Simulating a self-exciting jump process.

The intensity mean-reverts to ``lambda0`` at rate ``delta`` and jumps by
``beta * Y`` at every event.  We look at one path, then compare event counts
with and without self-excitation on the same random substreams.
"""
import numpy as np

from sepmp.martingale import poisson_check
from sepmp.process import IntensityModel, MarkKernel, jump_process_value, simulate_events
from sepmp.rng import PathStreams

model = IntensityModel(lambda0=1.0, beta=1.0, delta=0.5)
kernel = MarkKernel.shifted_exponential(rate=2.0, shift=0.1)

path = simulate_events(model, kernel, horizon=5.0, streams=PathStreams(master_seed=0, path_id=0))
print(f"one path: {path.n_events} events on [0, 5]")
for t, y, lo, hi in zip(path.times[:5], path.marks, path.lambda_pre, path.lambda_post):
    print(f"  t={t:6.3f}  mark={y:5.3f}  intensity {lo:5.3f} -> {hi:5.3f}")
print(f"U_5 = {jump_process_value(path, 5.0):.4f}")

# With beta = 0 and zero drift the counting process is Poisson.
poisson = IntensityModel.poisson(1.0)
counts = [simulate_events(poisson, kernel, 2.0, PathStreams(1, i)).n_events for i in range(20_000)]
print()
print(poisson_check(counts, rate=1.0, horizon=2.0).to_text())

# Self-excitation raises the expected count.
n = 5_000
hot = np.array([simulate_events(model, kernel, 5.0, PathStreams(2, i)).n_events for i in range(n)])
cold = np.array([simulate_events(IntensityModel(1.0, 0.0, 0.5), kernel, 5.0, PathStreams(2, i)).n_events
                 for i in range(n)])
print(f"mean N_5: beta=1 -> {hot.mean():.3f}, beta=0 -> {cold.mean():.3f}")
