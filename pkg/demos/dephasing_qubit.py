"""Dephasing qubit driven by coloured noise, against the exact coherence law.

The model commutes with itself at all times, so the off-diagonal of the
mean state has a closed form; the Monte Carlo mean must land on it
within statistical and step error.  At gamma = 0 the decay is the
white-noise exponential exp(-2t).

Run: python3 demos/dephasing_qubit.py
"""

import numpy as np

from ousse import (SeedPolicy, TimeGrid, dephasing_coherence,
                   make_random_hamiltonian, run_ensemble, sigma_z)

N_TRAJ = 5000
DT = 1e-3
T = 1.0
SEED = 7

plus = np.array([1.0, 1.0]) / np.sqrt(2)
grid = TimeGrid(DT, int(round(T / DT)))
nodes = [0, 250, 500, 750, 1000]

for gamma in (1.0, 0.0):
    m = make_random_hamiltonian(np.zeros((2, 2)), sigma_z, gamma)
    est = run_ensemble(m, grid, N_TRAJ, SeedPolicy(SEED), "linear", plus,
                       output_nodes=nodes)
    print(f"gamma = {gamma}, {N_TRAJ} trajectories, dt = {DT}")
    print(f"  {'t':>5}  {'Re eta01':>9}  {'exact':>9}  {'diff':>8}  {'3 se':>8}")
    for j, t in enumerate(est.times):
        exact = 0.5 * dephasing_coherence(float(t), gamma)
        got = est.eta[j][0, 1].real
        se = est.eta_stderr[j][0, 1]
        print(f"  {t:5.2f}  {got:9.4f}  {exact:9.4f}  {abs(got - exact):8.4f}"
              f"  {3 * se:8.4f}")
    print()

print("memory slows the decay: the coloured-noise coherence at t = 1 is")
print(f"  {dephasing_coherence(1.0, 1.0):.4f} (gamma = 1)  vs"
      f"  {dephasing_coherence(1.0, 0.0):.4f} (white noise)")
