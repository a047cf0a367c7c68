"""Pathwise norm conservation of the random-Hamiltonian model under refinement.

With B = -iK the generated evolution is unitary along every noise
path, so any norm drift is pure integrator error.  Refining the step
4x on the same Brownian paths should cut the worst drift roughly in
half (strong order 1/2).

Run: python3 demos/unitarity_refinement.py
"""

import numpy as np

from ousse import (SeedPolicy, TimeGrid, make_random_hamiltonian, propagate,
                   sample_wiener, sigma_x, sigma_z)

N_PATHS = 20
BASE_DT = 4e-3
T = 1.0
LEVELS = (0, 2, 4)   # dt = 4e-3, 1e-3, 2.5e-4
SEED = 11

m = make_random_hamiltonian(sigma_z, sigma_x, 1.0)
base = TimeGrid(BASE_DT, int(round(T / BASE_DT)))
psi0 = np.array([1.0, 0.0], dtype=complex)

print(f"per-path worst |norm^2 - 1|, averaged over {N_PATHS} shared Brownian paths")
print(f"  {'dt':>8}  {'mean drift':>10}  ratio")
prev = None
for level in LEVELS:
    grid = base.refined(level)
    drifts = []
    for i in range(N_PATHS):
        dw = sample_wiener(base, SeedPolicy(SEED).stream(i), level)
        traj = propagate("linear", psi0, dw, m, grid)
        drifts.append(float(np.max(np.abs(traj.weights - 1.0))))
    mean_drift = float(np.mean(drifts))
    note = f"{prev / mean_drift:5.2f}" if prev is not None else "    -"
    print(f"  {grid.dt:8.1e}  {mean_drift:10.2e}  {note}")
    prev = mean_drift

print()
print("each 4x refinement should show a ratio near 2 (order 1/2 in dt)")
