"""Sample the coloured noise and compare its covariance with the closed form.

Run: python3 demos/ou_noise.py
"""

import numpy as np

from ousse import SeedPolicy, TimeGrid, ou_covariance, ou_path, sample_wiener

GAMMAS = [0.0, 0.5, 2.0]
N_PATHS = 20000
DT = 1e-3
T = 1.0

grid = TimeGrid(DT, int(round(T / DT)))
seeds = SeedPolicy(42)

print(f"{N_PATHS} OU paths per rate, dt = {DT}, horizon = {T}")
print()
for gamma in GAMMAS:
    finals = np.empty(N_PATHS)
    mids = np.empty(N_PATHS)
    for i in range(N_PATHS):
        x = ou_path(sample_wiener(grid, seeds.stream(i)), gamma, grid)
        mids[i] = x[grid.n_steps // 2]
        finals[i] = x[-1]

    var_emp = finals.var()
    var_ana = ou_covariance(T, T, gamma)
    cross_emp = (finals * mids).mean()
    cross_ana = ou_covariance(T, T / 2, gamma)
    se = (finals * mids).std(ddof=1) / np.sqrt(N_PATHS)

    print(f"gamma = {gamma}")
    print(f"  Var X(1):        empirical {var_emp:.4f}   analytic {var_ana:.4f}")
    print(f"  Cov(X(1),X(.5)): empirical {cross_emp:.4f}   analytic {cross_ana:.4f}"
          f"   ({abs(cross_emp - cross_ana) / se:.1f} standard errors off)")
    if gamma == 0.0:
        print("  (gamma = 0 is plain Brownian motion: Cov = min(t, s))")
    print()

print("correlation decays exponentially in |t - s| at rate gamma:")
s = 0.5
for gamma in (0.5, 2.0):
    row = [ou_covariance(t, s, gamma) / ou_covariance(s, s, gamma)
           for t in (0.5, 0.75, 1.0)]
    print(f"  gamma = {gamma}: corr(X_t, X_0.5) at t = 0.5, 0.75, 1.0 -> "
          + ", ".join(f"{r:.3f}" for r in row))
