"""
Stable VAR systems and their subsampled twins
=============================================

The synthetic task: tell a VAR(1) series from the same kind of series with a
fifth of its time points removed. This script builds both and looks at what
separates them.
"""

import numpy as np

from milc.synth import gen_stable_transition, simulate_svar, simulate_var, spectral_radius
from milc.windows import WindowSpec, extract_windows

rng = np.random.default_rng(0)

# a sparse 10x10 transition matrix, rescaled so its spectral radius is 0.9
a = gen_stable_transition(10, density=0.3, target_radius=0.9, rng=rng)
print("nonzeros:", np.count_nonzero(a), " spectral radius:", round(spectral_radius(a), 12))

# one regular series and one with 20% of its time points dropped
var = simulate_var(a, 200, rng=rng)
svar = simulate_svar(a, 200, drop_frac=0.2, rng=rng)
print("shapes:", var.shape, svar.shape)

# the one-step least-squares fit explains the VAR well; dropped steps leave
# heavy-tailed residuals in the SVAR series
for name, x in (("VAR", var), ("SVAR", svar)):
    coef, *_ = np.linalg.lstsq(x[:, :-1].T, x[:, 1:].T, rcond=None)
    resid = x[:, 1:].T - x[:, :-1].T @ coef
    kurt = np.mean(resid**4) / np.mean(resid**2) ** 2
    print(f"{name:4s} residual kurtosis {kurt:.2f}")

# both are cut into 19 half-overlapping windows of 20 steps
window = WindowSpec(win_len=20, overlap=0.5)
ws = extract_windows(svar, window)
print("windows:", ws.windows.shape, "starts:", ws.t_index[:4], "...")
