"""
Sampling the Gamma random measure
=================================

The Gamma measure with shape ``theta`` puts total mass ``Gamma(theta m(D), 1)``
on a window ``D``.  It has infinitely many small atoms, so we draw the
compound Poisson measure obtained by discarding marks below ``trunc`` and
keep track of what the cut costs.
"""

# %%
import numpy as np
from scipy import stats

from gammagibbs import LevySpec, Window, sample_batch, truncated_mass, truncation_bias
from gammagibbs.verification import laplace_check, marginal_ks_check

rng = np.random.default_rng(1)
levy = LevySpec.gamma(theta=1.0, trunc=1e-6)
window = Window.box([0.0], [2.0])

# %%
# Expected number of atoms and the mass lost to the cut.
nu = truncated_mass(levy) * window.volume
mean_loss, var_loss = truncation_bias(levy, window)
print(f"atoms per sample {nu:.2f}, discarded mass {mean_loss:.2e} (var {var_loss:.2e})")

# %%
batch = sample_batch(levy, window, 20_000, rng)
mass = batch.masses_in()
print("mean atoms", batch.counts().mean(), " mean mass", mass.mean(), " (target 2)")

# %%
# Laplace transform: E exp(-t eta(D)) = (1 + t)^(-theta m(D)).
for t in (0.25, 0.5, 1.0, 2.0):
    rep = laplace_check(levy, window, t, len(mass), rng, masses=mass)
    print(f"t={t:<5} empirical {rep.lhs.mean:.5f}  exact {rep.rhs:.5f}  z {rep.z_score:+.2f}")

# %%
# The marginal law, tested directly.
rep = marginal_ks_check(levy, window.volume, 10_000, rng, masses=mass[:10_000])
print("KS p-value", rep.details["pvalue"])

# %%
# Most atoms are tiny: half of them carry marks below this value.
print("median mark", np.median(batch.marks), " largest", batch.marks.max())
print("Gamma(2,1) quantiles vs sample:",
      np.round(stats.gamma(2.0).ppf([0.1, 0.5, 0.9]), 3),
      np.round(np.quantile(mass, [0.1, 0.5, 0.9]), 3))
