"""
Bound constants and a moment bound that needs care
==================================================

The exponential-moment estimates come with explicit constants.  Here we look
at how they depend on the free Young parameter ``eps_h`` and compare the
polynomial moment bound with exact Gamma moments.
"""

# %%
from gammagibbs import CubeGrid, LevySpec, PotentialSpec, bound_constants, certify
from gammagibbs.interaction import max_admissible_eps_h
from gammagibbs.verification import exact_moment, factorial_moment_bound

grid = CubeGrid(1, 1.0, 1.0)
pot = certify(PotentialSpec.core_shell(10.0, 1.0, 1.0, 1.0), grid)
eps_max = max_admissible_eps_h(pot, grid, theta=1.0)
print("largest admissible eps_h", eps_max)

# %%
for eps in (1.0, eps_max / 2, eps_max / 10):
    c = bound_constants(pot, grid, 1.0, eps)
    print(f"eps_h={eps:<7.4g} B={c.B_eps:<8.4g} lambda0={c.lambda0:g}  Upsilon={c.Upsilon_eps:<8.4g}"
          f" log C_lambda={c.log_C_lambda:.4g}  admissible={c.eps_admissible}")

# %%
# E eta(D)^n against n! m^n theta^n: fine for theta m >= 1, false below.
for a in (0.25, 0.5, 1.0, 3.0):
    row = [(exact_moment(LevySpec.gamma(a), 1.0, n), factorial_moment_bound(a, 1.0, n))
           for n in (1, 2, 3)]
    print(f"theta m = {a:<5}", "  ".join(f"n={n}: {e:.4g} vs {b:.4g}"
                                         for n, (e, b) in zip((1, 2, 3), row)))
