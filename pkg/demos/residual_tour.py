"""Walk through the closed-form breathers and check them against the field equations.

Run:  python demos/residual_tour.py
"""

import math

from breatherlab import breathers as br
from breatherlab import residuals as rv
from breatherlab.core import natural_units
from breatherlab.special import ModeIndex

params = natural_units()

# Standard 4D patch sitting off the core, refined three times.
center = {"t": 0.3, "x": 0.7, "y": 0.5, "z": 0.3}
half = {k: 0.2 for k in center}
grids = [rv.patch_grid(center, half, h) for h in (0.1, 0.05, 0.025)]

print("second term sits on the mass shell: omega(sqrt 3) =", rv.dispersion_omega(math.sqrt(3), params))

cases = {
    "rest, alpha=0.5": br.BreatherSpec(alpha=0.5),
    "boosted, v=0.6": br.BreatherSpec(alpha=0.5, velocity=(0.6, 0, 0)),
    "spinning (2,1)": br.BreatherSpec(alpha=0.5, mode=ModeIndex(2, 1)),
    "wrong frequency 1.9": br.BreatherSpec(alpha=0.5, omega_override=1.9),
}
for name, spec in cases.items():
    rep = rv.kg_residual(spec, grids, params)
    l2 = ", ".join(f"{lv.l2:.2e}" for lv in rep.levels)
    print(f"{name:22s} residual L2 [{l2}]  order {rep.convergence_order:.3f}")

# The complex action satisfies the quantum Hamilton-Jacobi equation to the same order.
rep = rv.qhj_residual(cases["rest, alpha=0.5"], grids, params)
print(f"{'action, rest':22s} order {rep.convergence_order:.3f}")

# Far from the core the energy-momentum relation of a free particle re-emerges.
for alpha in (0.1, 0.5):
    dev = rv.einstein_relation_check(br.BreatherSpec(alpha=alpha), params, mode="far_field", radius=30.0)
    print(f"alpha={alpha}: |E^2 - p^2 - m^2| at r=30 -> {dev:.2e}")
