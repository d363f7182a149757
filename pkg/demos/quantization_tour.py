"""Phase compatibility on a ring, reflecting walls, and Bohr-Sommerfeld levels in a well.

Run:  python demos/quantization_tour.py
"""

import math

import numpy as np

from breatherlab import quantization as qz

scan = qz.scan_quantized_momenta(2 * math.pi, 3.5)
print("ring of length 2 pi, allowed momenta:", scan.quantized_p)

walls = qz.scan_quantized_momenta(qz.reflecting_wall_period(math.pi), 3.5)
print("walls pi apart (period doubled)     :", walls.quantized_p)

print("ring levels from the loop integral  :", [p for _, p in qz.ring_levels(2 * math.pi, range(4))])

for name, well in [("harmonic", qz.harmonic_well(1.0)), ("quartic", qz.quartic_well())]:
    levels = qz.bohr_sommerfeld_levels(well, n_range=range(10, 21))
    n = np.array([a for a, _ in levels], float)
    E = np.array([b for _, b in levels])
    slope = np.polyfit(np.log(n), np.log(E), 1)[0]
    print(f"{name:9s} E_10..E_12 = {np.round(E[:3], 6)}  log-log slope {slope:.4f}")

orbit = qz.classical_orbit(qz.harmonic_well(1.0), 3.0)
print("harmonic orbit at E=3: period", round(orbit.period, 8), " loop integral", round(qz.loop_integral(orbit), 8))
