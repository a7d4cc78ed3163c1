"""Stability regions of the coupled model and the infinite lattice.

Uniform deformations F(t, s) are scanned over a coarse (t, s) grid.  The
exact atomistic verdict comes from the lattice-dynamics symbol H(k); the
coupled verdict from factorization pivots of the coupled Hessian on a
finite sample.  The coupled region contains the exact one, so instability
onset is never an artifact of the coupling.  (The acceptance suite runs
the full 21x21 grid; this demo uses a coarse grid to stay quick.)
"""

import numpy as np

from latvol.crystal_model import build_vacancy_problem
from latvol.energy import LennardJones
from latvol.equilibrium import StabilityScan, stability_scan

pot = LennardJones()
model = build_vacancy_problem(4, 2, vacancy=False)

vals = np.linspace(-0.2, 0.2, 9)
scan = StabilityScan(t_values=vals, s_values=vals, fourier_grid=16)
res = stability_scan(model, pot, scan)

print("rows: t from %.1f to %.1f; columns: s. '#' stable, '.' unstable" %
      (vals[0], vals[-1]))
for name in ("fourier", "coupled"):
    grid = res[name]
    print(f"\n{name} (N=4, K=2):" if name == "coupled" else f"\n{name} (infinite lattice):")
    for i in range(len(vals)):
        print("   " + "".join("#" if grid[i, j] else "." for j in range(len(vals))))

violations = int((res["fourier"] & ~res["coupled"]).sum())
print(f"\nfourier-stable points that are coupled-unstable: {violations} (expect 0)")
print(f"coupled boundary polyline segments: {len(res['boundary_coupled'])}")
