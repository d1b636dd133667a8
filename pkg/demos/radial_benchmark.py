"""Mean exit time from a radial well: asymptotics against the exact solution.

For the unit disk and V = |x|^2 / 2 the mean exit time from the centre has a
closed form, so the truncation error of the boundary-layer series can be read
off directly. Small eps makes the series sharp; at eps = 0.5 the layer is as
wide as the domain and the series is not yet useful.

Run:  python3 demos/radial_benchmark.py
"""
import numpy as np

from exitwell import (build_curve, build_expansion, build_potential, eigenvalue,
                      exact_radial_exit_time, mean_exit_time, radial_eigen, radial_profile)

curve = build_curve({"kind": "circle", "radius": 1.0})
pot = build_potential({"kind": "radial_power", "k": 2, "scale": 0.5})
exp = build_expansion(curve, pot, order=4)
prof = radial_profile(pot)

print("boundary-layer slopes dPhi_j/dzeta(0):",
      [round(float(np.mean(p.zeta_slope)), 6) for p in exp.phis[1:]])
print("boundary-layer slopes dU_j/dzeta(0):  ",
      [round(float(np.mean(u.zeta_slope)), 6) for u in exp.us])
print()
print(f"{'eps':>5} {'exact u(0)':>14} " + " ".join(f"{'N=' + str(n):>10}" for n in (1, 2, 3, 4))
      + f" {'lam_hat/lam':>12}")
for eps in (0.5, 0.4, 0.35, 0.3, 0.25, 0.2):
    exact = exact_radial_exit_time(prof, 1.0, eps)
    errs = [float(mean_exit_time(exp, eps, np.zeros(2), n)) / exact - 1 for n in (1, 2, 3, 4)]
    ratio = radial_eigen(prof, 1.0, eps) / float(eigenvalue(exp, eps, order=2))
    print(f"{eps:5.2f} {exact:14.6e} " + " ".join(f"{e:10.2e}" for e in errs) + f" {ratio:12.5f}")
print("\ncolumns N=1..4 are relative errors of the truncated series at the centre")
