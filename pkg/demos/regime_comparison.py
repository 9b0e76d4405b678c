#!/usr/bin/env python3
"""
Which field formula to trust, and where
---------------------------------------
The perturbed field H_delta of the 1 cm steel ball is evaluated with the
full three-term expansion and with the quasi-static (eddy-current) dipole at
a few distances and frequencies.  At low frequency they agree; once k r is
no longer small the retarded terms of the full expansion take over even
though the object itself is still tiny compared with the wavelength.

A non-conducting dielectric ball shows the small-k and small-alpha
formulas side by side.
"""
import numpy as np

from mptwave import MaterialSpec, ObjectPlacement, RunSettings, UnitShape, compute
from mptwave.core import Excitation, Rank2TensorC
from mptwave.fields import (BackgroundField, hdelta_eddy, hdelta_main, hdelta_smallalpha,
                            hdelta_smallk_dielectric)
from mptwave.oracles import polya_szego_sphere

alpha = 0.01
placement = ObjectPlacement(alpha)
sphere = UnitShape.sphere()
H0 = np.array([0.0, 0.0, 1.0])
steel = MaterialSpec.from_relative(mu_r=100, sigma=1e6)

print("conducting ball: |main - eddy| / |main|")
print(f"{'omega':>8}" + "".join(f"{f'r={r}a':>11}" for r in (5, 20, 50)))
for omega in (1e3, 1e5, 1e7, 1e8, 1e9):
    result = compute(steel, sphere, placement, omega, RunSettings(model="full"))
    bg = BackgroundField.uniform(H0, Excitation(omega).k)
    line = f"{omega:8.0e}"
    for r in (5, 20, 50):
        x = np.array([r * alpha, 0.0, 0.5 * r * alpha])
        main = hdelta_main(x, placement, result.bundle, bg).H_delta
        eddy = hdelta_eddy(x, placement, result.bundle.M, H0)
        line += f"{np.linalg.norm(main - eddy) / np.linalg.norm(main):11.2e}"
    print(line + f"   ({result.regime})")

print("\ndielectric ball (mu_r = 2, eps_r = 3): small-k vs small-alpha formulas at r = 15a")
glass = MaterialSpec.from_relative(mu_r=2.0, eps_rel=3.0)
T_mu = polya_szego_sphere(2.0, alpha)
T_eps = polya_szego_sphere(3.0, alpha)
x = np.array([0.12, 0.05, 0.08])
for omega in (1e4, 1e6, 1e8):
    bg = BackgroundField.uniform(H0, Excitation(omega).k)
    hk = hdelta_smallk_dielectric(x, placement, T_mu, T_eps, bg)
    ha = hdelta_smallalpha(x, placement, T_mu, T_eps, bg)
    result = compute(glass, sphere, placement, omega, RunSettings(model="full"))
    hm = hdelta_main(x, placement, result.bundle, bg).H_delta
    print(f"  omega={omega:.0e}: |smallk - smallalpha|/|smallalpha| = "
          f"{np.linalg.norm(hk - ha) / np.linalg.norm(ha):.2e}, "
          f"|main - smallalpha|/|smallalpha| = {np.linalg.norm(hm - ha) / np.linalg.norm(ha):.2e}")
