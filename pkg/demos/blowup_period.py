"""Period of the glued self-dual forms over the exceptional sphere.

The flat C^2 algebra comes first: the three self-dual constants have Gram
2 I and pair with the Kahler form as 8 a_1.  Then a blowup cap is glued to
the torus side and the period over C is followed as the neck grows.  It
decays like exp(-2T) (exp(-lam T) at finite mesh) with a positive
amplitude that does not depend on the pairing, and much faster when the
pairing vanishes.

    python demos/blowup_period.py
"""

import numpy as np

from hodge_neck import blowup as B
from hodge_neck import gluing as G
from hodge_neck.complex import build_blowup_cap, build_sphere3, relative_self_intersection
from hodge_neck.s3_spectral import closed_modes

print("Gram of omega_1..3:\n", B.reference_gram())
print("pairing of 0.7 omega_1 + omega_2 with omega:", B.psi2_pairing(0.7, 1.0, 0.0))
x = np.random.default_rng(0).standard_normal((4, 4))
print("|gamma| at random points:", np.round(np.linalg.norm(B.gamma_closed_form(x), axis=1), 6))

cap = build_blowup_cap(2, 4, 4)
area = B.exceptional_area(cap, 0.3)
print(f"cap: C.C = {relative_self_intersection(cap):+.0f}, area of C = {area:.4f}")

space = G.ModeSpace.from_modes(closed_modes(build_sphere3(2), 30))
x1 = G.torus_side_cap(space, np.eye(3), seed=1, higher=1.0, bulk_gram=1250 * np.eye(3))
x2 = G.blowup_cap(space, seed=1, area=area, complex=cap)
for a1 in (1.0, 0.0):
    T_values = [3.0, 4.0, 5.0] if a1 else [1.5, 2.0, 2.5]
    periods = []
    for T in T_values:
        gm = G.make_glued(x1, x2, T, 8)
        u, _, _ = G.iterate(gm, np.array([a1, 0.3, -0.2]), min_steps=4)
        periods.append(G.period(gm, u))
    fit = G.loglinear_fit("period", T_values, periods)
    print(f"a1 = {a1}: periods {np.array2string(np.array(periods), precision=3)}, exponent {fit.slope:.3f}")
