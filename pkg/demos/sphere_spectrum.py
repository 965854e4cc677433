"""Low spectrum of the 2-form Laplacian on refined 3-spheres.

The round S^3 has coclosed 2-form eigenvalues k(k+2) and closed ones
(k+1)^2.  This script refines the cross-polytope sphere, prints the
lowest eigenvalue on each branch and the ratio of successive errors, which
settles near 4 for a second-order scheme.

    python demos/sphere_spectrum.py [max_level]
"""

import sys

import numpy as np

from hodge_neck.complex import build_sphere3
from hodge_neck.s3_spectral import ritz_reference_forms, spectrum2, sphere_operators

max_level = int(sys.argv[1]) if len(sys.argv) > 1 else 2
prev = None
print(f"{'level':>5} {'2-cells':>8} {'coclosed':>10} {'closed':>10} {'err ratio':>10}")
for level in range(max_level + 1):
    sphere = build_sphere3(level)
    b = spectrum2(sphere, 20)
    flags = b.closed_flags.astype(bool)
    co, cl = b.eigenvalues[~flags][0], b.eigenvalues[flags][0]
    err = np.array([co - 3.0, cl - 4.0])
    ratio = "" if prev is None else np.array2string(prev / err, precision=2)
    print(f"{level:>5} {sphere.n(2):>8} {co:>10.4f} {cl:>10.4f} {ratio:>10}")
    prev = err

ops = sphere_operators(sphere)
rq = [ops.rayleigh(f) for f in ritz_reference_forms(sphere)]
print("Rayleigh quotients of omega/4, Re dz^dw, Im dz^dw:", np.round(rq, 4))
