"""Compress a coefficient tensor into an MPS and watch the error versus bond dimension."""

from __future__ import annotations

import numpy as np

from ampread import (canonicalize, check_right_canonical, dof_count, fidelity_dense,
                     reconstruct_dense)

rng = np.random.default_rng(1)
d, D = 5, 4
# a tensor with decaying structure: sum of a few rank-one terms plus noise
T = sum(np.einsum("a,b,c,d,e->abcde", *rng.standard_normal((5, D))) / (k + 1) ** 2
        for k in range(6))
T += 1e-3 * rng.standard_normal(T.shape)

for r in (1, 2, 4, 8, 16):
    m, eps = canonicalize(T, r)
    err = np.linalg.norm(reconstruct_dense(m).values - T) / np.linalg.norm(T)
    print(f"r={r:2d}  bonds={m.bonds}  rel err={err:.2e}  fidelity={fidelity_dense(m, T):.6f}"
          f"  canonical dev={check_right_canonical(m):.1e}")

print("parameters for d=5, D=16, r=16:", dof_count(5, 16, 16), "vs dense", 16 ** 5)
