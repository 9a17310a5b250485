"""Worst-of put on three assets: Monte Carlo grid, cosine expansion, fitted MPS."""

from __future__ import annotations

import numpy as np

from ampread import (BSModel, FitConfig, PricerConfig, canonicalize, coefficients_from_grid,
                     domain_bounds, expansion_eval_many, function_mps, grid_target,
                     make_cosine_basis, mps_eval_many, run_fit, sample_points)
from ampread.circuit import vmps_skeleton

model = BSModel(d=3, r_rf=0.0, sigma=0.2, rho=0.0, K=100.0, T=1.0)
L, U = domain_bounds(model, epsilon=0.01)
print("domain per asset:", L[0], "to", round(U[0], 2))
bases = [make_cosine_basis(L[i], U[i], 8, 8) for i in range(3)]

values = grid_target(model, bases, PricerConfig(n_paths=10_000, seed=1))
a = coefficients_from_grid(values, bases)
rep = run_fit(a, vmps_skeleton(3, 8, 4, seed=0), FitConfig(n_iter=5))
print("fit fidelity:", rep.final_fidelity)

# Price along the diagonal s1 = s2 = s3 and at points drawn from the model.
diag = np.repeat(np.linspace(L[0], U[0], 11)[:, None], 3, axis=1)
pts = sample_points(model, np.full(3, 100.0), 2000, seed=2, bounds=(L, U))
trunc = canonicalize(a, 4)[0].normalized()
for name, P in (("diagonal", diag), ("sample", pts)):
    cos = expansion_eval_many(a, bases, P)
    tn = a.C * mps_eval_many(function_mps(rep.mps, "coef"), bases, P)
    tr = a.C * mps_eval_many(trunc, bases, P)
    print(f"{name}: max|TN-COS| = {np.max(np.abs(tn - cos)):.4f}, "
          f"truncation max diff = {np.max(np.abs(tr - cos)):.4f}")

print("\n   s     COS      TN")
for s, c, t in zip(diag[:, 0], expansion_eval_many(a, bases, diag),
                   a.C * mps_eval_many(rep.mps, bases, diag)):
    print(f"{s:6.1f} {c:7.3f} {t:7.3f}")
