"""Fit circuit blocks one at a time, exactly and with simulated Hadamard-test shots."""

from __future__ import annotations

import numpy as np

from ampread import (FitConfig, GridTensor, build_sliding_circuit, canonicalize, circuit_state,
                     fidelity_dense, run_fit)
from ampread.circuit import vmps_skeleton

rng = np.random.default_rng(5)
target = circuit_state(vmps_skeleton(4, 4, 2, seed=9)).amplitudes

rep = run_fit(target, vmps_skeleton(4, 4, 2, seed=0), FitConfig(n_iter=5))
print("exact estimator, fidelity per sweep:", np.round(rep.sweep_fidelity, 10))

for shots in (100, 10_000):
    rep = run_fit(target, vmps_skeleton(4, 4, 2, seed=0),
                  FitConfig(n_iter=5, estimator="shots", shots=shots, seed=1))
    print(f"{shots:6d} shots per term: final fidelity {rep.final_fidelity:.6f}, "
          f"{rep.stats['terms']} Hadamard tests")

# On an unstructured target the fit competes with plain SVD truncation.
T = rng.standard_normal((4,) * 4)
trunc = fidelity_dense(canonicalize(T, 2)[0], T)
fit = run_fit(GridTensor(T), vmps_skeleton(4, 4, 2, seed=0), FitConfig(n_iter=30))
print(f"random target: truncation {trunc:.5f}, fitted {fit.final_fidelity:.5f}")

# Sliding blocks trade parameters for accuracy.
for m_bl in (2, 3, 4, 5):
    rep = run_fit(GridTensor(T), build_sliding_circuit(4, 2, m_bl, seed=0), FitConfig(n_iter=5))
    print(f"sliding m_bl={m_bl}: fidelity {rep.final_fidelity:.5f}")
