"""A staircase circuit prepares the MPS; oracle blocks turn coefficients into grid values."""

from __future__ import annotations

import numpy as np

from ampread import (build_vapp, build_vmps, canonicalize, circuit_state, extract_mps,
                     make_cosine_basis, mps_eval_many, reconstruct_dense)
from ampread.mps import random_canonical_mps, scale_physical

m = random_canonical_mps(4, 4, 2, seed=3)
circ = build_vmps(m)
print("qubits:", circ.n_qubits, " blocks:", [(g.start, g.width) for g in circ.gates])
amps = circuit_state(circ).amplitudes
print("max |amplitude - MPS entry|:", np.max(np.abs(amps - reconstruct_dense(m).values.ravel())))
print("cores read back from the circuit match:",
      all(np.allclose(a, b) for a, b in zip(m.cores, extract_mps(circ).cores)))

# Full circuit: each register gets 3 qubits (8 grid points) while D = 4.
bases = [make_cosine_basis(0.0, 1.0, 4, 8) for _ in range(3)]
coeff = random_canonical_mps(3, 4, 2, seed=4)
weighted = scale_physical(coeff, [np.sqrt(b.c) for b in bases])
weighted = canonicalize(reconstruct_dense(weighted), 2)[0].normalized()
state = circuit_state(build_vapp(weighted, bases)).amplitudes
grid = np.array(np.meshgrid(*[b.grid for b in bases], indexing="ij")).reshape(3, -1).T
f = mps_eval_many(coeff, bases, grid)
print("max |amplitude - normalized f(grid)|:", np.max(np.abs(state - f / np.linalg.norm(f))))
