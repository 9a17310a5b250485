from __future__ import annotations

from functools import reduce

import numpy as np
import pytest

from ampread.circuit import (BlockCircuit, BlockGate, StateVector, apply_circuit,
                             apply_gate_array, build_sliding_circuit, build_vapp, build_vmps,
                             build_vof, build_vof_controlled, circuit_state, extract_mps,
                             sliding_dof, vmps_skeleton, vof_matrix, zero_state)
from ampread.mps import canonicalize, random_canonical_mps, reconstruct_dense, scale_physical
from ampread.numkernel import haar_random_orthogonal, is_orthogonal
from ampread.ortho import make_cosine_basis


def _kron_gate(n, start, width, G):
    return reduce(np.kron, [np.eye(2 ** start), G, np.eye(2 ** (n - start - width))])


@pytest.mark.parametrize("start,width", [(0, 2), (1, 2), (3, 1), (0, 4)])
def test_apply_gate_matches_kron(start, width, rng):
    n = 4
    G = haar_random_orthogonal(2 ** width, 3)
    psi = rng.standard_normal(2 ** n)
    full = _kron_gate(n, start, width, G)
    assert np.allclose(apply_gate_array(psi, n, start, width, G), full @ psi)
    assert np.allclose(apply_gate_array(psi, n, start, width, G, transpose=True), full.T @ psi)


def test_msb_first_convention():
    # X on qubit 0 of 3 qubits flips the most significant bit
    X = np.array([[0.0, 1.0], [1.0, 0.0]])
    circ = BlockCircuit(3, [BlockGate(0, 1, X)])
    assert np.argmax(circuit_state(circ).amplitudes) == 4


def test_adjoint_undoes_circuit(rng):
    circ = build_sliding_circuit(3, 2, 3, 1)
    psi = rng.standard_normal(64)
    back = apply_circuit(circ, apply_circuit(circ, psi), adjoint=True)
    assert np.allclose(back.amplitudes, psi)


def test_gate_validation():
    with pytest.raises(ValueError, match="orthogonal"):
        BlockGate(0, 1, np.ones((2, 2)))
    with pytest.raises(ValueError):
        BlockCircuit(2, [BlockGate(1, 2, np.eye(4))])
    with pytest.raises(ValueError):
        StateVector(np.ones(3))


@pytest.mark.parametrize("d,D,r", [(3, 4, 2), (4, 4, 2), (4, 8, 4), (5, 2, 2), (4, 4, [1, 4])])
def test_vmps_state_equals_mps(d, D, r):
    m = random_canonical_mps(d, D, r, 17)
    circ = build_vmps(m)
    assert circ.n_qubits == d * int(np.log2(D))
    assert all(is_orthogonal(g.matrix) for g in circ.gates)
    amps = circuit_state(circ).amplitudes
    assert np.max(np.abs(amps - reconstruct_dense(m).values.reshape(-1))) < 1e-10
    back = extract_mps(circ)
    for a, b in zip(m.cores, back.cores):
        assert np.allclose(a, b, atol=1e-12)


def test_vmps_from_canonicalized_tensor(rng):
    T = rng.standard_normal((4,) * 4)
    m, _ = canonicalize(T, 4)
    m = m.normalized()
    amps = circuit_state(build_vmps(m)).amplitudes
    assert np.allclose(amps, reconstruct_dense(m).values.reshape(-1), atol=1e-12)


def test_vmps_needs_unit_norm_and_powers_of_two():
    m = random_canonical_mps(3, 4, 2, 0)
    m.cores[0] = 2 * m.cores[0]
    with pytest.raises(ValueError, match="unit norm"):
        build_vmps(m)
    T = np.random.default_rng(0).standard_normal((3, 3, 3))
    with pytest.raises(ValueError, match="power of two"):
        build_vmps(canonicalize(T / np.linalg.norm(T), 3)[0])


def test_skeleton_layout_matches_extract():
    c = vmps_skeleton(4, 4, 2, 5)
    assert [(g.start, g.width) for g in c.gates] == [(0, 3), (2, 3), (4, 4)]
    assert extract_mps(c).bonds == [2, 2]


@pytest.mark.parametrize("n_gr,D", [(8, 4), (4, 4), (16, 2)])
def test_vof_columns_are_scaled_basis(n_gr, D):
    b = make_cosine_basis(0.0, 1.0, D, n_gr)
    V = vof_matrix(b)
    assert is_orthogonal(V)
    assert np.allclose(V[:, :D], b.grid_matrix() / np.sqrt(b.c))
    assert build_vof(b).width == int(np.log2(n_gr))


@pytest.mark.parametrize("n_gr", [4, 8])
def test_vapp_state_is_normalized_grid_function(n_gr, rng):
    d, D = 3, 4
    bases = [make_cosine_basis(-1.0, 2.0, D, n_gr) for _ in range(d)]
    coeff = random_canonical_mps(d, D, 2, 8)
    # feed the circuit sqrt(c)-weighted coefficients so that amplitudes are f(x_j)
    weighted = scale_physical(coeff, [np.sqrt(b.c) for b in bases])
    weighted = canonicalize(reconstruct_dense(weighted), 2)[0].normalized()
    amps = circuit_state(build_vapp(weighted, bases)).amplitudes
    A = reconstruct_dense(coeff).values
    P = bases[0].grid_matrix()
    f = np.einsum("abc,ia,jb,kc->ijk", A, P, P, P).reshape(-1)
    assert np.max(np.abs(amps - f / np.linalg.norm(f))) < 1e-9


def test_vapp_layout():
    bases = [make_cosine_basis(0, 1, 4, 8)] * 3
    circ = build_vapp(random_canonical_mps(3, 4, 2, 0), bases)
    assert circ.n_qubits == 9
    assert circ.layout["n_mps_gates"] == 2 and len(circ.gates) == 5


@pytest.mark.parametrize("swap", [False, True])
def test_controlled_oracle_assembly(swap):
    b = make_cosine_basis(0.0, 1.0, 4, 8)
    circ = build_vof_controlled(b, swap=swap)
    N = 8
    V = vof_matrix(b)
    zero = np.eye(N)[0]
    for l in range(4):
        psi = np.zeros(N * N)
        psi[l * N] = 1.0
        out = apply_circuit(circ, psi).amplitudes
        expect = np.kron(V[:, l], zero) if swap else np.kron(zero, V[:, l])
        assert np.max(np.abs(out - expect)) < 1e-10


def test_sliding_circuit():
    c = build_sliding_circuit(3, 3, 4, 0)
    assert [g.start for g in c.gates] == list(range(6))
    assert sliding_dof(3, 3, 4) == 16 + 128 * 5
    assert sliding_dof(3, 3, 2) < sliding_dof(3, 3, 3) < sliding_dof(3, 3, 4)
    with pytest.raises(ValueError):
        build_sliding_circuit(3, 2, 6, 0)
    with pytest.raises(ValueError):
        build_sliding_circuit(3, 2, 1, 0)


def test_zero_state():
    z = zero_state(3)
    assert z.n_qubits == 3 and z.amplitudes[0] == 1.0 and z.norm() == 1.0
