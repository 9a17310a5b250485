from __future__ import annotations

import numpy as np
import pytest

from ampread.circuit import (apply_gate_array, build_sliding_circuit, build_vapp, build_vmps,
                             circuit_state, vmps_skeleton)
from ampread.fit import (FitConfig, PauliString, assemble_fi_direct, assemble_fi_pauli,
                         environments, fidelity, function_mps, hadamard_test_values,
                         pauli_strings, run_fit, update_block, write_trace_csv)
from ampread.mps import canonicalize, fidelity_dense, random_canonical_mps, reconstruct_dense
from ampread.numkernel import is_orthogonal, svd
from ampread.ortho import GridTensor, make_cosine_basis


def _planted(d=4, D=4, r=2, seed=3):
    return circuit_state(vmps_skeleton(d, D, r, seed)).amplitudes


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_even_y_set_size(m):
    M = 2 ** m
    A = pauli_strings(m, "A")
    assert len(A) == M * (M + 1) // 2
    assert len(pauli_strings(m, "all")) == 4 ** m
    for s in A:
        assert np.allclose(s.matrix().imag, 0.0)


def test_pauli_matrix_matches_kron():
    mats = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]]),
            "Y": np.array([[0, -1j], [1j, 0]]), "Z": np.diag([1, -1])}
    for letters in ["XY", "ZI", "YY", "IXZ", "YZX"]:
        ref = mats[letters[0]]
        for ch in letters[1:]:
            ref = np.kron(ref, mats[ch])
        assert np.allclose(PauliString(letters).matrix(), ref)


def test_hadamard_values_brute_force(rng):
    n = 4
    phi = rng.standard_normal(2 ** n)
    psi = rng.standard_normal(2 ** n)
    phi /= np.linalg.norm(phi)
    psi /= np.linalg.norm(psi)
    strings = pauli_strings(2, "all")
    vals = hadamard_test_values(phi, psi, (1, 2), strings)
    for s, v in zip(strings, vals):
        full = np.kron(np.kron(np.eye(2), s.matrix()), np.eye(2))
        assert v == pytest.approx(phi @ full @ psi, abs=1e-12)


def test_direct_assembly_brute_force(rng):
    n, start, width = 4, 1, 2
    phi, psi = rng.standard_normal(16), rng.standard_normal(16)
    F = assemble_fi_direct(phi, psi, (start, width))
    V = np.random.default_rng(1).standard_normal((4, 4))
    full = np.kron(np.kron(np.eye(2), V), np.eye(2))
    assert np.sum(V * F) == pytest.approx(psi @ full @ phi)


@pytest.mark.parametrize("window", [(0, 2), (1, 3), (2, 2)])
def test_pauli_exact_equals_direct(window, rng):
    phi = rng.standard_normal(16)
    psi = rng.standard_normal(16)
    phi /= np.linalg.norm(phi)
    psi /= np.linalg.norm(psi)
    F = assemble_fi_direct(phi, psi, window)
    assert np.max(np.abs(assemble_fi_pauli(phi, psi, window) - F)) < 1e-10


def test_even_y_set_gives_symmetric_part(rng):
    phi, psi = rng.standard_normal(8), rng.standard_normal(8)
    phi /= np.linalg.norm(phi)
    psi /= np.linalg.norm(psi)
    F = assemble_fi_direct(phi, psi, (0, 2))
    FA = assemble_fi_pauli(phi, psi, (0, 2), pauli_set="A")
    assert np.allclose(FA, (F + F.T) / 2, atol=1e-12)


def test_pauli_requires_normalized_states():
    with pytest.raises(ValueError, match="normalized"):
        assemble_fi_pauli(np.full(4, 1.0), np.eye(4)[0], (0, 1))


def test_shot_estimates_are_reproducible(rng):
    phi, psi = rng.standard_normal(8), rng.standard_normal(8)
    phi /= np.linalg.norm(phi)
    psi /= np.linalg.norm(psi)
    a = assemble_fi_pauli(phi, psi, (0, 2), "shots", 500, seed=4, sweep=1, block=2)
    b = assemble_fi_pauli(phi, psi, (0, 2), "shots", 500, seed=4, sweep=1, block=2)
    c = assemble_fi_pauli(phi, psi, (0, 2), "shots", 500, seed=5, sweep=1, block=2)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    F = assemble_fi_direct(phi, psi, (0, 2))
    assert np.max(np.abs(a - F)) < 0.3


def test_update_block_maximizes_overlap(rng):
    F = rng.standard_normal((8, 8))
    V = update_block(F)
    assert is_orthogonal(V)
    best = np.sum(V * F)
    assert best == pytest.approx(np.sum(svd(F)[1]))
    for s in range(20):
        Q = np.linalg.qr(np.random.default_rng(s).standard_normal((8, 8)))[0]
        assert np.sum(Q * F) <= best + 1e-12


def test_environment_overlap_identity():
    circ = vmps_skeleton(4, 4, 2, 1)
    target = _planted(seed=9)
    for i in range(1, 4):
        phi, psi = environments(target, circ, i)
        g = circ.gates[i - 1]
        F = assemble_fi_direct(phi, psi, (g.start, g.width))
        assert np.sum(g.matrix * F) == pytest.approx(fidelity(circ, target), abs=1e-12)


def test_local_update_reaches_nuclear_norm():
    circ = vmps_skeleton(4, 4, 2, 1)
    target = _planted(seed=9)
    for i in range(1, 4):
        phi, psi = environments(target, circ, i)
        g = circ.gates[i - 1]
        F = assemble_fi_direct(phi, psi, (g.start, g.width))
        g.matrix = update_block(F)
        assert fidelity(circ, target) == pytest.approx(np.sum(svd(F)[1]), abs=1e-10)


def test_planted_recovery_and_monotone_trace():
    rep = run_fit(_planted(), vmps_skeleton(4, 4, 2, 0), FitConfig(n_iter=5))
    assert rep.final_fidelity >= 1 - 1e-6
    fids = [t["fidelity"] for t in rep.trace]
    assert np.all(np.diff(fids) >= -1e-12)
    assert len(rep.trace) == 5 * 3


def test_layout_is_not_modified():
    start = vmps_skeleton(3, 4, 2, 0)
    before = [g.matrix.copy() for g in start.gates]
    run_fit(_planted(3), start, FitConfig(n_iter=2))
    assert all(np.array_equal(a, g.matrix) for a, g in zip(before, start.gates))


def test_svd_start_never_loses_to_truncation(rng):
    T = rng.standard_normal((4,) * 4)
    m, _ = canonicalize(T, 2)
    base = fidelity_dense(m, T)
    rep = run_fit(GridTensor(T), build_vmps(m.normalized()), FitConfig(n_iter=3))
    assert rep.final_fidelity >= base - 1e-12
    assert rep.final_fidelity == pytest.approx(fidelity_dense(rep.mps, T), abs=1e-10)


def test_back_and_forth_sweep():
    rep = run_fit(_planted(), vmps_skeleton(4, 4, 2, 0), FitConfig(n_iter=2, sweep="back_and_forth"))
    assert len(rep.trace) == 2 * (3 + 2)
    assert np.all(np.diff([t["fidelity"] for t in rep.trace]) >= -1e-12)


def test_early_stop():
    rep = run_fit(_planted(), vmps_skeleton(4, 4, 2, 0), FitConfig(n_iter=50, early_stop_tol=1e-14))
    assert len(rep.sweep_fidelity) < 50


def test_via_pauli_matches_direct_fit():
    t = _planted(3, 4, 2, 5)
    a = run_fit(t, vmps_skeleton(3, 4, 2, 0), FitConfig(n_iter=2))
    b = run_fit(t, vmps_skeleton(3, 4, 2, 0), FitConfig(n_iter=2, via_pauli=True))
    assert np.allclose(a.sweep_fidelity, b.sweep_fidelity, atol=1e-10)
    assert b.stats["terms"] > 0


def test_shot_fit_progresses_and_counts():
    t = _planted(3, 2, 2, 5)
    rep = run_fit(t, vmps_skeleton(3, 2, 2, 0), FitConfig(n_iter=3, estimator="shots", shots=4000))
    assert rep.final_fidelity > 0.9
    assert rep.stats["shots"] == 4000 * rep.stats["terms"]
    assert all(row["shots"] == 4000 for row in rep.trace)


def test_sliding_fit_runs():
    t = _planted(3, 4, 2, 2)
    rep = run_fit(t, build_sliding_circuit(3, 2, 3, 0), FitConfig(n_iter=3))
    assert rep.mps is None and 0 < rep.final_fidelity <= 1 + 1e-12


def test_full_mode_fit_recovers_planted_grid_function():
    d, D, n_gr = 3, 4, 8
    bases = [make_cosine_basis(0.0, 1.0, D, n_gr) for _ in range(d)]
    m = random_canonical_mps(d, D, 2, 4)
    grid_state = circuit_state(build_vapp(m, bases)).amplitudes
    rep = run_fit(grid_state, vmps_skeleton(d, D, 2, 0), FitConfig(mode="full", n_iter=5), bases=bases)
    assert rep.final_fidelity >= 1 - 1e-6
    # the fitted coefficients reproduce the weighted planted ones up to sign
    got = reconstruct_dense(function_mps(rep.mps, "full", bases)).values
    ref = reconstruct_dense(function_mps(m, "full", bases)).values
    assert min(np.max(np.abs(got - ref)), np.max(np.abs(got + ref))) < 1e-3


def test_full_mode_needs_bases():
    with pytest.raises(ValueError, match="bases"):
        run_fit(np.ones(512), vmps_skeleton(3, 4, 2, 0), FitConfig(mode="full"))


def test_config_validation():
    for kw in [dict(mode="x"), dict(estimator="x"), dict(n_iter=0), dict(pauli_set="B"),
               dict(estimator="shots", shots=0), dict(sweep="x")]:
        with pytest.raises(ValueError):
            FitConfig(**kw)


def test_target_size_mismatch():
    with pytest.raises(ValueError, match="amplitudes"):
        run_fit(np.ones(8), vmps_skeleton(3, 4, 2, 0))


def test_trace_csv(tmp_path):
    rep = run_fit(_planted(3), vmps_skeleton(3, 4, 2, 0), FitConfig(n_iter=2))
    p = tmp_path / "trace.csv"
    write_trace_csv(rep, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "sweep,block,fidelity,estimator,shots"
    assert len(lines) == 1 + len(rep.trace)
    assert float(lines[-1].split(",")[2]) == rep.trace[-1]["fidelity"]


def test_apply_gate_consistency_with_environments():
    circ = vmps_skeleton(3, 4, 2, 2)
    n = circ.n_qubits
    phi, _ = environments(np.ones(2 ** n), circ, 2)
    g = circ.gates[0]
    ref = apply_gate_array(np.eye(2 ** n)[0], n, g.start, g.width, g.matrix)
    assert np.allclose(phi.amplitudes, ref)
