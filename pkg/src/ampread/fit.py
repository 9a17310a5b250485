"""Alternating block optimization of a circuit against a target state.

Each block V is replaced, with all others fixed, by the orthogonal matrix
maximizing <target| circuit |0>. With Phi the state just before the block
and Psi the target pulled back through every later block, the overlap is
sum_ab V_ab F_ab where F = Tr_rest |Psi><Phi|. If F = X diag(s) Yt, the
maximizer is V = X Yt and the new overlap is sum(s).

F can be assembled directly from the two states, or from Pauli-string
expectation values <Phi|sigma|Psi> as a Hadamard test would measure them
(exactly, or with simulated shot noise).
"""

from __future__ import annotations

import csv
import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuit import (BlockCircuit, StateVector, apply_gate_array, extract_mps,
                      vof_matrix, zero_state)
from .mps import MPS
from .numkernel import NumericalError, svd
from .ortho import GridTensor, OrthoBasis1D

log = logging.getLogger(__name__)


@dataclass
class FitConfig:
    """Settings for :func:`run_fit`.

    mode : "coef" fits the coefficient state directly; "full" fits a grid
        state through the fixed orthogonal-function oracles.
    estimator : "exact" or "shots". Shots always goes through the Pauli
        route; ``via_pauli`` makes the exact estimator do the same.
    pauli_set : "full" uses all 4^m strings (real and imaginary Hadamard
        tests); "A" keeps only strings with an even number of Y's.
    """

    mode: str = "coef"
    estimator: str = "exact"
    shots: int = 1000
    n_iter: int = 5
    seed: int = 0
    early_stop_tol: float | None = None
    via_pauli: bool = False
    pauli_set: str = "full"
    sweep: str = "forward"

    def __post_init__(self):
        if self.mode not in ("coef", "full"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.estimator not in ("exact", "shots"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if self.estimator == "shots" and self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.pauli_set not in ("full", "A"):
            raise ValueError(f"unknown pauli_set {self.pauli_set!r}")
        if self.sweep not in ("forward", "back_and_forth"):
            raise ValueError(f"unknown sweep {self.sweep!r}")


@dataclass(frozen=True)
class PauliString:
    letters: str

    @property
    def width(self) -> int:
        return len(self.letters)

    @property
    def n_y(self) -> int:
        return self.letters.count("Y")

    @property
    def in_A(self) -> bool:
        """True when the string has real matrix elements (even Y count)."""
        return self.n_y % 2 == 0

    def masks(self) -> tuple[int, int]:
        """(flip mask, sign mask) with qubit 0 as the most significant bit."""
        m = self.width
        flip = sign = 0
        for k, ch in enumerate(self.letters):
            bit = 1 << (m - 1 - k)
            if ch in "XY":
                flip |= bit
            if ch in "YZ":
                sign |= bit
        return flip, sign

    def phase(self) -> complex:
        return 1j ** self.n_y

    def matrix(self) -> np.ndarray:
        M = 2 ** self.width
        flip, sign = self.masks()
        b = np.arange(M)
        s = _parity_sign(b & sign)
        out = np.zeros((M, M), dtype=complex)
        out[b ^ flip, b] = self.phase() * s
        return out


def _parity_sign(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    par = np.zeros_like(x)
    while np.any(x):
        par ^= x & 1
        x = x >> 1
    return 1.0 - 2.0 * par


def pauli_strings(m: int, subset: str = "A") -> list[PauliString]:
    """All width-m strings, or only the even-Y set when subset == "A"."""
    out = [PauliString("".join(p)) for p in itertools.product("IXYZ", repeat=m)]
    if subset == "A":
        out = [p for p in out if p.in_A]
    return out


def _as_amplitudes(x) -> np.ndarray:
    if isinstance(x, StateVector):
        return x.amplitudes
    if isinstance(x, GridTensor):
        return x.values.reshape(-1)
    return np.asarray(x, dtype=np.float64).reshape(-1)


def pull_back_target(target, bases: Sequence[OrthoBasis1D], m_deg: int) -> np.ndarray:
    """Apply the inverse oracle layer to a grid state and keep the zero-padding part.

    The result lives on the degree qubits only and has norm <= 1.
    """
    dims = [b.n_gr for b in bases]
    T = _as_amplitudes(target).reshape(dims)
    D = 2 ** m_deg
    for i, b in enumerate(bases):
        W = vof_matrix(b)[:, :D].T
        T = np.moveaxis(np.tensordot(W, T, axes=([1], [i])), 0, i)
    return T.reshape(-1)


def _normalized(a: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(a)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise ValueError("target state has zero or non-finite norm")
    return a / nrm


def _prepare_target(target, config: FitConfig, circ: BlockCircuit, bases) -> np.ndarray:
    amps = _normalized(_as_amplitudes(target).astype(np.float64))
    if config.mode == "full":
        if bases is None:
            raise ValueError("full mode needs the orthogonal bases")
        amps = pull_back_target(amps, bases, circ.layout["m_deg"])
    if amps.size != 2 ** circ.n_qubits:
        raise ValueError(f"target has {amps.size} amplitudes, circuit acts on {circ.n_qubits} qubits")
    return amps


def environments(target, circ: BlockCircuit, i: int, bases=None,
                 mode: str = "coef") -> tuple[StateVector, StateVector]:
    """States on either side of block ``i`` (1-based).

    phi: blocks 1..i-1 applied to |0...0>.
    psi: the target (pulled back through the oracle layer in full mode)
    with blocks B..i+1 undone.
    """
    B = len(circ.gates)
    if not 1 <= i <= B:
        raise ValueError(f"block index {i} outside 1..{B}")
    n = circ.n_qubits
    phi = zero_state(n).amplitudes
    for g in circ.gates[:i - 1]:
        phi = apply_gate_array(phi, n, g.start, g.width, g.matrix)
    psi = _prepare_target(target, FitConfig(mode=mode), circ, bases)
    for g in reversed(circ.gates[i:]):
        psi = apply_gate_array(psi, n, g.start, g.width, g.matrix, transpose=True)
    return StateVector(phi), StateVector(psi)


def _window_views(phi, psi, window):
    start, width = window
    phi, psi = _as_amplitudes(phi), _as_amplitudes(psi)
    n = phi.size.bit_length() - 1
    if psi.size != phi.size:
        raise ValueError("phi and psi sizes differ")
    if start < 0 or width < 1 or start + width > n:
        raise ValueError(f"window ({start}, {width}) does not fit in {n} qubits")
    shape = (2 ** start, 2 ** width, 2 ** (n - start - width))
    return phi.reshape(shape), psi.reshape(shape)


def assemble_fi_direct(phi, psi, window: tuple[int, int]) -> np.ndarray:
    """F_ab = sum over the other qubits of psi[a, rest] * phi[b, rest]."""
    p3, q3 = _window_views(phi, psi, window)
    return np.tensordot(q3, p3, axes=([0, 2], [0, 2]))


def hadamard_test_values(phi, psi, window, strings: Sequence[PauliString]) -> np.ndarray:
    """Exact <Phi| sigma |Psi> for each string (complex; real on the even-Y set)."""
    p3, q3 = _window_views(phi, psi, window)
    M = p3.shape[1]
    a = np.arange(M)
    vals = np.empty(len(strings), dtype=complex)
    for t, s in enumerate(strings):
        flip, sign = s.masks()
        # (R psi)[a] = sign(a ^ flip) * psi[a ^ flip], sigma = phase * R
        src = a ^ flip
        rpsi = q3[:, src, :] * _parity_sign(src & sign)[None, :, None]
        vals[t] = s.phase() * np.sum(p3 * rpsi)
    return vals


def _term_rng(seed: int, sweep: int, block: int, term: int) -> np.random.Generator:
    return np.random.default_rng([seed, sweep, block, term])


def sample_hadamard(values: np.ndarray, strings: Sequence[PauliString], shots: int,
                    seed: int, sweep: int = 0, block: int = 0) -> np.ndarray:
    """Idealized Hadamard-test estimates from ``shots`` Bernoulli draws per term.

    Even-Y strings use the real-part test, the others the imaginary-part
    test; each term has its own RNG substream.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    est = np.empty(len(values), dtype=complex)
    for t, (v, s) in enumerate(zip(values, strings)):
        part = v.real if s.in_A else v.imag
        p = np.clip(0.5 * (1.0 + part), 0.0, 1.0)
        k = _term_rng(seed, sweep, block, t).binomial(shots, p)
        e = 2.0 * k / shots - 1.0
        est[t] = e if s.in_A else 1j * e
    return est


def _fi_from_values(values, strings, M) -> np.ndarray:
    F = np.zeros((M, M), dtype=complex)
    b = np.arange(M)
    for v, s in zip(values, strings):
        flip, sign = s.masks()
        F[b ^ flip, b] += v * s.phase() * _parity_sign(b & sign)
    return F.real / M


def assemble_fi_pauli(phi, psi, window: tuple[int, int], estimator: str = "exact",
                      shots: int = 1000, seed: int = 0, pauli_set: str = "full",
                      sweep: int = 0, block: int = 0, stats: dict | None = None) -> np.ndarray:
    """F_i rebuilt as sum_alpha (<Phi|sigma_alpha|Psi> / M) sigma_alpha."""
    if estimator not in ("exact", "shots"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if estimator == "shots" and shots < 1:
        raise ValueError("shots must be >= 1")
    for name, v in (("phi", phi), ("psi", psi)):
        nrm = np.linalg.norm(_as_amplitudes(v))
        if nrm > 1.0 + 1e-8 or (name == "phi" and abs(nrm - 1.0) > 1e-8):
            raise ValueError(f"{name} is not normalized (norm {nrm:.12f})")
    start, width = window
    strings = pauli_strings(width, "A" if pauli_set == "A" else "all")
    vals = hadamard_test_values(phi, psi, window, strings)
    if estimator == "shots":
        vals = sample_hadamard(vals, strings, shots, seed, sweep, block)
    if stats is not None:
        stats["terms"] = stats.get("terms", 0) + len(strings)
        if estimator == "shots":
            stats["shots"] = stats.get("shots", 0) + shots * len(strings)
    return _fi_from_values(vals, strings, 2 ** width)


def update_block(Fi) -> np.ndarray:
    """Orthogonal V = X @ Yt from Fi = X diag(s) Yt."""
    X, _, Yt = svd(Fi)
    return X @ Yt


def fidelity(circ: BlockCircuit, target, mode: str = "coef", bases=None) -> float:
    """<target| circuit |0>, with the target normalized."""
    amps = _prepare_target(target, FitConfig(mode=mode), circ, bases)
    n = circ.n_qubits
    psi = zero_state(n).amplitudes
    for g in circ.gates:
        psi = apply_gate_array(psi, n, g.start, g.width, g.matrix)
    return float(amps @ psi)


@dataclass
class FitReport:
    trace: list[dict] = field(default_factory=list)
    sweep_fidelity: list[float] = field(default_factory=list)
    circuit: BlockCircuit | None = None
    mps: MPS | None = None
    wall_time: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def final_fidelity(self) -> float:
        return self.sweep_fidelity[-1] if self.sweep_fidelity else float("nan")


def _forward_psis(circ, target):
    n, B = circ.n_qubits, len(circ.gates)
    psis = [None] * B
    psis[B - 1] = target
    for j in range(B - 1, 0, -1):
        g = circ.gates[j]
        psis[j - 1] = apply_gate_array(psis[j], n, g.start, g.width, g.matrix, transpose=True)
    return psis


def _forward_phis(circ):
    n, B = circ.n_qubits, len(circ.gates)
    phis = [zero_state(n).amplitudes]
    for g in circ.gates[:B - 1]:
        phis.append(apply_gate_array(phis[-1], n, g.start, g.width, g.matrix))
    return phis


def run_fit(target, layout: BlockCircuit, config: FitConfig | None = None,
            bases: Sequence[OrthoBasis1D] | None = None, progress=None) -> FitReport:
    """Sweep over the blocks of ``layout`` maximizing the overlap with ``target``.

    ``layout`` supplies the block structure and initial matrices (it is not
    modified). In coef mode the target is the coefficient state; in full
    mode it is the grid state and ``bases`` fix the oracle layer.
    """
    config = config or FitConfig()
    t0 = time.perf_counter()
    circ = layout.copy()
    tgt = _prepare_target(target, config, circ, bases)
    n, B = circ.n_qubits, len(circ.gates)
    report = FitReport(circuit=circ, stats={"terms": 0, "shots": 0})
    use_pauli = config.estimator == "shots" or config.via_pauli

    def do_update(j, phi, psi, sweep):
        g = circ.gates[j]
        window = (g.start, g.width)
        F_exact = assemble_fi_direct(phi, psi, window)
        if use_pauli:
            F = assemble_fi_pauli(phi, psi, window, config.estimator, config.shots,
                                  config.seed, config.pauli_set, sweep, j, report.stats)
        else:
            F = F_exact
        V = update_block(F)
        g.matrix = V
        fid = float(np.sum(V * F_exact))
        if not np.isfinite(fid):
            raise NumericalError(f"fidelity became {fid} at sweep {sweep}, block {j + 1}")
        report.trace.append({"sweep": sweep, "block": j + 1, "fidelity": fid,
                             "estimator": config.estimator,
                             "shots": config.shots if config.estimator == "shots" else 0})
        return fid

    try:
        _sweeps(config, circ, tgt, n, B, do_update, report, progress)
    except KeyboardInterrupt:
        # keep what has been completed so far; the caller decides what to flush
        report.stats["interrupted"] = True
    if circ.layout.get("kind") == "vmps":
        report.mps = extract_mps(circ)
    report.wall_time = time.perf_counter() - t0
    return report


def _sweeps(config, circ, tgt, n, B, do_update, report, progress):
    prev = None
    fid = float("nan")
    for sweep in range(1, config.n_iter + 1):
        psis = _forward_psis(circ, tgt)
        phi = zero_state(n).amplitudes
        for j in range(B):
            fid = do_update(j, phi, psis[j], sweep)
            g = circ.gates[j]
            phi = apply_gate_array(phi, n, g.start, g.width, g.matrix)
        if config.sweep == "back_and_forth" and B > 1:
            phis = _forward_phis(circ)
            psi = tgt.copy()
            for j in range(B - 2, -1, -1):
                g = circ.gates[j + 1]
                psi = apply_gate_array(psi, n, g.start, g.width, g.matrix, transpose=True)
                fid = do_update(j, phis[j], psi, sweep)
        report.sweep_fidelity.append(fid)
        log.debug("sweep %d/%d fidelity %.12f", sweep, config.n_iter, fid)
        if progress is not None:
            progress(sweep, fid)
        if config.early_stop_tol is not None and prev is not None and fid - prev < config.early_stop_tol:
            break
        prev = fid


def write_trace_csv(report: FitReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep", "block", "fidelity", "estimator", "shots"])
        for row in report.trace:
            w.writerow([row["sweep"], row["block"], repr(row["fidelity"]),
                        row["estimator"], row["shots"]])


def function_mps(mps: MPS, mode: str, bases: Sequence[OrthoBasis1D] | None = None) -> MPS:
    """MPS of expansion coefficients for the fitted (unit-scale) function.

    In coef mode the circuit amplitudes are the coefficients. In full mode
    the oracle maps |l> to P_l / sqrt(c_l), so coefficients pick up a
    1/sqrt(c_l) factor per mode.
    """
    if mode == "coef":
        return mps
    if bases is None:
        raise ValueError("full mode needs the bases")
    from .mps import scale_physical
    return scale_physical(mps, [1.0 / np.sqrt(b.c) for b in bases])
