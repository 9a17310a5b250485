"""Real statevector simulation of contiguous-block circuits.

Qubit 0 is the most significant bit of the basis index. A register of
width m starting at qubit s therefore occupies bits n-s-m .. n-s-1, and
the basis state |l1>|l2>...|ld> of d equal registers has index
l1*D^(d-1) + ... + ld.

Inside a block window the same MSB-first rule applies: for a block of the
state-preparation circuit the physical label l sits in the leading m_deg
qubits and the outgoing bond label k in the trailing m_bd qubits, so the
row label is l*r + k. An incoming bond k occupies the leading m_bd qubits
of the window, i.e. column label k * 2**(width - m_bd).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mps import MPS
from .numkernel import complete_to_unitary, haar_random_orthogonal
from .ortho import OrthoBasis1D, check_discrete_orthogonality


def _log2(n: int, what: str) -> int:
    m = int(n).bit_length() - 1
    if n < 1 or 2 ** m != n:
        raise ValueError(f"{what}={n} is not a power of two")
    return m


@dataclass
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.float64).reshape(-1)
        _log2(self.amplitudes.size, "state length")

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def zero_state(n_qubits: int) -> StateVector:
    psi = np.zeros(2 ** n_qubits)
    psi[0] = 1.0
    return StateVector(psi)


@dataclass
class BlockGate:
    start: int
    width: int
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        M = 2 ** self.width
        if self.matrix.shape != (M, M):
            raise ValueError(f"gate of width {self.width} needs a {M}x{M} matrix, got {self.matrix.shape}")
        if not np.allclose(self.matrix.T @ self.matrix, np.eye(M), atol=1e-10, rtol=0):
            raise ValueError("gate matrix is not orthogonal")


@dataclass
class BlockCircuit:
    n_qubits: int
    gates: list[BlockGate] = field(default_factory=list)
    layout: dict = field(default_factory=dict)

    def __post_init__(self):
        for g in self.gates:
            if g.start < 0 or g.start + g.width > self.n_qubits:
                raise ValueError(f"gate on qubits [{g.start}, {g.start + g.width}) "
                                 f"does not fit in {self.n_qubits} qubits")

    def copy(self) -> "BlockCircuit":
        gates = [BlockGate(g.start, g.width, g.matrix.copy()) for g in self.gates]
        return BlockCircuit(self.n_qubits, gates, dict(self.layout))


def apply_gate_array(psi: np.ndarray, n: int, start: int, width: int,
                     matrix: np.ndarray, transpose: bool = False) -> np.ndarray:
    """Apply a block matrix to qubits [start, start+width) of a flat state."""
    view = psi.reshape(2 ** start, 2 ** width, 2 ** (n - start - width))
    G = matrix.T if transpose else matrix
    return np.matmul(G, view).reshape(-1)


def apply_circuit(circ: BlockCircuit, psi: StateVector | np.ndarray,
                  adjoint: bool = False) -> StateVector:
    """Apply ``circ`` (or its transpose, gates reversed) to ``psi``."""
    amps = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi, dtype=np.float64)
    if amps.size != 2 ** circ.n_qubits:
        raise ValueError(f"state has {amps.size} amplitudes, circuit acts on {circ.n_qubits} qubits")
    gates = reversed(circ.gates) if adjoint else circ.gates
    out = amps.astype(np.float64, copy=True)
    for g in gates:
        out = apply_gate_array(out, circ.n_qubits, g.start, g.width, g.matrix, transpose=adjoint)
    return StateVector(out)


def circuit_state(circ: BlockCircuit) -> StateVector:
    return apply_circuit(circ, zero_state(circ.n_qubits))


def _place_columns(M: int, positions: Sequence[int], cols: np.ndarray) -> np.ndarray:
    """Orthogonal M x M matrix whose column positions[k] equals cols[:, k]."""
    Q = complete_to_unitary(cols)
    K = len(positions)
    out = np.empty((M, M))
    out[:, list(positions)] = Q[:, :K]
    taken = set(positions)
    rest = [j for j in range(M) if j not in taken]
    out[:, rest] = Q[:, K:]
    return out


# -- state-preparation circuit ------------------------------------------

def vmps_windows(d: int, m_deg: int, m_bd: Sequence[int]) -> list[tuple[int, int]]:
    """(start, width) of each block of the staircase circuit."""
    wins = [((i - 1) * m_deg, m_deg + m_bd[i - 1]) for i in range(1, d - 1)]
    wins.append(((d - 2) * m_deg, 2 * m_deg))
    return wins


def _vmps_layout(d: int, m_deg: int, m_bd: Sequence[int]) -> dict:
    return {"kind": "vmps", "d": d, "m_deg": m_deg, "m_bd": list(m_bd)}


def build_vmps(mps: MPS) -> BlockCircuit:
    """Staircase circuit whose output amplitudes are the MPS entries.

    The MPS must be right-canonical with unit norm, D = 2**m_deg and every
    bond a power of two no larger than D.
    """
    d, D = mps.d, mps.D
    m_deg = _log2(D, "D")
    m_bd = [_log2(r, "bond dimension") for r in mps.bonds]
    if max(m_bd) > m_deg:
        raise ValueError(f"bond dimensions {mps.bonds} exceed D={D}")
    if abs(np.linalg.norm(mps.cores[0]) - 1.0) > 1e-10:
        raise ValueError("first core must have unit norm (normalize the MPS)")
    wins = vmps_windows(d, m_deg, m_bd)
    gates = []

    U1 = mps.cores[0]
    w = wins[0][1]
    gates.append(BlockGate(0, w, _place_columns(2 ** w, [0], U1.reshape(-1, 1))))
    for i in range(2, d):
        start, w = wins[i - 1]
        c = mps.cores[i - 1]
        r_in = c.shape[0]
        stride = 2 ** (w - m_bd[i - 2])
        cols = c.reshape(r_in, -1).T
        gates.append(BlockGate(start, w, _place_columns(2 ** w, [k * stride for k in range(r_in)], cols)))
    return BlockCircuit(d * m_deg, gates, _vmps_layout(d, m_deg, m_bd))


def vmps_skeleton(d: int, D: int, r, seed: int) -> BlockCircuit:
    """Staircase circuit with Haar-random blocks (fit initialization)."""
    m_deg = _log2(D, "D")
    rs = [int(r)] * (d - 2) if np.ndim(r) == 0 else [int(x) for x in r]
    m_bd = [_log2(x, "bond dimension") for x in rs]
    if max(m_bd) > m_deg:
        raise ValueError(f"bond dimension {max(rs)} exceeds D={D}")
    seeds = np.random.default_rng(seed).integers(0, 2 ** 63, size=d - 1)
    gates = [BlockGate(s, w, haar_random_orthogonal(2 ** w, int(sd)))
             for (s, w), sd in zip(vmps_windows(d, m_deg, m_bd), seeds)]
    return BlockCircuit(d * m_deg, gates, _vmps_layout(d, m_deg, m_bd))


def extract_mps(circ: BlockCircuit) -> MPS:
    """Read the MPS cores out of a staircase circuit."""
    lay = circ.layout
    if lay.get("kind") != "vmps":
        raise ValueError("circuit does not have the staircase layout")
    d, m_deg, m_bd = lay["d"], lay["m_deg"], lay["m_bd"]
    wins = vmps_windows(d, m_deg, m_bd)
    if len(circ.gates) != d - 1 or circ.n_qubits != d * m_deg:
        raise ValueError("gate count or qubit count does not match the layout")
    for g, (s, w) in zip(circ.gates, wins):
        if (g.start, g.width) != (s, w):
            raise ValueError(f"gate at ({g.start}, {g.width}) but layout expects ({s}, {w})")
    D = 2 ** m_deg
    rs = [2 ** m for m in m_bd]
    cores = [circ.gates[0].matrix[:, 0].reshape(D, rs[0]).copy()]
    for i in range(2, d):
        g = circ.gates[i - 1]
        r_in = rs[i - 2]
        stride = 2 ** (g.width - m_bd[i - 2])
        cols = g.matrix[:, [k * stride for k in range(r_in)]]
        right = rs[i - 1] if i < d - 1 else D
        cores.append(cols.T.reshape(r_in, D, right).copy())
    return MPS(cores)


# -- orthogonal-function oracles ----------------------------------------

def vof_matrix(basis: OrthoBasis1D) -> np.ndarray:
    """n_gr x n_gr orthogonal matrix whose column l < D is |P_l>."""
    _log2(basis.n_gr, "n_gr")
    dev = check_discrete_orthogonality(basis)
    if dev > 1e-9 * max(1.0, basis.n_gr):
        raise ValueError(f"basis is not discretely orthogonal (deviation {dev:.3e})")
    cols = basis.grid_matrix() / np.sqrt(basis.c)[None, :]
    return _place_columns(basis.n_gr, list(range(basis.D)), cols)


def build_vof(basis: OrthoBasis1D, start: int = 0) -> BlockGate:
    m_gr = _log2(basis.n_gr, "n_gr")
    return BlockGate(start, m_gr, vof_matrix(basis))


def _controlled_on(N: int, l: int, V: np.ndarray) -> np.ndarray:
    """|l><l| (x) V + sum_{l' != l} |l'><l'| (x) I on two N-level registers."""
    G = np.eye(N * N)
    G[l * N:(l + 1) * N, l * N:(l + 1) * N] = V
    return G


def _reset_gate(N: int, l: int, p: np.ndarray) -> np.ndarray:
    """(V_set^l)^T (x) |p><p| + I (x) (I - |p><p|)."""
    Pset = np.zeros((N, N))
    Pset[np.arange(N) ^ l, np.arange(N)] = 1.0  # X gates on the set bits of l
    proj = np.outer(p, p)
    return np.kron(Pset.T, proj) + np.kron(np.eye(N), np.eye(N) - proj)


def build_vof_controlled(basis: OrthoBasis1D, swap: bool = True) -> BlockCircuit:
    """Oracle assembled from controlled state preparations and resets.

    Acts on a label register followed by an ancilla register, both m_gr
    qubits. Without the final swap, |l>|0> -> |0>|P_l>; with it,
    |l>|0> -> |P_l>|0>.
    """
    m_gr = _log2(basis.n_gr, "n_gr")
    N = basis.n_gr
    vof = vof_matrix(basis)
    gates = []
    for l in range(basis.D):
        prep = complete_to_unitary(vof[:, [l]])
        gates.append(BlockGate(0, 2 * m_gr, _controlled_on(N, l, prep)))
    for l in range(basis.D):
        gates.append(BlockGate(0, 2 * m_gr, _reset_gate(N, l, vof[:, l])))
    if swap:
        S = np.zeros((N * N, N * N))
        a, b = np.divmod(np.arange(N * N), N)
        S[b * N + a, a * N + b] = 1.0
        gates.append(BlockGate(0, 2 * m_gr, S))
    return BlockCircuit(2 * m_gr, gates, {"kind": "vof_controlled", "swap": swap})


# -- full approximation circuit -----------------------------------------

def _bypass(V: np.ndarray, top: int, pad: int, low: int) -> np.ndarray:
    """V acting on (top, low) qubits with ``pad`` untouched qubits in between."""
    if pad == 0:
        return V
    A, P, B = 2 ** top, 2 ** pad, 2 ** low
    V4 = V.reshape(A, B, A, B)
    G = np.einsum("abcd,pq->apbcqd", V4, np.eye(P))
    return G.reshape(A * P * B, A * P * B)


def _pad_low_permutation(m_deg: int, pad: int) -> np.ndarray:
    """Permutation taking label l*2^pad + q to q*2^m_deg + l."""
    D, P = 2 ** m_deg, 2 ** pad
    l, q = np.divmod(np.arange(D * P), P)
    Pi = np.zeros((D * P, D * P))
    Pi[q * D + l, l * P + q] = 1.0
    return Pi


def build_vapp(mps: MPS, bases: Sequence[OrthoBasis1D]) -> BlockCircuit:
    """State-preparation circuit followed by one oracle per register.

    Register i has m_gr_i qubits; its leading m_deg qubits carry the degree
    label and the m_gr_i - m_deg padding qubits are the least significant.
    Staircase blocks skip over the padding of their register.
    """
    d = mps.d
    if len(bases) != d:
        raise ValueError(f"need {d} bases")
    inner = build_vmps(mps)
    m_deg = inner.layout["m_deg"]
    m_bd = inner.layout["m_bd"]
    m_gr = [_log2(b.n_gr, "n_gr") for b in bases]
    for b in bases:
        if b.D != mps.D:
            raise ValueError(f"basis D={b.D} does not match MPS D={mps.D}")
    pads = [m - m_deg for m in m_gr]
    reg_start = np.concatenate([[0], np.cumsum(m_gr)]).astype(int)
    gates = []
    for i, g in enumerate(inner.gates):
        low = m_bd[i] if i < d - 2 else m_deg
        G = _bypass(g.matrix, m_deg, pads[i], low)
        gates.append(BlockGate(int(reg_start[i]), m_deg + pads[i] + low, G))
    n_mps_gates = len(gates)
    for i, b in enumerate(bases):
        G = vof_matrix(b) @ _pad_low_permutation(m_deg, pads[i])
        gates.append(BlockGate(int(reg_start[i]), m_gr[i], G))
    layout = {"kind": "vapp", "d": d, "m_deg": m_deg, "m_bd": list(m_bd),
              "m_gr": m_gr, "n_mps_gates": n_mps_gates}
    return BlockCircuit(int(reg_start[-1]), gates, layout)


# -- sliding-block circuit ----------------------------------------------

def build_sliding_circuit(d: int, m_deg: int, m_bl: int, seed: int) -> BlockCircuit:
    """Haar-random m_bl-qubit blocks displaced one qubit at a time."""
    n = d * m_deg
    if not 2 <= m_bl <= n - 1:
        raise ValueError(f"m_bl={m_bl} outside [2, {n - 1}]")
    count = n - m_bl + 1
    seeds = np.random.default_rng(seed).integers(0, 2 ** 63, size=count)
    gates = [BlockGate(t, m_bl, haar_random_orthogonal(2 ** m_bl, int(s)))
             for t, s in enumerate(seeds)]
    return BlockCircuit(n, gates, {"kind": "sliding", "d": d, "m_deg": m_deg, "m_bl": m_bl})


def sliding_dof(d: int, m_deg: int, m_bl: int) -> int:
    n = d * m_deg
    if not 2 <= m_bl <= n - 1:
        raise ValueError(f"m_bl={m_bl} outside [2, {n - 1}]")
    return 2 ** m_bl + 2 ** (2 * m_bl - 1) * (n - m_bl)
