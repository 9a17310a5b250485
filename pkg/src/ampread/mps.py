"""Matrix product states for coefficient tensors.

Cores follow the layout used by the state-preparation circuit: the last
core carries two physical indices, so an order-d tensor has d-1 cores::

    a[l1, ..., ld] = sum_k U1[l1, k1] U2[k1, l2, k2] ... U{d-1}[k_{d-2}, l_{d-1}, l_d]

with shapes U1: (D, r1), Ui: (r_{i-1}, D, r_i), U{d-1}: (r_{d-2}, D, D).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numkernel import haar_random_orthogonal, svd
from .ortho import GridTensor, OrthoBasis1D

#: refuse to materialize dense tensors larger than this many entries
MAX_DENSE_ENTRIES = 2 ** 27


@dataclass
class MPS:
    cores: list[np.ndarray]
    stored_norm: float = field(default=float("nan"))

    def __post_init__(self):
        self.cores = [np.asarray(c, dtype=np.float64) for c in self.cores]
        if len(self.cores) < 2:
            raise ValueError("an MPS in this layout needs d >= 3 (at least two cores)")
        D = self.cores[0].shape[0]
        if self.cores[0].ndim != 2:
            raise ValueError("first core must be a (D, r1) matrix")
        prev = self.cores[0].shape[1]
        for i, c in enumerate(self.cores[1:-1], start=2):
            if c.ndim != 3 or c.shape[0] != prev or c.shape[1] != D:
                raise ValueError(f"core {i} has shape {c.shape}, expected ({prev}, {D}, r)")
            prev = c.shape[2]
        last = self.cores[-1]
        if last.shape != (prev, D, D):
            raise ValueError(f"last core has shape {last.shape}, expected ({prev}, {D}, {D})")
        if np.isnan(self.stored_norm):
            self.stored_norm = float(np.linalg.norm(self.cores[0]))

    @property
    def d(self) -> int:
        return len(self.cores) + 1

    @property
    def D(self) -> int:
        return self.cores[0].shape[0]

    @property
    def bonds(self) -> list[int]:
        return [self.cores[0].shape[1]] + [c.shape[2] for c in self.cores[1:-1]]

    def norm(self) -> float:
        """Exact 2-norm of the represented tensor (no canonical form assumed)."""
        last = self.cores[-1]
        E = last.reshape(last.shape[0], -1)
        E = E @ E.T
        for c in reversed(self.cores[1:-1]):
            E = np.einsum("alm,mn,bln->ab", c, E, c)
        U1 = self.cores[0]
        return float(np.sqrt(max(np.einsum("la,ab,lb->", U1, E, U1), 0.0)))

    def normalized(self) -> "MPS":
        cores = list(self.cores)
        nrm = self.norm()
        if nrm == 0.0:
            raise ValueError("zero MPS cannot be normalized")
        cores[0] = cores[0] / nrm
        return MPS(cores)


def _as_rlist(r_max, ncuts: int) -> list[int]:
    if np.ndim(r_max) == 0:
        rl = [int(r_max)] * ncuts
    else:
        rl = [int(v) for v in r_max]
        if len(rl) != ncuts:
            raise ValueError(f"need {ncuts} bond caps, got {len(rl)}")
    if min(rl) < 1:
        raise ValueError("bond caps must be >= 1")
    return rl


def canonicalize(dense: GridTensor | np.ndarray, r_max, tol: float = 0.0):
    """Right-canonical MPS of a dense tensor by sweeping SVDs from the right.

    Parameters
    ----------
    dense : GridTensor or ndarray
        Order-d tensor, d >= 3, all extents equal.
    r_max : int or sequence of d-2 ints
        Bond cap per cut (cut j sits between core j and core j+1).
    tol : float
        Singular values <= tol * s_max are dropped in addition to the cap.
        The default 0 keeps min(r_max, rank bound) values regardless of size.

    Returns
    -------
    mps : MPS
        Cores 2..d-1 satisfy the right-canonical Gram conditions; the first
        core carries the norm.
    eps : list of float
        Per-cut truncation error C^2 - sum of kept squared singular values,
        ordered by cut index.
    """
    T = dense.values if isinstance(dense, GridTensor) else np.asarray(dense, dtype=np.float64)
    d = T.ndim
    if d < 3:
        raise ValueError("canonicalize needs d >= 3")
    D = T.shape[0]
    if any(n != D for n in T.shape):
        raise ValueError(f"all extents must be equal, got {T.shape}")
    C2 = float(np.sum(T * T))
    if C2 == 0.0:
        raise ValueError("zero tensor")
    caps = _as_rlist(r_max, d - 2)
    cores: list[np.ndarray] = [None] * (d - 1)
    eps = [0.0] * (d - 2)

    psi = T.reshape(D ** (d - 2), D * D)
    right_shape = (D, D)
    for n in range(1, d - 1):
        cut = d - n - 1
        X, s, Yt = svd(psi, full=False)
        k = min(caps[cut - 1], len(s))
        if tol > 0.0 and s[0] > 0.0:
            k = max(1, min(k, int(np.sum(s > tol * s[0]))))
        cores[cut] = Yt[:k].reshape((k,) + right_shape)
        eps[cut - 1] = max(C2 - float(np.sum(s[:k] ** 2)), 0.0)
        psi = X[:, :k] * s[:k]
        if cut > 1:
            psi = psi.reshape(D ** (cut - 1), D * k)
            right_shape = (D, k)
    cores[0] = psi
    return MPS(cores), eps


def reconstruct_dense(mps: MPS, max_entries: int = MAX_DENSE_ENTRIES) -> GridTensor:
    size = mps.D ** mps.d
    if size > max_entries:
        raise MemoryError(f"dense tensor needs {size} entries (cap {max_entries})")
    T = mps.cores[0]
    for c in mps.cores[1:]:
        T = np.tensordot(T, c, axes=([-1], [0]))
    return GridTensor(T)


def check_right_canonical(mps: MPS) -> float:
    dev = 0.0
    for c in mps.cores[1:]:
        M = c.reshape(c.shape[0], -1)
        dev = max(dev, float(np.max(np.abs(M @ M.T - np.eye(M.shape[0])))))
    return dev


def dof_count(d: int, D: int, r: int) -> int:
    """Parameter count r*D + (d-3)*r^2*D + r*D^2 of the uniform-bond MPS."""
    if d < 3:
        raise ValueError("d must be >= 3")
    return r * D + (d - 3) * r * r * D + r * D * D


def _check_eval_bases(mps: MPS, bases: Sequence[OrthoBasis1D]):
    if len(bases) != mps.d:
        raise ValueError(f"MPS has d={mps.d} but {len(bases)} bases were given")
    for i, b in enumerate(bases):
        if b.D != mps.D:
            raise ValueError(f"basis {i} has D={b.D}, MPS has D={mps.D}")


def mps_eval(mps: MPS, bases: Sequence[OrthoBasis1D], x) -> float:
    """Value of sum_l a_l P_l(x) for an MPS-represented coefficient tensor.

    Contracts each core with its basis vector first, then chains the bond
    contractions: O(d r^2 D + r D^2) operations.
    """
    _check_eval_bases(mps, bases)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if len(x) != mps.d:
        raise ValueError(f"point has {len(x)} coordinates, expected {mps.d}")
    v = [b.matrix(xi)[0] for b, xi in zip(bases, x)]
    t = v[0] @ mps.cores[0]
    for c, vi in zip(mps.cores[1:-1], v[1:-2]):
        t = t @ np.tensordot(c, vi, axes=([1], [0]))
    last = mps.cores[-1] @ v[-1]
    return float(t @ (last @ v[-2]))


def mps_eval_many(mps: MPS, bases: Sequence[OrthoBasis1D], points) -> np.ndarray:
    """Vectorized :func:`mps_eval` over an (n, d) array of points."""
    _check_eval_bases(mps, bases)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    V = [b.matrix(points[:, i]) for i, b in enumerate(bases)]
    t = V[0] @ mps.cores[0]
    for c, Vi in zip(mps.cores[1:-1], V[1:-2]):
        t = np.einsum("na,alb,nl->nb", t, c, Vi)
    return np.einsum("na,alm,nl,nm->n", t, mps.cores[-1], V[-2], V[-1])


def overlap_dense(mps: MPS, target: np.ndarray) -> float:
    """sum_l a_l * mps_l, contracting the target into the cores mode by mode."""
    D, d = mps.D, mps.d
    E = mps.cores[0].T @ target.reshape(D, -1)
    for c in mps.cores[1:-1]:
        r0, _, r1 = c.shape
        E = E.reshape(r0 * D, -1)
        E = c.reshape(r0 * D, r1).T @ E
    return float(np.sum(E.reshape(-1) * mps.cores[-1].reshape(-1)))


def fidelity_dense(mps: MPS, target: GridTensor | np.ndarray) -> float:
    """Normalized overlap <a|a~> between a dense target and an MPS."""
    T = target.values if isinstance(target, GridTensor) else np.asarray(target, dtype=np.float64)
    if T.shape != (mps.D,) * mps.d:
        raise ValueError(f"target shape {T.shape} does not match MPS ({mps.D},)*{mps.d}")
    tn = float(np.sqrt(np.sum(T * T)))
    mn = mps.norm()
    if tn == 0.0 or mn == 0.0:
        raise ValueError("fidelity undefined for a zero target or zero MPS")
    return overlap_dense(mps, T) / (tn * mn)


def scale_physical(mps: MPS, weights: Sequence[np.ndarray]) -> MPS:
    """Multiply the physical index of mode i by weights[i] (a length-D vector)."""
    if len(weights) != mps.d:
        raise ValueError(f"need {mps.d} weight vectors")
    w = [np.asarray(x, dtype=np.float64) for x in weights]
    cores = [mps.cores[0] * w[0][:, None]]
    for c, wi in zip(mps.cores[1:-1], w[1:-2]):
        cores.append(c * wi[None, :, None])
    cores.append(mps.cores[-1] * w[-2][None, :, None] * w[-1][None, None, :])
    return MPS(cores)


def random_canonical_mps(d: int, D: int, r, seed: int) -> MPS:
    """Random right-canonical MPS with a unit-norm first core."""
    bonds = _as_rlist(r, d - 2)
    rng = np.random.default_rng(seed)
    sub = rng.integers(0, 2 ** 63, size=d)
    cores = []
    U1 = rng.standard_normal((D, bonds[0]))
    cores.append(U1 / np.linalg.norm(U1))
    for i in range(1, d - 2):
        rl, rr = bonds[i - 1], bonds[i]
        if rl > D * rr:
            raise ValueError(f"bond {rl} cannot be right-canonical with D*r = {D * rr}")
        Q = haar_random_orthogonal(D * rr, int(sub[i]))
        cores.append(Q[:rl].reshape(rl, D, rr))
    rl = bonds[-1]
    if rl > D * D:
        raise ValueError(f"bond {rl} exceeds D^2")
    Q = haar_random_orthogonal(D * D, int(sub[-1]))
    cores.append(Q[:rl].reshape(rl, D, D))
    return MPS(cores)


# -- AMPM1 file format ---------------------------------------------------

_AMPM_MAGIC = b"AMPM"


def write_mps(path, mps: MPS) -> None:
    bonds = mps.bonds
    header = _AMPM_MAGIC + struct.pack("<B", 1)
    header += struct.pack(f"<II{len(bonds)}I", mps.d, mps.D, *bonds)
    with open(path, "wb") as fh:
        fh.write(header)
        for c in mps.cores:
            fh.write(np.ascontiguousarray(c, dtype="<f8").tobytes())
        fh.write(struct.pack("<d", mps.stored_norm))


def read_mps(path) -> MPS:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != _AMPM_MAGIC:
        raise ValueError(f"{path}: not an AMPM file")
    (version,) = struct.unpack_from("<B", buf, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported AMPM version {version}")
    d, D = struct.unpack_from("<II", buf, 5)
    bonds = struct.unpack_from(f"<{d - 2}I", buf, 13)
    off = 13 + 4 * (d - 2)
    shapes = [(D, bonds[0])]
    shapes += [(bonds[i - 1], D, bonds[i]) for i in range(1, d - 2)]
    shapes.append((bonds[-1], D, D))
    cores = []
    for shp in shapes:
        n = int(np.prod(shp))
        cores.append(np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shp).astype(np.float64))
        off += 8 * n
    if len(buf) - off != 8:
        raise ValueError(f"{path}: trailing size mismatch")
    (nrm,) = struct.unpack_from("<d", buf, off)
    return MPS(cores, stored_norm=nrm)
