"""Orthogonal function systems on grids and tensorized expansions.

A one-dimensional system is a family P_0, ..., P_{D-1} on [L, U] together
with n_gr grid points on which the family is discretely orthogonal::

    sum_j P_l(x_j) P_l'(x_j) = c_l * delta(l, l')

Multivariate expansions use tensor products of such families; coefficients
and point evaluations are computed one mode at a time.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class OrthoBasis1D:
    """One dimension's orthogonal system restricted to degrees 0..D-1."""

    kind: str
    L: float
    U: float
    D: int
    n_gr: int
    grid: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)

    def __call__(self, l, x):
        return eval_basis(self, l, x)

    def matrix(self, x) -> np.ndarray:
        """Values P_l(x_k) for every degree l, shape (len(x), D)."""
        x = _check_domain(self, x)
        return _FUNCS[self.kind](self, np.arange(self.D)[None, :], x[:, None])

    def grid_matrix(self) -> np.ndarray:
        """Values P_l(x_j) on the grid, shape (n_gr, D)."""
        return self.matrix(self.grid)


def _cosine_values(basis: OrthoBasis1D, l, x):
    return np.cos(l * np.pi * (x - basis.L) / (basis.U - basis.L))


_FUNCS: dict[str, Callable] = {"cosine": _cosine_values}
_FACTORIES: dict[str, Callable[..., OrthoBasis1D]] = {}


def register_basis(kind: str, values: Callable, factory: Callable[..., OrthoBasis1D]) -> None:
    """Register a new basis family under ``kind``."""
    _FUNCS[kind] = values
    _FACTORIES[kind] = factory


def make_basis(kind: str, L: float, U: float, D: int, n_gr: int) -> OrthoBasis1D:
    try:
        factory = _FACTORIES[kind]
    except KeyError:
        raise ValueError(f"unknown basis kind {kind!r}; known: {sorted(_FACTORIES)}") from None
    return factory(L, U, D, n_gr)


def make_cosine_basis(L: float, U: float, D: int, n_gr: int) -> OrthoBasis1D:
    """Cosine system cos(l*pi*(x-L)/(U-L)) on the midpoint grid.

    Grid points are x_j = (j + 1/2)/n_gr * (U - L) + L and the discrete
    norms are c_0 = n_gr, c_l = n_gr/2 for l >= 1.
    """
    L, U = float(L), float(U)
    if not L < U:
        raise ValueError(f"need L < U, got L={L}, U={U}")
    if D < 1:
        raise ValueError("D must be at least 1")
    if n_gr < D:
        raise ValueError(f"n_gr={n_gr} < D={D}: discrete orthogonality is unattainable")
    grid = (np.arange(n_gr) + 0.5) / n_gr * (U - L) + L
    c = np.full(D, n_gr / 2.0)
    c[0] = float(n_gr)
    grid.setflags(write=False)
    c.setflags(write=False)
    return OrthoBasis1D("cosine", L, U, int(D), int(n_gr), grid, c)


register_basis("cosine", _cosine_values, make_cosine_basis)


def _check_domain(basis: OrthoBasis1D, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if np.any(x < basis.L) or np.any(x > basis.U):
        bad = x[(x < basis.L) | (x > basis.U)][0]
        raise ValueError(f"point {bad} outside [{basis.L}, {basis.U}]; extrapolation refused")
    return x


def eval_basis(basis: OrthoBasis1D, l: int, x):
    """P_l(x). ``x`` may be a scalar or an array; points must lie in [L, U]."""
    if not 0 <= l < basis.D:
        raise ValueError(f"degree {l} out of range [0, {basis.D})")
    scalar = np.ndim(x) == 0
    vals = _FUNCS[basis.kind](basis, l, _check_domain(basis, x))
    return float(vals[0]) if scalar else vals


def check_discrete_orthogonality(basis: OrthoBasis1D) -> float:
    P = basis.grid_matrix()
    gram = P.T @ P
    return float(np.max(np.abs(gram - np.diag(basis.c))))


@dataclass
class GridTensor:
    """Dense order-d tensor (row-major, index 1 slowest) with optional norm C."""

    values: np.ndarray
    C: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def d(self) -> int:
        return self.values.ndim

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def _mode_apply(T: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Contract mode i of T with mats[i] (shape new_i x old_i), for every i."""
    for i, A in enumerate(mats):
        T = np.moveaxis(np.tensordot(A, T, axes=([1], [i])), 0, i)
    return T


def _check_bases(dims, bases, attr):
    if len(bases) != len(dims):
        raise ValueError(f"tensor has {len(dims)} modes but {len(bases)} bases were given")
    for i, (n, b) in enumerate(zip(dims, bases)):
        if n != getattr(b, attr):
            raise ValueError(f"mode {i}: extent {n} does not match basis {attr}={getattr(b, attr)}")


def coefficients_from_grid(values: GridTensor, bases: Sequence[OrthoBasis1D]) -> GridTensor:
    """Expansion coefficients a_l = (1/c_l) sum_j f(x_j) P_l(x_j).

    The returned tensor carries C = sqrt(sum a_l^2).
    """
    _check_bases(values.dims, bases, "n_gr")
    mats = [b.grid_matrix().T / b.c[:, None] for b in bases]
    a = _mode_apply(values.values, mats)
    out = GridTensor(a)
    out.C = float(np.sqrt(np.sum(a * a)))
    return out


def _point_vectors(bases, x) -> list[np.ndarray]:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if len(x) != len(bases):
        raise ValueError(f"point has {len(x)} coordinates, expected {len(bases)}")
    return [b.matrix(xi)[0] for b, xi in zip(bases, x)]


def expansion_eval(coeffs: GridTensor, bases: Sequence[OrthoBasis1D], x) -> float:
    """sum_l a_l P_l(x) at a single point."""
    _check_bases(coeffs.dims, bases, "D")
    T = coeffs.values
    for v in _point_vectors(bases, x):
        T = np.tensordot(v, T, axes=([0], [0]))
    return float(T)


def expansion_eval_many(coeffs: GridTensor, bases: Sequence[OrthoBasis1D], points) -> np.ndarray:
    """Vectorized :func:`expansion_eval` over an (n, d) array of points."""
    _check_bases(coeffs.dims, bases, "D")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    mats = [b.matrix(points[:, i]) for i, b in enumerate(bases)]
    # contract the first mode with a batch axis, then fold the rest in
    T = np.tensordot(mats[0], coeffs.values, axes=([1], [0]))
    for P in mats[1:]:
        T = np.einsum("nl,nl...->n...", P, T)
    return T


def normalization_constant(values: GridTensor) -> float:
    """C = sqrt(sum f^2); also stored on ``values.C``."""
    if values.values.size == 0:
        raise ValueError("empty tensor")
    C = float(np.sqrt(np.sum(values.values ** 2)))
    if C == 0.0:
        raise ValueError("all-zero tensor: the encoded state is undefined")
    values.C = C
    return C


# -- AMPX1 file format ---------------------------------------------------

_AMPX_MAGIC = b"AMPX"


def write_gridtensor(path, tensor: GridTensor) -> None:
    has_c = tensor.C is not None
    header = _AMPX_MAGIC + struct.pack("<BBBB", 1, 1, int(has_c), 0)
    header += struct.pack(f"<I{tensor.d}I", tensor.d, *tensor.dims)
    with open(path, "wb") as fh:
        fh.write(header)
        if has_c:
            fh.write(struct.pack("<d", tensor.C))
        fh.write(np.ascontiguousarray(tensor.values, dtype="<f8").tobytes())


def read_gridtensor(path) -> GridTensor:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != _AMPX_MAGIC:
        raise ValueError(f"{path}: not an AMPX file")
    version, dtype, has_c, _ = struct.unpack_from("<BBBB", buf, 4)
    if version != 1 or dtype != 1:
        raise ValueError(f"{path}: unsupported AMPX version {version} / dtype {dtype}")
    (d,) = struct.unpack_from("<I", buf, 8)
    dims = struct.unpack_from(f"<{d}I", buf, 12)
    off = 12 + 4 * d
    C = None
    if has_c:
        (C,) = struct.unpack_from("<d", buf, off)
        off += 8
    n = int(np.prod(dims))
    if len(buf) - off != 8 * n:
        raise ValueError(f"{path}: expected {n} entries, found {(len(buf) - off) / 8}")
    vals = np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(np.float64)
    return GridTensor(vals.reshape(dims), C)
