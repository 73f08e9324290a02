"""Dense tensor and Hermitian-operator kernels.

Real tensors are plain ``numpy`` arrays whose shape is the tuple of mode
dimensions (row-major, last index fastest).  Operators on a product space
are wrapped in :class:`ProductOperator` so the mode structure travels with
the matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionError


def as_tensor(entries, dims: Sequence[int]) -> np.ndarray:
    """Reshape a flat row-major array into a tensor with the given dims."""
    dims = tuple(int(n) for n in dims)
    if not dims or any(n < 1 for n in dims):
        raise DimensionError(f"dims must be positive integers, got {dims}")
    arr = np.asarray(entries, dtype=float)
    if arr.size != int(np.prod(dims)):
        raise DimensionError(
            f"{arr.size} entries do not fill a tensor of shape {dims}"
        )
    return arr.reshape(dims)


def _check_mode(i: int, d: int) -> None:
    if not 0 <= i < d:
        raise DimensionError(f"mode index {i} out of range for {d} modes")


def marginal(V: np.ndarray, i: int) -> np.ndarray:
    """Sum ``V`` over every mode except ``i`` (0-based)."""
    _check_mode(i, V.ndim)
    axes = tuple(k for k in range(V.ndim) if k != i)
    return V.sum(axis=axes) if axes else V.copy()


def pair_marginal(V: np.ndarray, i: int, j: int) -> np.ndarray:
    """Sum ``V`` over every mode except ``i`` and ``j``; result indexed [i, j]."""
    _check_mode(i, V.ndim)
    _check_mode(j, V.ndim)
    axes = tuple(k for k in range(V.ndim) if k not in (i, j))
    M = V.sum(axis=axes)
    return M if i < j else M.T


def hermitian(a) -> np.ndarray:
    """Return the Hermitian part ``(A + A*)/2`` as a complex array."""
    A = np.asarray(a, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    return 0.5 * (A + A.conj().T)


@dataclass(frozen=True)
class ProductOperator:
    """Hermitian operator on C^{n_1} x ... x C^{n_d}.

    Row and column indices are flat row-major multi-indices.
    """

    mode_dims: tuple
    matrix: np.ndarray

    def __post_init__(self):
        dims = tuple(int(n) for n in self.mode_dims)
        N = int(np.prod(dims))
        M = np.asarray(self.matrix, dtype=complex)
        if M.shape != (N, N):
            raise DimensionError(
                f"operator shape {M.shape} does not match mode dims {dims}"
            )
        object.__setattr__(self, "mode_dims", dims)
        object.__setattr__(self, "matrix", M)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def as_tensor(self) -> np.ndarray:
        """View as a 2d-mode tensor indexed (i_1..i_d, j_1..j_d)."""
        return self.matrix.reshape(self.mode_dims + self.mode_dims)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


def partial_trace_except(H: ProductOperator, i: int) -> np.ndarray:
    """Trace out every factor except ``i``; returns an ``n_i x n_i`` matrix."""
    d = len(H.mode_dims)
    _check_mode(i, d)
    T = H.as_tensor()
    # move the kept row/col axes to the front, then trace the rest pairwise
    rows = [i] + [k for k in range(d) if k != i]
    cols = [d + k for k in rows]
    T = T.transpose(rows + cols)
    n = H.mode_dims[i]
    rest = H.size // n
    T = T.reshape(n, rest, n, rest)
    return np.einsum("arbr->ab", T)


def kron_lift(U: np.ndarray, mode_dims: Sequence[int], i: int) -> ProductOperator:
    """Embed ``U`` as I x ... x U x ... x I acting on factor ``i``."""
    dims = tuple(int(n) for n in mode_dims)
    _check_mode(i, len(dims))
    U = np.asarray(U, dtype=complex)
    if U.shape != (dims[i], dims[i]):
        raise DimensionError(
            f"factor of shape {U.shape} cannot act on mode {i} of size {dims[i]}"
        )
    left = int(np.prod(dims[:i]))
    right = int(np.prod(dims[i + 1:]))
    M = np.kron(np.kron(np.eye(left), U), np.eye(right))
    return ProductOperator(dims, M)


def kron_sum(Xs: Sequence[np.ndarray], mode_dims: Sequence[int]) -> np.ndarray:
    """Return sum_i lift(X_i) as a dense matrix."""
    dims = tuple(int(n) for n in mode_dims)
    N = int(np.prod(dims))
    out = np.zeros((N, N), dtype=complex)
    for i, X in enumerate(Xs):
        out += kron_lift(X, dims, i).matrix
    return out


class SpectralBundle(NamedTuple):
    eigenvalues: np.ndarray  # descending
    lambda_min: float
    lambda_max: float
    norm2: float
    normF: float


def spectral_bundle(H) -> SpectralBundle:
    """Eigenvalues (descending) and the usual norms of a Hermitian matrix."""
    M = H.matrix if isinstance(H, ProductOperator) else np.asarray(H)
    w = np.linalg.eigvalsh(hermitian(M))[::-1]
    lmin, lmax = float(w[-1]), float(w[0])
    return SpectralBundle(
        eigenvalues=w,
        lambda_min=lmin,
        lambda_max=lmax,
        norm2=max(lmax, -lmin),
        normF=float(np.sqrt(np.sum(w * w))),
    )


def chol_logdet(H) -> tuple[float, bool]:
    """Log-determinant through Cholesky.

    Returns ``(logdet, True)`` when every pivot exceeds
    ``1e-12 * (1 + max diagonal)``, else ``(nan, False)``.
    """
    M = H.matrix if isinstance(H, ProductOperator) else np.asarray(H)
    M = hermitian(M) if np.iscomplexobj(M) else 0.5 * (M + M.T)
    diag = np.real(np.diag(M))
    tol = 1e-12 * (1.0 + float(np.max(np.abs(diag))))
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return float("nan"), False
    piv = np.abs(np.diag(L)) ** 2
    if not np.all(piv > tol):
        return float("nan"), False
    return float(np.sum(np.log(piv))), True


# -- isometric real coordinates for Hermitian matrices ---------------------


@lru_cache(maxsize=None)
def _offdiag_pairs(n: int) -> tuple:
    return tuple((p, q) for p in range(n) for q in range(p + 1, n))


def herm_to_coords(H: np.ndarray) -> np.ndarray:
    """Diagonal first, then (sqrt2 Re h_pq, sqrt2 Im h_pq) for p < q."""
    H = np.asarray(H)
    n = H.shape[0]
    out = np.empty(n * n)
    out[:n] = np.real(np.diag(H))
    if n > 1:
        p, q = np.triu_indices(n, 1)
        h = H[p, q]
        out[n::2] = np.sqrt(2.0) * h.real
        out[n + 1::2] = np.sqrt(2.0) * h.imag
    return out


def coords_to_herm(c: np.ndarray, n: int) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape != (n * n,):
        raise DimensionError(f"expected {n * n} coordinates, got {c.shape}")
    H = np.diag(c[:n]).astype(complex)
    if n > 1:
        p, q = np.triu_indices(n, 1)
        h = (c[n::2] + 1j * c[n + 1::2]) / np.sqrt(2.0)
        H[p, q] = h
        H[q, p] = h.conj()
    return H


@lru_cache(maxsize=None)
def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis B_k with ``coords(H)_k = Re tr(B_k H)``.

    Shape ``(n*n, n, n)``.  Read-only.
    """
    B = np.zeros((n * n, n, n), dtype=complex)
    for k in range(n):
        B[k, k, k] = 1.0
    s = 1.0 / np.sqrt(2.0)
    for m, (p, q) in enumerate(_offdiag_pairs(n)):
        k = n + 2 * m
        B[k, p, q] = B[k, q, p] = s
        B[k + 1, p, q] = 1j * s
        B[k + 1, q, p] = -1j * s
    B.setflags(write=False)
    return B
