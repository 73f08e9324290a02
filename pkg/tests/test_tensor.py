import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otbarrier.errors import DimensionError
from otbarrier.tensor import (
    ProductOperator,
    as_tensor,
    chol_logdet,
    coords_to_herm,
    herm_to_coords,
    hermitian_basis,
    kron_lift,
    kron_sum,
    marginal,
    pair_marginal,
    partial_trace_except,
    spectral_bundle,
)

from conftest import random_hermitian


def test_as_tensor_row_major():
    T = as_tensor(range(6), (2, 3))
    assert T[1, 0] == 3
    with pytest.raises(DimensionError):
        as_tensor(range(5), (2, 3))


def test_marginal_matches_loops(rng):
    V = rng.random((2, 3, 4))
    for i in range(3):
        ref = np.zeros(V.shape[i])
        for idx in itertools.product(*map(range, V.shape)):
            ref[idx[i]] += V[idx]
        assert np.allclose(marginal(V, i), ref, atol=1e-14)


def test_pair_marginal_orientation(rng):
    V = rng.random((2, 3, 4))
    M = pair_marginal(V, 2, 0)
    assert M.shape == (4, 2)
    ref = np.zeros((4, 2))
    for a, b, c in itertools.product(range(2), range(3), range(4)):
        ref[c, a] += V[a, b, c]
    assert np.allclose(M, ref, atol=1e-14)


def test_mode_out_of_range():
    with pytest.raises(DimensionError):
        marginal(np.ones((2, 2)), 2)


def _ptrace_loops(M, dims, i):
    N = M.shape[0]
    idx = list(itertools.product(*map(range, dims)))
    out = np.zeros((dims[i], dims[i]), dtype=complex)
    for r in range(N):
        for c in range(N):
            I, J = idx[r], idx[c]
            if all(I[k] == J[k] for k in range(len(dims)) if k != i):
                out[I[i], J[i]] += M[r, c]
    return out


@pytest.mark.parametrize("dims", [(2, 2), (2, 3), (3, 2), (2, 2, 2), (2, 3, 2)])
def test_partial_trace_matches_loops(rng, dims):
    N = int(np.prod(dims))
    M = random_hermitian(rng, N)
    H = ProductOperator(dims, M)
    for i in range(len(dims)):
        assert np.allclose(partial_trace_except(H, i), _ptrace_loops(M, dims, i), atol=1e-13)


def test_partial_trace_of_product(rng):
    A, B = random_hermitian(rng, 2), random_hermitian(rng, 3)
    H = ProductOperator((2, 3), np.kron(A, B))
    assert np.allclose(partial_trace_except(H, 0), A * np.trace(B))
    assert np.allclose(partial_trace_except(H, 1), B * np.trace(A))


def test_kron_lift_matches_index_rule(rng):
    dims = (2, 3, 2)
    U = random_hermitian(rng, 3)
    L = kron_lift(U, dims, 1).matrix
    idx = list(itertools.product(*map(range, dims)))
    for r, I in enumerate(idx):
        for c, J in enumerate(idx):
            want = U[I[1], J[1]] if (I[0] == J[0] and I[2] == J[2]) else 0.0
            assert L[r, c] == want


def test_kron_sum_and_trace_duality(rng):
    dims = (2, 3)
    Xs = [random_hermitian(rng, n) for n in dims]
    M = random_hermitian(rng, 6)
    S = kron_sum(Xs, dims)
    lhs = np.vdot(M, S).real
    rhs = sum(np.vdot(partial_trace_except(ProductOperator(dims, M), i), X).real
              for i, X in enumerate(Xs))
    assert abs(lhs - rhs) < 1e-12


def test_spectral_bundle(rng):
    H = random_hermitian(rng, 5)
    sb = spectral_bundle(H)
    assert np.all(np.diff(sb.eigenvalues) <= 0)
    assert np.isclose(sb.norm2, np.linalg.norm(H, 2))
    assert np.isclose(sb.normF, np.linalg.norm(H))


def test_chol_logdet(rng):
    B = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    H = B @ B.conj().T + np.eye(4)
    ld, ok = chol_logdet(H)
    assert ok and np.isclose(ld, np.linalg.slogdet(H)[1])
    ld, ok = chol_logdet(np.diag([1.0, -1.0]))
    assert not ok and np.isnan(ld)
    _, ok = chol_logdet(np.diag([1.0, 1e-14]))
    assert not ok


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_coords_isometry(n, seed):
    rng = np.random.default_rng(seed)
    A, B = random_hermitian(rng, n), random_hermitian(rng, n)
    a, b = herm_to_coords(A), herm_to_coords(B)
    assert np.allclose(coords_to_herm(a, n), A, atol=1e-14)
    assert abs(a @ b - np.vdot(A, B).real) < 1e-12


def test_hermitian_basis_orthonormal():
    for n in (1, 2, 3):
        B = hermitian_basis(n)
        G = np.einsum("kab,lba->kl", B, B).real
        assert np.allclose(G, np.eye(n * n))
        for k in range(n * n):
            e = np.zeros(n * n)
            e[k] = 1.0
            assert np.allclose(coords_to_herm(e, n), B[k])
        assert not B.flags.writeable
