"""Quantum bi- and multi-partite transport.

The cost is a Hermitian operator on C^{n_1} x ... x C^{n_d}, the marginals
are positive definite densities, and a dual point is a list of Hermitian
matrices ``[X_1, ..., X_d]``.  The slack operator is
``C - sum_i I x .. x X_i x .. x I`` and the barrier-relaxation optimum is
``rho = eps * slack^{-1}`` at the dual maximizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .classical import BoundChain, ClassicalInstance
from .errors import (
    BoundViolation,
    DimensionError,
    DomainError,
    InputError,
    SingularDensityError,
)
from .tensor import (
    ProductOperator,
    chol_logdet,
    hermitian,
    kron_sum,
    partial_trace_except,
    spectral_bundle,
)

DIAG_TOL = 1e-14


def _herm_checked(A, what: str) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{what} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{what} has non-finite entries")
    scale = 1.0 + float(np.max(np.abs(A)))
    if np.max(np.abs(A - A.conj().T)) > 1e-12 * scale:
        raise InputError(f"{what} is not Hermitian")
    return hermitian(A)


@dataclass(frozen=True)
class DensityFamily:
    """Positive definite marginals with a common trace."""

    rho: tuple

    def __post_init__(self):
        rs = tuple(_herm_checked(r, f"density {i}") for i, r in enumerate(self.rho))
        if len(rs) < 2:
            raise DimensionError(f"need at least two densities, got {len(rs)}")
        for i, r in enumerate(rs):
            lmin = float(np.linalg.eigvalsh(r)[0])
            if not lmin > 0:
                raise SingularDensityError(
                    f"density {i} is not positive definite (lambda_min={lmin!r})"
                )
            r.setflags(write=False)
        tr = float(np.trace(rs[0]).real)
        for i, r in enumerate(rs[1:], start=1):
            if abs(float(np.trace(r).real) - tr) > 1e-12 * tr:
                raise InputError(
                    f"density {i} has trace {float(np.trace(r).real)!r}, expected {tr!r}"
                )
        object.__setattr__(self, "rho", rs)

    @property
    def d(self) -> int:
        return len(self.rho)

    @property
    def dims(self) -> tuple:
        return tuple(r.shape[0] for r in self.rho)

    @property
    def common_trace(self) -> float:
        return float(np.trace(self.rho[0]).real)

    @cached_property
    def lambda_mins(self) -> tuple:
        return tuple(float(np.linalg.eigvalsh(r)[0]) for r in self.rho)


@dataclass(frozen=True)
class QuantumInstance:
    C: ProductOperator
    R: DensityFamily
    name: str = field(default="", compare=False)

    def __post_init__(self):
        R = self.R if isinstance(self.R, DensityFamily) else DensityFamily(self.R)
        object.__setattr__(self, "R", R)
        C = self.C
        M = C.matrix if isinstance(C, ProductOperator) else C
        M = _herm_checked(M, "cost")
        C = ProductOperator(R.dims, M)
        C.matrix.setflags(write=False)
        object.__setattr__(self, "C", C)

    @property
    def dims(self) -> tuple:
        return self.C.mode_dims

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def N(self) -> int:
        return self.C.size

    @cached_property
    def spectrum(self):
        return spectral_bundle(self.C)

    @property
    def lambda_min(self) -> float:
        return self.spectrum.lambda_min

    @property
    def lambda_max(self) -> float:
        return self.spectrum.lambda_max

    @property
    def norm2(self) -> float:
        return self.spectrum.norm2

    @property
    def common_trace(self) -> float:
        return self.R.common_trace


def slack_operator(inst: QuantumInstance, z: Sequence[np.ndarray]) -> ProductOperator:
    if len(z) != inst.d:
        raise DimensionError(f"expected {inst.d} dual matrices, got {len(z)}")
    return ProductOperator(inst.dims, inst.C.matrix - kron_sum(z, inst.dims))


def dual_objective(inst: QuantumInstance, z) -> float:
    return float(sum(np.vdot(r, X).real for r, X in zip(inst.R.rho, z)))


def dual_functional(inst: QuantumInstance, z, eps: float) -> float:
    """sum tr(rho_i X_i) + eps log det slack + N eps (1 - log eps)."""
    ld, ok = chol_logdet(slack_operator(inst, z))
    if not ok:
        return -math.inf
    return dual_objective(inst, z) + eps * ld + inst.N * eps * (1.0 - math.log(eps))


def start_dual(inst: QuantumInstance) -> list:
    """X_i = (T / n_i) I with T = (lambda_min(C) - 1) / sum_k (1 / n_k)."""
    dims = inst.dims
    T = (inst.lambda_min - 1.0) / sum(1.0 / n for n in dims)
    return [(T / n) * np.eye(n, dtype=complex) for n in dims]


def rebalance(z: Sequence[np.ndarray]) -> list:
    """Shift X_i by t_i I, sum t_i = 0, so every trace is equal."""
    Xs = [np.asarray(X, dtype=complex) for X in z]
    n = np.array([X.shape[0] for X in Xs], dtype=float)
    s = np.array([float(np.trace(X).real) for X in Xs])
    if np.all(s == s[0]):
        return [X.copy() for X in Xs]
    S = float(np.sum(s / n) / np.sum(1.0 / n))
    t = (S - s) / n
    t[-1] = -float(np.sum(t[:-1]))
    return [X + ti * np.eye(X.shape[0]) for X, ti in zip(Xs, t)]


@dataclass
class GammaResidual:
    residuals: list
    lambda_min: float
    trace_error: float

    @property
    def max_residual(self) -> float:
        return max(self.residuals)


def gamma_residual(rho, R: DensityFamily) -> GammaResidual:
    """Frobenius distance of each partial trace of ``rho`` to its target."""
    if not isinstance(rho, ProductOperator):
        rho = ProductOperator(R.dims, rho)
    if rho.mode_dims != R.dims:
        raise DimensionError(f"coupling dims {rho.mode_dims} != marginal dims {R.dims}")
    res = [
        float(np.linalg.norm(partial_trace_except(rho, i) - R.rho[i]))
        for i in range(R.d)
    ]
    return GammaResidual(
        res,
        spectral_bundle(rho).lambda_min,
        abs(rho.trace() - R.common_trace),
    )


def slack_inverse(S: ProductOperator) -> np.ndarray:
    """S^{-1} through Cholesky; DomainError if S is not positive definite."""
    _, ok = chol_logdet(S)
    if not ok:
        raise DomainError("slack operator is not positive definite")
    M = hermitian(S.matrix)
    E = cho_solve(cho_factor(M, lower=True), np.eye(M.shape[0], dtype=complex))
    return hermitian(E)


def recover_primal(inst: QuantumInstance, z, eps: float) -> ProductOperator:
    """rho = eps * slack^{-1}."""
    if not eps > 0:
        raise InputError(f"eps must be positive, got {eps!r}")
    return ProductOperator(inst.dims, eps * slack_inverse(slack_operator(inst, z)))


def _offdiag_max(A: np.ndarray) -> float:
    return float(np.max(np.abs(A - np.diag(np.diag(A))))) if A.size > 1 else 0.0


def diagonal_reduction(inst: QuantumInstance) -> ClassicalInstance | None:
    """Classical instance read off the diagonals, or None if not diagonal.

    Pinching a feasible coupling to its diagonal keeps every partial trace
    and the objective, and does not increase -log det, so the quantum and
    classical values coincide on diagonal data.
    """
    mats = [inst.C.matrix, *inst.R.rho]
    if any(_offdiag_max(A) > DIAG_TOL for A in mats):
        return None
    C = np.real(np.diag(inst.C.matrix)).reshape(inst.dims)
    P = [np.real(np.diag(r)).copy() for r in inst.R.rho]
    return ClassicalInstance(C, P, name=inst.name)


def _chain_upper(N_lead, N_log, eps, arg):
    return N_lead * eps * (1.0 - math.log(eps)) + 0.5 * N_log * eps * math.log(arg)


@dataclass
class MultipartiteChainReport:
    """Both readings of the multipartite chain; neither is asserted."""

    kappa: float
    kappa_beta: float
    lower: float
    upper_literal: float  # d^d prefactor on the log term
    upper_pattern: float  # n^d prefactor, following the bipartite form
    holds_literal: bool
    holds_pattern: bool


def bound_chain_quantum(
    inst: QuantumInstance, eps: float, kappa: float, kappa_beta: float,
    check: bool = True,
):
    """Bipartite: kappa < kappa_beta < kappa + N eps (1 - log eps)
    + (N eps / 2) log(2||C||^2 + 2(2||C|| / (l1 l2))^2), asserted.

    For d >= 3 a :class:`MultipartiteChainReport` is returned instead and
    nothing is asserted.  Traces other than one are handled as in the
    classical chain (normalized densities at eps / m).
    """
    N = inst.N
    m = inst.common_trace
    c = inst.norm2
    if c == 0.0:
        raise InputError("the bound chain needs a nonzero cost")
    lmins = [lm / m for lm in inst.R.lambda_mins]
    lower = kappa - N * eps * math.log(m)
    if inst.d == 2:
        arg = 2 * c * c + 2 * (2 * c / (lmins[0] * lmins[1])) ** 2
        upper = kappa + _chain_upper(N, N, eps, arg)
        out = BoundChain(
            kappa, kappa_beta, lower, upper, kappa_beta - lower, upper - kappa_beta,
            lower < kappa_beta < upper,
        )
        if check and not out.holds:
            raise BoundViolation(
                f"bound chain fails: {lower!r} < {kappa_beta!r} < {upper!r} is false"
            )
        return out
    d = inst.d
    arg = d * c * c + d * (2 * c / math.prod(lmins)) ** 2
    up_lit = kappa + _chain_upper(N, d**d, eps, arg)
    up_pat = kappa + _chain_upper(N, N, eps, arg)
    return MultipartiteChainReport(
        kappa, kappa_beta, lower, up_lit, up_pat,
        lower < kappa_beta < up_lit, lower < kappa_beta < up_pat,
    )
