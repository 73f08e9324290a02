"""Classical bi- and multi-partite transport.

A dual point is a plain list of real vectors ``[x_1, ..., x_d]`` and a
coupling is a real tensor of shape ``dims``.  The barrier relaxation

    tau_beta = min <C, V> - eps * sum log v_j    over the coupling polytope

has the dual functional

    phi(x) = sum_i p_i^T x_i + eps * sum log s(x) + N eps (1 - log eps)

with slack ``s(x) = C - sum_i x_i`` (Kronecker-sum lift) and ``N = prod n_i``.
Its maximizer gives the primal optimum ``U = eps / s``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import entr, logsumexp

from . import roots
from .errors import (
    BoundViolation,
    ConvergenceError,
    DegenerateBasisError,
    DimensionError,
    DomainError,
    InputError,
    NonPositiveMarginalError,
    SizeLimitError,
    UnderflowError,
)
from .tensor import marginal

log = logging.getLogger(__name__)

LP_SIZE_LIMIT = 20_000
PIVOT_TOL = 1e-10


@dataclass(frozen=True)
class MarginalFamily:
    """Balanced positive marginals ``p_1, ..., p_d``."""

    p: tuple

    def __post_init__(self):
        ps = tuple(np.array(v, dtype=float).ravel() for v in self.p)
        if len(ps) < 2:
            raise DimensionError(f"need at least two marginals, got {len(ps)}")
        for i, v in enumerate(ps):
            if v.size == 0 or not np.all(np.isfinite(v)):
                raise InputError(f"marginal {i} must be a non-empty finite vector")
            if not np.all(v > 0):
                j = int(np.argmin(v))
                raise NonPositiveMarginalError(
                    f"marginal {i} has non-positive entry {v[j]!r} at index {j}"
                )
            v.setflags(write=False)
        mass = float(ps[0].sum())
        for i, v in enumerate(ps[1:], start=1):
            if abs(float(v.sum()) - mass) > 1e-12 * mass:
                raise InputError(
                    f"marginal {i} has mass {float(v.sum())!r}, expected {mass!r}"
                )
        object.__setattr__(self, "p", ps)

    @property
    def d(self) -> int:
        return len(self.p)

    @property
    def dims(self) -> tuple:
        return tuple(v.size for v in self.p)

    @property
    def common_mass(self) -> float:
        return float(self.p[0].sum())

    def stacked(self) -> np.ndarray:
        return np.concatenate(self.p)


@dataclass(frozen=True)
class ClassicalInstance:
    C: np.ndarray
    P: MarginalFamily
    name: str = field(default="", compare=False)

    def __post_init__(self):
        C = np.array(self.C, dtype=float)
        if not isinstance(self.P, MarginalFamily):
            object.__setattr__(self, "P", MarginalFamily(self.P))
        if C.shape != self.P.dims:
            raise DimensionError(
                f"cost shape {C.shape} does not match marginal dims {self.P.dims}"
            )
        if not np.all(np.isfinite(C)):
            raise InputError("cost tensor has non-finite entries")
        C.setflags(write=False)
        object.__setattr__(self, "C", C)

    @property
    def dims(self) -> tuple:
        return self.C.shape

    @property
    def d(self) -> int:
        return self.C.ndim

    @property
    def N(self) -> int:
        return self.C.size

    @cached_property
    def c_min(self) -> float:
        return float(self.C.min())

    @cached_property
    def c_max(self) -> float:
        return float(self.C.max())

    @cached_property
    def c(self) -> float:
        return float(np.abs(self.C).max())

    @property
    def common_mass(self) -> float:
        return self.P.common_mass


# -- dual points -------------------------------------------------------------


def lift_sum(xs: Sequence[np.ndarray], dims: Sequence[int]) -> np.ndarray:
    """Tensor with entries sum_i x_i[j_i]."""
    d = len(dims)
    if len(xs) != d:
        raise DimensionError(f"expected {d} dual vectors, got {len(xs)}")
    out = np.zeros(tuple(dims))
    for i, x in enumerate(xs):
        x = np.asarray(x, dtype=float)
        if x.shape != (dims[i],):
            raise DimensionError(
                f"dual vector {i} has shape {x.shape}, expected ({dims[i]},)"
            )
        shape = [1] * d
        shape[i] = dims[i]
        out = out + x.reshape(shape)
    return out


def slack_tensor(inst: ClassicalInstance, z: Sequence[np.ndarray]) -> np.ndarray:
    """``C - sum_i x_i`` entrywise.  Its minimum decides domain membership."""
    return inst.C - lift_sum(z, inst.dims)


def dual_objective(inst: ClassicalInstance, z) -> float:
    return float(sum(p @ np.asarray(x) for p, x in zip(inst.P.p, z)))


def dual_functional(inst: ClassicalInstance, z, eps: float) -> float:
    """phi(z); -inf outside the domain."""
    S = slack_tensor(inst, z)
    if not np.all(S > 0):
        return -math.inf
    N = inst.N
    return dual_objective(inst, z) + eps * float(np.log(S).sum()) + N * eps * (
        1.0 - math.log(eps)
    )


def start_dual(inst: ClassicalInstance) -> list:
    """Balanced interior point with every slack entry >= 1.

    x_i = (T / n_i) 1 with T = (c_min - 1) / sum_k (1 / n_k).
    """
    dims = inst.dims
    T = (inst.c_min - 1.0) / sum(1.0 / n for n in dims)
    return [np.full(n, T / n) for n in dims]


def rebalance(z: Sequence[np.ndarray]) -> list:
    """Shift x_i by t_i 1 with sum t_i = 0 so every 1^T x_i is equal.

    The slack tensor and the dual objective are unchanged.
    """
    xs = [np.asarray(x, dtype=float) for x in z]
    n = np.array([x.size for x in xs], dtype=float)
    s = np.array([x.sum() for x in xs])
    if np.all(s == s[0]):
        return [x.copy() for x in xs]
    S = float(np.sum(s / n) / np.sum(1.0 / n))
    t = (S - s) / n
    # push the rounding of sum t_i into the last shift
    t[-1] = -float(np.sum(t[:-1]))
    return [x + ti for x, ti in zip(xs, t)]


def balance_residual(z) -> float:
    s = np.array([float(np.sum(x)) for x in z])
    return float(np.max(np.abs(s - s[0])) / (1.0 + abs(s[0])))


# -- exact LP reference ------------------------------------------------------


def _marginal_matrix(dims: Sequence[int]) -> np.ndarray:
    N = int(np.prod(dims))
    A = np.zeros((sum(dims), N))
    idx = np.indices(dims).reshape(len(dims), N)
    off = 0
    cols = np.arange(N)
    for i, n in enumerate(dims):
        A[off + idx[i], cols] = 1.0
        off += n
    return A


def _pivot(T: np.ndarray, basis: list, r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    basis[r] = j


def _bland(T: np.ndarray, basis: list, ncols: int, max_pivots: int) -> int:
    """Run Bland pivots on the tableau until no reduced cost is negative."""
    m = T.shape[0] - 1
    for k in range(max_pivots):
        red = T[-1, :ncols]
        neg = np.flatnonzero(red < -PIVOT_TOL)
        if neg.size == 0:
            return k
        j = int(neg[0])
        col = T[:m, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            raise DegenerateBasisError(f"column {j} is unbounded in the simplex")
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + PIVOT_TOL * (1.0 + abs(best))]
        r = int(min(tied, key=lambda q: basis[q]))
        _pivot(T, basis, r, j)
    raise DegenerateBasisError(f"simplex did not terminate in {max_pivots} pivots")


def lp_reference(inst: ClassicalInstance) -> tuple[float, np.ndarray]:
    """Exact optimum of min <C, V> over the coupling polytope.

    Dense two-phase tableau simplex with Bland's rule.  The optimal basic
    solution is re-solved from the final basis to remove tableau drift.
    """
    dims = inst.dims
    N = inst.N
    if N > LP_SIZE_LIMIT:
        raise SizeLimitError(f"{N} variables exceed the LP limit {LP_SIZE_LIMIT}")
    A = _marginal_matrix(dims)
    b = inst.P.stacked()
    m = A.shape[0]
    c = inst.C.ravel()
    max_pivots = 50 * (m + N) + 1000

    # phase one: artificials m columns after the originals
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = A
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :N] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(N, N + m))
    k1 = _bland(T, basis, N + m, max_pivots)
    infeas = -T[-1, -1]
    if infeas > 1e-9 * (1.0 + inst.common_mass):
        raise DegenerateBasisError(f"phase one left infeasibility {infeas!r}")

    # drive artificials out; rows where that fails are redundant
    keep = []
    for r in range(m):
        if basis[r] >= N:
            cand = np.flatnonzero(np.abs(T[r, :N]) > PIVOT_TOL)
            if cand.size == 0:
                continue
            _pivot(T, basis, r, int(cand[0]))
        keep.append(r)
    T = np.vstack([T[keep][:, list(range(N)) + [N + m]], np.zeros((1, N + 1))])
    basis = [basis[r] for r in keep]
    mk = len(keep)

    # phase two objective row
    cb = c[basis]
    T[-1, :N] = c - cb @ T[:mk, :N]
    T[-1, -1] = -float(cb @ T[:mk, -1])
    k2 = _bland(T, basis, N, max_pivots)

    B = A[:, basis]
    xb, *_ = np.linalg.lstsq(B, b, rcond=None)
    x = np.zeros(N)
    x[basis] = np.maximum(xb, 0.0)
    V = x.reshape(dims)
    log.debug("simplex: %d + %d pivots, %d redundant rows", k1, k2, m - mk)
    return float(np.sum(inst.C * V)), V


# -- entropic relaxation -----------------------------------------------------


def _other_axes(d: int, i: int) -> tuple:
    return tuple(k for k in range(d) if k != i)


def _expand(v: np.ndarray, d: int, i: int) -> np.ndarray:
    shape = [1] * d
    shape[i] = v.size
    return v.reshape(shape)


def shannon_entropy(U: np.ndarray) -> float:
    return float(entr(U).sum())


@dataclass
class EntropicResult:
    tau_eps: float
    U: np.ndarray
    potentials: list  # f_i with U = exp((sum f_i - C) / eps)
    iterations: int
    residual: float
    eps: float


def entropic_sinkhorn(
    inst: ClassicalInstance,
    eps: float,
    tol: float = 1e-9,
    max_iter: int = 200_000,
    eps_scaling: bool = True,
) -> EntropicResult:
    """Log-domain Sinkhorn for min <C,U> - eps E_S(U).

    Alternates exact rescaling of each mode.  With ``eps_scaling`` the
    regularization starts at the cost range and shrinks tenfold per stage,
    each stage warm-starting the next; the final stage runs at ``eps``.
    """
    if not eps > 0:
        raise InputError(f"eps must be positive, got {eps!r}")
    if abs(inst.common_mass - 1.0) > 1e-12:
        raise InputError("entropic Sinkhorn expects probability marginals")
    d = inst.d
    dims = inst.dims
    logp = [np.log(p) for p in inst.P.p]
    f = [np.zeros(n) for n in dims]

    stages = [eps]
    if eps_scaling:
        e = max(inst.c_max - inst.c_min, eps)
        stages = []
        while e > eps:
            stages.append(e)
            e /= 10.0
        stages.append(eps)

    it = 0
    res = math.inf
    for e in stages:
        last = e == stages[-1]
        stol = tol if last else max(tol, 1e-6)
        for _ in range(max_iter):
            it += 1
            for i in range(d):
                L = (lift_sum(f, dims) - inst.C) / e
                lm = logsumexp(L, axis=_other_axes(d, i))
                f[i] = f[i] + e * (logp[i] - lm)
            L = (lift_sum(f, dims) - inst.C) / e
            U = np.exp(L)
            res = max(
                float(np.max(np.abs(marginal(U, i) - inst.P.p[i]))) for i in range(d)
            )
            if res <= stol:
                break
        else:
            if last:
                raise ConvergenceError(
                    f"Sinkhorn residual {res!r} after {max_iter} sweeps"
                )
    for i in range(d):
        if np.any(marginal(U, i) == 0.0):
            raise UnderflowError(
                f"eps={eps!r} underflows a whole slice of mode {i} to zero"
            )
    tau = float(np.sum(inst.C * U)) - eps * shannon_entropy(U)
    return EntropicResult(tau, U, f, it, res, eps)


def entropic_eps(delta: float, dims: Sequence[int]) -> float:
    """eps = delta / log(prod n_i), so the entropic value is delta-close."""
    N = int(np.prod(dims))
    if N < 2:
        return delta
    return delta / math.log(N)


# -- barrier relaxation by coordinate rescaling --------------------------------


def rescale_mode(
    inst: ClassicalInstance,
    z: Sequence[np.ndarray],
    i: int,
    targets: np.ndarray,
    tol: float = 1e-12,
) -> list:
    """Shift x_i so every i-slice of 1/slack sums to its target.

    Each slice is a scalar root problem with spectrum = the slice slacks.
    """
    dims = inst.dims
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (dims[i],) or not np.all(targets > 0):
        raise InputError("targets must be a positive vector matching mode size")
    S = slack_tensor(inst, z)
    if not np.all(S > 0):
        raise DomainError("rescale_mode needs a point with positive slack")
    Si = np.moveaxis(S, i, 0).reshape(dims[i], -1)
    out = [np.array(x, dtype=float) for x in z]
    for j in range(dims[i]):
        r = roots.solve(float(targets[j]), roots.ShiftSpectrum(Si[j]), tol=tol)
        if abs(r.f_at_x - targets[j]) > tol:
            raise ConvergenceError(
                f"slice {j} of mode {i}: residual {abs(r.f_at_x - targets[j])!r}"
            )
        out[i][j] -= r.x
    if not np.all(slack_tensor(inst, out) > 0):
        raise DomainError(f"rescaling mode {i} left the domain")
    return out


@dataclass
class BarrierSinkhornResult:
    tau_beta: float
    phi: float
    z: list
    U: np.ndarray
    sweeps: int
    residual: float
    converged: bool
    # rows of (sweep, phi, max residual)
    trace: list = field(default_factory=list, repr=False)


def barrier_value(inst: ClassicalInstance, U: np.ndarray, eps: float) -> float:
    """<C, U> - eps * sum log u."""
    return float(np.sum(inst.C * U)) - eps * float(np.log(U).sum())


def barrier_sinkhorn(
    inst: ClassicalInstance,
    eps: float,
    tol: float = 1e-9,
    max_sweeps: int = 100_000,
    z0=None,
) -> BarrierSinkhornResult:
    """Cyclic exact block ascent on phi, one mode at a time.

    Mode i is rescaled so that eps * marginal_i(1/slack) = p_i, then the
    dual point is rebalanced.  ``tol`` bounds the marginal residuals of
    ``U = eps / slack``.
    """
    if not eps > 0:
        raise InputError(f"eps must be positive, got {eps!r}")
    d = inst.d
    z = rebalance(start_dual(inst) if z0 is None else z0)
    targets = [p / eps for p in inst.P.p]
    nmax = max(inst.dims)

    def residual(zz):
        U = eps / slack_tensor(inst, zz)
        return U, max(
            float(np.max(np.abs(marginal(U, i) - inst.P.p[i]))) for i in range(d)
        )

    trace = []
    phi = dual_functional(inst, z, eps)
    U, res = residual(z)
    trace.append((0, phi, res))
    k = 0
    while res > tol and k < max_sweeps:
        k += 1
        for i in range(d):
            rtol = max(tol / (10.0 * eps), 8e-16 * nmax * float(targets[i].max()))
            z = rescale_mode(inst, z, i, targets[i], tol=rtol)
        z = rebalance(z)
        phi = dual_functional(inst, z, eps)
        U, res = residual(z)
        trace.append((k, phi, res))
    converged = res <= tol
    if not converged:
        log.warning("barrier Sinkhorn stopped at residual %.3e after %d sweeps", res, k)
    return BarrierSinkhornResult(
        barrier_value(inst, U, eps), phi, z, U, k, res, converged, trace
    )


# -- bound chains ------------------------------------------------------------


@dataclass
class BoundChain:
    tau: float
    tau_beta: float
    lower: float
    upper: float
    lower_margin: float
    upper_margin: float
    holds: bool


def bound_chain_classical(
    inst: ClassicalInstance, eps: float, tau: float, tau_beta: float, check: bool = True
) -> BoundChain:
    """tau < tau_beta < tau + N eps (1 - log eps) + (N eps / 2) log(2c^2 + 2(2c/(m1 m2))^2).

    For total mass ``m != 1`` the chain is applied to the normalized marginals
    at ``eps / m`` and scaled back, which moves the lower end to
    ``tau - N eps log m`` and leaves the upper formula in the same form with
    ``m1, m2`` the minima of the normalized marginals.
    """
    if inst.d != 2:
        raise DimensionError("the classical bound chain is stated for two parties")
    N = inst.N
    m = inst.common_mass
    c = inst.c
    m1 = float(inst.P.p[0].min()) / m
    m2 = float(inst.P.p[1].min()) / m
    if c == 0.0:
        raise InputError("the bound chain needs a nonzero cost")
    lower = tau - N * eps * math.log(m)
    upper = (
        tau
        + N * eps * (1.0 - math.log(eps))
        + 0.5 * N * eps * math.log(2 * c * c + 2 * (2 * c / (m1 * m2)) ** 2)
    )
    out = BoundChain(
        tau, tau_beta, lower, upper, tau_beta - lower, upper - tau_beta,
        lower < tau_beta < upper,
    )
    if check and not out.holds:
        raise BoundViolation(
            f"bound chain fails: {lower!r} < {tau_beta!r} < {upper!r} is false"
        )
    return out
