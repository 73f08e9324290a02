"""Augmented dual barriers, their derivatives, and the geometry around them.

The dual of either transport problem is maximized over

    D_1 = {z : slack(z) > 0} intersected with the open ball B(z_0, r)

with barrier

    beta_hat(z) = -sum log slack(z) - log(r^2 - |z - z_0|^2) + log r^2

where ``sum log slack`` means log det for the quantum problem.  Points are
flat coordinate vectors: concatenated x_i (classical) or concatenated
isometric Hermitian coordinates of X_i (quantum), so the Euclidean ball is
the Frobenius ball.  The balance constraint is ``A z = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import classical as cl
from . import quantum as qu
from .classical import ClassicalInstance
from .errors import DomainError, InputError, KKTSolveError
from .quantum import QuantumInstance
from .tensor import (
    ProductOperator,
    chol_logdet,
    coords_to_herm,
    herm_to_coords,
    hermitian_basis,
    kron_lift,
    marginal,
    pair_marginal,
    partial_trace_except,
)


@dataclass(frozen=True)
class TrustRegion:
    center: np.ndarray
    radius: float


@dataclass
class BarrierEvaluation:
    value: float
    gradient: np.ndarray | None
    hessian: np.ndarray | None
    domain_ok: bool
    flops: float = 0.0


@dataclass
class Recovery:
    primal: object  # coupling tensor or ProductOperator
    primal_value: float
    residuals: list
    max_residual: float


def start_point(inst) -> list:
    """Balanced interior dual point with slack >= 1 (entrywise or spectrally)."""
    if isinstance(inst, QuantumInstance):
        return qu.start_dual(inst)
    return cl.start_dual(inst)


def radius(inst) -> float:
    """r with r^2 = max(n_i)(9c^2 + 1) / prod_i(m_i)^2.

    Classical: c = max |c_j|, m_i = min p_i.  Quantum: c = ||C||_2,
    m_i = lambda_min(rho_i).  Marginals are normalized to unit mass first.
    """
    if isinstance(inst, QuantumInstance):
        c = inst.norm2
        mass = inst.common_trace
        mins = [lm / mass for lm in inst.R.lambda_mins]
    else:
        c = inst.c
        mass = inst.common_mass
        mins = [float(p.min()) / mass for p in inst.P.p]
    r2 = max(inst.dims) * (9.0 * c * c + 1.0) / math.prod(mins) ** 2
    return math.sqrt(r2)


def _balance_matrix(sizes: Sequence[int], trace_len: Sequence[int]) -> np.ndarray:
    """Rows e(block 0) - e(block k); ``trace_len[i]`` leading coords count."""
    d = len(sizes)
    offs = np.concatenate([[0], np.cumsum(sizes)])
    A = np.zeros((d - 1, int(offs[-1])))
    for k in range(1, d):
        A[k - 1, offs[0]:offs[0] + trace_len[0]] = 1.0
        A[k - 1, offs[k]:offs[k] + trace_len[k]] = -1.0
    return A


class BarrierProblem:
    """Oracle interface shared by both instance classes."""

    inst: object
    sizes: tuple
    b: np.ndarray
    A: np.ndarray
    region: TrustRegion
    n_terms: int

    @property
    def dim(self) -> int:
        return self.b.size

    @property
    def theta_bound(self) -> float:
        return float(self.n_terms + 1)

    @property
    def mass(self) -> float:
        raise NotImplementedError

    def split(self, z: np.ndarray) -> list:
        offs = np.cumsum((0,) + self.sizes)
        return [z[offs[i]:offs[i + 1]] for i in range(len(self.sizes))]

    def dual_value(self, z: np.ndarray) -> float:
        return float(self.b @ z)

    def _ball(self, z: np.ndarray, order: int):
        r2 = self.region.radius ** 2
        dz = z - self.region.center
        q = float(dz @ dz)
        if not q < r2:
            return None
        gap = r2 - q
        val = -math.log1p(-q / r2)
        if order < 1:
            return val, None, None
        g = 2.0 * dz / gap
        if order < 2:
            return val, g, None
        H = (2.0 / gap) * np.eye(dz.size) + (4.0 / gap**2) * np.outer(dz, dz)
        return val, g, H

    def evaluate(self, z: np.ndarray, order: int = 2) -> BarrierEvaluation:
        raise NotImplementedError

    def in_domain(self, z: np.ndarray) -> bool:
        return self.evaluate(z, order=0).domain_ok

    def slack_min(self, z: np.ndarray) -> float:
        raise NotImplementedError

    def dual_functional(self, z: np.ndarray, eps: float) -> float:
        raise NotImplementedError

    def recover(self, z: np.ndarray, eps: float) -> Recovery:
        raise NotImplementedError

    def gram_factor(self, z: np.ndarray):
        """``(F, w)`` with Hessian ``F^T F`` and gradient ``F^T w``, or None.

        Only used for the complexity-parameter estimate, where
        ``g^T H^{-1} g`` is the squared projection of ``w`` onto range(F).
        """
        return None

    def _ball_factor(self, z: np.ndarray):
        r2 = self.region.radius ** 2
        dz = z - self.region.center
        gap = r2 - float(dz @ dz)
        F = np.vstack([math.sqrt(2.0 / gap) * np.eye(dz.size), (2.0 / gap) * dz[None, :]])
        w = np.zeros(dz.size + 1)
        w[-1] = 1.0
        return F, w


class ClassicalBarrier(BarrierProblem):
    def __init__(self, inst: ClassicalInstance, region: TrustRegion | None = None):
        self.inst = inst
        self.sizes = tuple(inst.dims)
        self.b = inst.P.stacked()
        self.A = _balance_matrix(self.sizes, self.sizes)
        self.n_terms = inst.N
        if region is None:
            region = TrustRegion(np.concatenate(cl.start_dual(inst)), radius(inst))
        self.region = region

    @property
    def mass(self) -> float:
        return self.inst.common_mass

    def join(self, xs) -> np.ndarray:
        return np.concatenate([np.asarray(x, dtype=float) for x in xs])

    def slack(self, z: np.ndarray) -> np.ndarray:
        return cl.slack_tensor(self.inst, self.split(z))

    def slack_min(self, z: np.ndarray) -> float:
        return float(self.slack(z).min())

    def evaluate(self, z: np.ndarray, order: int = 2) -> BarrierEvaluation:
        z = np.asarray(z, dtype=float)
        S = self.slack(z)
        ball = self._ball(z, order)
        N = S.size
        d = S.ndim
        if ball is None or not np.all(S > 0):
            return BarrierEvaluation(math.inf, None, None, False, float(N))
        bv, bg, bH = ball
        value = -float(np.log(S).sum()) + bv
        flops = float(2 * N)
        if order < 1:
            return BarrierEvaluation(value, None, None, True, flops)
        R = 1.0 / S
        g = np.concatenate([marginal(R, i) for i in range(d)]) + bg
        flops += d * N
        if order < 2:
            return BarrierEvaluation(value, g, None, True, flops)
        R2 = R * R
        offs = np.cumsum((0,) + self.sizes)
        H = bH.copy()
        for a in range(d):
            sa = slice(offs[a], offs[a + 1])
            H[sa, sa] += np.diag(marginal(R2, a))
            for b in range(a + 1, d):
                sb = slice(offs[b], offs[b + 1])
                M = pair_marginal(R2, a, b)
                H[sa, sb] += M
                H[sb, sa] += M.T
        flops += (d * (d + 1) / 2 + 1) * N + self.dim**2
        return BarrierEvaluation(value, g, H, True, flops)

    def dual_functional(self, z: np.ndarray, eps: float) -> float:
        return cl.dual_functional(self.inst, self.split(z), eps)

    def recover(self, z: np.ndarray, eps: float) -> Recovery:
        S = self.slack(z)
        if not np.all(S > 0):
            raise DomainError("cannot recover a coupling outside the domain")
        U = eps / S
        res = [
            float(np.max(np.abs(marginal(U, i) - p)))
            for i, p in enumerate(self.inst.P.p)
        ]
        return Recovery(U, float(np.sum(self.inst.C * U)), res, max(res))

    def gram_factor(self, z: np.ndarray):
        if not self.in_domain(z):
            raise DomainError("gram_factor needs an interior point")
        R = 1.0 / self.slack(z).ravel()
        # row j of the incidence matrix picks the coordinates that cell j sums
        Fs = R[:, None] * cl._marginal_matrix(self.sizes).T
        Fb, wb = self._ball_factor(z)
        return np.vstack([Fs, Fb]), np.concatenate([np.ones(R.size), wb])


class QuantumBarrier(BarrierProblem):
    def __init__(self, inst: QuantumInstance, region: TrustRegion | None = None):
        self.inst = inst
        dims = inst.dims
        self.sizes = tuple(n * n for n in dims)
        self.b = np.concatenate([herm_to_coords(r) for r in inst.R.rho])
        self.A = _balance_matrix(self.sizes, dims)
        self.n_terms = inst.N
        if region is None:
            region = TrustRegion(self.join(qu.start_dual(inst)), radius(inst))
        self.region = region
        self._bases = [hermitian_basis(n) for n in dims]

    @property
    def mass(self) -> float:
        return self.inst.common_trace

    def join(self, Xs) -> np.ndarray:
        return np.concatenate([herm_to_coords(X) for X in Xs])

    def matrices(self, z: np.ndarray) -> list:
        return [coords_to_herm(c, n) for c, n in zip(self.split(z), self.inst.dims)]

    def slack(self, z: np.ndarray) -> ProductOperator:
        return qu.slack_operator(self.inst, self.matrices(z))

    def slack_min(self, z: np.ndarray) -> float:
        return float(np.linalg.eigvalsh(self.slack(z).matrix)[0])

    def _hessian_block(self, Et: np.ndarray, a: int, b: int) -> np.ndarray:
        """Re tr(E L_a(B_k) E L_b(B_l)) for the basis stacks of modes a, b."""
        d = len(self.inst.dims)
        rest_b = [m for m in range(d) if m != b]
        rest_a = [m for m in range(d) if m != a]
        ax1 = rest_b + [d + m for m in rest_a]
        ax2 = [d + m for m in rest_b] + rest_a
        # T[i_b, j_a, k_a, l_b]
        T = np.tensordot(Et, Et, axes=(ax1, ax2))
        Ba = self._bases[a]
        Bb = self._bases[b]
        Q = np.tensordot(Ba, T, axes=([1, 2], [1, 2]))  # Q[k, i_b, l_b]
        out = np.tensordot(Q, Bb, axes=([1, 2], [2, 1]))  # [k, l]
        return out.real

    def _hessian_flops(self) -> float:
        dims = self.inst.dims
        N = self.inst.N
        f = 0.0
        for a, na in enumerate(dims):
            for b, nb in enumerate(dims):
                if b < a:
                    continue
                f += N * N * na * nb + na**4 * nb**2 + na**2 * nb**4
        return 4.0 * f  # complex multiply-add

    def evaluate(self, z: np.ndarray, order: int = 2) -> BarrierEvaluation:
        z = np.asarray(z, dtype=float)
        inst = self.inst
        N = inst.N
        d = inst.d
        S = self.slack(z)
        ball = self._ball(z, order)
        flops = float(d * N * N + 4 * N**3 / 3)
        logdet, ok = chol_logdet(S)
        if ball is None or not ok:
            return BarrierEvaluation(math.inf, None, None, False, flops)
        bv, bg, bH = ball
        value = -logdet + bv
        if order < 1:
            return BarrierEvaluation(value, None, None, True, flops)
        E = ProductOperator(inst.dims, qu.slack_inverse(S))
        flops += 4.0 * N**3
        g = np.concatenate(
            [herm_to_coords(partial_trace_except(E, i)) for i in range(d)]
        ) + bg
        flops += d * N * N
        if order < 2:
            return BarrierEvaluation(value, g, None, True, flops)
        Et = E.as_tensor()
        offs = np.cumsum((0,) + self.sizes)
        H = bH.copy()
        for a in range(d):
            sa = slice(offs[a], offs[a + 1])
            H[sa, sa] += self._hessian_block(Et, a, a)
            for b in range(a + 1, d):
                sb = slice(offs[b], offs[b + 1])
                M = self._hessian_block(Et, a, b)
                H[sa, sb] += M
                H[sb, sa] += M.T
        H = 0.5 * (H + H.T)
        flops += self._hessian_flops() + self.dim**2
        return BarrierEvaluation(value, g, H, True, flops)

    def dual_functional(self, z: np.ndarray, eps: float) -> float:
        return qu.dual_functional(self.inst, self.matrices(z), eps)

    def recover(self, z: np.ndarray, eps: float) -> Recovery:
        rho = qu.recover_primal(self.inst, self.matrices(z), eps)
        gr = qu.gamma_residual(rho, self.inst.R)
        val = float(np.vdot(self.inst.C.matrix, rho.matrix).real)
        return Recovery(rho, val, gr.residuals, gr.max_residual)

    def gram_factor(self, z: np.ndarray):
        if not self.in_domain(z):
            raise DomainError("gram_factor needs an interior point")
        w_, V = np.linalg.eigh(self.slack(z).matrix)
        Eh = (V / np.sqrt(w_)) @ V.conj().T  # slack^{-1/2}
        dims = self.inst.dims
        cols = []
        for i, B in enumerate(self._bases):
            for Bk in B:
                M = Eh @ kron_lift(Bk, dims, i).matrix @ Eh
                cols.append(np.concatenate([M.real.ravel(), M.imag.ravel()]))
        Fs = np.array(cols).T
        N = self.inst.N
        ws = np.concatenate([np.eye(N).ravel(), np.zeros(N * N)])
        Fb, wb = self._ball_factor(z)
        return np.vstack([Fs, Fb]), np.concatenate([ws, wb])


def make_problem(inst, region: TrustRegion | None = None) -> BarrierProblem:
    if isinstance(inst, QuantumInstance):
        return QuantumBarrier(inst, region)
    if isinstance(inst, ClassicalInstance):
        return ClassicalBarrier(inst, region)
    raise InputError(f"unsupported instance type {type(inst).__name__}")


def _as_coords(problem: BarrierProblem, z) -> np.ndarray:
    if isinstance(z, np.ndarray) and z.ndim == 1 and z.size == problem.dim:
        return z.astype(float)
    return problem.join(z)


def eval_classical(inst: ClassicalInstance, z, region: TrustRegion | None = None,
                   order: int = 2) -> BarrierEvaluation:
    """Augmented classical barrier at ``z`` (dual point or coordinates)."""
    P = ClassicalBarrier(inst, region)
    return P.evaluate(_as_coords(P, z), order)


def eval_quantum(inst: QuantumInstance, z, region: TrustRegion | None = None,
                 order: int = 2) -> BarrierEvaluation:
    """Augmented log-det barrier at ``z`` (Hermitian dual point or coordinates)."""
    P = QuantumBarrier(inst, region)
    return P.evaluate(_as_coords(P, z), order)


# -- geometry of D_1 ---------------------------------------------------------


def balanced_directions(problem: BarrierProblem, k: int, rng) -> np.ndarray:
    """``k`` random unit directions inside the null space of ``A``."""
    A = problem.A
    D = rng.standard_normal((k, problem.dim))
    if A.shape[0]:
        Q, _ = np.linalg.qr(A.T)
        D = D - (D @ Q) @ Q.T
    return D / np.linalg.norm(D, axis=1, keepdims=True)


def boundary_step(problem: BarrierProblem, u: np.ndarray, z0=None,
                  rel_tol: float = 1e-13) -> float:
    """Largest t with z0 + t u in D_1, found by bisection on membership."""
    z0 = problem.region.center if z0 is None else z0
    if not problem.in_domain(z0):
        raise DomainError("ray origin is outside the domain")
    lo, hi = 0.0, 1.0
    while problem.in_domain(z0 + hi * u):
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            return math.inf
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if problem.in_domain(z0 + mid * u):
            lo = mid
        else:
            hi = mid
    return lo


def sample_interior(problem: BarrierProblem, k: int, seed: int = 0,
                    balanced: bool = True, near_boundary: bool = True) -> list:
    """Points z0 + s t* u with t* the boundary step and s in (0, 1).

    Fractions s are uniform on (0, 0.95); with ``near_boundary`` every
    other one is instead drawn as 1 - 10^U(-6, -1).
    """
    rng = np.random.default_rng(seed)
    z0 = problem.region.center
    if balanced:
        U = balanced_directions(problem, k, rng)
    else:
        U = rng.standard_normal((k, problem.dim))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
    out = []
    for j in range(k):
        t = boundary_step(problem, U[j])
        if near_boundary and j % 2:
            s = 1.0 - 10 ** rng.uniform(-6, -1)
        else:
            s = rng.uniform(0.0, 0.95)
        out.append(z0 + s * t * U[j])
    return out


def theta_estimate(problem: BarrierProblem, samples: int = 100, seed: int = 0) -> float:
    """max of grad^T H^{-1} grad over sampled interior points.

    This is a lower estimate of the complexity parameter theta.  When the
    problem supplies a square-root factor the quadratic form is computed as
    a least-squares projection, which stays accurate where H is too badly
    conditioned to solve with directly (the ball term alone carries the
    curvature along the balance directions).
    """
    if samples < 1:
        raise InputError("need at least one sample")
    best = 0.0
    for z in sample_interior(problem, samples, seed, balanced=False):
        fac = problem.gram_factor(z)
        if fac is not None:
            F, w = fac
            x, *_ = np.linalg.lstsq(F, w, rcond=None)
            Fx = F @ x
            best = max(best, float(Fx @ Fx))
            continue
        ev = problem.evaluate(z)
        try:
            w = np.linalg.solve(ev.hessian, ev.gradient)
        except np.linalg.LinAlgError as exc:
            raise KKTSolveError(f"Hessian solve failed at {z!r}") from exc
        best = max(best, float(ev.gradient @ w))
    return best
