"""Equality-constrained path following over an augmented barrier.

The dual maximum of ``b^T z`` over D_1 is approached by minimizing

    F_eta(z) = -eta * b^T z + beta_hat(z)    subject to  A z = 0

for growing eta.  Path points at ``eta = 1/eps`` are the dual optima of the
barrier relaxation with parameter ``eps`` (up to the ball term), which lets
the same engine produce both ``tau`` certificates and ``tau_beta`` values.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .barriers import BarrierProblem, Recovery
from .errors import DomainError, InputError, KKTSolveError

log = logging.getLogger(__name__)

TRACE_FIELDS = ("outer", "phase", "eta", "newton", "decrement", "dual", "gap", "flops")


@dataclass
class IPMConfig:
    delta: float = 1e-6
    mode: str = "long"
    theta_bound: float | None = None  # defaults to the problem's N + 1
    max_newton: int = 200  # per centering
    max_outer: int = 100_000
    growth: float | None = None
    center_tol: float = 0.125
    polish_tol: float = 1e-10
    feas_tol: float | None = None  # defaults to 1e-8 (1 + mass)

    def __post_init__(self):
        if not self.delta > 0:
            raise InputError(f"delta must be positive, got {self.delta!r}")
        if self.mode not in ("short", "long"):
            raise InputError(f"mode must be 'short' or 'long', got {self.mode!r}")
        if self.growth is not None and not self.growth > 1:
            raise InputError(f"growth factor must exceed 1, got {self.growth!r}")

    def growth_for(self, theta: float) -> float:
        if self.growth is not None:
            return self.growth
        if self.mode == "long":
            return 10.0
        return 1.0 + SHORT_STEP_KAPPA / math.sqrt(theta)


# eta grows by 1 + kappa / sqrt(theta) per short step
SHORT_STEP_KAPPA = 1.0


@dataclass
class PathState:
    z: np.ndarray
    eta: float
    newton_decrement: float
    iteration: int = 0
    flop_estimate: float = 0.0


@dataclass
class Certificate:
    dual_value: float
    primal_value: float
    gap: float
    primal_residuals: list
    eps: float

    def certified(self, delta: float, feas_tol: float) -> bool:
        return self.gap <= delta and max(self.primal_residuals) <= feas_tol


@dataclass
class SolveReport:
    value: float
    certificate: Certificate | None
    certified: bool
    z: np.ndarray
    primal: object
    eta: float
    newton_steps: int
    outer_iterations: int
    flop_estimate: float
    wall_time: float
    newton_flops: list = field(default_factory=list, repr=False)
    trace: list = field(default_factory=list, repr=False)


class _Counter:
    def __init__(self):
        self.newton = 0
        self.flops = 0.0
        self.per_step: list = []


def _kkt_solve(H: np.ndarray, A: np.ndarray, rhs: np.ndarray, rhs_c: np.ndarray):
    """Solve [H A^T; A 0](dz, nu) = (rhs, rhs_c) with Jacobi scaling."""
    n = H.shape[0]
    m = A.shape[0]
    dh = np.sqrt(np.abs(np.diag(H)))
    dh[dh == 0] = 1.0
    D = 1.0 / dh
    Hs = H * np.outer(D, D)
    As = A * D
    K = np.zeros((n + m, n + m))
    K[:n, :n] = Hs
    K[:n, n:] = As.T
    K[n:, :n] = As
    r = np.concatenate([rhs * D, rhs_c])
    if not np.all(np.isfinite(K)):
        raise KKTSolveError("non-finite entries in the KKT matrix")
    try:
        lu = lu_factor(K, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise KKTSolveError(str(exc)) from exc
    sol = lu_solve(lu, r, check_finite=False)
    # one round of iterative refinement
    sol = sol + lu_solve(lu, r - K @ sol, check_finite=False)
    if not np.all(np.isfinite(sol)):
        raise KKTSolveError("singular KKT system")
    return sol[:n] * D, sol[n:]


def _kkt_flops(n: int, m: int) -> float:
    k = n + m
    return 2.0 * k**3 / 3.0 + 6.0 * k * k


def newton_step(problem: BarrierProblem, objective: np.ndarray, A: np.ndarray,
                z: np.ndarray, eta: float, counter: _Counter | None = None):
    """One (damped) Newton step on -eta b^T z + beta_hat subject to A z = 0.

    Returns ``(z_new, decrement)`` with the decrement measured at ``z``.
    """
    ev = problem.evaluate(z, order=2)
    if not ev.domain_ok:
        raise DomainError("Newton step started outside the domain")
    g = ev.gradient - eta * objective
    dz, _ = _kkt_solve(ev.hessian, A, -g, -(A @ z))
    lam = math.sqrt(max(float(dz @ ev.hessian @ dz), 0.0))
    step = 1.0 if lam <= 0.25 else 1.0 / (1.0 + lam)
    z_new = z + step * dz
    flops = ev.flops + _kkt_flops(z.size, A.shape[0])
    if not problem.in_domain(z_new):
        raise DomainError(f"Newton step left the domain (decrement {lam:.3e})")
    if counter is not None:
        counter.newton += 1
        counter.flops += flops
        counter.per_step.append(flops)
    return z_new, lam


def _center(problem, b, A, z, eta, tol, max_newton, counter):
    """Newton steps until the decrement at the returned point is <= tol.

    After a full step from decrement lam < 1 the new decrement is at most
    (lam / (1 - lam))^2, so that bound is returned without another solve.
    """
    lam = math.inf
    for _ in range(max_newton):
        z, lam = newton_step(problem, b, A, z, eta, counter)
        if lam <= 0.25:
            lam = (lam / (1.0 - lam)) ** 2
            if lam <= tol:
                break
    return z, lam


def local_dual_norm(problem: BarrierProblem, z: np.ndarray, v: np.ndarray) -> float:
    """||v||* at z restricted to the null space of A."""
    ev = problem.evaluate(z, order=2)
    w, _ = _kkt_solve(ev.hessian, problem.A, v, np.zeros(problem.A.shape[0]))
    return math.sqrt(max(float(v @ w), 0.0))


def certify(problem: BarrierProblem, z: np.ndarray, eps: float) -> tuple[Certificate, Recovery]:
    """Weak-duality certificate from the dual point and U = eps / slack."""
    rec = problem.recover(z, eps)
    dual = problem.dual_value(z)
    cert = Certificate(dual, rec.primal_value, rec.primal_value - dual, rec.residuals, eps)
    return cert, rec


def follow_path(problem: BarrierProblem, config: IPMConfig | None = None,
                eta_target: float | None = None,
                trace_sink=None) -> SolveReport:
    """Phase I to the analytic center, then path following.

    Without ``eta_target`` the run ends with a certificate: eta grows until
    theta/eta <= delta/2, the point is polished, and eta keeps growing until
    the gap is at most delta.  With ``eta_target`` the run stops at that
    path parameter (after polishing) and no growth past it happens.
    """
    cfg = config or IPMConfig()
    t0 = time.perf_counter()
    theta = cfg.theta_bound or problem.theta_bound
    growth = cfg.growth_for(theta)
    feas_tol = cfg.feas_tol if cfg.feas_tol is not None else 1e-8 * (1.0 + problem.mass)
    b = problem.b
    A = problem.A
    counter = _Counter()
    trace: list = []

    def emit(row):
        trace.append(row)
        if trace_sink is not None:
            trace_sink(dict(zip(TRACE_FIELDS, row)))

    z, lam = _center(problem, b, A, problem.region.center.copy(), 0.0,
                     cfg.center_tol, cfg.max_newton, counter)
    emit((0, "I", 0.0, counter.newton, lam, problem.dual_value(z), math.nan,
          counter.flops))
    eta_stop = eta_target if eta_target is not None else 2.0 * theta / cfg.delta
    eta = min(0.125 / max(local_dual_norm(problem, z, b), 1e-300), eta_stop)
    outer = 0
    dual_prev = -math.inf
    while True:
        outer += 1
        z, lam = _center(problem, b, A, z, eta, cfg.center_tol, cfg.max_newton, counter)
        dual = problem.dual_value(z)
        if dual < dual_prev - 1e-10 * (1.0 + abs(dual_prev)):
            log.debug("dual value dropped from %r to %r", dual_prev, dual)
        dual_prev = max(dual_prev, dual)
        emit((outer, "II", eta, counter.newton, lam, dual, math.nan, counter.flops))
        if eta >= eta_stop or outer >= cfg.max_outer:
            break
        eta = min(eta * growth, eta_stop)

    cert = None
    certified = False
    primal = None
    while True:
        z, lam = _center(problem, b, A, z, eta, cfg.polish_tol, cfg.max_newton, counter)
        if eta_target is not None:
            break
        cert, rec = certify(problem, z, 1.0 / eta)
        primal = rec.primal
        certified = cert.certified(cfg.delta, feas_tol)
        emit((outer, "cert", eta, counter.newton, lam, cert.dual_value, cert.gap,
              counter.flops))
        if certified or outer >= cfg.max_outer:
            break
        outer += 1
        eta *= 2.0
    if eta_target is not None:
        emit((outer, "point", eta, counter.newton, lam, problem.dual_value(z),
              math.nan, counter.flops))
    value = cert.dual_value if cert is not None else problem.dual_value(z)
    return SolveReport(
        value=value,
        certificate=cert,
        certified=certified,
        z=z,
        primal=primal,
        eta=eta,
        newton_steps=counter.newton,
        outer_iterations=outer,
        flop_estimate=counter.flops,
        wall_time=time.perf_counter() - t0,
        newton_flops=counter.per_step,
        trace=trace,
    )


def path_point(problem: BarrierProblem, eps: float, config: IPMConfig | None = None):
    """Dual point on the path at eta = 1/eps and the value phi there."""
    if not eps > 0:
        raise InputError(f"eps must be positive, got {eps!r}")
    rep = follow_path(problem, config, eta_target=1.0 / eps)
    return rep.z, problem.dual_functional(rep.z, eps), rep
