"""Oracle and invariant checks for a single instance.

Each check returns ``(name, passed, detail)``; ``validate`` in the CLI
prints them and exits 0 only if every one passes.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog

from . import classical as cl
from . import quantum as qu
from .barriers import BarrierProblem, make_problem, sample_interior
from .ipm import IPMConfig, follow_path, path_point

DELTA = 1e-6


def fd_errors(problem: BarrierProblem, z: np.ndarray, h_grad: float = 1e-5,
              h_hess: float = 1e-5) -> tuple[float, float]:
    """Relative errors of the analytic gradient and Hessian vs central differences."""
    ev = problem.evaluate(z)
    E = np.eye(problem.dim)
    hg = h_grad * (1.0 + np.linalg.norm(z))
    hh = h_hess * (1.0 + np.linalg.norm(z))
    g = np.array([
        (problem.evaluate(z + hg * e, 0).value - problem.evaluate(z - hg * e, 0).value) / (2 * hg)
        for e in E
    ])
    H = np.array([
        (problem.evaluate(z + hh * e, 1).gradient - problem.evaluate(z - hh * e, 1).gradient)
        / (2 * hh)
        for e in E
    ])
    H = 0.5 * (H + H.T)
    eg = np.linalg.norm(g - ev.gradient) / max(np.linalg.norm(ev.gradient), 1e-300)
    eh = np.linalg.norm(H - ev.hessian) / max(np.linalg.norm(ev.hessian), 1e-300)
    return float(eg), float(eh)


def restricted_min_eig(problem: BarrierProblem, H: np.ndarray) -> float:
    """Smallest eigenvalue of H on the null space of A."""
    A = problem.A
    if A.shape[0] == 0:
        return float(np.linalg.eigvalsh(H)[0])
    _, s, Vt = np.linalg.svd(A)
    Z = Vt[A.shape[0]:].T
    return float(np.linalg.eigvalsh(Z.T @ H @ Z)[0])


def highs_value(inst: cl.ClassicalInstance) -> float:
    """LP optimum from scipy's HiGHS, an independent check on the simplex."""
    A = cl._marginal_matrix(inst.dims)
    r = linprog(inst.C.ravel(), A_eq=A, b_eq=inst.P.stacked(), bounds=(0, None),
                method="highs")
    if r.status != 0:
        raise RuntimeError(f"HiGHS failed: {r.message}")
    return float(r.fun)


def product_upper(inst) -> float:
    """Objective of the product coupling, an upper bound on the optimum."""
    if isinstance(inst, qu.QuantumInstance):
        rho = inst.R.rho[0]
        for r in inst.R.rho[1:]:
            rho = np.kron(rho, r)
        m = inst.common_trace
        return float(np.vdot(inst.C.matrix, rho).real) / m ** (inst.d - 1)
    V = inst.P.p[0]
    for p in inst.P.p[1:]:
        V = np.multiply.outer(V, p)
    return float(np.sum(inst.C * V)) / inst.common_mass ** (inst.d - 1)


def _fd_check(problem, seed, k=3):
    worst = (0.0, 0.0)
    pd = math.inf
    for z in sample_interior(problem, k, seed=seed, near_boundary=False):
        eg, eh = fd_errors(problem, z)
        worst = (max(worst[0], eg), max(worst[1], eh))
        pd = min(pd, restricted_min_eig(problem, problem.evaluate(z).hessian))
    ok = worst[0] <= 1e-6 and worst[1] <= 1e-4 and pd > 0
    return ("derivatives", ok,
            f"grad err {worst[0]:.2e}, hess err {worst[1]:.2e}, restricted min eig {pd:.2e}")


def _classical_checks(inst: cl.ClassicalInstance, seed: int):
    out = []
    tau, V = cl.lp_reference(inst)
    ref = highs_value(inst)
    out.append(("lp vs HiGHS", abs(tau - ref) <= 1e-9 * (1 + abs(tau)),
                f"simplex {tau!r}, HiGHS {ref!r}"))
    lo = inst.c_min * inst.common_mass
    hi = product_upper(inst)
    out.append(("lp sandwich", lo - 1e-12 <= tau <= hi + 1e-12,
                f"{lo!r} <= {tau!r} <= {hi!r}"))

    problem = make_problem(inst)
    rep = follow_path(problem, IPMConfig(delta=DELTA))
    err = abs(rep.value - tau)
    out.append(("ipm vs lp", rep.certified and err <= 1e-6 * (1 + abs(tau)),
                f"ipm {rep.value!r}, gap {rep.certificate.gap:.2e}, |diff| {err:.2e}"))
    out.append(("optimizer inside ball",
                float(np.linalg.norm(rep.z - problem.region.center)) < problem.region.radius,
                f"distance {np.linalg.norm(rep.z - problem.region.center):.3e} "
                f"< r {problem.region.radius:.3e}"))

    if inst.d == 2 and abs(inst.common_mass - 1.0) <= 1e-12:
        d = 1e-3
        er = cl.entropic_sinkhorn(inst, cl.entropic_eps(d, inst.dims))
        ok = er.tau_eps <= tau + 1e-12 and tau <= er.tau_eps + d + 1e-12
        out.append(("entropic chain", ok, f"{er.tau_eps!r} <= {tau!r} <= +{d}"))

    eps = 0.1
    bs = cl.barrier_sinkhorn(inst, eps, tol=1e-9)
    phis = [row[1] for row in bs.trace]
    mono = all(b >= a - 1e-12 * (1 + abs(a)) for a, b in zip(phis, phis[1:]))
    fp = float(np.max(np.abs(bs.U - eps / cl.slack_tensor(inst, bs.z))))
    _, phi_ipm, _ = path_point(problem, eps)
    ok = bs.converged and mono and fp <= 1e-7 and abs(bs.tau_beta - phi_ipm) <= 1e-6
    out.append(("barrier sinkhorn", ok,
                f"residual {bs.residual:.1e}, monotone {mono}, "
                f"tau_beta {bs.tau_beta!r} vs ipm {phi_ipm!r}"))

    if inst.d == 2 and inst.c > 0:
        ch = cl.bound_chain_classical(inst, eps, tau, bs.tau_beta, check=False)
        out.append(("bound chain eps=0.1", ch.holds,
                    f"margins {ch.lower_margin:.3e}, {ch.upper_margin:.3e}"))

    rng = np.random.default_rng(seed)
    z = [rng.standard_normal(n) for n in inst.dims]
    zb = cl.rebalance(z)
    ok = (np.max(np.abs(cl.slack_tensor(inst, z) - cl.slack_tensor(inst, zb))) <= 1e-13
          and abs(cl.dual_objective(inst, z) - cl.dual_objective(inst, zb)) <= 1e-12
          and cl.balance_residual(zb) <= 1e-12)
    out.append(("rebalance invariance", ok, "slack and objective preserved"))
    out.append(_fd_check(problem, seed))
    return out


def _quantum_checks(inst: qu.QuantumInstance, seed: int):
    out = []
    problem = make_problem(inst)
    rep = follow_path(problem, IPMConfig(delta=DELTA))
    c = rep.certificate
    out.append(("ipm certificate", rep.certified and max(c.primal_residuals) <= 5e-6,
                f"gap {c.gap:.2e}, max residual {max(c.primal_residuals):.2e}"))
    lo = inst.lambda_min * inst.common_trace
    hi = product_upper(inst)
    out.append(("value bounds", lo - 1e-9 <= rep.value <= hi + 1e-9,
                f"{lo!r} <= {rep.value!r} <= {hi!r}"))
    out.append(("optimizer inside ball",
                float(np.linalg.norm(rep.z - problem.region.center)) < problem.region.radius,
                f"r = {problem.region.radius:.3e}"))
    eps = 0.1
    _, kb, _ = path_point(problem, eps)
    if inst.norm2 > 0:
        ch = qu.bound_chain_quantum(inst, eps, rep.value, kb, check=False)
        if inst.d == 2:
            out.append(("bound chain eps=0.1", ch.holds,
                        f"margins {ch.lower_margin:.3e}, {ch.upper_margin:.3e}"))
        else:
            out.append(("multipartite chain (report only)", True,
                        f"literal holds {ch.holds_literal}, pattern holds {ch.holds_pattern}"))
    red = qu.diagonal_reduction(inst)
    if red is not None:
        tau, _ = cl.lp_reference(red)
        out.append(("diagonal reduction: value", abs(rep.value - tau) <= 1e-6,
                    f"quantum {rep.value!r}, classical {tau!r}"))
        bs = cl.barrier_sinkhorn(red, eps, tol=1e-10)
        out.append(("diagonal reduction: barrier value", abs(kb - bs.tau_beta) <= 1e-6,
                    f"quantum {kb!r}, classical {bs.tau_beta!r}"))
    out.append(_fd_check(problem, seed))
    return out


def run_checks(inst, seed: int = 0) -> list:
    if isinstance(inst, qu.QuantumInstance):
        return _quantum_checks(inst, seed)
    return _classical_checks(inst, seed)
