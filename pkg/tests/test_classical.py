import itertools
import math

import numpy as np
import pytest

from otbarrier import classical as cl
from otbarrier.errors import (
    BoundViolation,
    DimensionError,
    InputError,
    NonPositiveMarginalError,
    SizeLimitError,
)
from otbarrier.validate import highs_value, product_upper

from conftest import random_classical

HALF = np.array([0.5, 0.5])


def _inst(C, *P):
    return cl.ClassicalInstance(np.asarray(C, dtype=float), list(P))


# -- slack and dual objective ------------------------------------------------


def test_slack_at_zero_is_cost(rng):
    inst = random_classical(rng, (3, 4))
    S = cl.slack_tensor(inst, [np.zeros(3), np.zeros(4)])
    assert np.array_equal(S, inst.C)
    assert S.min() == inst.c_min


def test_slack_matches_loops(rng):
    inst = random_classical(rng, (3, 3, 2))
    z = [rng.standard_normal(n) for n in inst.dims]
    S = cl.slack_tensor(inst, z)
    for idx in itertools.product(*map(range, inst.dims)):
        ref = inst.C[idx] - sum(z[i][j] for i, j in enumerate(idx))
        assert abs(S[idx] - ref) <= 1e-14


def test_dual_functional_outside_domain():
    inst = _inst([[1.0]], [1.0], [1.0])
    assert cl.dual_functional(inst, [np.array([2.0]), np.array([0.0])], 0.1) == -math.inf


def test_start_dual_interior_and_balanced(rng):
    inst = random_classical(rng, (3, 5, 2))
    z = cl.start_dual(inst)
    assert cl.slack_tensor(inst, z).min() >= 1.0 - 1e-14
    assert cl.balance_residual(z) <= 1e-14


# -- rebalance ---------------------------------------------------------------


def test_rebalance_example():
    x, y = cl.rebalance([np.array([1.0, 1.0]), np.zeros(2)])
    assert np.allclose(x, [0.5, 0.5], atol=1e-15)
    assert np.allclose(y, [0.5, 0.5], atol=1e-15)


def test_rebalance_identity_when_balanced():
    z = [np.array([1.0, 2.0]), np.array([3.0, 0.0])]
    out = cl.rebalance(z)
    assert all(np.array_equal(a, b) for a, b in zip(z, out))


def test_rebalance_invariance(rng):
    for dims in [(3, 4), (2, 3, 4)]:
        inst = random_classical(rng, dims)
        z = [rng.standard_normal(n) * 3 for n in dims]
        zb = cl.rebalance(z)
        assert np.max(np.abs(cl.slack_tensor(inst, z) - cl.slack_tensor(inst, zb))) <= 1e-14
        assert cl.dual_objective(inst, z) == pytest.approx(cl.dual_objective(inst, zb),
                                                           abs=1e-13)
        assert cl.balance_residual(zb) <= 1e-14


# -- LP reference ------------------------------------------------------------


def test_lp_zero_cost():
    tau, V = cl.lp_reference(_inst(np.zeros((3, 2)), [0.2, 0.3, 0.5], [0.4, 0.6]))
    assert tau == 0.0
    assert np.allclose(V.sum(axis=1), [0.2, 0.3, 0.5])


def test_lp_antidiagonal():
    tau, V = cl.lp_reference(_inst([[0, 1], [1, 0]], HALF, HALF))
    assert abs(tau) <= 1e-15
    assert np.allclose(V, np.eye(2) / 2)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_lp_permutation_oracle(rng, n):
    C = rng.uniform(-1, 1, size=(n, n))
    u = np.full(n, 1.0 / n)
    tau, _ = cl.lp_reference(_inst(C, u, u))
    best = min(sum(C[i, s[i]] for i in range(n)) for s in itertools.permutations(range(n)))
    assert tau == pytest.approx(best / n, abs=1e-12)


def test_lp_matches_highs_and_sandwich(rng):
    for dims in [(2, 2), (3, 5), (6, 4), (3, 3, 3), (2, 3, 2, 2)]:
        inst = random_classical(rng, dims)
        tau, V = cl.lp_reference(inst)
        assert tau == pytest.approx(highs_value(inst), abs=1e-10)
        assert inst.c_min * inst.common_mass - 1e-12 <= tau <= product_upper(inst) + 1e-12
        assert V.min() >= 0
        for i, p in enumerate(inst.P.p):
            assert np.max(np.abs(cl.marginal(V, i) - p)) <= 1e-12


def test_lp_size_limit():
    n = 142  # 142^2 > 20000
    u = np.full(n, 1.0 / n)
    with pytest.raises(SizeLimitError):
        cl.lp_reference(_inst(np.zeros((n, n)), u, u))


# -- entropic ----------------------------------------------------------------


def test_entropic_zero_cost():
    eps = 0.3
    er = cl.entropic_sinkhorn(_inst(np.zeros((2, 2)), HALF, HALF), eps)
    assert np.allclose(er.U, 0.25, atol=1e-12)
    assert er.tau_eps == pytest.approx(-eps * 2 * math.log(2), abs=1e-12)


def test_entropic_single_cell():
    er = cl.entropic_sinkhorn(_inst([[0.7]], [1.0], [1.0]), 0.1)
    assert er.U[0, 0] == pytest.approx(1.0)
    assert er.tau_eps == pytest.approx(0.7, abs=1e-14)


def _golden(f, lo, hi, tol=1e-14):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    while b - a > tol:
        if f(c) < f(d):
            b, d = d, c
            c = b - g * (b - a)
        else:
            a, c = c, d
            d = a + g * (b - a)
    return 0.5 * (a + b)


def test_entropic_golden_section_oracle():
    eps = 0.1

    def obj(a):
        u = np.array([a, 0.5 - a, 0.5 - a, a])
        return 2 * (0.5 - a) + eps * float(np.sum(u * np.log(u)))

    a = _golden(obj, 1e-12, 0.5 - 1e-12)
    er = cl.entropic_sinkhorn(_inst([[0, 1], [1, 0]], HALF, HALF), eps, tol=1e-12)
    assert er.tau_eps == pytest.approx(obj(a), abs=1e-9)
    assert er.U[0, 0] == pytest.approx(a, abs=1e-6)


def test_entropic_chain(rng):
    for _ in range(5):
        inst = random_classical(rng, (4, 5))
        tau, _ = cl.lp_reference(inst)
        delta = 1e-2
        er = cl.entropic_sinkhorn(inst, cl.entropic_eps(delta, inst.dims))
        assert er.tau_eps <= tau + 1e-12
        assert tau <= er.tau_eps + delta + 1e-12


def test_entropic_small_eps_no_underflow():
    # exp(-C / eps) underflows to 0 in the whole second row, yet the
    # log-domain iteration still returns a coupling with full marginals
    C = np.array([[0.0, 1.0], [1e4, 1e4]])
    assert np.all(np.exp(-C[1] / 1e-3) == 0.0)
    er = cl.entropic_sinkhorn(_inst(C, HALF, HALF), 1e-3)
    assert np.allclose(er.U.sum(axis=1), HALF, atol=1e-9)
    assert np.allclose(er.U.sum(axis=0), HALF, atol=1e-9)


def test_entropic_needs_probability():
    with pytest.raises(InputError):
        cl.entropic_sinkhorn(_inst(np.zeros((2, 2)), [1.0, 1.0], [1.0, 1.0]), 0.1)


# -- rescaling and barrier Sinkhorn -------------------------------------------


def test_rescale_single_cell():
    inst = _inst([[2.0]], [1.0], [1.0])
    eps = 0.25
    z = cl.rescale_mode(inst, [np.zeros(1), np.zeros(1)], 0, np.array([1 / eps]))
    assert cl.slack_tensor(inst, z)[0, 0] == pytest.approx(eps, abs=1e-14)


def test_rescale_equal_slacks():
    inst = _inst(np.full((2, 3), 5.0), HALF, np.full(3, 1 / 3))
    z = [np.zeros(2), np.full(3, 1.0)]
    t = 2.0
    out = cl.rescale_mode(inst, z, 0, np.array([t, t]))
    # each row has slacks a = 4; shift = n2 / t - a
    assert np.allclose(out[0], -(3 / t - 4.0), atol=1e-14)


def test_rescale_random_slices(rng):
    inst = random_classical(rng, (3, 3))
    z = cl.start_dual(inst)
    targets = rng.uniform(0.5, 5.0, size=3)
    for i in range(2):
        out = cl.rescale_mode(inst, z, i, targets, tol=1e-12)
        sums = (1.0 / cl.slack_tensor(inst, out)).sum(axis=1 - i)
        assert np.max(np.abs(sums - targets)) <= 1e-12


def test_barrier_sinkhorn_single_cell():
    bs = cl.barrier_sinkhorn(_inst([[0.7]], [1.0], [1.0]), 0.1)
    assert bs.U[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert bs.tau_beta == pytest.approx(0.7, abs=1e-12)
    assert np.allclose(bs.z[0], bs.z[1])


def test_barrier_sinkhorn_zero_cost():
    eps = 0.05
    bs = cl.barrier_sinkhorn(_inst(np.zeros((2, 2)), HALF, HALF), eps, tol=1e-12)
    assert np.allclose(bs.U, 0.25, atol=1e-12)
    assert bs.tau_beta == pytest.approx(4 * eps * math.log(4), abs=1e-10)


def _primal_2x2(C, p, q, eps):
    """Minimize <C,U> - eps sum log u over the one-parameter 2x2 coupling family."""
    lo = max(0.0, q[0] - p[1])
    hi = min(p[0], q[0])

    def U(a):
        return np.array([[a, p[0] - a], [q[0] - a, p[1] - q[0] + a]])

    def dg(a):
        u = U(a)
        return (C[0, 0] - C[0, 1] - C[1, 0] + C[1, 1]
                - eps * (1 / u[0, 0] - 1 / u[0, 1] - 1 / u[1, 0] + 1 / u[1, 1]))

    # dg is increasing; bisect to machine precision
    a0, a1 = lo, hi
    for _ in range(200):
        m = 0.5 * (a0 + a1)
        if m in (a0, a1):
            break
        if dg(m) < 0:
            a0 = m
        else:
            a1 = m
    u = U(0.5 * (a0 + a1))
    return float(np.sum(C * u) - eps * np.log(u).sum()), u


def test_barrier_sinkhorn_primal_oracle(rng):
    for _ in range(10):
        inst = random_classical(rng, (2, 2))
        eps = 0.05
        ref, u = _primal_2x2(inst.C, *inst.P.p, eps)
        bs = cl.barrier_sinkhorn(inst, eps, tol=1e-12)
        assert bs.tau_beta == pytest.approx(ref, abs=1e-8)
        assert np.allclose(bs.U, u, atol=1e-8)


def test_barrier_sinkhorn_fixed_point_and_monotone(rng):
    for dims in [(3, 4), (2, 3, 3)]:
        inst = random_classical(rng, dims)
        eps, tol = 0.05, 1e-10
        bs = cl.barrier_sinkhorn(inst, eps, tol=tol)
        assert bs.converged
        assert np.max(np.abs(bs.U - eps / cl.slack_tensor(inst, bs.z))) <= 10 * tol
        assert bs.U.min() > 0
        phis = [r[1] for r in bs.trace]
        assert all(b >= a - 1e-12 * (1 + abs(a)) for a, b in zip(phis, phis[1:]))
        for i, p in enumerate(inst.P.p):
            assert np.max(np.abs(cl.marginal(bs.U, i) - p)) <= tol * (1 + inst.common_mass)


def test_barrier_sinkhorn_unique_fixed_point(rng):
    inst = random_classical(rng, (3, 3))
    eps = 0.1
    a = cl.barrier_sinkhorn(inst, eps, tol=1e-11)
    z0 = [x + rng.normal(size=x.size) - 3.0 for x in cl.start_dual(inst)]
    b = cl.barrier_sinkhorn(inst, eps, tol=1e-11, z0=z0)
    for x, y in zip(cl.rebalance(a.z), cl.rebalance(b.z)):
        assert np.allclose(x, y, atol=1e-6)


# -- bound chain -------------------------------------------------------------


def test_bound_chain_holds_and_shrinks(rng):
    inst = random_classical(rng, (2, 2))
    tau, _ = cl.lp_reference(inst)
    gaps = []
    for eps in (0.1, 1e-3):
        bs = cl.barrier_sinkhorn(inst, eps, tol=1e-11)
        ch = cl.bound_chain_classical(inst, eps, tau, bs.tau_beta)
        assert ch.holds and ch.lower_margin > 0 and ch.upper_margin > 0
        gaps.append(ch.upper - tau)
    assert gaps[1] < gaps[0] / 10


def test_bound_chain_violation_and_guards(rng):
    inst = random_classical(rng, (2, 2))
    with pytest.raises(BoundViolation):
        cl.bound_chain_classical(inst, 0.1, 0.0, -1.0)
    with pytest.raises(InputError):
        cl.bound_chain_classical(_inst(np.zeros((2, 2)), HALF, HALF), 0.1, 0.0, 0.1)
    with pytest.raises(DimensionError):
        cl.bound_chain_classical(random_classical(rng, (2, 2, 2)), 0.1, 0.0, 0.1)


# -- input validation --------------------------------------------------------


def test_marginal_validation():
    with pytest.raises(NonPositiveMarginalError):
        _inst(np.zeros((2, 2)), [1.0, 0.0], HALF * 2)
    with pytest.raises(InputError):
        _inst(np.zeros((2, 2)), HALF, [0.5, 0.6])
    with pytest.raises(DimensionError):
        _inst(np.zeros((2, 3)), HALF, HALF)
    with pytest.raises(DimensionError):
        cl.MarginalFamily([HALF])
