"""Root of f(x) = sum_i 1/(x + a_i) = a on (-min(a), inf).

This is the inner kernel of the reciprocal-slack rescaling: every slice of a
slack tensor is shifted so that its reciprocal sum hits a target.  ``f`` is
convex and strictly decreasing, so bisection can be handed off safely to
Newton started from the left end of the bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InputError


@dataclass(frozen=True)
class ShiftSpectrum:
    """Shifts ``a`` sorted in descending order; ``a[-1]`` is the minimum."""

    a: np.ndarray

    def __post_init__(self):
        a = np.sort(np.asarray(self.a, dtype=float).ravel())[::-1]
        if a.size == 0 or not np.all(np.isfinite(a)):
            raise InputError("shift spectrum must be a non-empty finite vector")
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def a_min(self) -> float:
        return float(self.a[-1])


@dataclass
class RootResult:
    x: float
    f_at_x: float
    iterations_bisect: int
    iterations_newton: int
    bracket_final: tuple
    # (lo, hi) after each bisection step and the Newton iterates;
    # filled only when requested
    history: list = field(default_factory=list, repr=False)
    newton_path: list = field(default_factory=list, repr=False)


def f_and_derivs(x: float, s: ShiftSpectrum) -> tuple[float, float, float]:
    u = x + s.a
    if not np.all(u > 0):
        raise DomainError(f"x={x!r} is not above -min(a)={-s.a_min!r}")
    r = 1.0 / u
    r2 = r * r
    return float(r.sum()), float(-r2.sum()), float(2.0 * (r2 * r).sum())


def _f(x: float, a: np.ndarray) -> float:
    return float(np.sum(1.0 / (x + a)))


def bracket(a_target: float, s: ShiftSpectrum) -> tuple[float, float]:
    if not a_target > 0:
        raise InputError(f"target must be positive, got {a_target!r}")
    return 1.0 / a_target - s.a_min, s.n / a_target - s.a_min


def bisection_budget(n: int, a_target: float, tol: float) -> int:
    """ceil(log2(n(n-1)a/tol)) steps guarantee |f - a| <= tol (base 2)."""
    if n < 2:
        return 0
    return max(0, math.ceil(math.log2(n * (n - 1) * a_target / tol)))


def solve(
    a_target: float,
    s: ShiftSpectrum,
    tol: float = 1e-12,
    max_newton: int = 60,
    record: bool = False,
) -> RootResult:
    """Find ``x > -min(a)`` with ``|f(x) - a_target| <= tol``.

    Bisection shrinks the bracket to width <= min(1, lo + min(a)) (never
    beyond the guaranteed budget), then Newton runs from the lower end
    where it increases monotonically toward the root.  A Newton iterate
    that lands outside the current bracket is replaced by the midpoint.
    """
    if not tol > 0:
        raise InputError(f"tol must be positive, got {tol!r}")
    lo, hi = bracket(a_target, s)
    a = s.a
    n = s.n
    if n == 1 or a[0] == a[-1]:
        x = n / a_target - a[0]
        return RootResult(x, _f(x, a), 0, 0, (x, x))

    history = [(lo, hi)] if record else []
    budget = bisection_budget(n, a_target, tol)
    k = 0
    while k < budget and hi - lo > min(1.0, lo + s.a_min):
        mid = 0.5 * (lo + hi)
        fm = _f(mid, a)
        k += 1
        if fm > a_target:
            lo = mid
        elif fm < a_target:
            hi = mid
        else:
            lo = hi = mid
        if record:
            history.append((lo, hi))
        if abs(fm - a_target) <= tol:
            return RootResult(mid, fm, k, 0, (lo, hi), history)
    if lo == hi:
        return RootResult(lo, _f(lo, a), k, 0, (lo, hi), history)

    x = lo
    fx = _f(x, a)
    path = [x] if record else []
    if abs(fx - a_target) <= tol:
        return RootResult(x, fx, k, 0, (lo, hi), history, path)
    for m in range(1, max_newton + 1):
        u = x + a
        r = 1.0 / u
        fx = float(r.sum())
        dfx = -float((r * r).sum())
        step = (a_target - fx) / dfx
        x_new = x + step
        if not lo <= x_new <= hi:
            x_new = 0.5 * (lo + hi)
        f_new = _f(x_new, a)
        if record:
            path.append(x_new)
        if f_new > a_target:
            lo = max(lo, x_new)
        elif f_new < a_target:
            hi = min(hi, x_new)
        if abs(f_new - a_target) <= tol or x_new == x:
            return RootResult(x_new, f_new, k, m, (lo, hi), history, path)
        x = x_new
    return RootResult(x, _f(x, a), k, max_newton, (lo, hi), history, path)
