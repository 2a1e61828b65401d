"""Cauchy-type transforms of ``z* c z`` and scalar spectral densities.

``Gt(b) = sum_n E(b (z* c z b)^n)`` is evaluated either by truncating the
series (each term from :mod:`moment_engine`) or by iterating the closed
relation

    g <- b (1 - b alpha(c (1 - c beta(g))^{-1}))^{-1}

from ``g0 = b``. All inversions are pointwise on step functions. The
scalar Cauchy transform of ``z* z`` is ``G(zeta) = tau(Gt(1/zeta))`` with
``c = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, SingularityError, ValidationError
from .moment_engine import StarWord, moment
from .step_algebra import (
    INVERSE_THRESHOLD,
    CovariancePair,
    StepFunction,
    alpha_apply,
    as_covariance,
    beta_apply,
    operator_norms,
)

__all__ = [
    "TransformQuery",
    "SeriesResult",
    "FixedPointResult",
    "series_guard",
    "gt_series",
    "gt_fixed_point",
    "r_transform",
    "k_map",
    "cauchy_scalar",
    "spectral_density",
    "moments_from_cauchy",
]

DAMPING = 0.5
DAMPING_AFTER = 200
# a step counts as non-contracting unless it shrinks the change by 1%
CONTRACTION_RATIO = 0.99


@dataclass(frozen=True, eq=False)
class TransformQuery:
    cov: CovariancePair
    c: StepFunction
    b: StepFunction
    series_order: int = 30
    fp_tolerance: float = 1e-12
    fp_max_iter: int = 10_000

    def __post_init__(self):
        cov = as_covariance(self.cov)
        object.__setattr__(self, "cov", cov)
        for name in ("b", "c"):
            f = getattr(self, name)
            if not isinstance(f, StepFunction):
                f = StepFunction.constant(cov.m, f) if np.isscalar(f) else StepFunction(f)
                object.__setattr__(self, name, f)
            if f.m != cov.m:
                raise ValidationError(f"{name} has m={f.m}, covariance has m={cov.m}")


@dataclass(frozen=True)
class SeriesResult:
    value: StepFunction
    terms: tuple = field(repr=False)
    guard_ok: bool

    @property
    def diverging(self) -> bool:
        return not self.guard_ok


@dataclass(frozen=True)
class FixedPointResult:
    value: StepFunction
    iterations: int
    damped: bool


def series_guard(cov, b: StepFunction, c: StepFunction) -> float:
    """``4 M ||b|| ||c||``; the Catalan bound makes the series converge when < 1."""
    M = max(operator_norms(cov))
    return 4.0 * M * b.sup_norm() * c.sup_norm()


def gt_series(q: TransformQuery) -> SeriesResult:
    """Partial sum ``sum_{n <= order} E(b (z* c z b)^n)``."""
    ok = series_guard(q.cov, q.b, q.c) < 1.0
    terms = []
    total = np.zeros(q.cov.m, dtype=complex)
    for n in range(q.series_order + 1):
        word = StarWord(("*", "1") * n, (q.c, q.b) * n, lead=q.b)
        t = moment(q.cov, word)
        terms.append(t)
        total = total + t.values
    return SeriesResult(StepFunction(total), tuple(terms), ok)


def _inv(x: np.ndarray, what: str) -> np.ndarray:
    bad = np.abs(x) < INVERSE_THRESHOLD
    if bad.any():
        raise SingularityError(f"{what} is not invertible in {int(bad.sum())} cell(s)")
    return 1.0 / x


def _fixed_point(A, B, b, c, tol, max_iter):
    """Iterate rowwise on arrays of shape (K, m); returns (g, iterations, damped)."""
    g = b.copy()
    K = g.shape[0]
    active = np.ones(K, dtype=bool)
    prev = np.full(K, np.inf)
    stalls = np.zeros(K, dtype=int)
    damp = np.zeros(K, dtype=bool)
    for it in range(1, max_iter + 1):
        ga, ba, ca = g[active], b[active], c[active]
        inner = ca * _inv(1.0 - ca * (ga @ B.T), "1 - c beta(g)")
        new = ba * _inv(1.0 - ba * (inner @ A.T), "1 - b alpha(.)")
        d = damp[active][:, None]
        new = np.where(d, DAMPING * ga + (1.0 - DAMPING) * new, new)
        delta = np.abs(new - ga).max(axis=1)
        g[active] = new
        idx = np.flatnonzero(active)
        stalls[idx] += delta >= CONTRACTION_RATIO * prev[idx]
        prev[idx] = delta
        damp[idx] |= stalls[idx] >= DAMPING_AFTER
        # absolute tolerance for |g| <= 1, relative above (rounding floor)
        done = delta < tol * np.maximum(1.0, np.abs(new).max(axis=1))
        active[idx[done]] = False
        if not active.any():
            return g, it, bool(damp.any())
    raise ConvergenceError(f"fixed point did not converge in {max_iter} iterations "
                           f"({int(active.sum())} of {K} evaluations pending)")


def gt_fixed_point(q: TransformQuery, check_guard: bool = True) -> FixedPointResult:
    """Solve ``g = b (1 - b alpha(c (1 - c beta(g))^{-1}))^{-1}`` by iteration.

    Raises :class:`SingularityError` if an intermediate step function hits
    zero and :class:`ConvergenceError` past ``fp_max_iter`` steps.
    """
    if check_guard and series_guard(q.cov, q.b, q.c) >= 1.0:
        raise ValidationError("outside the convergence guard 4 M ||b|| ||c|| < 1")
    g, it, damped = _fixed_point(q.cov.alpha_matrix, q.cov.beta_matrix,
                                 q.b.values[None, :].copy(), q.c.values[None, :],
                                 q.fp_tolerance, q.fp_max_iter)
    return FixedPointResult(StepFunction(g[0]), it, damped)


def r_transform(cov, c: StepFunction, b: StepFunction) -> StepFunction:
    """``R(b) = alpha(c (1 - c beta(b))^{-1})``."""
    cov = as_covariance(cov)
    return alpha_apply(cov, c * (1.0 - c * beta_apply(cov, b)).inverse())


def k_map(cov, c: StepFunction, b: StepFunction) -> StepFunction:
    """``K(b)`` defined by ``K(b)^{-1} = b^{-1} + R(b)``; inverts ``Gt``."""
    return (b.inverse() + r_transform(cov, c, b)).inverse()


def cauchy_scalar(cov, zeta, tol: float = 1e-12, max_iter: int = 10_000):
    """``G(zeta) = tau(E((zeta - z* z)^{-1}))`` for scalar or array ``zeta``.

    Valid for ``Im zeta != 0`` or ``|zeta| > 4 M``; the lower half-plane is
    handled through ``G(conj zeta) = conj G(zeta)``.
    """
    cov = as_covariance(cov)
    z = np.atleast_1d(np.asarray(zeta, dtype=complex))
    M = max(operator_norms(cov))
    ok = (z.imag != 0) | (np.abs(z) > 4.0 * M)
    if not ok.all():
        raise ValidationError("zeta must satisfy Im zeta != 0 or |zeta| > (2 sqrt M)^2")
    flip = z.imag < 0
    zu = np.where(flip, z.conj(), z)
    b = np.repeat((1.0 / zu)[:, None], cov.m, axis=1)
    c = np.ones_like(b)
    g, _, _ = _fixed_point(cov.alpha_matrix, cov.beta_matrix, b, c, tol, max_iter)
    G = g.mean(axis=1)
    G = np.where(flip, G.conj(), G)
    if np.ndim(zeta) == 0:
        return complex(G[0])
    return G


def spectral_density(cov, x_grid, epsilon: float = 1e-3, **kw) -> np.ndarray:
    """Rows ``(x, -Im G(x + i epsilon) / pi)``; the smoothing bias is O(epsilon)."""
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    x = np.asarray(x_grid, dtype=float)
    G = cauchy_scalar(cov, x + 1j * epsilon, **kw)
    return np.column_stack([x, -np.imag(G) / math.pi])


def moments_from_cauchy(cov, n_max: int, radius: float, points: int = 128) -> np.ndarray:
    """``tau((z* z)^n)``, ``n = 0..n_max``, read off ``G`` on a circle.

    Uses ``m_n = (1/P) sum_k G(zeta_k) zeta_k^{n+1}`` for ``P`` equispaced
    points; the aliasing error is of order ``m_{n+P} / radius^P``.
    """
    theta = 2 * np.pi * (np.arange(points) + 0.5) / points
    zeta = radius * np.exp(1j * theta)
    G = cauchy_scalar(cov, zeta)
    return np.array([np.mean(G * zeta ** (n + 1)) for n in range(n_max + 1)])
