"""Numerical evaluation of the hyperinvariant-subspace criterion.

For a block density ``H`` and region parameters ``c < d <= a`` the module
checks the support conditions block by block, evaluates the threshold
sequence ``mu_n = (K (1-gamma))^n / n!`` and compares it with Monte Carlo
estimates of ``s_theta(z^n)^2``. The criterion needs the ratio
``mu_n / s_theta(z^n)^2`` to go to zero.

It also produces the band-restriction bounds ``||z_eps|| <= 2 sqrt(eps ||H||)``
that force quasinilpotence of upper-triangular densities.

Verdicts are heuristic numerical evidence and are labelled as such.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .matrix_model import run_trials, sample, singular_numbers, singular_values
from .moment_engine import nested_powers
from .step_algebra import BlockDensity, CovariancePair, grid_index, make_preset

__all__ = [
    "CriterionConfig",
    "ConditionReport",
    "CriterionRefused",
    "CriterionReport",
    "QuasinilCertificate",
    "verify_support_conditions",
    "mu_sequence",
    "rho_level",
    "rho_dominance_check",
    "discrete_f_bound_check",
    "estimate_dt_singular_number",
    "s_theta_lower_bound",
    "criterion_report",
    "band_restriction",
    "quasinilpotence_certificate",
    "strip_sup",
    "HEURISTIC_NOTE",
]

HEURISTIC_NOTE = "numerical evidence only, not a proof"
SLOPE_MARGIN = -0.1
MIN_R2 = 0.8


@dataclass(frozen=True, eq=False)
class CriterionConfig:
    density: BlockDensity
    a: float
    c: float
    d: float
    r: float
    R: float
    theta: float
    gamma: float | None = None
    n_max: int = 8
    N: int = 1024
    trials: int = 4
    seed: int = 0

    def __post_init__(self):
        m = self.density.m
        ic, id_, ia = (grid_index(self.c, m, "c"), grid_index(self.d, m, "d"),
                       grid_index(self.a, m, "a"))
        if not 0 <= ic < id_ <= ia < m:
            raise ValidationError(f"need 0 <= c < d <= a < 1, got c={self.c}, d={self.d}, a={self.a}")
        if not 0.0 < self.theta < self.d - self.c:
            raise ValidationError(f"theta must lie in (0, d-c) = (0, {self.d - self.c}), got {self.theta}")
        if self.gamma is not None and not self.a <= self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in [a, 1), got {self.gamma}")
        if self.r <= 0 or self.R <= 0:
            raise ValidationError("r and R must be positive")
        if self.n_max < 1:
            raise ValidationError("n_max must be at least 1")
        if self.N % m:
            raise ValidationError(f"N={self.N} must be a multiple of m={m}")

    @property
    def indices(self) -> tuple[int, int, int]:
        m = self.density.m
        return grid_index(self.c, m), grid_index(self.d, m), grid_index(self.a, m)


@dataclass(frozen=True)
class ConditionReport:
    bounded_tail: bool          # (i)  H <= R on {a <= s <= t <= 1}
    constant_corner: bool       # (ii) H == r on {c <= s <= t <= d}
    vanishing: bool             # (iii) H == 0 on the excluded zones
    details: dict = field(default_factory=dict)

    @property
    def all(self) -> bool:
        return self.bounded_tail and self.constant_corner and self.vanishing

    def as_dict(self) -> dict:
        return {"i": self.bounded_tail, "ii": self.constant_corner, "iii": self.vanishing,
                "details": self.details}


class CriterionRefused(ValidationError):
    def __init__(self, report: ConditionReport):
        self.report = report
        failed = [k for k, v in report.as_dict().items() if v is False]
        super().__init__(f"support conditions fail: {failed}")


def _zero_zone_mask(m, ic, id_, ia) -> np.ndarray:
    i, j = np.indices((m, m))
    below = i > j
    zone = (i >= ic) & (j < ic)
    zone |= (i >= id_) & (j >= ic) & (j < id_)
    zone |= (i >= ia) & (j < ia)
    zone |= (i >= ic) & (i < id_) & (j >= ic) & (j < id_) & below
    zone |= (i >= ia) & below
    return zone


def verify_support_conditions(cfg: CriterionConfig, tol: float = 1e-12) -> ConditionReport:
    """Block-level checks of conditions (i)-(iii).

    Diagonal blocks count as part of ``{s <= t}``. The vanishing zone is
    ``[c,1]x[0,c] u [d,1]x[c,d] u [a,1]x[0,a]`` together with the parts
    of ``[c,d]^2`` and ``[a,1]^2`` strictly below the diagonal.
    """
    H = cfg.density.H
    m = cfg.density.m
    ic, id_, ia = cfg.indices
    i, j = np.indices((m, m))
    up = i <= j
    tail = (i >= ia) & up
    corner = (i >= ic) & (i < id_) & (j < id_) & up
    zero = _zero_zone_mask(m, ic, id_, ia)
    ok1 = bool(np.all(H[tail] <= cfg.R + tol))
    ok2 = bool(np.all(np.abs(H[corner] - cfg.r) <= tol * max(1.0, cfg.r)))
    ok3 = bool(np.all(H[zero] <= tol))
    details = {
        "tail_max": float(H[tail].max()),
        "corner_range": [float(H[corner].min()), float(H[corner].max())],
        "zero_zone_max": float(H[zero].max()) if zero.any() else 0.0,
    }
    return ConditionReport(ok1, ok2, ok3, details)


def mu_sequence(K: float, gamma: float, n_max: int) -> np.ndarray:
    """``mu_n = (K (1-gamma))^n / n!`` for ``n = 1..n_max``."""
    if K <= 0:
        raise ValidationError(f"K must be positive, got {K}")
    if not 0.0 <= gamma < 1.0:
        raise ValidationError(f"gamma must lie in [0, 1), got {gamma}")
    x = K * (1.0 - gamma)
    return np.array([x**n / math.factorial(n) for n in range(1, n_max + 1)])


def rho_level(mu: float, n: int, K: float, a: float = 0.0) -> float:
    """``rho = 1 - (n! mu)^{1/n} / K`` for ``mu`` in ``[0, K^n (1-a)^n / n!]``."""
    top = K**n * (1.0 - a) ** n / math.factorial(n)
    if not 0.0 <= mu <= top * (1 + 1e-12):
        raise ValidationError(f"mu={mu} outside [0, {top}]")
    return 1.0 - (math.factorial(n) * mu) ** (1.0 / n) / K


def strip_sup(density: BlockDensity, a: float) -> float:
    """``max H`` over the rows ``[a, 1]``, the smallest admissible ``K``."""
    ia = grid_index(a, density.m, "a")
    return float(density.H[ia:].max())


def _check_strip_support(density: BlockDensity, a: float):
    ia = grid_index(a, density.m, "a")
    if not 0 <= ia < density.m:
        raise ValidationError(f"a must lie in [0, 1), got {a}")
    rows = density.H[ia:]
    if np.any(np.tril(rows, ia - 1)):
        raise ValidationError("density has mass strictly below the diagonal in rows [a, 1]")
    return ia


def rho_dominance_check(density: BlockDensity, n: int, mu: float, K: float, a: float = 0.0) -> bool:
    """Whether ``f_n <= mu`` on every cell to the right of ``rho``.

    At block resolution the chain count overshoots the continuum bound by a
    shift of ``(n-1)/m``, so cells starting at or after
    ``rho + (n-1)/m`` are tested.
    """
    ia = _check_strip_support(density, a)
    m = density.m
    rho = rho_level(mu, n, K, a)
    f = nested_powers(CovariancePair.from_density(density), n, a)[-1].values.real
    start = max(ia, math.ceil((rho + (n - 1) / m) * m - 1e-9))
    return bool(np.all(f[start:] <= mu * (1 + 1e-12) + 1e-300))


def discrete_f_bound_check(density: BlockDensity, a: float, K: float | None = None, n_max: int = 10):
    """Check ``f_{n,i} <= (K^n / n!) ((m - i + n)/m)^n`` on the cells of ``[a, 1]``.

    ``i`` is the 1-based cell index. Returns ``(holds, max_ratio)`` where the
    ratio is ``f / bound`` over all ``n <= n_max`` and cells.
    """
    ia = _check_strip_support(density, a)
    m = density.m
    if K is None:
        K = strip_sup(density, a)
    fs = nested_powers(CovariancePair.from_density(density), n_max, a)
    i1 = np.arange(ia, m) + 1
    worst = 0.0
    for n in range(1, n_max + 1):
        bound = K**n / math.factorial(n) * ((m - i1 + n) / m) ** n
        f = fs[n].values.real[ia:]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, f / bound, np.where(f > 0, np.inf, 0.0))
        worst = max(worst, float(ratio.max()))
    return worst <= 1.0 + 1e-12, worst


def estimate_dt_singular_number(theta: float, N: int, trials: int, seed: int, m: int | None = None) -> float:
    """Monte Carlo ``s_theta(T)`` for the unit upper-triangular density."""
    dens = make_preset("upper_triangle", m or N)
    vals = run_trials(lambda s: singular_numbers(sample(dens, N, s).data, theta), trials, seed)
    return float(np.mean(vals))


def s_theta_lower_bound(cfg: CriterionConfig, n: int, s_hat: float | None) -> float:
    """``(r (d-c) / n)^{n/2} * s_hat^n`` with ``s_hat ~ s_{theta/(d-c)}(T)``."""
    if s_hat is None:
        raise ValidationError("an estimate of s_{theta/(d-c)}(T) is required")
    return (cfg.r * (cfg.d - cfg.c) / n) ** (n / 2) * s_hat**n


def _empirical_power_singulars(density, theta, N, n_max, trials, seed) -> np.ndarray:
    def one(s):
        A = sample(density, N, s).data
        P, out = None, []
        for _ in range(n_max):
            P = A if P is None else P @ A
            out.append(singular_numbers(P, theta, singular_values(P)) ** 2)
        return out

    return np.mean(run_trials(one, trials, seed), axis=0)


@dataclass(frozen=True)
class CriterionReport:
    rows: list           # dicts: n, mu, s_sq, lower_bound_sq, ratio, log_ratio, step_slope
    K: float
    gamma: float
    s_hat: float
    alpha_hat: float
    slope: float
    r2: float
    decreasing: bool
    verdict: str
    conditions: ConditionReport
    note: str = HEURISTIC_NOTE


def criterion_report(cfg: CriterionConfig, s_hat: float | None = None) -> CriterionReport:
    """Tabulate ``mu_n / s_theta(z^n)^2`` for ``n = 1..n_max`` and fit its log-slope.

    ``K`` is the block maximum of ``H`` on rows ``[a, 1]``. Unless given,
    ``gamma`` is chosen so that ``K (1-gamma) <= alpha/e`` with
    ``alpha = r (d-c) s_hat^2``, clamped to ``[a, 1)``. The verdict is
    ``PASS`` when the least-squares slope of ``log ratio`` against ``n`` is
    below -0.1 with ``R^2 > 0.8``, else ``INCONCLUSIVE``.
    """
    cond = verify_support_conditions(cfg)
    if not cond.all:
        raise CriterionRefused(cond)
    K = strip_sup(cfg.density, cfg.a)
    if K <= 0:
        K = cfg.R
    theta_t = cfg.theta / (cfg.d - cfg.c)
    if s_hat is None:
        s_hat = estimate_dt_singular_number(theta_t, cfg.N, cfg.trials, cfg.seed + 10_000)
    alpha_hat = cfg.r * (cfg.d - cfg.c) * s_hat**2
    if cfg.gamma is None:
        gamma = min(max(cfg.a, 1.0 - alpha_hat / (math.e * K)), math.nextafter(1.0, 0.0))
    else:
        gamma = cfg.gamma
    mu = mu_sequence(K, gamma, cfg.n_max)
    s_sq = _empirical_power_singulars(cfg.density, cfg.theta, cfg.N, cfg.n_max, cfg.trials, cfg.seed)
    ratio = mu / s_sq
    logr = np.log(ratio)
    ns = np.arange(1, cfg.n_max + 1)
    if cfg.n_max >= 2:
        slope, icept = np.polyfit(ns, logr, 1)
        resid = logr - (slope * ns + icept)
        ss = float(((logr - logr.mean()) ** 2).sum())
        r2 = 1.0 - float((resid**2).sum()) / ss if ss > 0 else 0.0
    else:
        slope, r2 = float("nan"), float("nan")
    rows = []
    for k, n in enumerate(ns):
        rows.append({
            "n": int(n),
            "mu": float(mu[k]),
            "s_sq": float(s_sq[k]),
            "lower_bound_sq": s_theta_lower_bound(cfg, int(n), s_hat) ** 2,
            "ratio": float(ratio[k]),
            "log_ratio": float(logr[k]),
            "step_slope": float(logr[k] - logr[k - 1]) if k else float("nan"),
        })
    decreasing = bool(np.all(np.diff(ratio) < 0))
    verdict = "PASS" if slope < SLOPE_MARGIN and r2 > MIN_R2 else "INCONCLUSIVE"
    return CriterionReport(rows, K, gamma, s_hat, alpha_hat, float(slope), float(r2),
                           decreasing, verdict, cond)


def band_restriction(density: BlockDensity, eps: float) -> BlockDensity:
    """Keep the blocks with ``0 <= j - i < eps m``; zero elsewhere."""
    m = density.m
    k = grid_index(eps, m, "eps")
    if not 0 < k <= m:
        raise ValidationError(f"eps must lie in (0, 1], got {eps}")
    i, j = np.indices((m, m))
    keep = (j >= i) & (j - i < k)
    return BlockDensity(np.where(keep, density.H, 0.0))


@dataclass(frozen=True)
class QuasinilCertificate:
    rows: list           # (eps, crude bound, sharp bound)
    H_delta_sup: float
    verdict: str
    note: str = HEURISTIC_NOTE

    @property
    def min_bound(self) -> float:
        return min(min(r[1], r[2]) for r in self.rows)


def quasinilpotence_certificate(density: BlockDensity, delta: float, eps_grid) -> QuasinilCertificate:
    """Spectral-radius bounds ``r(z) <= ||z_eps||`` along ``eps_grid``.

    For each ``eps <= delta`` reports the crude bound
    ``2 sqrt(eps ||H_delta||_inf)`` and the sharper
    ``2 max(||CE_1(H_eps)||, ||CE_2(H_eps)||)^{1/2}``. The verdict is
    ``QUASINILPOTENT`` when the sharp bounds decrease as ``eps`` shrinks and
    fall off at least like ``eps^{1/4}`` in a log-log fit.
    """
    if np.any(np.tril(density.H, -1)):
        raise ValidationError("density has mass strictly below the diagonal")
    H_delta = band_restriction(density, delta)
    hsup = float(H_delta.H.max())
    eps_sorted = sorted({float(e) for e in eps_grid}, reverse=True)
    if not eps_sorted:
        raise ValidationError("empty eps grid")
    rows = []
    for eps in eps_sorted:
        if eps > delta + 1e-12:
            raise ValidationError(f"eps={eps} exceeds delta={delta}")
        Heps = band_restriction(density, eps)
        ce = max(float(Heps.marginal_1.max()), float(Heps.marginal_2.max()))
        rows.append((eps, 2.0 * math.sqrt(eps * hsup), 2.0 * math.sqrt(ce)))
    sharp = np.array([r[2] for r in rows])
    verdict = "INCONCLUSIVE"
    if len(rows) >= 2 and np.all(np.diff(sharp) <= 1e-15) and sharp[-1] < sharp[0]:
        if np.all(sharp > 0):
            slope = np.polyfit(np.log([r[0] for r in rows]), np.log(sharp), 1)[0]
            if slope >= 0.25:
                verdict = "QUASINILPOTENT"
        else:
            verdict = "QUASINILPOTENT"
    return QuasinilCertificate(rows, hsup, verdict)
