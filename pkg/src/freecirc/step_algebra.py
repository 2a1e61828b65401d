"""Step functions on [0,1], block densities on [0,1]^2 and covariance maps.

Everything lives on a uniform grid of ``m`` cells; cell ``i`` (0-based) is
``[i/m, (i+1)/m)``. A block density ``H`` has ``H[i, j]`` equal to the
density on cell ``(s in i, t in j)``. For block-constant data the
covariance maps are finite sums and therefore exact::

    alpha(f)[j] = (1/m) * sum_i H_alpha[i, j] * f[i]
    beta(g)[i]  = (1/m) * sum_j H_beta[i, j]  * g[j]
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularityError, ValidationError

__all__ = [
    "StepFunction",
    "BlockDensity",
    "CovariancePair",
    "as_covariance",
    "grid_index",
    "make_preset",
    "PRESETS",
    "alpha_apply",
    "beta_apply",
    "adjoint",
    "cov_sum",
    "conjugate",
    "compress_rescale",
    "traciality_check",
    "operator_norms",
    "norm_bounds",
    "two_norm",
    "gaussian_covariance_matrix",
    "covariance_from_gaussian",
    "INVERSE_THRESHOLD",
]

INVERSE_THRESHOLD = 1e-14
_ALIGN_TOL = 1e-9


def grid_index(x: float, m: int, name: str = "endpoint") -> int:
    """Return ``k`` with ``x == k/m``; raise if ``x`` is not on the grid."""
    k = round(float(x) * m)
    if abs(k - float(x) * m) > _ALIGN_TOL:
        raise ValidationError(f"{name}={x} is not a multiple of 1/{m}")
    return int(k)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class StepFunction:
    """Piecewise-constant complex function on the ``m``-cell grid."""

    __slots__ = ("values",)

    def __init__(self, values):
        v = np.array(values, dtype=complex).reshape(-1)
        if v.size < 1:
            raise ValidationError("a step function needs at least one cell")
        object.__setattr__(self, "values", _frozen(v))

    def __setattr__(self, key, value):
        raise AttributeError("StepFunction is immutable")

    @classmethod
    def constant(cls, m: int, c: complex = 1.0) -> "StepFunction":
        return cls(np.full(int(m), c, dtype=complex))

    @classmethod
    def indicator(cls, m: int, lo: float, hi: float) -> "StepFunction":
        """Indicator of ``[lo, hi)`` for grid-aligned endpoints."""
        i0, i1 = grid_index(lo, m, "lo"), grid_index(hi, m, "hi")
        v = np.zeros(m, dtype=complex)
        v[i0:i1] = 1.0
        return cls(v)

    @property
    def m(self) -> int:
        return self.values.size

    def trace(self) -> complex:
        """Integral against Lebesgue measure, ``(1/m) * sum(values)``."""
        return complex(self.values.mean())

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def conj(self) -> "StepFunction":
        return StepFunction(self.values.conj())

    def inverse(self, threshold: float = INVERSE_THRESHOLD) -> "StepFunction":
        bad = np.abs(self.values) < threshold
        if bad.any():
            raise SingularityError(f"cells {np.flatnonzero(bad).tolist()} are not invertible")
        return StepFunction(1.0 / self.values)

    def _other(self, other):
        if isinstance(other, StepFunction):
            if other.m != self.m:
                raise ValidationError(f"grid mismatch: {self.m} vs {other.m}")
            return other.values
        return other

    def __add__(self, other):
        return StepFunction(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return StepFunction(self.values - self._other(other))

    def __rsub__(self, other):
        return StepFunction(self._other(other) - self.values)

    def __mul__(self, other):
        return StepFunction(self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return StepFunction(-self.values)

    def allclose(self, other, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.values, self._other(other), rtol=0.0, atol=atol))

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return self.m == other.m and bool(np.array_equal(self.values, other.values))

    __hash__ = None

    def __repr__(self):
        return f"StepFunction(m={self.m}, values={np.array2string(self.values, precision=6)})"


def _as_kernel(H, name="H") -> np.ndarray:
    H = np.array(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] < 1:
        raise ValidationError(f"{name} must be a nonempty square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValidationError(f"{name} has non-finite entries")
    if (H < 0).any():
        raise ValidationError(f"{name} has negative entries")
    return _frozen(H)


@dataclass(frozen=True, eq=False)
class BlockDensity:
    """Block-constant density ``H`` of a measure on [0,1]^2.

    ``H[i, j]`` is the density on the cell with ``s`` in row ``i`` and ``t``
    in column ``j``.
    """

    H: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "H", _as_kernel(self.H))

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def mass(self) -> float:
        return float(self.H.sum()) / self.m**2

    @property
    def marginal_1(self) -> np.ndarray:
        """``CE_1(H)``: row means, the density of the first marginal."""
        return self.H.mean(axis=1)

    @property
    def marginal_2(self) -> np.ndarray:
        """``CE_2(H)``: column means, the density of the second marginal."""
        return self.H.mean(axis=0)

    def scaled(self, lam: float) -> "BlockDensity":
        return BlockDensity(self.H * float(lam))

    def to_json(self) -> dict:
        return {"m": self.m, "H": self.H.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "BlockDensity":
        """Parse ``{"m": .., "H": [[..]]}`` or ``{"preset": .., "m": .., "params": {..}}``."""
        if "preset" in obj:
            return make_preset(obj["preset"], obj.get("m"), obj.get("params") or {})
        if "H" not in obj:
            raise ValidationError("density JSON needs 'H' or 'preset'")
        dens = cls(obj["H"])
        if "m" in obj and int(obj["m"]) != dens.m:
            raise ValidationError(f"'m'={obj['m']} does not match H of size {dens.m}")
        return dens


@dataclass(frozen=True, eq=False)
class CovariancePair:
    """Kernels of the covariance maps ``(alpha, beta)``.

    ``alpha(f)(t) = int H_alpha(s, t) f(s) ds`` and
    ``beta(g)(s) = int H_beta(s, t) g(t) dt``.
    """

    H_alpha: np.ndarray
    H_beta: np.ndarray

    def __post_init__(self):
        a = _as_kernel(self.H_alpha, "H_alpha")
        b = _as_kernel(self.H_beta, "H_beta")
        if a.shape != b.shape:
            raise ValidationError(f"kernel shapes differ: {a.shape} vs {b.shape}")
        object.__setattr__(self, "H_alpha", a)
        object.__setattr__(self, "H_beta", b)

    @classmethod
    def from_density(cls, density: BlockDensity) -> "CovariancePair":
        return cls(density.H, density.H)

    @property
    def m(self) -> int:
        return self.H_alpha.shape[0]

    @property
    def alpha_matrix(self) -> np.ndarray:
        """Matrix of ``alpha`` acting on the vector of cell values."""
        return self.H_alpha.T / self.m

    @property
    def beta_matrix(self) -> np.ndarray:
        return self.H_beta / self.m


def as_covariance(obj) -> CovariancePair:
    if isinstance(obj, CovariancePair):
        return obj
    if isinstance(obj, BlockDensity):
        return CovariancePair.from_density(obj)
    raise TypeError(f"expected CovariancePair or BlockDensity, got {type(obj).__name__}")


# ---------------------------------------------------------------- presets

def _upper(m):
    i, j = np.indices((m, m))
    return i <= j


def _preset_square(m, params):
    return np.ones((m, m))


def _preset_upper_triangle(m, params):
    return _upper(m).astype(float)


def _preset_strict_lower_triangle(m, params):
    return (~_upper(m)).astype(float)


def _preset_band(m, params):
    eps = float(params.get("width", params.get("epsilon", params.get("eps", 0.0))))
    if not 0.0 < eps <= 1.0:
        raise ValidationError(f"band width must lie in (0, 1], got {eps}")
    k = math.ceil(eps * m - _ALIGN_TOL)
    i, j = np.indices((m, m))
    return ((i <= j) & (j <= i + k)).astype(float)


def _preset_corner_box(m, params):
    # r on {c <= s <= t <= d}, R on {a <= s <= t <= 1}, `fill` on the zones
    # left unconstrained by the hyperinvariance conditions, 0 elsewhere
    c = grid_index(params.get("c", 0.0), m, "c")
    d = grid_index(params.get("d", 0.5), m, "d")
    a = grid_index(params.get("a", 0.5), m, "a")
    r = float(params.get("r", 1.0))
    R = float(params.get("R", 1.0))
    fill = float(params.get("fill", 0.0))
    if not (0 <= c < d <= a < m):
        raise ValidationError("corner_box needs 0 <= c < d <= a < 1")
    if r <= 0 or R < 0 or fill < 0:
        raise ValidationError("corner_box weights must be nonnegative (r > 0)")
    H = np.zeros((m, m))
    up = _upper(m)
    H[:c, :] = fill
    H[c:d, d:] = fill
    H[d:a, d:] = fill
    box = np.zeros((m, m), dtype=bool)
    box[c:d, c:d] = True
    H[box & up] = r
    tail = np.zeros((m, m), dtype=bool)
    tail[a:, a:] = True
    H[tail & up] = R
    return H


def _preset_custom(m, params):
    if "H" not in params:
        raise ValidationError("custom preset needs params['H']")
    H = np.array(params["H"], dtype=float)
    if m is not None and H.shape != (m, m):
        raise ValidationError(f"custom H has shape {H.shape}, expected {(m, m)}")
    return H


PRESETS = {
    "square": _preset_square,
    "upper_triangle": _preset_upper_triangle,
    "strict_lower_triangle": _preset_strict_lower_triangle,
    "band": _preset_band,
    "corner_box": _preset_corner_box,
    "custom": _preset_custom,
}


def make_preset(name: str, m: int | None = None, params: dict | None = None) -> BlockDensity:
    """Build one of the named block densities on an ``m``-cell grid.

    ``upper_triangle`` puts weight 1 on blocks with ``i <= j``, so diagonal
    blocks are counted fully; its mass is ``(m+1)/(2m)`` and tends to 1/2.
    """
    params = dict(params or {})
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if name == "custom":
        if m is not None and int(m) < 1:
            raise ValidationError(f"m must be positive, got {m}")
        return BlockDensity(_preset_custom(None if m is None else int(m), params))
    if m is None or isinstance(m, bool) or int(m) != m or int(m) < 1:
        raise ValidationError(f"m must be a positive integer, got {m!r}")
    return BlockDensity(PRESETS[name](int(m), params))


# ------------------------------------------------------------ covariance maps

def _check_grid(cov: CovariancePair, f: StepFunction):
    if f.m != cov.m:
        raise ValidationError(f"grid mismatch: covariance m={cov.m}, function m={f.m}")


def alpha_apply(cov, f: StepFunction) -> StepFunction:
    cov = as_covariance(cov)
    _check_grid(cov, f)
    return StepFunction(cov.alpha_matrix @ f.values)


def beta_apply(cov, f: StepFunction) -> StepFunction:
    cov = as_covariance(cov)
    _check_grid(cov, f)
    return StepFunction(cov.beta_matrix @ f.values)


def adjoint(cov) -> CovariancePair:
    """Covariance of ``z*``: the roles of the two maps swap."""
    cov = as_covariance(cov)
    return CovariancePair(cov.H_beta.T, cov.H_alpha.T)


def cov_sum(cov1, cov2) -> CovariancePair:
    """Covariance of ``z + z'`` for *-free ``z, z'``."""
    c1, c2 = as_covariance(cov1), as_covariance(cov2)
    if c1.m != c2.m:
        raise ValidationError(f"grid mismatch: {c1.m} vs {c2.m}")
    return CovariancePair(c1.H_alpha + c2.H_alpha, c1.H_beta + c2.H_beta)


def conjugate(cov, d: StepFunction) -> CovariancePair:
    """Covariance of ``d* z d``; both kernels pick up ``|d(s)|^2 |d(t)|^2``."""
    cov = as_covariance(cov)
    _check_grid(cov, d)
    w = np.abs(d.values) ** 2
    outer = np.outer(w, w)
    return CovariancePair(cov.H_alpha * outer, cov.H_beta * outer)


def compress_rescale(cov, c: float, d: float) -> CovariancePair:
    """Covariance of the corner ``p z p``, ``p = chi_[c,d]``, rescaled to [0,1].

    The corner is renormalised by ``(d-c)^{-1}`` and carried to [0,1] by
    ``x -> (x-c)/(d-c)``. The pushforward contributes a Jacobian of
    ``(d-c)^2`` so the new kernel is ``(d-c) * H`` restricted to the
    ``[c,d]^2`` sub-block, on a grid of ``m*(d-c)`` cells.
    """
    cov = as_covariance(cov)
    i0, i1 = grid_index(c, cov.m, "c"), grid_index(d, cov.m, "d")
    if not 0 <= i0 < i1 <= cov.m:
        raise ValidationError(f"need 0 <= c < d <= 1, got c={c}, d={d}")
    scale = (i1 - i0) / cov.m
    return CovariancePair(cov.H_alpha[i0:i1, i0:i1] * scale, cov.H_beta[i0:i1, i0:i1] * scale)


def traciality_check(cov, tol: float = 1e-12) -> bool:
    """Whether ``tau(alpha(b) c) == tau(b beta(c))`` for all step functions.

    Testing on cell indicators shows this holds iff the two kernels agree.
    """
    cov = as_covariance(cov)
    scale = max(1.0, float(cov.H_alpha.max()), float(cov.H_beta.max()))
    return bool(np.abs(cov.H_alpha - cov.H_beta).max() <= tol * scale)


def operator_norms(cov) -> tuple[float, float]:
    """``(||alpha||, ||beta||)``, i.e. ``sup alpha(1)`` and ``sup beta(1)``."""
    cov = as_covariance(cov)
    return float(cov.H_alpha.mean(axis=0).max()), float(cov.H_beta.mean(axis=1).max())


def norm_bounds(cov) -> tuple[float, float]:
    """``(sqrt(M), 2 sqrt(M))`` with ``M = max(||alpha||, ||beta||)``."""
    M = max(operator_norms(cov))
    return math.sqrt(M), 2.0 * math.sqrt(M)


def two_norm(cov) -> float:
    """``||z||_2 = tau(z* z)^{1/2} = mass^{1/2}`` for a tracial pair."""
    cov = as_covariance(cov)
    if not traciality_check(cov):
        raise ValidationError("two_norm needs a tracial covariance")
    return math.sqrt(float(cov.H_alpha.sum()) / cov.m**2)


def gaussian_covariance_matrix(cov) -> np.ndarray:
    """Covariance of the real and imaginary parts ``x1, x2`` of ``z``.

    Returns an array ``E`` of shape ``(2, 2, m, m)``; ``E[i, j]`` is the
    matrix of ``b -> E(x_{i+1} b x_{j+1})`` acting on cell values, e.g.
    ``E[0, 0] = (alpha + beta)/2`` and ``E[0, 1] = i(beta - alpha)/2``.
    """
    cov = as_covariance(cov)
    A, B = cov.alpha_matrix.astype(complex), cov.beta_matrix.astype(complex)
    E = np.empty((2, 2) + A.shape, dtype=complex)
    E[0, 0] = E[1, 1] = (A + B) / 2
    E[0, 1] = 1j * (B - A) / 2
    E[1, 0] = 1j * (A - B) / 2
    return E


def covariance_from_gaussian(E: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Invert :func:`gaussian_covariance_matrix`: ``alpha = E11 + i E12``, ``beta = E11 - i E12``."""
    E = np.asarray(E)
    return E[0, 0] + 1j * E[0, 1], E[0, 0] - 1j * E[0, 1]
