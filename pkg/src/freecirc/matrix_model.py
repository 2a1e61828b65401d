"""Random-matrix realisation of ``z_eta`` and empirical statistics.

A sample is ``A = sum_ij w_ij P_i Z P_j`` with ``w = sqrt(H)``, ``P_i`` the
coordinate projection onto the ``i``-th block of ``N/m`` indices and ``Z``
an ``N x N`` matrix of i.i.d. complex Gaussians of variance ``1/N``. Traces
are normalised, ``tr = Tr / N``.

Trials are independent; trial ``t`` draws from a generator seeded with
``seed + t`` and results are reduced in trial order, so the outcome does
not depend on the number of worker threads (``FREECIRC_THREADS``).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.linalg import svds

from .errors import ValidationError
from .moment_engine import _normalize_symbol
from .step_algebra import BlockDensity, StepFunction, make_preset

__all__ = [
    "MatrixSample",
    "sample",
    "discretize",
    "worker_count",
    "run_trials",
    "word_matrix",
    "empirical_trace_moment",
    "empirical_conditional_expectation",
    "singular_values",
    "singular_numbers",
    "block_mask",
    "compression_inequality_check",
    "CompressionCheck",
    "max_abs_eigenvalue",
    "operator_norm",
    "spectral_radius_estimate",
    "sniady_check",
    "SniadyResult",
    "mean_trace_moments",
]


@dataclass(frozen=True, eq=False)
class MatrixSample:
    N: int
    m: int
    data: np.ndarray
    seed: int
    weights: np.ndarray

    @property
    def block_size(self) -> int:
        return self.N // self.m


def _expand(w: np.ndarray, N: int) -> np.ndarray:
    r = N // w.shape[0]
    return np.repeat(np.repeat(w, r, axis=0), r, axis=1)


def sample(density: BlockDensity, N: int, seed: int) -> MatrixSample:
    """Draw ``M(w, Z_N)`` for the block density; deterministic in ``seed``."""
    N = int(N)
    if N < 1 or N % density.m:
        raise ValidationError(f"N={N} must be a positive multiple of m={density.m}")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    Z *= 1.0 / math.sqrt(2.0 * N)
    w = np.sqrt(density.H)
    return MatrixSample(N, density.m, _expand(w, N) * Z, int(seed), w)


def discretize(w_fine, m: int, resolution: int | None = None) -> BlockDensity:
    """Block-average ``w = sqrt(H)`` onto an ``m x m`` grid and square.

    ``w_fine`` is either an ``M x M`` array of values of ``w`` on a uniform
    grid with ``m | M`` or a callable ``w(s, t)`` sampled at the midpoints
    of a ``resolution x resolution`` grid (default ``16 m``). Averaging ``w``
    rather than ``H`` keeps ``||CE_i(H^(m))||_inf <= ||CE_i(H)||_inf``.
    """
    m = int(m)
    if callable(w_fine):
        M = int(resolution or 16 * m)
        mid = (np.arange(M) + 0.5) / M
        s, t = np.meshgrid(mid, mid, indexing="ij")
        w_fine = np.broadcast_to(np.asarray(w_fine(s, t), dtype=float), (M, M))
    w = np.asarray(w_fine, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValidationError(f"fine grid must be square, got shape {w.shape}")
    M = w.shape[0]
    if m < 1 or M % m:
        raise ValidationError(f"fine grid {M} is not a multiple of m={m}")
    if (w < 0).any():
        raise ValidationError("w must be nonnegative")
    r = M // m
    wbar = w.reshape(m, r, m, r).mean(axis=(1, 3))
    return BlockDensity(wbar**2)


def worker_count() -> int:
    raw = os.environ.get("FREECIRC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"FREECIRC_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError(f"FREECIRC_THREADS must be >= 1, got {n}")
    return n


def run_trials(fn: Callable[[int], object], trials: int, seed: int) -> list:
    """``[fn(seed + t) for t in range(trials)]``, possibly on worker threads."""
    seeds = [int(seed) + t for t in range(int(trials))]
    workers = min(worker_count(), max(len(seeds), 1))
    if workers == 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


# ------------------------------------------------------------------ words

def _symbols(word) -> list[str]:
    if isinstance(word, str):
        word = word.replace("*", "* ").split() if " " in word else _split_compact(word)
    return [_normalize_symbol(s) for s in word]


def _split_compact(word: str) -> list[str]:
    out = []
    for ch in word:
        if ch in "zA":
            out.append("1")
        elif ch == "*":
            if not out:
                raise ValidationError(f"dangling '*' in {word!r}")
            out[-1] = "*"
        else:
            raise ValidationError(f"unknown letter {ch!r} in {word!r}")
    return out


def word_matrix(A: np.ndarray, word) -> np.ndarray:
    """Product of ``A`` and ``A*`` following ``word`` (e.g. ``"z* z"``)."""
    syms = _symbols(word)
    N = A.shape[0]
    if not syms:
        return np.eye(N, dtype=complex)
    As = A.conj().T
    out = None
    for s in syms:
        X = As if s == "*" else A
        out = X if out is None else out @ X
    return out


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, MatrixSample) else np.asarray(x)


def empirical_trace_moment(smp, word) -> complex:
    """Normalised trace of the word in ``A, A*``."""
    A = _data(smp)
    syms = _symbols(word)
    N = A.shape[0]
    if not syms:
        return 1.0 + 0j
    head = word_matrix(A, syms[:-1]) if len(syms) > 1 else np.eye(N)
    last = A.conj().T if syms[-1] == "*" else A
    return complex(np.einsum("ij,ji->", head, last) / N)


def empirical_conditional_expectation(smp: MatrixSample, word) -> StepFunction:
    """Block averages of the diagonal of the word matrix, one value per cell."""
    A = smp.data
    syms = _symbols(word)
    if not syms:
        return StepFunction.constant(smp.m, 1.0)
    head = word_matrix(A, syms[:-1]) if len(syms) > 1 else np.eye(smp.N)
    last = A.conj().T if syms[-1] == "*" else A
    diag = np.einsum("ij,ji->i", head, last)
    return StepFunction(diag.reshape(smp.m, -1).mean(axis=1))


def mean_trace_moments(density: BlockDensity, N: int, n_max: int, trials: int, seed: int) -> np.ndarray:
    """Trial means of ``tr((A* A)^n)`` for ``n = 1..n_max``."""

    def one(s):
        A = sample(density, N, s).data
        B = A.conj().T @ A
        out, P = [], np.eye(N, dtype=complex)
        for _ in range(n_max):
            nxt = P @ B
            out.append(np.trace(nxt).real / N)
            P = nxt
        return out

    return np.mean(run_trials(one, trials, seed), axis=0)


# ------------------------------------------------------- singular numbers

def singular_values(matrix) -> np.ndarray:
    """Singular values in nonincreasing order."""
    return np.linalg.svd(_data(matrix), compute_uv=False)


def _s_index(t: float, n: int) -> int:
    return int(math.floor(t * n + 1e-9))


def singular_numbers(matrix, t: float, sigma: np.ndarray | None = None) -> float:
    """``s_t`` w.r.t. the normalised trace: ``sigma_{floor(t N) + 1}``."""
    if not 0.0 <= t < 1.0:
        raise ValidationError(f"t must lie in [0, 1), got {t}")
    if sigma is None:
        sigma = singular_values(matrix)
    return float(sigma[_s_index(t, len(sigma))])


def block_mask(N: int, m: int, blocks: Sequence[int]) -> np.ndarray:
    """Boolean mask of the coordinates in the listed blocks (0-based)."""
    if N % m:
        raise ValidationError(f"N={N} must be a multiple of m={m}")
    cell = np.arange(N) // (N // m)
    return np.isin(cell, np.asarray(list(blocks), dtype=int))


@dataclass(frozen=True)
class CompressionCheck:
    holds: bool
    lhs: float
    rhs: float


def compression_inequality_check(matrix, q, theta: float) -> CompressionCheck:
    """Check ``s_theta(a) >= s_{theta/tau(q)}(q a q)`` for a coordinate projection ``q``.

    ``q`` is a boolean mask (or index array) of the retained coordinates;
    the corner carries the renormalised trace ``tau(q)^{-1} tau``.
    """
    a = _data(matrix)
    N = a.shape[0]
    q = np.asarray(q)
    mask = q if q.dtype == bool else np.isin(np.arange(N), q)
    if mask.shape != (N,):
        raise ValidationError("q must be a mask over the matrix coordinates")
    tq = mask.sum() / N
    if not 0.0 < theta < tq:
        raise ValidationError(f"need 0 < theta < tau(q) = {tq}, got {theta}")
    lhs = singular_numbers(a, theta)
    rhs = singular_numbers(a[np.ix_(mask, mask)], theta / tq)
    return CompressionCheck(bool(lhs >= rhs - 1e-12 * max(1.0, lhs)), lhs, rhs)


# ----------------------------------------------------- spectral statistics

def operator_norm(matrix) -> float:
    """Largest singular value, via Lanczos with a fixed start vector."""
    a = _data(matrix)
    if a.shape[0] <= 64 or not np.any(a):
        return float(np.linalg.norm(a, 2)) if np.any(a) else 0.0
    v0 = np.ones(a.shape[0], dtype=a.dtype)
    return float(svds(a, k=1, v0=v0, tol=1e-10, return_singular_vectors=False)[0])


def max_abs_eigenvalue(smp: MatrixSample) -> float:
    """Spectral radius of the sample.

    When every block below the diagonal has zero weight the matrix is block
    upper triangular and its eigenvalues are those of the diagonal blocks.
    """
    A = smp.data
    if not np.any(np.tril(smp.weights, -1)):
        r = smp.block_size
        best = 0.0
        for i in range(smp.m):
            blk = A[i * r:(i + 1) * r, i * r:(i + 1) * r]
            if np.any(blk):
                best = max(best, float(np.abs(np.linalg.eigvals(blk)).max()))
        return best
    return float(np.abs(np.linalg.eigvals(A)).max())


def spectral_radius_estimate(density: BlockDensity, N: int, n_powers: int, trials: int, seed: int):
    """Rows ``(n, mean ||A^n||^{1/n}, mean max|eig A|)`` for ``n = 1..n_powers``."""

    def one(s):
        smp = sample(density, N, s)
        rho = max_abs_eigenvalue(smp)
        roots, P = [], None
        for n in range(1, n_powers + 1):
            P = smp.data if P is None else P @ smp.data
            roots.append(operator_norm(P) ** (1.0 / n))
        return roots, rho

    res = run_trials(one, trials, seed)
    roots = np.mean([r for r, _ in res], axis=0)
    rho = float(np.mean([e for _, e in res]))
    return [(n, float(roots[n - 1]), rho) for n in range(1, n_powers + 1)]


@dataclass(frozen=True)
class SniadyResult:
    lhs: float
    rhs: float
    relative_gap: float


def sniady_check(N: int, n: int, trials: int, seed: int, m: int | None = None) -> SniadyResult:
    """Compare ``tr((A*)^n A^n)`` with ``n^{-n} tr((A* A)^n)`` for the triangle.

    The two agree in the large-N limit; both tend to ``1/(n+1)!``.
    """
    dens = make_preset("upper_triangle", m or N)

    def one(s):
        A = sample(dens, N, s).data
        P = np.linalg.matrix_power(A, n)
        lhs = np.vdot(P, P).real / N
        B = A.conj().T @ A
        half = np.linalg.matrix_power(B, n // 2)
        if n % 2 == 0:
            tr = np.vdot(half, half).real
        else:
            tr = np.einsum("ij,ji->", half.conj().T, B @ half).real
        return lhs, tr / N

    res = np.array(run_trials(one, trials, seed))
    lhs = float(res[:, 0].mean())
    rhs = float(res[:, 1].mean()) / n**n
    return SniadyResult(lhs, rhs, abs(lhs - rhs) / abs(rhs))
