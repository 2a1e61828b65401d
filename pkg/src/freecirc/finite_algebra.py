"""Finite-dimensional *-algebras generated by one matrix, and invariance tests.

The generated unital *-algebra is computed by span closure: starting from
the identity, multiply basis elements on both sides by ``A`` and ``A*``
and take adjoints, keeping a Frobenius-orthonormal basis. The commutant is
the null space of ``X -> AX - XA``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .errors import ValidationError

__all__ = [
    "MatrixAlgebraProbe",
    "star_algebra_dimension",
    "build_irreduc_matrix",
    "example_3x3",
    "example_6x6",
    "example_10x10",
    "jordan_similarity_6x6",
    "block_swap",
    "commutant_basis",
    "invariance_witness",
    "search_generating_a",
    "orthogonal_range_projection",
]


def _square(A, name="A") -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {A.shape}")
    return A


class MatrixAlgebraProbe:
    """Grows an orthonormal basis of the unital *-algebra generated by ``A``."""

    def __init__(self, A, tol: float | None = None):
        self.A = _square(A)
        self.n = self.A.shape[0]
        scale = max(np.linalg.norm(self.A, 2), 1.0)
        self.tol = 1e-9 * scale if tol is None else float(tol)
        self._Q = np.zeros((self.n * self.n, 0), dtype=complex)
        self.basis: list[np.ndarray] = []

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def _try_add(self, X) -> bool:
        if self.dimension >= self.n * self.n:
            return False
        v = X.reshape(-1)
        # twice is enough for Gram-Schmidt stability
        for _ in range(2):
            v = v - self._Q @ (self._Q.conj().T @ v)
        nv = np.linalg.norm(v)
        if nv <= self.tol:
            return False
        v = v / nv
        self._Q = np.column_stack([self._Q, v])
        self.basis.append(v.reshape(self.n, self.n))
        return True

    def close(self) -> int:
        A, As = self.A, self.A.conj().T
        self._try_add(np.eye(self.n, dtype=complex))
        k = 0
        while k < len(self.basis) and self.dimension < self.n * self.n:
            X = self.basis[k]
            for Y in (A @ X, As @ X, X @ A, X @ As, X.conj().T):
                self._try_add(Y)
            k += 1
        return self.dimension


def star_algebra_dimension(A, tol: float | None = None) -> int:
    """Dimension of the unital *-algebra generated by ``A``."""
    return MatrixAlgebraProbe(A, tol).close()


def build_irreduc_matrix(n: int, p: int, b, a) -> np.ndarray:
    """``sum_k b_k e_{k,k+p} + sum_{k=2}^p a_k e_{1,p+k}`` (1-based matrix units).

    ``b`` has ``n - p`` distinct positive entries and ``a`` lists
    ``a_2..a_p``.
    """
    n, p = int(n), int(p)
    if p < 2 or n <= 2 * p:
        raise ValidationError(f"need p >= 2 and n > 2p, got n={n}, p={p}")
    b = np.asarray(b, dtype=float).ravel()
    a = np.asarray(a, dtype=float).ravel()
    if b.size != n - p:
        raise ValidationError(f"need {n - p} b entries, got {b.size}")
    if a.size != p - 1:
        raise ValidationError(f"need {p - 1} a entries, got {a.size}")
    if np.any(b <= 0) or np.unique(b).size != b.size:
        raise ValidationError("b entries must be distinct and strictly positive")
    if np.any(a <= 0):
        raise ValidationError("a entries must be strictly positive")
    A = np.zeros((n, n))
    for k in range(n - p):
        A[k, k + p] = b[k]
    for k in range(2, p + 1):
        A[0, p + k - 1] = a[k - 2]
    return A


def example_3x3() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The 3x3 matrix, its invariant projection and a commuting ``B``."""
    A = np.array([[0, 0, 0], [0, 0, 1], [0, 0, 1]], dtype=float)
    P = np.diag([0.0, 1.0, 1.0])
    B = np.array([[0, 1, -1], [0, 0, 0], [0, 0, 0]], dtype=float)
    return A, P, B


def example_6x6(a: float = 0.01) -> np.ndarray:
    return build_irreduc_matrix(6, 2, (1, 2, 3, 4), (a,))


def example_10x10(a: float = 0.01) -> np.ndarray:
    """The 10x10 ``F``; it has ``a`` at (1,4), (1,5) and (1,6)."""
    F = build_irreduc_matrix(10, 2, range(1, 9), (a,))
    F[0, 4] = F[0, 5] = a
    return F


def jordan_similarity_6x6(a: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """``S`` and the Jordan form ``J`` with ``A = S J S^{-1}`` for the 6x6 example.

    Two chains of length three, headed by ``e5`` and ``e6``.
    """
    A = example_6x6(a)
    cols = []
    for head in (4, 5):
        v = np.zeros(6)
        v[head] = 1.0
        cols.extend([A @ A @ v, A @ v, v])
    S = np.column_stack(cols)
    J = np.zeros((6, 6))
    for i in (0, 1, 3, 4):
        J[i, i + 1] = 1.0
    return S, J


def block_swap(k: int = 3) -> np.ndarray:
    Z, I = np.zeros((k, k)), np.eye(k)
    return np.block([[Z, I], [I, Z]])


def orthogonal_range_projection(V, tol: float = 1e-12) -> np.ndarray:
    """Orthogonal projection onto the column span of ``V``."""
    V = np.atleast_2d(np.asarray(V, dtype=complex))
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    r = int(np.sum(s > tol * max(s.max(initial=0.0), 1.0)))
    Q = U[:, :r]
    return Q @ Q.conj().T


def commutant_basis(A, tol: float = 1e-9, star: bool = False) -> list[np.ndarray]:
    """Basis of ``{X : AX = XA}``; with ``star`` also ``A* X = X A*``."""
    A = _square(A)
    n = A.shape[0]
    I = np.eye(n)

    # column-major vec: vec(AX) = (I kron A) vec X, vec(XA) = (A^T kron I) vec X
    def comm(M):
        return np.kron(I, M) - np.kron(M.T, I)

    L = comm(A)
    if star:
        L = np.vstack([L, comm(A.conj().T)])
    scale = max(np.linalg.norm(A, 2), 1.0)
    Z = null_space(L, rcond=tol * scale / max(np.linalg.norm(L, 2), 1e-300))
    return [Z[:, k].reshape(n, n, order="F") for k in range(Z.shape[1])]


def invariance_witness(A, P, tol: float = 1e-9):
    """A commuting ``X`` that moves the range of ``P``, or ``None``.

    ``P`` must be an orthogonal projection with ``A``-invariant range.
    """
    A = _square(A)
    P = _square(P, "P")
    if P.shape != A.shape:
        raise ValidationError("A and P must have the same shape")
    if np.linalg.norm(P @ P - P) > tol or np.linalg.norm(P - P.conj().T) > tol:
        raise ValidationError("P is not an orthogonal projection")
    Q = np.eye(A.shape[0]) - P
    if np.linalg.norm(Q @ A @ P) > tol * max(np.linalg.norm(A, 2), 1.0):
        raise ValidationError("range of P is not A-invariant")
    best, best_norm = None, tol
    for X in commutant_basis(A, tol):
        v = np.linalg.norm(Q @ X @ P, 2)
        if v > best_norm:
            best, best_norm = X, v
    return best


@dataclass(frozen=True)
class GenerationSearch:
    a: float
    dimension: int
    target: int
    halvings: int

    @property
    def generated(self) -> bool:
        return self.dimension == self.target


def search_generating_a(builder, a0: float = 0.01, a_min: float = 1e-8, tol: float | None = None):
    """Halve ``a`` from ``a0`` until ``builder(a)`` generates the full matrix algebra."""
    a, k = float(a0), 0
    while True:
        M = builder(a)
        dim = star_algebra_dimension(M, tol)
        target = M.shape[0] ** 2
        if dim == target or a / 2 < a_min:
            return GenerationSearch(a, dim, target, k)
        a, k = a / 2, k + 1
