"""B-valued *-moments of a B-circular element.

A word ``b0 z^{s(1)} b1 z^{s(2)} b2 ... z^{s(n)} bn`` has expectation equal
to a sum over non-crossing pairings that only pair ``z`` with ``z*``. A
pair ``(i, k)`` contributes ``cov(b_i * inner) * b_k * outer`` where
``cov`` is ``alpha`` when ``s(i) = *`` and ``beta`` when ``s(i) = 1``.

:func:`moment` evaluates the sum with an O(n^3) interval recursion;
:func:`moment_bruteforce` expands it term by term and is kept as an
independent check.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .nc_partitions import decompose_first, iter_nc2
from .step_algebra import StepFunction, alpha_apply, as_covariance, beta_apply, grid_index

__all__ = [
    "StarWord",
    "parse_word",
    "moment",
    "moment_bruteforce",
    "trace_moment",
    "nested_power",
    "nested_powers",
    "pairing_term",
    "BRUTEFORCE_MAX_LENGTH",
]

BRUTEFORCE_MAX_LENGTH = 16
_STAR = "*"
_PLAIN = "1"


@dataclass(frozen=True, eq=False)
class StarWord:
    """``b0 z^{s(1)} b1 ... z^{s(n)} bn``.

    ``symbols`` holds ``"1"`` (for ``z``) or ``"*"`` (for ``z*``);
    ``coeffs[i]`` is the coefficient to the right of letter ``i``.
    ``lead`` is ``b0``; ``None`` means the unit.
    """

    symbols: tuple[str, ...]
    coeffs: tuple[StepFunction, ...]
    lead: StepFunction | None = None

    def __post_init__(self):
        syms = tuple(_normalize_symbol(s) for s in self.symbols)
        coeffs = tuple(self.coeffs)
        if len(syms) != len(coeffs):
            raise ValidationError("one coefficient per letter is required")
        grids = {c.m for c in coeffs}
        if self.lead is not None:
            grids.add(self.lead.m)
        if len(grids) > 1:
            raise ValidationError(f"coefficients live on different grids: {sorted(grids)}")
        object.__setattr__(self, "symbols", syms)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def from_symbols(cls, symbols: Iterable[str], m: int, lead: StepFunction | None = None) -> "StarWord":
        """Word with every coefficient equal to 1."""
        syms = tuple(symbols) if not isinstance(symbols, str) else tuple(symbols.split())
        one = StepFunction.constant(m, 1.0)
        return cls(syms, (one,) * len(syms), lead)

    @classmethod
    def from_letters(cls, letters: Sequence[tuple[str, StepFunction]], lead: StepFunction | None = None) -> "StarWord":
        return cls(tuple(s for s, _ in letters), tuple(b for _, b in letters), lead)

    @property
    def n(self) -> int:
        return len(self.symbols)

    @property
    def m(self) -> int | None:
        if self.coeffs:
            return self.coeffs[0].m
        return None if self.lead is None else self.lead.m

    def letters(self) -> list[tuple[str, StepFunction]]:
        return list(zip(self.symbols, self.coeffs))

    def cyclic_shift(self, k: int = 1) -> "StarWord":
        """Rotate letters (with their right coefficients) by ``k``."""
        if self.lead is not None:
            raise ValidationError("cyclic shift needs a word without a leading coefficient")
        k %= max(self.n, 1)
        return StarWord(self.symbols[k:] + self.symbols[:k], self.coeffs[k:] + self.coeffs[:k])

    def adjoint(self) -> "StarWord":
        """``(b0 z^{s1} b1 ... z^{sn} bn)* = bn* z^{sn*} ... b1* z^{s1*} b0*``.

        Returned in the normal form with the conjugated ``bn`` as leading
        coefficient.
        """
        flip = {_STAR: _PLAIN, _PLAIN: _STAR}
        if self.n == 0:
            return StarWord((), (), None if self.lead is None else self.lead.conj())
        m = self.m
        one = StepFunction.constant(m, 1.0)
        lead = self.coeffs[-1].conj()
        rights = [c.conj() for c in self.coeffs[-2::-1]]
        rights.append(one if self.lead is None else self.lead.conj())
        return StarWord(tuple(flip[s] for s in reversed(self.symbols)), tuple(rights), lead)


def _normalize_symbol(s) -> str:
    s = str(s).strip()
    if s in ("1", "z", ""):
        return _PLAIN
    if s in ("*", "z*", "z^*"):
        return _STAR
    raise ValidationError(f"unknown letter symbol {s!r}")


_TOKEN = re.compile(r"z\^?\*|z|[^\s]+")


def parse_word(text: str, m: int, coefficients: dict | None = None) -> StarWord:
    """Parse e.g. ``"b0 z b1 z* b2"``.

    Tokens are ``z``, ``z*`` and coefficient names looked up in
    ``coefficients`` (values are StepFunctions, sequences of cell values or
    scalars). Numeric literals are constants. A missing coefficient is 1
    and adjacent coefficients multiply.
    """
    coefficients = dict(coefficients or {})
    one = StepFunction.constant(m, 1.0)

    def lookup(tok):
        if tok in coefficients:
            v = coefficients[tok]
            if isinstance(v, StepFunction):
                f = v
            elif np.isscalar(v):
                f = StepFunction.constant(m, v)
            else:
                f = StepFunction(v)
            if f.m != m:
                raise ValidationError(f"coefficient {tok!r} has m={f.m}, expected {m}")
            return f
        try:
            return StepFunction.constant(m, complex(tok.replace("i", "j")))
        except ValueError:
            raise ValidationError(f"unknown coefficient {tok!r}") from None

    lead = None
    symbols, coeffs = [], []
    for tok in _TOKEN.findall(text):
        if tok in ("z", "z*", "z^*"):
            symbols.append(_normalize_symbol(tok))
            coeffs.append(one)
            continue
        f = lookup(tok)
        if symbols:
            coeffs[-1] = coeffs[-1] * f
        else:
            lead = f if lead is None else lead * f
    if not symbols and lead is None:
        lead = one
    return StarWord(tuple(symbols), tuple(coeffs), lead)


def _check_word(cov, word: StarWord):
    if word.m is not None and word.m != cov.m:
        raise ValidationError(f"grid mismatch: covariance m={cov.m}, word m={word.m}")


def _balanced(symbols) -> bool:
    return len(symbols) % 2 == 0 and 2 * symbols.count(_STAR) == len(symbols)


def _finish(cov, word: StarWord, inner: np.ndarray) -> StepFunction:
    if word.lead is not None:
        inner = word.lead.values * inner
    return StepFunction(inner)


def moment(cov, word: StarWord) -> StepFunction:
    """``E(b0 z^{s(1)} b1 ... z^{s(n)} bn)`` by interval dynamic programming."""
    cov = as_covariance(cov)
    _check_word(cov, word)
    m, n, s = cov.m, word.n, word.symbols
    if not _balanced(s):
        return StepFunction(np.zeros(m, dtype=complex))
    A, B = cov.alpha_matrix, cov.beta_matrix
    b = [c.values for c in word.coeffs]
    ones = np.ones(m, dtype=complex)
    # M[(i, j)]: expectation of letters i..j-1 (0-based, half-open)
    M = {(i, i): ones for i in range(n + 1)}
    for length in range(2, n + 1, 2):
        for i in range(0, n - length + 1):
            j = i + length
            acc = np.zeros(m, dtype=complex)
            cmap = A if s[i] == _STAR else B
            for k in range(i + 1, j, 2):
                if s[k] == s[i]:
                    continue
                acc += (cmap @ (b[i] * M[(i + 1, k)])) * b[k] * M[(k + 1, j)]
            M[(i, j)] = acc
    return _finish(cov, word, M[(0, n)])


def _bracket(cov, pi, letters) -> StepFunction | None:
    """Bracketing of one pairing; ``None`` stands for a vanishing term."""
    if pi.n == 0:
        return None if letters else _UNIT
    k, inner, outer = decompose_first(pi)
    s1, b1 = letters[0]
    sk, bk = letters[k - 1]
    if s1 == sk:
        return None
    left = _bracket(cov, inner, letters[1:k - 1])
    right = _bracket(cov, outer, letters[k:])
    if left is None or right is None:
        return None
    x = b1 if left is _UNIT else b1 * left
    y = alpha_apply(cov, x) if s1 == _STAR else beta_apply(cov, x)
    y = y * bk
    return y if right is _UNIT else y * right


_UNIT = object()


def pairing_term(cov, pi, word: StarWord) -> StepFunction:
    """The single-pairing term ``pi{z^{s(1)} b1, ..., z^{s(n)} bn}`` (lead ignored)."""
    cov = as_covariance(cov)
    _check_word(cov, word)
    if pi.n != word.n:
        raise ValidationError(f"pairing of {pi.n} points for a word of length {word.n}")
    term = _bracket(cov, pi, word.letters())
    if term is None:
        return StepFunction(np.zeros(cov.m, dtype=complex))
    if term is _UNIT:
        return StepFunction.constant(cov.m, 1.0)
    return term


def moment_bruteforce(cov, word: StarWord) -> StepFunction:
    """Same value as :func:`moment`, summing every pairing explicitly."""
    cov = as_covariance(cov)
    _check_word(cov, word)
    if word.n > BRUTEFORCE_MAX_LENGTH:
        raise ValidationError(f"word length {word.n} exceeds brute-force limit {BRUTEFORCE_MAX_LENGTH}")
    m = cov.m
    total = np.zeros(m, dtype=complex)
    if word.n % 2 == 0:
        letters = word.letters()
        for pi in iter_nc2(word.n):
            term = _bracket(cov, pi, letters)
            if term is _UNIT:
                total = total + 1.0
            elif term is not None:
                total = total + term.values
    return _finish(cov, word, total)


def trace_moment(cov, word: StarWord) -> complex:
    """``tau(E(word))``."""
    return moment(cov, word).trace()


def nested_powers(cov, n: int, a: float = 0.0) -> list[StepFunction]:
    """``[f_0, ..., f_n]`` with ``f_0 = chi_[a,1]`` and ``f_{k+1} = chi_[a,1] * beta(f_k)``."""
    cov = as_covariance(cov)
    if n < 0:
        raise ValidationError(f"n must be nonnegative, got {n}")
    ia = grid_index(a, cov.m, "a")
    if not 0 <= ia < cov.m:
        raise ValidationError(f"cutoff a must lie in [0, 1), got {a}")
    chi = StepFunction.indicator(cov.m, a, 1.0)
    out = [chi]
    for _ in range(n):
        out.append(chi * beta_apply(cov, out[-1]))
    return out


def nested_power(cov, n: int, a: float = 0.0) -> StepFunction:
    """``f_n``; for ``a = 0`` this is ``E(z^n (z*)^n)``."""
    return nested_powers(cov, n, a)[-1]
