"""Sparse multivariate polynomials with float64 coefficients.

A :class:`Polynomial` is an immutable map from exponent tuples to
coefficients. Arithmetic is exact in the exponents and uses correctly
rounded summation (``math.fsum``) for coefficients, so term maps are
canonical: ``p * q`` and ``q * p`` produce bit-identical coefficients.

For repeated numerical evaluation (integration, minimization, Jacobians)
use :class:`PolyMap`, which compiles a list of polynomials sharing a
dimension into dense numpy arrays.
"""
from __future__ import annotations

import math
from collections import defaultdict
from itertools import combinations_with_replacement
from typing import Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple  # tuple[int, ...] of nonnegative exponents


class DimensionError(ValueError):
    """Raised when polynomials or points of different dimension are combined."""


def grlex_key(exps: Monomial):
    """Sort key for graded lexicographic order (1, x1, x2, x1^2, x1 x2, ...)."""
    return (sum(exps), tuple(-e for e in exps))


def monomials_of_degree(n: int, d: int) -> list[Monomial]:
    out = []
    for combo in combinations_with_replacement(range(n), d):
        e = [0] * n
        for i in combo:
            e[i] += 1
        out.append(tuple(e))
    out.sort(key=grlex_key)
    return out


def monomial_basis(n: int, maxdeg: int, mindeg: int = 0) -> list[Monomial]:
    """All exponent tuples with ``mindeg <= degree <= maxdeg`` in graded-lex order."""
    basis: list[Monomial] = []
    for d in range(mindeg, maxdeg + 1):
        basis.extend(monomials_of_degree(n, d))
    return basis


class Polynomial:
    """Immutable sparse polynomial in ``n`` variables."""

    __slots__ = ("n", "terms", "_deg")

    def __init__(self, n: int, terms: Mapping[Monomial, float] | Iterable | None = None):
        if n < 1:
            raise ValueError("dimension must be positive")
        items = terms.items() if isinstance(terms, Mapping) else (terms or ())
        acc: dict[Monomial, list[float]] = defaultdict(list)
        for exps, c in items:
            exps = tuple(int(e) for e in exps)
            if len(exps) != n:
                raise DimensionError(f"monomial {exps} has length {len(exps)}, expected {n}")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            acc[exps].append(float(c))
        clean = {}
        for exps in sorted(acc, key=grlex_key):
            c = math.fsum(acc[exps]) if len(acc[exps]) > 1 else acc[exps][0]
            if c != 0.0:
                clean[exps] = c
        self.n = n
        self.terms: dict[Monomial, float] = clean
        self._deg = max((sum(e) for e in clean), default=0)

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, n: int, c: float) -> "Polynomial":
        return cls(n, {(0,) * n: c})

    @classmethod
    def zero(cls, n: int) -> "Polynomial":
        return cls(n)

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        """The coordinate ``a_{i+1}`` (0-based index ``i``)."""
        e = [0] * n
        e[i] = 1
        return cls(n, {tuple(e): 1.0})

    @classmethod
    def monomial(cls, exps: Sequence[int], c: float = 1.0) -> "Polynomial":
        return cls(len(exps), {tuple(exps): c})

    # -- basic queries ------------------------------------------------------
    @property
    def degree(self) -> int:
        return self._deg

    def is_zero(self) -> bool:
        return not self.terms

    def coeff(self, exps: Sequence[int]) -> float:
        return self.terms.get(tuple(exps), 0.0)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.n, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __hash__(self):
        return hash((self.n, tuple(self.terms.items())))

    def __repr__(self) -> str:
        if not self.terms:
            return f"Polynomial(n={self.n}, 0)"
        parts = []
        for exps, c in self.terms.items():
            mono = "*".join(
                f"a{i + 1}" if e == 1 else f"a{i + 1}^{e}" for i, e in enumerate(exps) if e
            )
            parts.append(f"{c:+.6g}" + (f"*{mono}" if mono else ""))
        return f"Polynomial(n={self.n}, {' '.join(parts)})"

    # -- arithmetic ---------------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.n != self.n:
                raise DimensionError(f"dimension mismatch: {self.n} vs {other.n}")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.n, float(other))
        raise TypeError(f"cannot combine Polynomial with {type(other).__name__}")

    def __add__(self, other) -> "Polynomial":
        other = self._coerce(other)
        return Polynomial(self.n, list(self.terms.items()) + list(other.terms.items()))

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.n, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Polynomial":
        return self._coerce(other) - self

    def scale(self, s: float) -> "Polynomial":
        s = float(s)
        return Polynomial(self.n, {e: s * c for e, c in self.terms.items()})

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(other)
        other = self._coerce(other)
        acc: dict[Monomial, list[float]] = defaultdict(list)
        for ea, ca in self.terms.items():
            for eb, cb in other.terms.items():
                acc[tuple(x + y for x, y in zip(ea, eb))].append(ca * cb)
        # fsum is correctly rounded, hence independent of accumulation order
        return Polynomial(self.n, {e: math.fsum(v) for e, v in acc.items()})

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        if k < 0 or int(k) != k:
            raise ValueError("only nonnegative integer powers")
        out = Polynomial.constant(self.n, 1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    # -- calculus -----------------------------------------------------------
    def derivative(self, i: int) -> "Polynomial":
        terms = {}
        for exps, c in self.terms.items():
            if exps[i]:
                e = list(exps)
                e[i] -= 1
                terms[tuple(e)] = c * exps[i]
        return Polynomial(self.n, terms)

    def gradient(self) -> list["Polynomial"]:
        return [self.derivative(i) for i in range(self.n)]

    def substitute_scale(self, s: Sequence[float]) -> "Polynomial":
        """Return ``p(s_1 a_1, ..., s_n a_n)``."""
        s = [float(v) for v in s]
        if len(s) != self.n:
            raise DimensionError("scale vector length mismatch")
        return Polynomial(
            self.n,
            {e: c * math.prod(si**ei for si, ei in zip(s, e)) for e, c in self.terms.items()},
        )

    # -- evaluation ---------------------------------------------------------
    def __call__(self, x) -> float:
        return eval_poly(self, x)

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def l1_norm(self) -> float:
        return math.fsum(abs(c) for c in self.terms.values())

    # -- text format --------------------------------------------------------
    def to_lines(self) -> list[str]:
        return [f"{c:.17g} " + " ".join(str(e) for e in exps) for exps, c in self.terms.items()]

    @classmethod
    def from_lines(cls, n: int, lines: Iterable[str], first_lineno: int = 1) -> "Polynomial":
        terms = []
        for lineno, raw in enumerate(lines, start=first_lineno):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != n + 1:
                raise PolyParseError(
                    f"line {lineno}: expected coefficient and {n} exponents, got {len(fields)} fields"
                )
            try:
                c = float(fields[0])
                exps = tuple(int(v) for v in fields[1:])
            except ValueError as exc:
                raise PolyParseError(f"line {lineno}: {exc}") from None
            if any(e < 0 for e in exps):
                raise PolyParseError(f"line {lineno}: negative exponent")
            terms.append((exps, c))
        return cls(n, terms)


class PolyParseError(ValueError):
    pass


def eval_poly(p: Polynomial, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise DimensionError(f"point of shape {x.shape} for polynomial in {p.n} variables")
    total = []
    for exps, c in p.terms.items():
        v = c
        for xi, e in zip(x, exps):
            if e:
                v *= xi**e
        total.append(v)
    return math.fsum(total) if total else 0.0


def gradient(p: Polynomial) -> list[Polynomial]:
    return p.gradient()


def lie_derivative(V: Polynomial, f: Sequence[Polynomial]) -> Polynomial:
    """Expanded ``f . grad V`` for a vector field given as ``n`` polynomials."""
    f = list(getattr(f, "f", f))
    if len(f) != V.n or any(fi.n != V.n for fi in f):
        raise DimensionError("vector field and V must share the state dimension")
    acc: dict[Monomial, list[float]] = defaultdict(list)
    for i, fi in enumerate(f):
        dV = V.derivative(i)
        for ea, ca in dV.terms.items():
            for eb, cb in fi.terms.items():
                acc[tuple(x + y for x, y in zip(ea, eb))].append(ca * cb)
    return Polynomial(V.n, {e: math.fsum(v) for e, v in acc.items()})


class PolyMap:
    """A list of polynomials compiled for vectorised evaluation.

    ``pm(X)`` with ``X`` of shape ``(n,)`` returns shape ``(m,)``; with shape
    ``(N, n)`` it returns ``(N, m)``.
    """

    def __init__(self, polys: Sequence[Polynomial]):
        polys = list(polys)
        if not polys:
            raise ValueError("PolyMap needs at least one polynomial")
        n = polys[0].n
        if any(p.n != n for p in polys):
            raise DimensionError("all polynomials must share the dimension")
        index: dict[Monomial, int] = {}
        for p in polys:
            for e in p.terms:
                index.setdefault(e, len(index))
        if not index:
            index[(0,) * n] = 0
        self.n = n
        self.m = len(polys)
        self.exps = np.array(list(index), dtype=np.int64).reshape(len(index), n)
        self.coef = np.zeros((self.m, len(index)))
        for r, p in enumerate(polys):
            for e, c in p.terms.items():
                self.coef[r, index[e]] = c
        self.maxdeg = self.exps.max(axis=0)

    def monomials(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        N = X.shape[0]
        out = np.ones((N, self.exps.shape[0]))
        for i in range(self.n):
            d = int(self.maxdeg[i])
            if d == 0:
                continue
            pw = np.empty((N, d + 1))
            pw[:, 0] = 1.0
            for k in range(1, d + 1):
                pw[:, k] = pw[:, k - 1] * X[:, i]
            out *= pw[:, self.exps[:, i]]
        return out

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            if X.shape[0] != self.n:
                raise DimensionError(f"expected {self.n} coordinates, got {X.shape[0]}")
            return (self.monomials(X[None, :]) @ self.coef.T)[0]
        if X.shape[1] != self.n:
            raise DimensionError(f"expected {self.n} coordinates, got {X.shape[1]}")
        return self.monomials(X) @ self.coef.T
