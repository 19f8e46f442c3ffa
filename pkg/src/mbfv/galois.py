"""Arithmetic in binary extension fields GF(2^e) and polynomials over them.

Scalars are plain ints in ``[0, 2^e)``.  :class:`FieldSpec` carries the
field description and vectorised helpers (``vmul``, ``vinv``) that operate
on numpy integer arrays; these back the polynomial routines used by the
vault and the decoders.  :class:`FieldElement` and :class:`FieldPoly` are
thin, immutable, operator-friendly wrappers for library users.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import FieldMismatchError, ParameterError

NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# GF(2)[x] on python ints (bit i = coefficient of x^i)
# ---------------------------------------------------------------------------

def _clmul(a: int, b: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        b >>= 1
    return r


def _gf2_mod(a: int, m: int) -> int:
    dm = m.bit_length()
    while a.bit_length() >= dm:
        a ^= m << (a.bit_length() - dm)
    return a


def _gf2_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, _gf2_mod(a, b)
    return a


def _prime_factors(n: int) -> list[int]:
    out, p = [], 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def is_irreducible(poly: int) -> bool:
    """Rabin's irreducibility test for a polynomial over GF(2)."""
    e = poly.bit_length() - 1
    if e < 1:
        return False

    def x_pow_2k(k: int) -> int:
        r = 2  # x
        for _ in range(k):
            r = _gf2_mod(_clmul(r, r), poly)
        return r

    if x_pow_2k(e) != _gf2_mod(2, poly):
        return False
    for p in _prime_factors(e):
        if _gf2_gcd(poly, x_pow_2k(e // p) ^ 2) != 1:
            return False
    return True


# ---------------------------------------------------------------------------
# Field description
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _tables(e: int, reduction: int):
    """exp/log tables; log[0] points into a zero region of exp."""
    q = 1 << e
    order = q - 1

    def slow_mul(a, b):
        return _gf2_mod(_clmul(a, b), reduction)

    def slow_pow(a, n):
        r = 1
        while n:
            if n & 1:
                r = slow_mul(r, a)
            a = slow_mul(a, a)
            n >>= 1
        return r

    factors = _prime_factors(order) if order > 1 else []
    gen = 2 if q > 2 else 1
    while q > 2 and any(slow_pow(gen, order // p) == 1 for p in factors):
        gen += 1

    exp = np.zeros(4 * q + 2, dtype=np.int64)
    log = np.zeros(q, dtype=np.int64)
    x = 1
    for i in range(order):
        exp[i] = x
        log[x] = i
        x = slow_mul(x, gen)
    exp[order:2 * order] = exp[:order]
    log[0] = 2 * q
    return exp, log


@dataclass(frozen=True)
class FieldSpec:
    """GF(2^e) given by an irreducible reduction polynomial (bitmask incl. x^e)."""

    e: int
    reduction: int

    def __post_init__(self):
        if not 2 <= self.e <= 32:
            raise ParameterError(f"extension degree must be in [2, 32], got {self.e}")
        if self.reduction.bit_length() - 1 != self.e:
            raise ParameterError(f"reduction polynomial {self.reduction:#x} has wrong degree")
        if not is_irreducible(self.reduction):
            raise ParameterError(f"reduction polynomial {self.reduction:#x} is reducible")

    @property
    def order(self) -> int:
        return 1 << self.e

    @property
    def byte_width(self) -> int:
        return (self.e + 7) // 8

    @property
    def has_tables(self) -> bool:
        return self.e <= 16

    def __repr__(self):
        return f"FieldSpec(e={self.e}, reduction={self.reduction:#x})"

    def element(self, value: int) -> "FieldElement":
        return FieldElement(int(value), self)

    def check(self, value: int) -> int:
        value = int(value)
        if not 0 <= value < self.order:
            raise ParameterError(f"{value} is not an element of GF(2^{self.e})")
        return value

    # -- scalar ops --------------------------------------------------------
    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        if self.has_tables:
            exp, log = _tables(self.e, self.reduction)
            return int(exp[log[a] + log[b]])
        return _gf2_mod(_clmul(a, b), self.reduction)

    def pow(self, a: int, n: int) -> int:
        r = 1
        while n:
            if n & 1:
                r = self.mul(r, a)
            a = self.mul(a, a)
            n >>= 1
        return r

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("zero has no inverse in a field")
        if self.has_tables:
            exp, log = _tables(self.e, self.reduction)
            return int(exp[(self.order - 1 - log[a]) % (self.order - 1)])
        return self.pow(a, self.order - 2)

    # -- vectorised ops ----------------------------------------------------
    def vmul(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        if self.has_tables:
            exp, log = _tables(self.e, self.reduction)
            return exp[log[a] + log[b]]
        a, b = np.broadcast_arrays(a, b)
        r = np.zeros(a.shape, dtype=np.int64)
        for i in range(self.e):
            r ^= np.where((b >> i) & 1, a << i, 0)
        for i in range(2 * self.e - 2, self.e - 1, -1):
            r ^= ((r >> i) & 1) * (self.reduction << (i - self.e))
        return r

    def vinv(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        if np.any(a == 0):
            raise ZeroDivisionError("zero has no inverse in a field")
        if self.has_tables:
            exp, log = _tables(self.e, self.reduction)
            return exp[(self.order - 1 - log[a]) % (self.order - 1)]
        r = np.ones_like(a)
        base, n = a, self.order - 2
        while n:
            if n & 1:
                r = self.vmul(r, base)
            base = self.vmul(base, base)
            n >>= 1
        return r

    def vpowers(self, x: int, n: int) -> np.ndarray:
        """[1, x, x^2, ..., x^(n-1)]"""
        if self.has_tables and n > 0:
            if x == 0:
                out = np.zeros(n, dtype=np.int64)
                out[0] = 1
                return out
            exp, log = _tables(self.e, self.reduction)
            return exp[(int(log[x]) * np.arange(n, dtype=np.int64)) % (self.order - 1)]
        out = np.empty(n, dtype=np.int64)
        acc = 1
        for i in range(n):
            out[i] = acc
            acc = self.mul(acc, x)
        return out


DEFAULT_FIELD = FieldSpec(16, 0x1100B)  # x^16 + x^12 + x^3 + x + 1


@functools.lru_cache(maxsize=None)
def smallest_field(e: int) -> FieldSpec:
    """GF(2^e) with the numerically smallest irreducible reduction polynomial.

    e = 16 returns :data:`DEFAULT_FIELD`.
    """
    if e == 16:
        return DEFAULT_FIELD
    r = (1 << e) | 1
    while not is_irreducible(r):
        r += 2
    return FieldSpec(e, r)


def field_for(max_value: int, min_e: int = 16) -> FieldSpec:
    """Smallest standard field (at least ``min_e`` bits) holding ``max_value``."""
    return smallest_field(max(min_e, max_value.bit_length()))


def xor_reduce(a: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.bitwise_xor.reduce(a, axis=axis)


# ---------------------------------------------------------------------------
# Elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldElement:
    value: int
    field: FieldSpec

    def __post_init__(self):
        if not 0 <= self.value < self.field.order:
            raise ParameterError(f"{self.value} does not fit into GF(2^{self.field.e})")

    def __int__(self):
        return self.value

    def _other(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise FieldMismatchError(f"{self.field} vs {other.field}")
            return other.value
        return self.field.check(other)

    def __add__(self, other):
        return FieldElement(self.value ^ self._other(other), self.field)

    __radd__ = __add__
    __sub__ = __add__
    __rsub__ = __add__

    def __mul__(self, other):
        return FieldElement(self.field.mul(self.value, self._other(other)), self.field)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return FieldElement(self.field.mul(self.value, self.field.inv(self._other(other))), self.field)

    def __neg__(self):
        return self

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        return FieldElement(self.field.pow(self.value, n), self.field)

    def inverse(self) -> "FieldElement":
        return FieldElement(self.field.inv(self.value), self.field)


def add(a: FieldElement, b: FieldElement) -> FieldElement:
    return a + b


def mul(a: FieldElement, b: FieldElement) -> FieldElement:
    return a * b


def inv(a: FieldElement) -> FieldElement:
    return a.inverse()


# ---------------------------------------------------------------------------
# Polynomials (coefficient arrays, lowest degree first)
# ---------------------------------------------------------------------------

def trim(c: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(c)
    return c[: nz[-1] + 1] if nz.size else c[:0]


def pmul(field: FieldSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) == 0 or len(b) == 0:
        return np.zeros(0, dtype=np.int64)
    if len(a) > len(b):
        a, b = b, a
    out = np.zeros(len(a) + len(b) - 1, dtype=np.int64)
    for i, ai in enumerate(a.tolist()):
        if ai:
            out[i:i + len(b)] ^= field.vmul(ai, b)
    return out


def padd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) < len(b):
        a, b = b, a
    out = a.copy()
    out[: len(b)] ^= b
    return trim(out)


def pdivmod(field: FieldSpec, a: np.ndarray, b: np.ndarray):
    b = trim(b)
    if len(b) == 0:
        raise ZeroDivisionError("polynomial division by zero")
    r = trim(a).copy()
    db = len(b) - 1
    if len(r) - 1 < db:
        return np.zeros(0, dtype=np.int64), r
    lead_inv = field.inv(int(b[-1]))
    q = np.zeros(len(r) - db, dtype=np.int64)
    for i in range(len(r) - 1, db - 1, -1):
        c = int(r[i])
        if c:
            c = field.mul(c, lead_inv)
            q[i - db] = c
            r[i - db:i + 1] ^= field.vmul(c, b)
    return trim(q), trim(r[:db])


def peval(field: FieldSpec, c: np.ndarray, xs) -> np.ndarray:
    """Horner evaluation of coefficient array ``c`` at every point of ``xs``."""
    xs = np.asarray(xs, dtype=np.int64)
    acc = np.zeros(xs.shape, dtype=np.int64)
    for coef in c[::-1].tolist():
        acc = field.vmul(acc, xs) ^ coef
    return acc


def pchar(field: FieldSpec, roots) -> np.ndarray:
    """Coefficients of prod (X + r), monic."""
    out = np.zeros(len(roots) + 1, dtype=np.int64)
    out[0] = 1
    for n, r in enumerate(np.asarray(roots, dtype=np.int64).tolist(), start=1):
        prev = out[:n].copy()
        out[1:n + 1] = prev
        out[0] = 0
        out[:n] ^= field.vmul(prev, r)
    return out


def interpolate_batch(field: FieldSpec, xs, ys) -> np.ndarray:
    """Lagrange interpolation of many point sets at once.

    ``xs`` and ``ys`` have shape (B, k) with distinct abscissae per row; the
    result has shape (B, k) and holds the coefficients (lowest first) of the
    unique polynomial of degree < k through each row's points.
    """
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    n, k = xs.shape
    master = np.zeros((n, k + 1), dtype=np.int64)
    master[:, 0] = 1
    for i in range(k):
        shifted = np.zeros_like(master)
        shifted[:, 1:] = master[:, :-1]
        master = shifted ^ field.vmul(master, xs[:, i:i + 1])
    denom = np.ones((n, k), dtype=np.int64)
    for j in range(k):
        diff = xs ^ xs[:, j:j + 1]
        diff[:, j] = 1
        denom = field.vmul(denom, diff)
    w = field.vmul(ys, field.vinv(denom))
    out = np.zeros((n, k), dtype=np.int64)
    # synthetic division master / (X + x_i), highest coefficient first
    cur = np.broadcast_to(master[:, k:k + 1], (n, k)).copy()
    out[:, k - 1] = xor_reduce(field.vmul(w, cur), axis=1)
    for j in range(k - 2, -1, -1):
        cur = master[:, j + 1:j + 2] ^ field.vmul(xs, cur)
        out[:, j] = xor_reduce(field.vmul(w, cur), axis=1)
    return out


def lagrange_mults(k: int) -> int:
    """Field multiplications spent by :func:`interpolate_batch` per point set.

    This is the unit in which decoder work is reported.
    """
    return k * (k - 1) // 2 + k * k + k + 2 * k * k


class FieldPoly:
    """Immutable univariate polynomial over a :class:`FieldSpec`.

    ``coeffs`` is a tuple of ints, lowest degree first, with no trailing
    zeros; the zero polynomial has ``coeffs == ()`` and degree ``-inf``.
    """

    __slots__ = ("field", "coeffs")

    def __init__(self, coeffs: Iterable[int], field: FieldSpec = DEFAULT_FIELD):
        vals = [int(c) for c in coeffs]
        for c in vals:
            if not 0 <= c < field.order:
                raise ParameterError(f"coefficient {c} does not fit into GF(2^{field.e})")
        while vals and vals[-1] == 0:
            vals.pop()
        object.__setattr__(self, "field", field)
        object.__setattr__(self, "coeffs", tuple(vals))

    def __setattr__(self, name, value):
        raise AttributeError("FieldPoly is immutable")

    @classmethod
    def _from_array(cls, arr: np.ndarray, field: FieldSpec) -> "FieldPoly":
        p = object.__new__(cls)
        object.__setattr__(p, "field", field)
        object.__setattr__(p, "coeffs", tuple(trim(np.asarray(arr, dtype=np.int64)).tolist()))
        return p

    def array(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=np.int64)

    @property
    def degree(self):
        return len(self.coeffs) - 1 if self.coeffs else NEG_INF

    def is_zero(self) -> bool:
        return not self.coeffs

    def __len__(self):
        return len(self.coeffs)

    def __getitem__(self, i: int) -> FieldElement:
        return FieldElement(self.coeffs[i] if i < len(self.coeffs) else 0, self.field)

    def __eq__(self, other):
        return isinstance(other, FieldPoly) and self.field == other.field and self.coeffs == other.coeffs

    def __hash__(self):
        return hash((self.field, self.coeffs))

    def __repr__(self):
        return f"FieldPoly({list(self.coeffs)}, e={self.field.e})"

    def _same(self, other: "FieldPoly"):
        if other.field != self.field:
            raise FieldMismatchError(f"{self.field} vs {other.field}")

    def __add__(self, other: "FieldPoly") -> "FieldPoly":
        return poly_add(self, other)

    __sub__ = __add__

    def __mul__(self, other: "FieldPoly") -> "FieldPoly":
        return poly_mul(self, other)

    def __divmod__(self, other: "FieldPoly"):
        return poly_divmod(self, other)

    def __call__(self, x):
        return poly_eval(self, x)


def poly_add(p: FieldPoly, q: FieldPoly) -> FieldPoly:
    p._same(q)
    return FieldPoly._from_array(padd(p.array(), q.array()), p.field)


def poly_mul(p: FieldPoly, q: FieldPoly) -> FieldPoly:
    p._same(q)
    return FieldPoly._from_array(pmul(p.field, p.array(), q.array()), p.field)


def poly_divmod(p: FieldPoly, q: FieldPoly) -> tuple[FieldPoly, FieldPoly]:
    p._same(q)
    quot, rem = pdivmod(p.field, p.array(), q.array())
    return FieldPoly._from_array(quot, p.field), FieldPoly._from_array(rem, p.field)


def poly_eval(p: FieldPoly, x) -> FieldElement:
    if isinstance(x, FieldElement):
        p._same(FieldPoly((), x.field))
        x = x.value
    x = p.field.check(x)
    return FieldElement(int(peval(p.field, p.array(), x)), p.field)


def _values(points, field: FieldSpec) -> list[int]:
    out = []
    for v in points:
        if isinstance(v, FieldElement):
            if v.field != field:
                raise FieldMismatchError(f"{v.field} vs {field}")
            v = v.value
        out.append(field.check(v))
    return out


def lagrange_interpolate(points: Sequence[tuple], field: FieldSpec = DEFAULT_FIELD) -> FieldPoly:
    """Unique polynomial of degree < len(points) through ``points``."""
    if not points:
        raise ParameterError("interpolation needs at least one point")
    first = points[0][0]
    if isinstance(first, FieldElement):
        field = first.field
    xs = _values([p[0] for p in points], field)
    ys = _values([p[1] for p in points], field)
    if len(set(xs)) != len(xs):
        raise ParameterError("duplicate abscissa in interpolation points")
    coeffs = interpolate_batch(field, [xs], [ys])[0]
    return FieldPoly._from_array(coeffs, field)


def char_poly(roots: Sequence, field: FieldSpec = DEFAULT_FIELD) -> FieldPoly:
    """Monic polynomial prod_{r in roots} (X - r)."""
    if roots and isinstance(roots[0], FieldElement):
        field = roots[0].field
    vals = _values(roots, field)
    if len(set(vals)) != len(vals):
        raise ParameterError("duplicate root")
    return FieldPoly._from_array(pchar(field, vals), field)


# ---------------------------------------------------------------------------
# Root finding for small univariate polynomials (used by the list decoder)
# ---------------------------------------------------------------------------

def _py_mulmod(field: FieldSpec, a: list[int], b: list[int], m: list[int]) -> list[int]:
    """a*b mod m, with m monic; all lists lowest degree first."""
    prod = [0] * (len(a) + len(b) - 1) if a and b else []
    fm = field.mul
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                if bj:
                    prod[i + j] ^= fm(ai, bj)
    return _py_mod(field, prod, m)


def _py_mod(field: FieldSpec, a: list[int], m: list[int]) -> list[int]:
    a = list(a)
    dm = len(m) - 1
    fm = field.mul
    for i in range(len(a) - 1, dm - 1, -1):
        c = a[i]
        if c:
            for j in range(dm + 1):
                if m[j]:
                    a[i - dm + j] ^= fm(c, m[j])
    a = a[:dm]
    while a and a[-1] == 0:
        a.pop()
    return a


def _py_monic(field: FieldSpec, a: list[int]) -> list[int]:
    c = field.inv(a[-1])
    return [field.mul(c, x) for x in a]


def _py_gcd(field: FieldSpec, a: list[int], b: list[int]) -> list[int]:
    while b:
        b = _py_monic(field, b)
        a, b = b, _py_mod(field, a, b)
    return _py_monic(field, a) if a else a


def _split_roots(field: FieldSpec, g: list[int], out: list[int]):
    """Roots of monic ``g`` that splits into distinct linear factors."""
    d = len(g) - 1
    if d == 0:
        return
    if d == 1:
        out.append(g[0])
        return
    # Trace splitting: Tr(beta*Y) = sum (beta*Y)^(2^i) separates roots for some beta.
    for bit in range(field.e):
        beta = 1 << bit
        t = [0, beta]
        acc = list(t)
        for _ in range(field.e - 1):
            t = _py_mulmod(field, t, t, g)
            acc = [x ^ y for x, y in zip(acc + [0] * (len(t) - len(acc)), t + [0] * (len(acc) - len(t)))]
        while acc and acc[-1] == 0:
            acc.pop()
        h = _py_gcd(field, list(g), acc)
        if 0 < len(h) - 1 < d:
            _split_roots(field, h, out)
            rest, rem = pdivmod(field, np.array(g, dtype=np.int64), np.array(h, dtype=np.int64))
            _split_roots(field, _py_monic(field, rest.tolist()), out)
            return
    raise ArithmeticError("trace splitting failed")  # pragma: no cover


def find_roots(field: FieldSpec, coeffs) -> list[int]:
    """All distinct roots in GF(2^e) of a univariate polynomial."""
    c = [int(x) for x in coeffs]
    while c and c[-1] == 0:
        c.pop()
    if len(c) <= 1:
        return []
    if len(c) == 2:
        return [field.mul(c[0], field.inv(c[1]))]
    c = _py_monic(field, c)
    # gcd with Y^(2^e) - Y isolates the product of distinct linear factors
    y = [0, 1]
    p = _py_mod(field, y, c) if len(c) > 2 else y
    for _ in range(field.e):
        p = _py_mulmod(field, p, p, c)
    p = p + [0] * max(0, 2 - len(p))
    p[1] ^= 1
    while p and p[-1] == 0:
        p.pop()
    g = _py_gcd(field, c, p) if p else c
    roots: list[int] = []
    _split_roots(field, g, roots)
    return sorted(roots)
