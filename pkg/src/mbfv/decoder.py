"""Polynomial reconstruction from noisy unlocking sets.

Two decoders share one result type:

* :func:`bruteforce_decode` interpolates k-subsets of the pairs in
  lexicographic order.  It is slow but obviously correct and serves as the
  oracle for the list decoder.
* :func:`gs_decode` is a Guruswami-Sudan list decoder with multiplicity.
  The interpolation polynomial Q(X, Y) is built incrementally (Koetter's
  algorithm) and its Y-roots of degree < k are extracted recursively
  (Roth-Ruckenstein).

Work is reported in units of one k-point Lagrange interpolation: brute force
counts interpolations, the list decoder counts the field multiplications it
performs and divides by :func:`mbfv.galois.lagrange_mults`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError
from .galois import (
    DEFAULT_FIELD,
    FieldElement,
    FieldPoly,
    FieldSpec,
    find_roots,
    interpolate_batch,
    lagrange_mults,
    pdivmod,
    peval,
    trim,
    xor_reduce,
)


@dataclass(frozen=True)
class GsParams:
    """Multiplicity of the interpolation and the cap on the candidate list.

    ``max_list`` also bounds the Y-degree of Q, so a small cap makes decoding
    cheaper at the cost of a (reported) larger decoding radius.
    """

    multiplicity: int = 1
    max_list: int = 16

    def __post_init__(self):
        if self.multiplicity < 1:
            raise ParameterError("multiplicity must be >= 1")
        if self.max_list < 1:
            raise ParameterError("max_list must be >= 1")


@dataclass
class DecodeResult:
    candidates: list[FieldPoly]
    ops: float
    radius: Optional[int] = None
    info: dict = dc_field(default_factory=dict)


def _unpack(pairs, field: Optional[FieldSpec]):
    if hasattr(pairs, "xs") and hasattr(pairs, "ys"):
        return np.asarray(pairs.xs, dtype=np.int64), np.asarray(pairs.ys, dtype=np.int64), pairs.field
    xs, ys = [], []
    for b, y in pairs:
        if isinstance(b, FieldElement):
            field = b.field
            b = b.value
        if isinstance(y, FieldElement):
            y = y.value
        xs.append(int(b))
        ys.append(int(y))
    return np.array(xs, dtype=np.int64), np.array(ys, dtype=np.int64), field or DEFAULT_FIELD


# ---------------------------------------------------------------------------
# Decoding radius bookkeeping
# ---------------------------------------------------------------------------

def _monomial_count(D: int, v: int, L: int) -> int:
    """Number of X^i Y^j with i + v*j <= D and j <= L."""
    J = min(L, D // v) if v else L
    return (J + 1) * (D + 1) - v * J * (J + 1) // 2


def interpolation_bounds(u: int, k: int, m: int, max_y: Optional[int] = None) -> tuple[int, int]:
    """Smallest weighted degree D admitting a nonzero Q, and the Y-degree cap L.

    Q has (1, k-1)-weighted degree <= D, Y-degree <= L and must satisfy
    u*m*(m+1)/2 linear vanishing constraints.
    """
    if k < 1 or u < k:
        raise ParameterError(f"need u >= k >= 1, got u={u}, k={k}")
    v = k - 1
    if max_y is None:
        max_y = u * m if v == 0 else 1 << 62
    constraints = u * m * (m + 1) // 2
    lo, hi = 0, 1
    while _monomial_count(hi, v, max_y) <= constraints:
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if _monomial_count(mid, v, max_y) > constraints:
            hi = mid
        else:
            lo = mid + 1
    D = lo
    L = min(max_y, D // v) if v else max_y
    return D, L


def decoding_radius(u: int, k: int, m: int, max_y: Optional[int] = None) -> int:
    """Minimum number of agreeing pairs that guarantees recovery."""
    D, _ = interpolation_bounds(u, k, m, max_y)
    return D // m + 1


def min_multiplicity(u: int, k: int, omega: int, limit: int = 100_000) -> Optional[int]:
    """Smallest multiplicity whose decoding radius is at most ``omega``.

    Returns ``None`` when no multiplicity works, which is exactly the case
    omega <= sqrt(u (k-1)).
    """
    if k < 1 or u < k:
        raise ParameterError(f"need u >= k >= 1, got u={u}, k={k}")
    if omega > u or omega * omega <= u * (k - 1) or omega < 1:
        return None
    m = 1
    while m <= limit:
        if decoding_radius(u, k, m) <= omega:
            return m
        m += 1
    raise ArithmeticError(f"multiplicity search exceeded {limit}")  # pragma: no cover


# ---------------------------------------------------------------------------
# Brute force
# ---------------------------------------------------------------------------

def bruteforce_decode(
    pairs,
    k: int,
    budget: Optional[int] = None,
    field: Optional[FieldSpec] = None,
    until: Optional[Callable[[FieldPoly], bool]] = None,
    chunk: Optional[int] = None,
) -> DecodeResult:
    """Interpolate k-subsets in lexicographic order, up to ``budget`` of them.

    With ``until`` given, decoding stops after the first chunk that yields a
    candidate accepted by the predicate; only the work done so far is counted.
    Chunks start small and double, so an early hit costs little.
    """
    xs, ys, field = _unpack(pairs, field)
    u = len(xs)
    if k < 1 or u < k:
        raise ParameterError(f"brute force needs at least k={k} pairs, got {u}")
    if budget is not None and budget < 1:
        raise ParameterError("budget must be >= 1")
    subsets = itertools.combinations(range(u), k)
    if budget is not None:
        subsets = itertools.islice(subsets, budget)
    found: dict[tuple, None] = {}
    done = 0
    max_chunk = chunk or max(1, min(4096, (1 << 20) // (k * k)))
    size = 1 if until is not None else max_chunk
    while True:
        block = list(itertools.islice(subsets, size))
        size = min(2 * size, max_chunk)
        if not block:
            break
        idx = np.array(block, dtype=np.int64)
        coeffs = interpolate_batch(field, xs[idx], ys[idx])
        done += len(block)
        hit = False
        for row in coeffs.tolist():
            while row and row[-1] == 0:
                row.pop()
            key = tuple(row)
            if key not in found:
                found[key] = None
                if until is not None and until(FieldPoly._from_array(np.array(key, dtype=np.int64), field)):
                    hit = True
        if hit:
            break
    cands = [FieldPoly._from_array(np.array(c, dtype=np.int64), field) for c in found]
    return DecodeResult(cands, float(done), radius=k, info={"subsets": done})


# ---------------------------------------------------------------------------
# Guruswami-Sudan
# ---------------------------------------------------------------------------

def _binom_support(n: int, r: int) -> np.ndarray:
    """Mask of i in [0, n) with C(i, r) odd (Lucas: r's bits contained in i)."""
    i = np.arange(n)
    return (i >= r) & ((i & r) == r)


def _interpolate_q(field: FieldSpec, xs, ys, v: int, m: int, D: int, L: int):
    """Koetter's incremental interpolation.

    Returns the minimal (1, v)-weighted-degree polynomial as an (L+1, D+1)
    array (rows: Y-degree, columns: X-degree) and the multiplication count.
    """
    P = L + 1
    G = np.zeros((P, L + 1, D + 1), dtype=np.int64)
    for j in range(P):
        G[j, j, 0] = 1
    wdeg = np.array([j * v for j in range(P)], dtype=np.int64)
    active = np.ones(P, dtype=bool)
    order_key = np.arange(P)
    xmasks = [_binom_support(D + 1, a) for a in range(m)]
    ymasks = [_binom_support(L + 1, b) for b in range(m)]
    ix = np.arange(D + 1)
    iy = np.arange(L + 1)
    mults = 0
    for x, y in zip(xs.tolist(), ys.tolist()):
        xp = field.vpowers(x, D + 1)
        yp = field.vpowers(y, L + 1)
        for b in range(min(m, L + 1)):
            hy = np.where(ymasks[b], yp[np.maximum(iy - b, 0)], 0)[b:]
            for a in range(m - b):
                act = np.flatnonzero(active)
                if act.size == 0:
                    break
                hx = np.where(xmasks[a], xp[np.maximum(ix - a, 0)], 0)[a:]
                sub = G[act, b:, a:]
                rows = xor_reduce(field.vmul(sub, hx), axis=2)
                disc = xor_reduce(field.vmul(rows, hy), axis=1)
                mults += sub.size + rows.size
                nz = np.flatnonzero(disc)
                if nz.size == 0:
                    continue
                cand = act[nz]
                best = min(range(len(cand)), key=lambda t: (wdeg[cand[t]], order_key[cand[t]]))
                s = cand[best]
                ds_inv = field.inv(int(disc[nz[best]]))
                gs = G[s]
                others = np.flatnonzero(cand != s)
                if others.size:
                    c = field.vmul(disc[nz[others]], ds_inv)
                    G[cand[others]] ^= field.vmul(gs[None, :, :], c[:, None, None])
                    mults += gs.size * others.size
                wdeg[s] += 1
                if wdeg[s] > D:
                    active[s] = False
                    continue
                shifted = np.zeros_like(gs)
                shifted[:, 1:] = gs[:, :-1]
                G[s] = shifted ^ field.vmul(gs, x)
                mults += gs.size
    act = np.flatnonzero(active)
    if act.size == 0:  # pragma: no cover - excluded by the monomial count
        raise ArithmeticError("interpolation produced no polynomial within the degree bound")
    best = min(act, key=lambda j: (wdeg[j], order_key[j]))
    return G[best], mults


def _strip(q: np.ndarray) -> np.ndarray:
    cols = np.flatnonzero(q.any(axis=0))
    rows = np.flatnonzero(q.any(axis=1))
    return q[: rows[-1] + 1, cols[0]: cols[-1] + 1]


def _substitute(field: FieldSpec, q: np.ndarray, a: int) -> np.ndarray:
    """Q(X, X*Y + a) as a new row/column array."""
    n = q.shape[0] - 1
    r = q.copy()
    if a:
        for i in range(n):
            for j in range(n - 1, i - 1, -1):
                r[j] ^= field.vmul(r[j + 1], a)
    out = np.zeros((n + 1, q.shape[1] + n), dtype=np.int64)
    for l in range(n + 1):
        out[l, l: l + q.shape[1]] = r[l]
    return out


def _yroots(field: FieldSpec, q: np.ndarray, k: int):
    """All f with deg f < k and (Y - f(X)) | Q(X, Y); also a mult count."""
    q = _strip(q)
    mults = 0
    if q.shape[0] == 1:
        return [], mults
    if q.shape[0] == 2:
        quot, rem = pdivmod(field, q[0], q[1])
        mults += len(q[0]) * len(q[1])
        if rem.size == 0 and len(quot) <= k:
            return [quot.tolist() + [0] * (k - len(quot))], mults
        return [], mults
    out = []
    stack = [(q, 0, ())]
    while stack:
        cur, depth, prefix = stack.pop()
        cur = _strip(cur)
        if depth == k:
            if not cur[0].any():
                out.append(list(prefix))
            continue
        roots = find_roots(field, cur[:, 0])
        deg = cur.shape[0] - 1
        mults += field.e * deg * deg
        for a in roots:
            stack.append((_substitute(field, cur, a), depth + 1, prefix + (a,)))
            mults += deg * deg * cur.shape[1] // 2
    return out, mults


def gs_decode(
    pairs,
    k: int,
    params: GsParams = GsParams(),
    field: Optional[FieldSpec] = None,
) -> DecodeResult:
    """List-decode the unlocking set.

    Every polynomial of degree < k that agrees with at least ``radius`` pairs
    is returned (``radius`` is reported on the result); candidates agreeing
    with fewer pairs are discarded.
    """
    xs, ys, field = _unpack(pairs, field)
    u = len(xs)
    if k < 1 or u < k:
        raise ParameterError(f"list decoding needs u >= k >= 1, got u={u}, k={k}")
    if len(set(xs.tolist())) != u:
        raise ParameterError("abscissae of the unlocking set must be distinct")
    m = params.multiplicity
    D, L = interpolation_bounds(u, k, m, params.max_list)
    radius = D // m + 1
    q, mults = _interpolate_q(field, xs, ys, k - 1, m, D, L)
    roots, rr_mults = _yroots(field, q, k)
    mults += rr_mults
    cands: dict[tuple, FieldPoly] = {}
    for coeffs in roots:
        arr = trim(np.array(coeffs, dtype=np.int64))
        agree = int(np.count_nonzero(peval(field, arr, xs) == ys))
        mults += len(arr) * u
        if agree >= radius:
            cands.setdefault(tuple(arr.tolist()), FieldPoly._from_array(arr, field))
    ops = mults / lagrange_mults(k)
    return DecodeResult(list(cands.values()), ops, radius=radius,
                        info={"multiplicity": m, "D": D, "L": L, "mults": mults})


def agreement(poly: FieldPoly, pairs, field: Optional[FieldSpec] = None) -> int:
    """Number of pairs (b, y) with poly(b) == y."""
    xs, ys, field = _unpack(pairs, field or poly.field)
    return int(np.count_nonzero(peval(field, poly.array(), xs) == ys))


def gs_bound(u: int, k: int) -> float:
    """sqrt(u (k-1)): agreements must exceed this for any multiplicity to work."""
    return math.sqrt(u * (k - 1))
