import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from _util import noisy_instance, oracle_violations
from mbfv.decoder import (DecodeResult, GsParams, bruteforce_decode, decoding_radius, gs_bound, gs_decode,
                          interpolation_bounds, min_multiplicity)
from mbfv.errors import ParameterError
from mbfv.galois import DEFAULT_FIELD, FieldPoly, smallest_field

F8 = smallest_field(8)


def test_params_validation():
    with pytest.raises(ParameterError):
        GsParams(multiplicity=0)
    with pytest.raises(ParameterError):
        GsParams(max_list=0)


def test_bruteforce_two_genuine_of_five():
    rng = np.random.default_rng(3)
    kappa, xs, ys = noisy_instance(F8, 5, 2, 2, rng)
    res = bruteforce_decode(list(zip(xs.tolist(), ys.tolist())), 2, field=F8)
    assert kappa in res.candidates
    assert res.ops == math.comb(5, 2)
    assert res.radius == 2


def test_bruteforce_budget_and_errors():
    rng = np.random.default_rng(4)
    _, xs, ys = noisy_instance(F8, 8, 3, 8, rng)
    pairs = list(zip(xs.tolist(), ys.tolist()))
    assert bruteforce_decode(pairs, 3, budget=7, field=F8).ops == 7
    with pytest.raises(ParameterError):
        bruteforce_decode(pairs, 9, field=F8)
    with pytest.raises(ParameterError):
        bruteforce_decode(pairs, 3, budget=0, field=F8)


def test_bruteforce_early_exit():
    rng = np.random.default_rng(5)
    kappa, xs, ys = noisy_instance(DEFAULT_FIELD, 30, 5, 30, rng)
    res = bruteforce_decode(list(zip(xs.tolist(), ys.tolist())), 5, until=lambda p: p == kappa)
    assert res.candidates == [kappa]
    assert res.ops == 1


def test_gs_noiseless_and_errors():
    rng = np.random.default_rng(6)
    kappa, xs, ys = noisy_instance(DEFAULT_FIELD, 20, 6, 20, rng)
    res = gs_decode(list(zip(xs.tolist(), ys.tolist())), 6)
    assert isinstance(res, DecodeResult)
    assert kappa in res.candidates
    with pytest.raises(ParameterError):
        gs_decode(list(zip(xs.tolist(), ys.tolist()))[:5], 6)
    dup = [(1, 2), (1, 3), (2, 4)]
    with pytest.raises(ParameterError):
        gs_decode(dup, 2)


def test_gs_ops_deterministic():
    rng = np.random.default_rng(7)
    _, xs, ys = noisy_instance(DEFAULT_FIELD, 40, 10, 25, rng)
    pairs = list(zip(xs.tolist(), ys.tolist()))
    a = gs_decode(pairs, 10, GsParams(2))
    b = gs_decode(pairs, 10, GsParams(2))
    assert a.ops == b.ops > 0
    assert a.info["mults"] == b.info["mults"]


def test_radius_bookkeeping():
    # one constraint per pair at m=1: D is the first weighted degree with > u monomials
    D, L = interpolation_bounds(93, 40, 1)
    assert (D, L) == (66, 1)
    assert decoding_radius(93, 40, 1) == 67
    assert math.isclose(gs_bound(93, 40), math.sqrt(93 * 39))
    assert min_multiplicity(93, 40, 70) == 1
    assert min_multiplicity(93, 40, 60) is None
    assert min_multiplicity(93, 40, 61) is not None
    with pytest.raises(ParameterError):
        min_multiplicity(3, 4, 3)


@given(st.integers(2, 40), st.integers(1, 12), st.data())
def test_min_multiplicity_feasibility_matches_bound(u, k, data):
    if k > u:
        return
    omega = data.draw(st.integers(0, u))
    m = min_multiplicity(u, k, omega)
    feasible = 1 <= omega <= u and omega * omega > u * (k - 1)
    assert (m is not None) == feasible
    if m is not None:
        assert decoding_radius(u, k, m) <= omega
        if m > 1:
            assert decoding_radius(u, k, m - 1) > omega


@pytest.mark.parametrize("m", [1, 2])
def test_radius_decreases_towards_bound(m):
    for u, k in [(30, 5), (93, 40), (60, 20)]:
        r = decoding_radius(u, k, m)
        assert r > gs_bound(u, k)
        assert decoding_radius(u, k, m + 1) <= r


@pytest.mark.parametrize("u,k,omega", [(40, 10, 22), (30, 4, 12), (93, 40, 64)])
def test_gs_recovers_at_min_multiplicity(u, k, omega):
    rng = np.random.default_rng(u * 100 + omega)
    kappa, xs, ys = noisy_instance(DEFAULT_FIELD, u, k, omega, rng)
    m = min_multiplicity(u, k, omega)
    assert m is not None
    res = gs_decode(list(zip(xs.tolist(), ys.tolist())), k, GsParams(m))
    assert res.radius <= omega
    assert kappa in res.candidates


def test_oracle_equivalence_small_sweep():
    rng = np.random.default_rng(11)
    bad = []
    for k in range(1, 5):
        for u in range(k, 13):
            for omega in range(u + 1):
                for m in (1, 2):
                    bad += oracle_violations(F8, u, k, omega, rng, GsParams(m))
    assert bad == []


@given(st.integers(1, 4), st.integers(0, 8), st.integers(0, 2**32 - 1))
def test_bruteforce_below_k_misses_kappa(k, extra, seed):
    rng = np.random.default_rng(seed)
    u = k + extra
    omega = int(rng.integers(0, k))  # fewer than k genuine pairs
    kappa, xs, ys = noisy_instance(DEFAULT_FIELD, u, k, omega, rng)
    res = bruteforce_decode(list(zip(xs.tolist(), ys.tolist())), k)
    # the construction puts exactly omega < k pairs on kappa
    assert kappa not in res.candidates
