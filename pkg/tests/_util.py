"""Shared builders for tests."""

import numpy as np

from mbfv.galois import FieldPoly, peval


def noisy_instance(field, u, k, omega, rng):
    """u pairs with distinct abscissae, exactly omega of them on a random kappa."""
    kappa = FieldPoly(rng.integers(0, field.order, k).tolist(), field)
    xs = rng.choice(field.order, u, replace=False).astype(np.int64)
    ys = peval(field, kappa.array(), xs)
    bad = rng.permutation(u)[omega:]
    ys[bad] ^= rng.integers(1, field.order, len(bad))
    return kappa, xs, ys


def oracle_violations(field, u, k, omega, rng, params):
    """Compare GS with exhaustive subset decoding on one instance.

    Returns a list of problems (empty when consistent): GS must return every
    polynomial agreeing with >= radius pairs, nothing agreeing with fewer,
    and only polynomials the exhaustive decoder also finds.
    """
    from mbfv.decoder import agreement, bruteforce_decode, gs_decode

    kappa, xs, ys = noisy_instance(field, u, k, omega, rng)
    pairs = list(zip(xs.tolist(), ys.tolist()))
    brute = bruteforce_decode(pairs, k, field=field)
    gs = gs_decode(pairs, k, params, field=field)
    problems = []
    brute_set = set(brute.candidates)
    gs_set = set(gs.candidates)
    for p in brute_set:
        if agreement(p, pairs, field) >= gs.radius and p not in gs_set:
            problems.append(f"missed {p.coeffs}")
    for p in gs_set:
        if agreement(p, pairs, field) < gs.radius:
            problems.append(f"below radius {p.coeffs}")
        if p not in brute_set:
            problems.append(f"not in exhaustive list {p.coeffs}")
        if p.degree >= k:
            problems.append(f"degree {p.degree} >= k")
    if len(gs.candidates) > params.max_list:
        problems.append("list longer than max_list")
    if omega >= gs.radius and kappa not in gs_set:
        problems.append("kappa missed")
    return problems
