"""Finite two-sort configurations and harmonic-analysis combinatorics.

Points are opaque ordered values: continuum positions as coordinate tuples,
lattice points as integer site indices.  All summation-transform identities
(K-transform, its alternating-sign inverse, the subset/integration-by-parts
identity, duality against correlation functions) are realized on finite site
spaces where they are exact finite sums.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence


def _as_sorted_unique(points: Iterable) -> tuple:
    pts = tuple(points)
    out = tuple(sorted(pts))
    for a, b in zip(out, out[1:]):
        if a == b:
            raise ValueError(f"configuration has a repeated point: {a!r}")
    return out


@dataclass(frozen=True)
class FiniteConfig:
    """A finite simple configuration (eta_plus, eta_minus)."""

    plus: tuple = ()
    minus: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "plus", _as_sorted_unique(self.plus))
        object.__setattr__(self, "minus", _as_sorted_unique(self.minus))

    @property
    def n_plus(self) -> int:
        return len(self.plus)

    @property
    def n_minus(self) -> int:
        return len(self.minus)

    @property
    def size(self) -> int:
        return len(self.plus) + len(self.minus)

    def as_json(self) -> dict:
        conv = lambda p: list(p) if isinstance(p, tuple) else p
        return {"plus": [conv(p) for p in self.plus], "minus": [conv(p) for p in self.minus]}


def subsets(points: Sequence, max_size: int | None = None) -> Iterator[tuple]:
    """All subsets of ``points`` (as sorted tuples), optionally size-capped."""
    n = len(points)
    top = n if max_size is None else min(n, max_size)
    for k in range(top + 1):
        yield from itertools.combinations(points, k)


@dataclass(frozen=True)
class SetFunction:
    """A bounded function on finite configurations with bounded support.

    ``evaluator`` maps a :class:`FiniteConfig` to a float and must vanish when
    the total point count exceeds ``support_bound``.  ``n_sorts`` is 1 when the
    function ignores the minus sort entirely (evaluated at minus = empty).
    """

    evaluator: Callable[[FiniteConfig], float]
    support_bound: int
    n_sorts: int = 2
    sup_bound: float = math.inf

    def __call__(self, eta: FiniteConfig) -> float:
        if eta.size > self.support_bound:
            return 0.0
        val = self.evaluator(eta)
        if abs(val) > self.sup_bound * (1 + 1e-12):
            raise ValueError("set function exceeded its declared sup bound")
        return val


def k_transform(G: SetFunction, gamma: FiniteConfig) -> float:
    """Sum of G over all two-sort sub-configurations of gamma.

    The support bound of G truncates the subset enumeration, so the cost is
    polynomial in |gamma| for fixed support bound.
    """
    N = G.support_bound
    total = 0.0
    for xi_p in subsets(gamma.plus, N):
        rem = N - len(xi_p)
        if G.n_sorts == 1:
            total += G(FiniteConfig(xi_p, ()))
            continue
        for xi_m in subsets(gamma.minus, rem):
            total += G(FiniteConfig(xi_p, xi_m))
    return total


def mobius_inverse(KG: Callable[[FiniteConfig], float], eta: FiniteConfig) -> float:
    """Invert the K-transform: alternating-sign sum over sub-configurations.

    Applying this to ``k_transform(G, .)`` recovers ``G(eta)`` exactly.
    """
    total = 0.0
    n = eta.size
    for xi_p in subsets(eta.plus):
        for xi_m in subsets(eta.minus):
            sign = -1.0 if (n - len(xi_p) - len(xi_m)) % 2 else 1.0
            total += sign * KG(FiniteConfig(xi_p, xi_m))
    return total


def lp_integral(G: SetFunction, site_weights: dict) -> float:
    """Integral of G against the finite-site-space analogue of the
    Lebesgue-Poisson measure with one-point weights ``site_weights``.

    On a finite site space the n!-symmetrized integrals over ordered tuples
    collapse to plain subset sums: the result is
    sum over subsets A (and B for two-sort G) of G(A, B) * w(A) * w(B)
    with w(S) the product of the weights of the points of S.
    """
    sites = list(site_weights)
    if not all(math.isfinite(float(w)) for w in site_weights.values()):
        raise ValueError("site weights must be finite")

    def wprod(sub: tuple) -> float:
        out = 1.0
        for p in sub:
            out *= site_weights[p]
        return out

    total = 0.0
    for a in subsets(sites, G.support_bound):
        wa = wprod(a)
        if G.n_sorts == 1:
            total += G(FiniteConfig(a, ())) * wa
            continue
        for b in subsets(sites, G.support_bound - len(a)):
            total += G(FiniteConfig(a, b)) * wa * wprod(b)
    return total


def ibp_discrepancy(G3: Callable[[tuple, tuple, tuple], float], site_weights: dict) -> float:
    """Difference of the two sides of the combinatorial integration-by-parts
    identity for a three-argument function G3(xi, eta, eta-with-xi).

    Left side: integrate over eta the sum over splits of eta into (xi, eta\\xi).
    Right side: double integral over disjoint (xi, eta) of G3(xi, eta, xi+eta).
    Both are exact subset sums on the finite site space; overlapping (xi, eta)
    pairs carry no weight (they form a null set in the continuum identity).
    """
    sites = list(site_weights)

    def wprod(sub: tuple) -> float:
        out = 1.0
        for p in sub:
            out *= site_weights[p]
        return out

    lhs = 0.0
    for eta in subsets(sites):
        w = wprod(eta)
        eta_set = set(eta)
        for xi in subsets(eta):
            rest = tuple(sorted(eta_set - set(xi)))
            lhs += G3(xi, rest, eta) * w
    rhs = 0.0
    for xi in subsets(sites):
        others = tuple(sorted(set(sites) - set(xi)))
        wxi = wprod(xi)
        for eta in subsets(others):
            union = tuple(sorted(xi + eta))
            rhs += G3(xi, eta, union) * wxi * wprod(eta)
    return lhs - rhs


def ibp_check(site_weights: dict, trials: int = 50, seed: int = 0, G3=None) -> float:
    """Max absolute integration-by-parts discrepancy over a trial set.

    With ``G3`` given, evaluates that single function.  Otherwise draws
    ``trials`` random bounded functions (values in [-1, 1], seeded) and
    returns the worst discrepancy found.
    """
    import numpy as np

    if G3 is not None:
        return abs(ibp_discrepancy(G3, site_weights))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        cache: dict = {}

        def g3(xi, eta, zeta, _cache=cache, _rng=rng):
            key = (xi, eta, zeta)
            if key not in _cache:
                _cache[key] = float(_rng.uniform(-1.0, 1.0))
            return _cache[key]

        worst = max(worst, abs(ibp_discrepancy(g3, site_weights)))
    return worst


# -- interaction energies ---------------------------------------------------


def _pair_distance(a, b, geometry) -> float:
    if isinstance(a, int) and isinstance(b, int):
        return geometry.distance(a, b)
    return geometry.distance(a, b)


def relative_energy(x, gamma_minus: Sequence, psi, geometry) -> float:
    """Interaction energy of a new point x with the configuration, possibly
    +inf for hard-core potentials (downstream uses exp(-inf) = 0)."""
    total = 0.0
    for y in gamma_minus:
        v = psi.eval_r(_pair_distance(x, y, geometry))
        if math.isinf(v):
            return math.inf
        total += v
    return total


def cross_energy(eta_plus: Sequence, eta_minus: Sequence, b_minus, geometry) -> float:
    """Sum of b_minus over all cross pairs (one point per sort)."""
    total = 0.0
    for x in eta_plus:
        for y in eta_minus:
            total += b_minus.eval_r(_pair_distance(x, y, geometry))
    return total


def pair_energy(points: Sequence, kernel, geometry) -> float:
    """Sum of the kernel over unordered distinct pairs within one sort."""
    total = 0.0
    pts = list(points)
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            total += kernel.eval_r(_pair_distance(pts[i], pts[j], geometry))
    return total
