"""Periodic simulation domains: the continuum torus and finite site lattices.

Both geometries measure distances with the minimum-image convention so that
kernel evaluations are translation invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Torus:
    """Periodic box [0, length)^dimension."""

    length: float
    dimension: int = 1

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("torus length must be positive")

    @property
    def volume(self) -> float:
        return self.length**self.dimension

    def wrap(self, x: np.ndarray) -> np.ndarray:
        return np.mod(x, self.length)

    def centered(self, x: np.ndarray) -> np.ndarray:
        """Representative of x in [-length/2, length/2)^d, for weights e(x)."""
        y = np.mod(np.asarray(x, dtype=float) + 0.5 * self.length, self.length)
        return y - 0.5 * self.length

    def displacement(self, a, b) -> np.ndarray:
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        return d - self.length * np.round(d / self.length)

    def distance(self, a, b) -> float:
        return float(np.linalg.norm(self.displacement(a, b)))

    def distances_to(self, x, points: np.ndarray) -> np.ndarray:
        """Min-image distances from x to each row of points (shape (n, d))."""
        if len(points) == 0:
            return np.zeros(0)
        diff = points - np.asarray(x, dtype=float)
        diff -= self.length * np.round(diff / self.length)
        return np.sqrt((diff * diff).sum(axis=1))

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        return rng.random(self.dimension) * self.length


@dataclass(frozen=True)
class Lattice:
    """A finite list of sites with optional periodic wrapping.

    ``site_volume`` is the quadrature weight of one site: birth-rate integrals
    over space turn into site sums weighted by it, so lattice results converge
    to the continuum as the grid refines.
    """

    coords: tuple[tuple[float, ...], ...]
    periodic: bool = True
    lengths: tuple[float, ...] = field(default=())
    site_volume: float = 1.0

    def __post_init__(self):
        if len(self.coords) == 0:
            raise ValueError("lattice needs at least one site")
        if self.periodic and len(self.lengths) != self.dimension:
            raise ValueError("periodic lattice needs one box length per axis")
        if self.site_volume <= 0:
            raise ValueError("site_volume must be positive")

    @property
    def n_sites(self) -> int:
        return len(self.coords)

    @property
    def dimension(self) -> int:
        return len(self.coords[0])

    @property
    def volume(self) -> float:
        return self.site_volume * self.n_sites

    def displacement(self, i: int, j: int) -> np.ndarray:
        d = np.asarray(self.coords[i], dtype=float) - np.asarray(self.coords[j], dtype=float)
        if self.periodic:
            L = np.asarray(self.lengths, dtype=float)
            d = d - L * np.round(d / L)
        return d

    def distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.displacement(i, j)))

    def distance_matrix(self) -> np.ndarray:
        n = self.n_sites
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = self.distance(i, j)
        return out

    def kernel_matrix(self, kernel) -> np.ndarray:
        """Site-by-site kernel evaluation at min-image distances."""
        return kernel.eval_r_many(self.distance_matrix())

    @staticmethod
    def chain(n_sites: int, length: float, periodic: bool = True) -> "Lattice":
        """Evenly spaced 1d sites on [0, length) with site_volume = length/n."""
        h = length / n_sites
        coords = tuple((i * h,) for i in range(n_sites))
        return Lattice(coords=coords, periodic=periodic, lengths=(length,), site_volume=h)


def make_geometry(spec: dict):
    """Build a geometry from its JSON description."""
    kind = spec.get("kind")
    if kind == "torus":
        return Torus(length=float(spec["length"]), dimension=int(spec.get("dimension", 1)))
    if kind == "lattice":
        if "n_sites" in spec:
            return Lattice.chain(
                int(spec["n_sites"]), float(spec["length"]), bool(spec.get("periodic", True))
            )
        coords = tuple(tuple(float(c) for c in site) for site in spec["coords"])
        return Lattice(
            coords=coords,
            periodic=bool(spec.get("periodic", True)),
            lengths=tuple(float(x) for x in spec.get("lengths", ())),
            site_volume=float(spec.get("site_volume", 1.0)),
        )
    raise ValueError(f"unknown geometry kind {kind!r}")
