"""Radial interaction kernels and their norms.

All kernels used by the model (branching ``a_plus``, competition ``a_minus``,
cross-coupling ``b_minus``, environment potential ``psi``, Lyapunov weight
``e``) are nonnegative, symmetric and radial.  A :class:`Kernel` knows its
closed-form L1/sup norms where they exist and can sample dispersal
displacements from its normalized density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad


def sphere_surface(d: int) -> float:
    """Surface area of the unit sphere in R^d (2 for d=1, 2*pi for d=2, ...)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d: int, radius: float = 1.0) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * radius**d


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class Kernel:
    """A nonnegative radial function on R^d.

    Shapes
    ------
    gaussian:    amplitude / (2 pi width^2)^(d/2) * exp(-r^2 / (2 width^2)),
                 normalized so the L1 norm equals ``amplitude``.
    exponential: amplitude * exp(-rate * r).
    tophat:      height * 1[r <= radius]; ``height=inf`` models a hard core
                 (only meaningful as a potential, never as a rate kernel).
    tabulated:   values on the uniform radial grid r_i = i * spacing, linear
                 interpolation between grid points, zero beyond the last one.
    zero:        identically zero.
    """

    shape: str
    dimension: int = 1
    amplitude: float = 1.0
    width: float = 1.0
    rate: float = 1.0
    height: float = 1.0
    radius: float = 1.0
    values: tuple[float, ...] = field(default=())
    spacing: float = 1.0

    def __post_init__(self):
        if self.shape not in ("gaussian", "exponential", "tophat", "tabulated", "zero"):
            raise KernelError(f"unknown kernel shape {self.shape!r}")
        if self.dimension < 1:
            raise KernelError("dimension must be a positive integer")
        if self.shape == "gaussian" and (self.amplitude <= 0 or self.width <= 0):
            raise KernelError("gaussian kernel needs amplitude > 0 and width > 0")
        if self.shape == "exponential" and (self.amplitude <= 0 or self.rate <= 0):
            raise KernelError("exponential kernel needs amplitude > 0 and rate > 0")
        if self.shape == "tophat" and (self.height < 0 or self.radius <= 0):
            raise KernelError("tophat kernel needs height >= 0 and radius > 0")
        if self.shape == "tabulated":
            if len(self.values) < 2 or self.spacing <= 0:
                raise KernelError("tabulated kernel needs >= 2 grid values and spacing > 0")
            if any(v < 0 or not math.isfinite(v) for v in self.values):
                raise KernelError("tabulated kernel values must be finite and >= 0")

    # -- evaluation ---------------------------------------------------------

    def eval_r(self, r: float) -> float:
        """Kernel value at radial distance ``r`` (may be +inf for hard cores)."""
        if self.shape == "zero":
            return 0.0
        if self.shape == "gaussian":
            s2 = self.width * self.width
            return self.amplitude / (2.0 * math.pi * s2) ** (self.dimension / 2.0) * math.exp(
                -r * r / (2.0 * s2)
            )
        if self.shape == "exponential":
            return self.amplitude * math.exp(-self.rate * r)
        if self.shape == "tophat":
            return self.height if r <= self.radius else 0.0
        # tabulated
        x = r / self.spacing
        i = int(math.floor(x))
        if i >= len(self.values) - 1:
            return 0.0
        f = x - i
        return self.values[i] * (1.0 - f) + self.values[i + 1] * f

    def eval_r_many(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.shape == "zero":
            return np.zeros_like(r)
        if self.shape == "gaussian":
            s2 = self.width * self.width
            return self.amplitude / (2.0 * math.pi * s2) ** (self.dimension / 2.0) * np.exp(
                -(r * r) / (2.0 * s2)
            )
        if self.shape == "exponential":
            return self.amplitude * np.exp(-self.rate * r)
        if self.shape == "tophat":
            return np.where(r <= self.radius, self.height, 0.0)
        grid = np.arange(len(self.values)) * self.spacing
        return np.interp(r, grid, self.values, right=0.0)

    @property
    def is_zero(self) -> bool:
        return self.shape == "zero" or (self.shape == "tophat" and self.height == 0.0)

    @property
    def has_hard_core(self) -> bool:
        return self.shape == "tophat" and math.isinf(self.height)

    # -- norms --------------------------------------------------------------

    def l1_norm(self) -> float:
        """Integral of the kernel over R^d (closed form for analytic shapes)."""
        d = self.dimension
        if self.shape == "zero":
            return 0.0
        if self.shape == "gaussian":
            return self.amplitude
        if self.shape == "exponential":
            # S_{d-1} * int_0^inf e^{-rate r} r^{d-1} dr = S_{d-1} (d-1)! / rate^d
            return self.amplitude * sphere_surface(d) * math.gamma(d) / self.rate**d
        if self.shape == "tophat":
            if math.isinf(self.height):
                raise KernelError("divergent norm: hard-core kernel has no L1 norm")
            return self.height * ball_volume(d, self.radius)
        # tabulated: quadrature of the surface-weighted radial profile
        val, _ = radial_integral(self.eval_r, d, self.support_radius())
        if not math.isfinite(val):
            raise KernelError("divergent norm: tabulated kernel is not integrable")
        return val

    def sup_norm(self) -> float:
        if self.shape == "zero":
            return 0.0
        if self.shape == "gaussian":
            return self.amplitude / (2.0 * math.pi * self.width**2) ** (self.dimension / 2.0)
        if self.shape == "exponential":
            return self.amplitude
        if self.shape == "tophat":
            return self.height
        return max(self.values)

    def support_radius(self) -> float:
        """Radius of the (compact) support, or inf for unbounded shapes."""
        if self.shape == "zero":
            return 0.0
        if self.shape == "tophat":
            return self.radius
        if self.shape == "tabulated":
            return (len(self.values) - 1) * self.spacing
        return math.inf

    def effective_radius(self, mass_tol: float = 1e-12) -> float:
        """Radius containing all but ``mass_tol`` of the L1 mass.

        Used as evaluation cutoff in the simulator's neighbor search; exact
        (the full support) for compactly supported shapes.
        """
        sr = self.support_radius()
        if math.isfinite(sr):
            return sr
        total = self.l1_norm()
        if total == 0.0:
            return 0.0
        d = self.dimension
        lo, hi = 0.0, 1.0
        while self._tail_mass(hi) > mass_tol * total:
            hi *= 2.0
            if hi > 1e6:
                return hi
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self._tail_mass(mid) > mass_tol * total:
                lo = mid
            else:
                hi = mid
        return hi

    def _tail_mass(self, r0: float) -> float:
        d = self.dimension
        if self.shape == "gaussian":
            # amplitude * P(chi_d >= r0/width) via the regularized upper gamma
            from scipy.special import gammaincc

            return self.amplitude * gammaincc(d / 2.0, r0 * r0 / (2.0 * self.width**2))
        if self.shape == "exponential":
            val, _ = quad(
                lambda r: self.eval_r(r) * r ** (d - 1), r0, math.inf, epsrel=1e-10, epsabs=0
            )
            return sphere_surface(d) * val
        return 0.0

    # -- sampling -----------------------------------------------------------

    def sample_displacement(self, rng: np.random.Generator) -> np.ndarray:
        """Draw one displacement from the density kernel / l1_norm."""
        d = self.dimension
        if self.is_zero:
            raise KernelError("cannot sample a displacement from the zero kernel")
        if self.shape == "gaussian":
            return rng.normal(0.0, self.width, size=d)
        if self.shape == "tophat":
            u = _random_direction(rng, d)
            return self.radius * rng.random() ** (1.0 / d) * u
        if self.shape == "exponential":
            # radial density ~ r^{d-1} e^{-rate r}  =>  r ~ Gamma(d, 1/rate)
            r = rng.gamma(shape=d, scale=1.0 / self.rate)
            return r * _random_direction(rng, d)
        # tabulated: categorical over radial bins, uniform radius within a bin
        masses = self._bin_masses()
        i = rng.choice(len(masses), p=masses)
        r = (i + rng.random()) * self.spacing
        return r * _random_direction(rng, d)

    def _bin_masses(self) -> np.ndarray:
        d = self.dimension
        n = len(self.values) - 1
        mids = (np.arange(n) + 0.5) * self.spacing
        m = self.eval_r_many(mids) * mids ** (d - 1)
        tot = m.sum()
        if tot <= 0:
            raise KernelError("cannot sample a displacement from the zero kernel")
        return m / tot

    def as_dict(self) -> dict:
        out = {"shape": self.shape, "dimension": self.dimension}
        if self.shape == "gaussian":
            out.update(amplitude=self.amplitude, width=self.width)
        elif self.shape == "exponential":
            out.update(amplitude=self.amplitude, rate=self.rate)
        elif self.shape == "tophat":
            out.update(height=self.height, radius=self.radius)
        elif self.shape == "tabulated":
            out.update(values=list(self.values), spacing=self.spacing)
        return out

    @staticmethod
    def from_dict(spec: dict, dimension: int | None = None) -> "Kernel":
        spec = dict(spec)
        shape = spec.pop("shape")
        if dimension is not None:
            spec["dimension"] = dimension
        if "values" in spec:
            spec["values"] = tuple(float(v) for v in spec["values"])
        if "height" in spec and spec["height"] in ("inf", "infinity"):
            spec["height"] = math.inf
        return Kernel(shape=shape, **spec)


def _random_direction(rng: np.random.Generator, d: int) -> np.ndarray:
    if d == 1:
        return np.array([1.0 if rng.random() < 0.5 else -1.0])
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def radial_integral(f, d: int, support: float = math.inf, epsrel: float = 1e-10):
    """Integrate the radial function ``f`` over R^d adaptively.

    Returns (value, abserr).  ``support`` truncates the radial range for
    compactly supported integrands.
    """
    upper = support if math.isfinite(support) else math.inf
    val, err = quad(
        lambda r: f(r) * r ** (d - 1), 0.0, upper, epsrel=epsrel, epsabs=0, limit=200
    )
    s = sphere_surface(d)
    return s * val, s * err
