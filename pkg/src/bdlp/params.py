"""Model parameters: rates, kernels and domain geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from bdlp.geometry import Lattice, Torus, make_geometry
from bdlp.kernels import Kernel


@dataclass(frozen=True)
class ModelParams:
    """All rates and kernels of the two-component dynamics.

    m         constant mortality of '+' particles (>= 0)
    g         coupling of '+' deaths to the environment (>= 0)
    z         environment activity (> 0)
    epsilon   environment time scale (> 0, or math.inf for a frozen environment)
    vartheta  stability constant of the pair-potential inequality (> 0)
    lam       stability offset lambda (>= 0)
    """

    m: float
    g: float
    z: float
    epsilon: float
    vartheta: float
    lam: float
    a_plus: Kernel
    a_minus: Kernel
    b_minus: Kernel
    psi: Kernel
    geometry: Torus | Lattice

    def __post_init__(self):
        if self.m < 0 or self.g < 0 or self.lam < 0:
            raise ValueError("m, g, lambda must be nonnegative")
        if self.z <= 0:
            raise ValueError("activity z must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive (math.inf allowed)")
        if self.vartheta <= 0:
            raise ValueError("vartheta must be positive")
        if self.a_plus.is_zero:
            raise ValueError("a_plus must not be identically zero")
        if self.g > 0 and not self.b_minus.is_zero:
            l1 = self.b_minus.l1_norm()
            if abs(l1 - 1.0) > 1e-8:
                raise ValueError(
                    f"b_minus must be normalized to unit L1 norm when g > 0 (got {l1:.6g})"
                )

    @property
    def env_frozen(self) -> bool:
        return math.isinf(self.epsilon)

    @property
    def inv_epsilon(self) -> float:
        return 0.0 if self.env_frozen else 1.0 / self.epsilon

    @property
    def dimension(self) -> int:
        return self.geometry.dimension

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        geo = self.geometry
        if isinstance(geo, Torus):
            gd = {"kind": "torus", "length": geo.length, "dimension": geo.dimension}
        else:
            gd = {
                "kind": "lattice",
                "coords": [list(c) for c in geo.coords],
                "periodic": geo.periodic,
                "lengths": list(geo.lengths),
                "site_volume": geo.site_volume,
            }
        return {
            "m": self.m,
            "g": self.g,
            "z": self.z,
            "epsilon": "infinity" if self.env_frozen else self.epsilon,
            "vartheta": self.vartheta,
            "lambda": self.lam,
            "a_plus": self.a_plus.as_dict(),
            "a_minus": self.a_minus.as_dict(),
            "b_minus": self.b_minus.as_dict(),
            "psi": self.psi.as_dict(),
            "geometry": gd,
        }

    @staticmethod
    def from_dict(spec: dict) -> "ModelParams":
        geometry = make_geometry(spec["geometry"])
        d = geometry.dimension
        eps = spec.get("epsilon", 1.0)
        if eps in ("infinity", "inf"):
            eps = math.inf
        return ModelParams(
            m=float(spec["m"]),
            g=float(spec["g"]),
            z=float(spec["z"]),
            epsilon=float(eps),
            vartheta=float(spec.get("vartheta", 1.0)),
            lam=float(spec.get("lambda", 0.0)),
            a_plus=Kernel.from_dict(spec["a_plus"], d),
            a_minus=Kernel.from_dict(spec["a_minus"], d),
            b_minus=Kernel.from_dict(spec["b_minus"], d),
            psi=Kernel.from_dict(spec["psi"], d),
            geometry=geometry,
        )
