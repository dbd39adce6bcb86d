"""Two-component spatial birth-and-death dynamics toolkit.

A population of '+' particles (branching with kernel ``a_plus``, constant
mortality ``m``, pairwise competition ``a_minus``) coupled with strength ``g``
to a fast environment of '-' particles driven by Glauber dynamics with
activity ``z`` and pair potential ``psi``, the environment running at speed
``1/epsilon``.

The package provides

* kernel/parameter containers and admissibility checks (:mod:`bdlp.admissibility`),
* exponential bound envelopes and continuation schedules (:mod:`bdlp.envelopes`),
* Lyapunov weights and drift constants (:mod:`bdlp.lyapunov`),
* finite-configuration combinatorics (:mod:`bdlp.configs`),
* an exact lattice master-equation oracle (:mod:`bdlp.oracle`),
* the correlation-function hierarchy on finite site spaces (:mod:`bdlp.hierarchy`),
* event-driven stochastic simulation (:mod:`bdlp.simulate`),
* estimators and experiment metrics (:mod:`bdlp.analysis`),
* a batch experiment runner (:mod:`bdlp.cli`).
"""

from bdlp.kernels import Kernel
from bdlp.geometry import Torus, Lattice
from bdlp.params import ModelParams
from bdlp.configs import FiniteConfig

__all__ = ["Kernel", "Torus", "Lattice", "ModelParams", "FiniteConfig"]

__version__ = "0.1.0"
