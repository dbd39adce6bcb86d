"""Exponential envelope bounds for correlation functions.

The joint dynamics admits time-dependent Ruelle-type envelopes whose shape
depends on whether the mortality ``m`` exceeds the total branching mass
``||a+||_1`` (growing vs. decaying case); the averaged dynamics uses the same
case split with ``m`` replaced by ``m + g*rho``.  The free constants
``delta`` and ``alpha_delta_plus`` are user inputs validated against the
case's constraints, never auto-chosen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from bdlp.params import ModelParams

JOINT_REGIMES = ("joint_supercritical", "joint_subcritical")
AVERAGED_REGIMES = ("averaged_supercritical", "averaged_subcritical")


class EnvelopeConstraintError(ValueError):
    """A free envelope constant violates its case's admissibility constraint."""


@dataclass(frozen=True)
class EnvelopeSpec:
    """Inputs of an envelope curve.

    norm_k0           weighted sup norm of the initial correlation table
    alpha_delta_plus  '+' weight exponent (the case-adjusted alpha)
    alpha_minus       '-' weight exponent (unused in averaged regimes)
    delta             free decay/growth slack parameter
    regime            one of joint_/averaged_ x supercritical/subcritical
    rho               environment density, used only in averaged regimes
    """

    norm_k0: float
    alpha_delta_plus: float
    alpha_minus: float = 0.0
    delta: float = 0.1
    regime: str = "joint_subcritical"
    rho: float = 0.0

    def __post_init__(self):
        if self.norm_k0 < 0:
            raise ValueError("norm_k0 must be nonnegative")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.regime not in JOINT_REGIMES + AVERAGED_REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")


def _validate_case(spec: EnvelopeSpec, params: ModelParams, effective_m: float) -> str:
    """Return 'a' (growth) or 'b' (decay) and enforce the constraints."""
    a1 = params.a_plus.l1_norm()
    lam = params.lam
    supercritical = effective_m <= a1
    if spec.regime.endswith("supercritical") != supercritical:
        side = "<=" if supercritical else ">"
        raise EnvelopeConstraintError(
            f"regime {spec.regime!r} does not match the sign test: "
            f"effective mortality {effective_m:.6g} {side} ||a+||_1 = {a1:.6g}"
        )
    if supercritical:
        if lam > 0:
            if not (0.0 < spec.delta < lam + effective_m):
                raise EnvelopeConstraintError(
                    f"case (a) with lambda > 0 needs delta in (0, {lam + effective_m:.6g}); "
                    f"got delta = {spec.delta:.6g}"
                )
            bound = math.log(lam / spec.delta)
            if not spec.alpha_delta_plus > bound:
                raise EnvelopeConstraintError(
                    f"case (a) with lambda > 0 needs alpha_delta_plus > log(lambda/delta) "
                    f"= {bound:.6g}; got {spec.alpha_delta_plus:.6g}"
                )
        return "a"
    gap = effective_m - a1
    if not (0.0 < spec.delta < gap):
        raise EnvelopeConstraintError(
            f"case (b) needs delta in (0, {gap:.6g}); got delta = {spec.delta:.6g}"
        )
    if lam > 0:
        bound = math.log(lam / (gap - spec.delta))
        if not spec.alpha_delta_plus >= bound:
            raise EnvelopeConstraintError(
                f"case (b) with lambda > 0 needs alpha_delta_plus >= {bound:.6g}; "
                f"got {spec.alpha_delta_plus:.6g}"
            )
    return "b"


def theorem2_envelope(
    spec: EnvelopeSpec,
    params: ModelParams,
    t: float,
    n_plus: int,
    n_minus: int,
    E_b: float = 0.0,
) -> float:
    """Joint-dynamics envelope value at time t for orders (n_plus, n_minus).

    ``E_b`` is the cross-interaction energy of the evaluation configuration;
    it contributes the environment-coupling decay factor exp(-g t E_b).
    """
    if spec.regime not in JOINT_REGIMES:
        raise EnvelopeConstraintError("theorem2_envelope needs a joint regime")
    if E_b < 0:
        raise ValueError("E_b must be nonnegative")
    case = _validate_case(spec, params, params.m)
    base = spec.norm_k0 * math.exp(
        spec.alpha_delta_plus * n_plus + spec.alpha_minus * n_minus
    )
    if case == "a":
        grow = (params.a_plus.l1_norm() + spec.delta - params.m) * n_plus * t
        return base * math.exp(grow) * math.exp(-params.g * t * E_b)
    return base * math.exp(-spec.delta * t) * math.exp(-params.g * t * E_b)


def theorem5_envelope(
    spec: EnvelopeSpec, params: ModelParams, rho: float, t: float, n_plus: int
) -> float:
    """Averaged-dynamics envelope: mortality shifted by g*rho, no cross factor."""
    if spec.regime not in AVERAGED_REGIMES:
        raise EnvelopeConstraintError("theorem5_envelope needs an averaged regime")
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    eff_m = params.m + params.g * rho
    case = _validate_case(spec, params, eff_m)
    base = spec.norm_k0 * math.exp(spec.alpha_delta_plus * n_plus)
    if case == "a":
        return base * math.exp((params.a_plus.l1_norm() + spec.delta - eff_m) * n_plus * t)
    return base * math.exp(-spec.delta * t)


# -- existence lifetimes and the continuation schedule ------------------------


def lifetime_T(alpha: tuple[float, float], beta: tuple[float, float], params: ModelParams) -> float:
    """Existence lifetime of the hierarchy evolution between weight pairs."""
    if not beta[0] > alpha[0]:
        raise ValueError("not an admissible pair: beta+ must exceed alpha+")
    denom = (
        math.exp(beta[0]) * params.a_minus.l1_norm()
        + params.lam
        + params.a_plus.l1_norm()
        + math.exp(beta[1]) * params.g
    )
    return (beta[0] - alpha[0]) / denom


def tau(alpha: tuple[float, float], kappa: float, params: ModelParams) -> float:
    """Lifetime toward the standard offset pair (alpha+ + 1, alpha- + kappa)."""
    return lifetime_T(alpha, (alpha[0] + 1.0, alpha[1] + kappa), params)


def beta_plus(alpha_plus: float, T: float, params: ModelParams) -> float:
    """Weight growth over one continuation span of length T."""
    return alpha_plus + (params.lam + params.a_plus.l1_norm()) * T


@dataclass(frozen=True)
class ContinuationSchedule:
    spans: tuple[float, ...]  # T^(1), T^(2), ...
    partial_sums: tuple[float, ...]  # S_1, S_2, ...
    alpha_plus_path: tuple[float, ...]  # alpha_0^+, alpha_1^+, ...


def continuation_schedule(
    alpha0: tuple[float, float], kappa: float, params: ModelParams, n_steps: int
) -> ContinuationSchedule:
    """Generate the quarter-lifetime continuation spans T^(n+1) = tau(alpha_n)/4.

    The '+' weight grows by (lambda + ||a+||_1) T each span while the '-'
    weight stays fixed; the partial sums diverge, which is what lets local
    existence spans be chained into a global evolution.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    ap = [alpha0[0]]
    spans: list[float] = []
    sums: list[float] = []
    total = 0.0
    for _ in range(n_steps):
        step = 0.25 * tau((ap[-1], alpha0[1]), kappa, params)
        spans.append(step)
        total += step
        sums.append(total)
        ap.append(beta_plus(ap[-1], step, params))
    return ContinuationSchedule(tuple(spans), tuple(sums), tuple(ap))
