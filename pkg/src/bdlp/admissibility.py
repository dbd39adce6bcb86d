"""Admissibility conditions and derived weight constants.

Implements the environment low-activity condition, the Ruelle-stability check
for the pair kernels, the coupling-strength and averaging-feasibility
inequalities, and the weight exponents they produce.  Everything is a pure
function of the model parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from bdlp.kernels import Kernel, ball_volume, radial_integral
from bdlp.params import ModelParams


def psi_ursell_mass(psi: Kernel) -> float:
    """Integral of (1 - exp(-psi)) over R^d.

    Closed form for tophat potentials (including hard cores), adaptive
    quadrature otherwise.
    """
    if psi.is_zero:
        return 0.0
    d = psi.dimension
    if psi.shape == "tophat":
        drop = 1.0 if math.isinf(psi.height) else -math.expm1(-psi.height)
        return drop * ball_volume(d, psi.radius)
    val, err = radial_integral(lambda r: -math.expm1(-psi.eval_r(r)), d, psi.support_radius())
    if not math.isfinite(val):
        raise ValueError("integral of 1 - exp(-psi) diverges")
    return val


def c_psi(alpha_minus: float, psi: Kernel) -> float:
    """The environment constant exp(e^alpha * integral(1 - e^(-psi)))."""
    return math.exp(math.exp(alpha_minus) * psi_ursell_mass(psi))


def env_condition_value(alpha_minus: float, z: float, psi: Kernel) -> float:
    """z * e^(-alpha) * C_psi(alpha); admissible alphas make this < 1."""
    return z * math.exp(-alpha_minus) * c_psi(alpha_minus, psi)


@dataclass(frozen=True)
class AlphaWindow:
    """Admissible environment-weight window located on a search grid.

    ``alpha_star_minus`` is the first admissible grid point, ``alpha_star_star_minus``
    the right endpoint of the contiguous admissible window (the grid point after
    which admissibility first fails, or the interval end).
    """

    alpha_star_minus: float | None
    alpha_star_star_minus: float | None
    grid_step: float
    margin: float


def find_alpha_star_minus(
    params: ModelParams,
    search_interval: tuple[float, float],
    grid_step: float = 1e-3,
    margin: float = 1e-9,
) -> AlphaWindow:
    """Scan a grid for weights where the environment condition holds.

    The condition value is log-convex in alpha, so the admissible set within
    the interval is contiguous; we report its first grid point and the located
    right endpoint.  Returns a window of Nones when no grid point qualifies.
    """
    lo, hi = search_interval
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ValueError("search interval must be a finite increasing pair")
    ursell = psi_ursell_mass(params.psi)
    n = int(math.floor((hi - lo) / grid_step)) + 1
    alphas = lo + grid_step * np.arange(n)
    vals = params.z * np.exp(-alphas) * np.exp(np.exp(alphas) * ursell)
    ok = vals < 1.0 - margin
    if not ok.any():
        return AlphaWindow(None, None, grid_step, margin)
    first = int(np.argmax(ok))
    after = np.nonzero(~ok[first:])[0]
    last = first + int(after[0]) - 1 if len(after) else n - 1
    return AlphaWindow(float(alphas[first]), float(alphas[last]), grid_step, margin)


def alpha_star_plus(vartheta: float, lam: float, m: float) -> float:
    """Weight threshold of the '+' sort from the stability constants."""
    if vartheta <= 0:
        raise ValueError("vartheta must be positive")
    if lam < 0 or m < 0:
        raise ValueError("lambda and m must be nonnegative")
    if lam == 0:
        return math.log(vartheta)
    if lam + m == 0:
        raise ValueError("lambda > 0 requires lambda + m > 0")
    return math.log(max(lam / (lam + m), vartheta))


def check_coupling(params: ModelParams, alpha_star_minus: float) -> bool:
    """Weak-coupling inequality 0 < g < (m + lambda) e^(-alpha*-)."""
    if not math.isfinite(alpha_star_minus):
        raise ValueError("alpha_star_minus must be finite")
    return 0.0 < params.g < (params.m + params.lam) * math.exp(-alpha_star_minus)


def check_averaging_condition(
    params: ModelParams, alpha_star_star_minus: float, alpha_tilde_star_plus: float
) -> bool:
    """Feasibility inequality for the fast-environment limit:
    e^(alpha**-) g + e^(-alpha~*+) lambda <= lambda + m."""
    if not (math.isfinite(alpha_star_star_minus) and math.isfinite(alpha_tilde_star_plus)):
        raise ValueError("weight inputs must be finite")
    lhs = math.exp(alpha_star_star_minus) * params.g + math.exp(-alpha_tilde_star_plus) * params.lam
    return lhs <= params.lam + params.m


def minimal_alpha_tilde_plus(params: ModelParams, alpha_star_star_minus: float) -> float | None:
    """Smallest '+' weight making the averaging inequality hold, or None."""
    slack = params.lam + params.m - math.exp(alpha_star_star_minus) * params.g
    if params.lam == 0:
        return -math.inf if slack >= 0 else None
    if slack <= 0:
        return None
    return math.log(params.lam / slack)


# -- Ruelle stability ---------------------------------------------------------


@dataclass(frozen=True)
class StabilityResult:
    status: str  # "proved" | "falsified" | "unknown"
    witness: tuple[tuple[float, ...], ...] | None = None
    detail: str = ""


def stability_violation(
    points: np.ndarray, a_plus: Kernel, a_minus: Kernel, vartheta: float, lam: float
) -> float:
    """Ordered-pair-sum excess of the stability inequality on free space.

    Positive values certify a violation: sum over ordered pairs of a_plus
    exceeds vartheta * (same for a_minus) + lambda * n.
    """
    n = len(points)
    if n < 2:
        return -lam * n
    diff = points[:, None, :] - points[None, :, :]
    r = np.sqrt((diff * diff).sum(axis=-1))
    iu = np.triu_indices(n, k=1)
    sp = 2.0 * a_plus.eval_r_many(r[iu]).sum()
    sm = 2.0 * a_minus.eval_r_many(r[iu]).sum()
    return sp - vartheta * sm - lam * n


def _pointwise_dominance(a_plus: Kernel, a_minus: Kernel, vartheta: float) -> bool:
    """Grid check of a_plus <= vartheta * a_minus with shape-level tail analysis."""
    if a_plus.is_zero:
        return True
    if a_minus.is_zero or math.isinf(getattr(a_minus, "height", 1.0)):
        return False
    sup_p = a_plus.support_radius()
    sup_m = a_minus.support_radius()
    if math.isinf(sup_p):
        # Tails must decay at least as fast as vartheta * a_minus.
        if math.isfinite(sup_m):
            return False
        if a_plus.shape == "gaussian" and a_minus.shape == "gaussian":
            if a_plus.width > a_minus.width:
                return False
            grid_top = 10.0 * max(a_plus.width, a_minus.width)
        elif a_plus.shape == "exponential" and a_minus.shape == "exponential":
            if a_plus.rate < a_minus.rate:
                return False
            grid_top = 10.0 / min(a_plus.rate, a_minus.rate)
        elif a_plus.shape == "gaussian" and a_minus.shape == "exponential":
            # ratio peaks at r = rate * width^2, then decays
            grid_top = 2.0 * a_minus.rate * a_plus.width**2 + 10.0 * a_plus.width
        else:
            return False  # a_plus exponential vs gaussian a_minus: tail loses
    else:
        grid_top = sup_p
    rr = np.linspace(0.0, grid_top, 4001)
    return bool(np.all(a_plus.eval_r_many(rr) <= vartheta * a_minus.eval_r_many(rr) + 1e-15))


def _gaussian_pair_condition(
    a_plus: Kernel, a_minus: Kernel, vartheta: float, lam: float
) -> bool:
    """Sufficient condition for two Gaussians via positive definiteness.

    If vartheta*a_minus - a_plus has nonnegative Fourier transform (wider
    a_plus, dominated total mass), the ordered pair sums differ by at most the
    diagonal deficit, which lambda must absorb.
    """
    if a_plus.shape != "gaussian" or a_minus.shape != "gaussian":
        return False
    if a_plus.width < a_minus.width:
        return False
    if vartheta * a_minus.amplitude < a_plus.amplitude:
        return False
    deficit = vartheta * a_minus.eval_r(0.0) - a_plus.eval_r(0.0)
    return lam >= max(0.0, deficit)


def check_stability(
    a_plus: Kernel,
    a_minus: Kernel,
    vartheta: float,
    lam: float,
    trials: int = 40,
    seed: int = 0,
) -> StabilityResult:
    """Three-valued Ruelle-stability verdict for (a_plus, a_minus, vartheta, lambda).

    proved     a sufficient condition holds (pointwise dominance, or the
               Gaussian positive-definiteness criterion);
    falsified  randomized clustered-configuration search with local descent
               found a finite configuration violating the inequality;
    unknown    neither, which is a valid outcome (stability is not decidable
               by sampling).
    """
    if _pointwise_dominance(a_plus, a_minus, vartheta):
        return StabilityResult("proved", detail="pointwise dominance")
    if _gaussian_pair_condition(a_plus, a_minus, vartheta, lam):
        return StabilityResult("proved", detail="gaussian positive-definiteness")

    d = a_plus.dimension
    rng = np.random.default_rng(seed)
    scales = [a_plus.width if a_plus.shape == "gaussian" else 1.0,
              getattr(a_plus, "radius", 1.0), 1.0]
    base_scale = max(float(s) for s in scales)
    best = (-math.inf, None)
    for _ in range(max(1, trials)):
        n = int(rng.integers(2, 21))
        spread = base_scale * 10.0 ** rng.uniform(-2.0, 0.5)
        pts = rng.normal(0.0, spread, size=(n, d))
        val = stability_violation(pts, a_plus, a_minus, vartheta, lam)
        # local perturbation descent on the violation
        step = spread
        for _ in range(60):
            i = int(rng.integers(n))
            cand = pts.copy()
            cand[i] += rng.normal(0.0, step, size=d)
            cval = stability_violation(cand, a_plus, a_minus, vartheta, lam)
            if cval > val:
                pts, val = cand, cval
            else:
                step *= 0.95
        if val > best[0]:
            best = (val, pts.copy())
    if best[0] > 1e-9:
        witness = tuple(tuple(float(c) for c in p) for p in best[1])
        return StabilityResult("falsified", witness=witness, detail=f"excess {best[0]:.6g}")
    return StabilityResult("unknown")


# -- report -------------------------------------------------------------------


@dataclass
class AdmissibilityReport:
    """All derived admissibility facts for one parameter set."""

    c_psi_curve: dict[float, float]
    alpha_star_minus: float | None
    alpha_star_star_minus: float | None
    alpha_star_plus: float
    alpha_tilde_star_plus: float | None
    stability: StabilityResult
    coupling_ok: bool
    averaging_ok: bool
    operating_alpha_star_star: float | None = None
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "c_psi_curve": {f"{a:.6g}": v for a, v in self.c_psi_curve.items()},
            "alpha_star_minus": self.alpha_star_minus,
            "alpha_star_star_minus": self.alpha_star_star_minus,
            "alpha_star_plus": self.alpha_star_plus,
            "alpha_tilde_star_plus": self.alpha_tilde_star_plus,
            "stability_status": self.stability.status,
            "stability_witness": self.stability.witness,
            "stability_detail": self.stability.detail,
            "coupling_ok": self.coupling_ok,
            "averaging_ok": self.averaging_ok,
            "operating_alpha_star_star": self.operating_alpha_star_star,
            "notes": self.notes,
        }


def admissibility_report(
    params: ModelParams,
    search_interval: tuple[float, float] | None = None,
    grid_step: float = 1e-3,
    margin: float = 1e-9,
    operating_margin: float | None = None,
    stability_trials: int = 40,
    seed: int = 0,
) -> AdmissibilityReport:
    """Run all admissibility checks and derive the weight constants.

    ``operating_margin`` selects how far above alpha*- the averaging check
    operates (the theory only requires some admissible point strictly above
    it); defaults to one grid step.
    """
    if search_interval is None:
        lo = math.log(params.z) - 2.0
        search_interval = (lo, lo + 8.0)
    window = find_alpha_star_minus(params, search_interval, grid_step, margin)
    notes: list[str] = []

    curve: dict[float, float] = {}
    for a in np.linspace(search_interval[0], search_interval[1], 21):
        curve[float(a)] = c_psi(float(a), params.psi)

    asp = alpha_star_plus(params.vartheta, params.lam, params.m)
    stability = check_stability(
        params.a_plus, params.a_minus, params.vartheta, params.lam, stability_trials, seed
    )

    coupling_ok = False
    averaging_ok = False
    alpha_tilde = None
    operating = None
    if window.alpha_star_minus is not None:
        coupling_ok = check_coupling(params, window.alpha_star_minus)
        step = grid_step if operating_margin is None else operating_margin
        operating = min(window.alpha_star_minus + step, window.alpha_star_star_minus)
        if operating <= window.alpha_star_minus:
            operating = window.alpha_star_star_minus
        alpha_tilde = minimal_alpha_tilde_plus(params, operating)
        if alpha_tilde is not None:
            averaging_ok = check_averaging_condition(params, operating, max(alpha_tilde, asp))
            alpha_tilde = max(alpha_tilde, asp)
    else:
        notes.append("no admissible alpha*- found in the search interval")

    if params.g > 0 and not coupling_ok:
        notes.append("coupling constant too large for the weak-coupling inequality")
    return AdmissibilityReport(
        c_psi_curve=curve,
        alpha_star_minus=window.alpha_star_minus,
        alpha_star_star_minus=window.alpha_star_star_minus,
        alpha_star_plus=asp,
        alpha_tilde_star_plus=alpha_tilde,
        stability=stability,
        coupling_ok=coupling_ok,
        averaging_ok=averaging_ok,
        operating_alpha_star_star=operating,
        notes=notes,
    )
