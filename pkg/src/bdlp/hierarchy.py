"""Correlation-function hierarchy on finite site spaces.

The time derivative of the lattice correlation functions k(eta) =
P(eta occupied) / v^|eta| under the master equation is assembled here as the
exact transpose of the oracle generator.  Its terms are, per entry:

* a loss term  -M(eta) k(eta)  collecting mortality, the stability offset,
  pairwise competition and the cross coupling;
* an in-table branching gain  sum over ordered '+' pairs of a+ (the parent
  integrated over the remaining points);
* extension terms with site-sum quadrature (weight v per new site): the
  competition and coupling death integrals, and the branching term that moves
  one point to a new parent site;
* the environment term: per '-' point, the Ursell-expanded birth integral
  over new-site subsets, exact on the finite site space;
* occupancy-exclusion corrections of order v and v^2 that account for births
  onto occupied sites being dropped on the lattice (they vanish as the grid
  refines and are what makes the operator exactly dual to the oracle).

Entries above the truncation order are supplied by a closure: zero, or the
product factorization through the one-point function.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from bdlp.envelopes import AVERAGED_REGIMES, EnvelopeSpec, theorem2_envelope, theorem5_envelope
from bdlp.geometry import Lattice
from bdlp.oracle import LatticeModel
from bdlp.params import ModelParams

CLOSURES = ("truncate_zero", "poisson_product")


@dataclass
class CorrelationTable:
    """Tabulated correlation functions on a finite site space.

    Entries are indexed by pairs of sorted tuples of distinct site indices,
    one tuple per sort, up to the maximum orders.  The empty entry is the
    normalization k = 1 and is never integrated.
    """

    lattice: Lattice
    n_plus_max: int
    n_minus_max: int
    values: dict[tuple[tuple[int, ...], tuple[int, ...]], float] = field(default_factory=dict)

    @staticmethod
    def empty(lattice: Lattice, n_plus_max: int, n_minus_max: int) -> "CorrelationTable":
        t = CorrelationTable(lattice, n_plus_max, n_minus_max)
        sites = range(lattice.n_sites)
        for n in range(n_plus_max + 1):
            for m in range(n_minus_max + 1):
                for tp in itertools.combinations(sites, n):
                    for tm in itertools.combinations(sites, m):
                        t.values[(tp, tm)] = 0.0
        t.values[((), ())] = 1.0
        return t

    @staticmethod
    def poisson(lattice: Lattice, n_plus_max: int, n_minus_max: int,
                z_plus: float, z_minus: float = 0.0) -> "CorrelationTable":
        """The fully chaotic table k = z+^n z-^m."""
        t = CorrelationTable.empty(lattice, n_plus_max, n_minus_max)
        for (tp, tm) in t.keys():
            t.values[(tp, tm)] = z_plus ** len(tp) * z_minus ** len(tm)
        return t

    def keys(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        return sorted(self.values.keys(), key=lambda k: (len(k[0]), len(k[1]), k[0], k[1]))

    def get(self, tp, tm) -> float:
        return self.values[(tuple(tp), tuple(tm))]

    def set(self, tp, tm, val: float) -> None:
        key = (tuple(tp), tuple(tm))
        if key not in self.values:
            raise KeyError(f"entry {key} outside table orders")
        self.values[key] = float(val)

    def copy_like(self) -> "CorrelationTable":
        t = CorrelationTable(self.lattice, self.n_plus_max, self.n_minus_max)
        t.values = {k: 0.0 for k in self.values}
        t.values[((), ())] = 1.0
        return t

    def norm_K_alpha(self, alpha: tuple[float, float]) -> float:
        """Weighted sup norm: max |k| e^(-alpha+ n) e^(-alpha- m)."""
        return max(
            abs(v) * math.exp(-alpha[0] * len(tp) - alpha[1] * len(tm))
            for (tp, tm), v in self.values.items()
        )

    def max_abs_diff(self, other: "CorrelationTable") -> float:
        return max(abs(self.values[k] - other.values[k]) for k in self.values)

    def as_rows(self) -> list[dict]:
        rows = []
        for (tp, tm) in self.keys():
            rows.append(
                {
                    "n_plus": len(tp),
                    "n_minus": len(tm),
                    "sites_plus": " ".join(map(str, tp)),
                    "sites_minus": " ".join(map(str, tm)),
                    "value": self.values[(tp, tm)],
                }
            )
        return rows

    # vector view (normalization entry pinned, not part of the state)

    def _vector_keys(self):
        return [k for k in self.keys() if k != ((), ())]

    def to_vector(self) -> np.ndarray:
        return np.array([self.values[k] for k in self._vector_keys()])

    def from_vector(self, vec: np.ndarray) -> "CorrelationTable":
        out = self.copy_like()
        for k, val in zip(self._vector_keys(), vec):
            out.values[k] = float(val)
        return out


# -- closure-aware lookups ------------------------------------------------------


def _extended_value(table: CorrelationTable, tp, tm, add_plus, add_minus, closure: str) -> float:
    """Value of the table at (tp + add_plus, tm + add_minus).

    Added points beyond the truncation orders are supplied by the closure:
    zero, or factorized through the matching one-point function (the added
    point is known at every call site, which is what makes the product
    closure well defined).
    """
    new_p = tuple(sorted(tp + tuple(add_plus)))
    new_m = tuple(sorted(tm + tuple(add_minus)))
    if len(new_p) <= table.n_plus_max and len(new_m) <= table.n_minus_max:
        return table.values[(new_p, new_m)]
    if closure == "truncate_zero":
        return 0.0
    if closure != "poisson_product":
        raise ValueError(f"unknown closure {closure!r}")
    # fill capacity with the first added points, factor the overflow
    factor = 1.0
    keep_p = list(tp)
    for y in sorted(add_plus):
        if len(keep_p) < table.n_plus_max:
            keep_p.append(y)
        else:
            if table.n_plus_max < 1:
                raise ValueError("product closure needs first-order entries")
            factor *= table.values[((y,), ())]
    keep_m = list(tm)
    for y in sorted(add_minus):
        if len(keep_m) < table.n_minus_max:
            keep_m.append(y)
        else:
            if table.n_minus_max < 1:
                raise ValueError("product closure needs first-order entries")
            factor *= table.values[((), (y,))]
    return factor * table.values[(tuple(sorted(keep_p)), tuple(sorted(keep_m)))]


# -- the hierarchy operator ------------------------------------------------------


def _entry_terms(tp, tm, model: LatticeModel, variant: str, inv_eps: float,
                 rho: float | None):
    """Emit the derivative of one entry as ((base_p, base_m, add_p, add_m), coeff)
    terms; ``add_*`` mark points adjoined beyond the base configuration so the
    closure can act on out-of-order targets."""
    p = model.params
    v = model.site_volume
    S = model.n_sites
    A_p, A_m, B_m, Psi = model.A_plus, model.A_minus, model.B_minus, model.Psi
    n_plus = len(tp)
    in_p, in_m = set(tp), set(tm)
    terms: dict[tuple, float] = {}

    def add(base_p, base_m, add_p, add_m, coeff):
        if coeff == 0.0:
            return
        key = (tuple(base_p), tuple(base_m), tuple(add_p), tuple(add_m))
        terms[key] = terms.get(key, 0.0) + coeff

    # loss: mortality + stability offset + competition + coupling; the offset
    # reappears with opposite sign below, cancelling in the assembled operator
    M = (p.m + p.lam) * n_plus
    for x in tp:
        for y in tp:
            if y != x:
                M += A_m[x, y]
    if variant == "joint":
        for x in tp:
            for y in tm:
                M += p.g * B_m[x, y]
    else:
        bbar = model.coupling_row_mass()
        for x in tp:
            M += p.g * rho * bbar[x]
    add(tp, tm, (), (), -M + p.lam * n_plus)

    for x in tp:
        rest = tuple(s for s in tp if s != x)
        # in-table branching gain over ordered '+' pairs
        for y in rest:
            add(rest, tm, (), (), A_p[x, y])
        for y in range(S):
            if y in in_p:
                continue
            # competition death integral and parent-relocation branching term
            if A_m[x, y] != 0.0:
                add(tp, tm, (y,), (), -v * A_m[x, y])
            if A_p[y, x] != 0.0:
                add(tuple(sorted(rest + (y,))), tm, (), (), v * A_p[y, x])
        if variant == "joint" and p.g > 0.0:
            for y in range(S):
                if y not in in_m and B_m[x, y] != 0.0:
                    add(tp, tm, (), (y,), -p.g * v * B_m[x, y])
        # occupancy-exclusion corrections (births onto occupied sites dropped)
        for w in tp:
            if w != x:
                add(tp, tm, (), (), -v * A_p[w, x])
        for w in range(S):
            if w not in in_p and A_p[w, x] != 0.0:
                add(tp, tm, (w,), (), -v * v * A_p[w, x])

    # environment block: Ursell-expanded Glauber birth, exact on the site space
    if variant == "joint" and inv_eps > 0.0:
        add(tp, tm, (), (), -inv_eps * len(tm))
        outside = [u for u in range(S) if u not in in_m]
        for x in tm:
            rest_m = tuple(s for s in tm if s != x)
            energy = sum(Psi[x, y] for y in rest_m)
            prefac = p.z * (math.exp(-energy) if math.isfinite(energy) else 0.0)
            if prefac == 0.0:
                continue
            for r in range(len(outside) + 1):
                for zeta in itertools.combinations(outside, r):
                    ursell = 1.0
                    for u in zeta:
                        ursell *= math.expm1(-Psi[x, u])
                    if ursell == 0.0:
                        continue
                    weight = inv_eps * prefac * v**r * ursell
                    add(tp, rest_m, (), zeta, weight)
                    add(tp, tm, (), zeta, -v * weight)
    return terms


def _operator_setup(table: CorrelationTable, params: ModelParams, variant: str,
                    closure: str, epsilon: float | None, rho: float | None,
                    model: LatticeModel | None):
    if closure not in CLOSURES:
        raise ValueError(f"unknown closure {closure!r}")
    if model is None:
        model = LatticeModel.from_params(params)
    if variant not in ("joint", "averaged"):
        raise ValueError(f"unknown hierarchy variant {variant!r}")
    if variant == "averaged" and table.n_minus_max != 0:
        raise ValueError("averaged variant acts on plus-only tables")
    if variant == "averaged" and rho is None:
        from bdlp.oracle import gibbs_density

        rho = float(np.mean(gibbs_density(model)))
    eps = params.epsilon if epsilon is None else epsilon
    inv_eps = 0.0 if math.isinf(eps) else 1.0 / eps
    if closure == "poisson_product":
        need_p = table.n_plus_max < 1
        need_m = variant == "joint" and table.n_minus_max < 1 and (
            inv_eps > 0.0 or params.g > 0.0
        )
        if need_p or need_m:
            raise ValueError("product closure needs the first-order entries present")
    return model, inv_eps, rho


def apply_hierarchy(table: CorrelationTable, params: ModelParams, variant: str = "joint",
                    closure: str = "truncate_zero", epsilon: float | None = None,
                    rho: float | None = None,
                    model: LatticeModel | None = None) -> CorrelationTable:
    """Time derivative of a correlation table under the hierarchy operator.

    variant 'joint' uses the two-sort operator at environment speed 1/epsilon,
    'averaged' the single-'+'-sort operator with mean coupling g * rho (rho
    defaults to the enumerated Gibbs density of the same lattice).  The
    normalization entry has derivative zero by construction.
    """
    model, inv_eps, rho = _operator_setup(table, params, variant, closure, epsilon, rho, model)
    out = table.copy_like()
    out.values[((), ())] = 0.0
    for (tp, tm) in table.keys():
        if (tp, tm) == ((), ()):
            continue
        terms = _entry_terms(tp, tm, model, variant, inv_eps, rho)
        total = 0.0
        for (bp, bm, ap, am), coeff in terms.items():
            total += coeff * _extended_value(table, bp, bm, ap, am, closure)
        out.values[(tp, tm)] = total
    return out


def hierarchy_matrix(template: CorrelationTable, params: ModelParams, variant: str = "joint",
                     epsilon: float | None = None, rho: float | None = None,
                     model: LatticeModel | None = None) -> sp.csr_matrix:
    """Sparse matrix of the hierarchy operator over the table entries (with
    the pinned normalization entry as a zero row).  Exact for full-order
    tables and for the zero closure, where the operator is linear."""
    model, inv_eps, rho = _operator_setup(
        template, params, variant, "truncate_zero", epsilon, rho, model
    )
    keys = template.keys()
    index = {k: i for i, k in enumerate(keys)}
    rows, cols, vals = [], [], []
    for (tp, tm) in keys:
        if (tp, tm) == ((), ()):
            continue
        i = index[(tp, tm)]
        for (bp, bm, ap, am), coeff in _entry_terms(tp, tm, model, variant, inv_eps, rho).items():
            target = (tuple(sorted(bp + ap)), tuple(sorted(bm + am)))
            j = index.get(target)
            if j is not None:
                rows.append(i), cols.append(j), vals.append(coeff)
    n = len(keys)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class HierarchyStiffError(RuntimeError):
    pass


def integrate_hierarchy(k0: CorrelationTable, params: ModelParams, variant: str = "joint",
                        closure: str = "truncate_zero", t_grid=(1.0,),
                        epsilon: float | None = None, rho: float | None = None,
                        rtol: float = 1e-8, atol: float = 1e-11) -> list[CorrelationTable]:
    """Integrate the hierarchy with adaptive explicit Runge-Kutta steps.

    Returns one table per grid time.  The normalization entry is pinned at 1
    and never integrated.  Very stiff settings (tiny epsilon) abort with a
    hint to use the master-equation oracle instead.
    """
    t_grid = [float(t) for t in t_grid]
    if any(b <= a for a, b in zip(t_grid, t_grid[1:])) or t_grid[0] < 0:
        raise ValueError("t_grid must be nonnegative and increasing")
    model = LatticeModel.from_params(params)
    if variant == "averaged" and rho is None:
        from bdlp.oracle import gibbs_density

        rho = float(np.mean(gibbs_density(model)))

    full_order = (
        k0.n_plus_max >= model.n_sites
        and (variant == "averaged" or k0.n_minus_max >= model.n_sites)
    )
    linear = closure == "truncate_zero" or full_order

    if linear:
        keys = k0.keys()
        L = hierarchy_matrix(k0, params, variant, epsilon, rho, model)
        y_full = np.array([k0.values[k] for k in keys])

        def rhs(t, y):
            return L @ y

        y0 = y_full
    else:
        template = k0

        def rhs(t, y):
            tab = template.from_vector(y)
            deriv = apply_hierarchy(tab, params, variant, closure, epsilon, rho, model)
            return deriv.to_vector()

        y0 = k0.to_vector()

    tmax = t_grid[-1]
    eval_times = t_grid
    if tmax == 0.0:
        sols = [y0 for _ in t_grid]
    else:
        res = solve_ivp(
            rhs, (0.0, tmax), y0, t_eval=eval_times, method="RK45", rtol=rtol, atol=atol
        )
        if not res.success:
            raise HierarchyStiffError(
                "hierarchy integration failed (likely too stiff for the explicit "
                f"stepper at epsilon={params.epsilon if epsilon is None else epsilon}); "
                "use a larger epsilon or the master-equation oracle: " + res.message
            )
        sols = [res.y[:, i] for i in range(res.y.shape[1])]

    out = []
    for y in sols:
        if linear:
            tab = k0.copy_like()
            for k, val in zip(k0.keys(), y):
                tab.values[k] = float(val)
            tab.values[((), ())] = 1.0
        else:
            tab = k0.from_vector(y)
        out.append(tab)
    return out


# -- envelope checking ------------------------------------------------------------


def ruelle_bound_check(tables: list[CorrelationTable], times, spec: EnvelopeSpec,
                       params: ModelParams, rho: float | None = None,
                       tol: float = 1e-6) -> dict:
    """Compare table entries against their envelope at each time.

    Returns a report with the worst entry/envelope ratio per time and overall
    pass/fail at ratio <= 1 + tol.  Joint regimes include the cross-energy
    decay factor computed from the coupling matrix of the same lattice.
    """
    model = LatticeModel.from_params(params)
    averaged = spec.regime in AVERAGED_REGIMES
    if averaged and rho is None:
        from bdlp.oracle import gibbs_density

        rho = float(np.mean(gibbs_density(model)))
    per_time = []
    worst = (0.0, None, None)
    for t, table in zip(times, tables):
        worst_here = (0.0, None)
        for (tp, tm), val in table.values.items():
            if averaged:
                env = theorem5_envelope(spec, params, rho, t, len(tp))
            else:
                eb = sum(model.B_minus[x, y] for x in tp for y in tm)
                env = theorem2_envelope(spec, params, t, len(tp), len(tm), eb)
            ratio = val / env if env > 0 else math.inf
            if ratio > worst_here[0]:
                worst_here = (ratio, (tp, tm))
        per_time.append(
            {"t": t, "worst_ratio": worst_here[0], "worst_entry": _entry_name(worst_here[1])}
        )
        if worst_here[0] > worst[0]:
            worst = (worst_here[0], worst_here[1], t)
    return {
        "pass": worst[0] <= 1.0 + tol,
        "max_ratio": worst[0],
        "worst_entry": _entry_name(worst[1]),
        "worst_time": worst[2],
        "per_time": per_time,
        "tolerance": tol,
    }


def _entry_name(key) -> str | None:
    if key is None:
        return None
    tp, tm = key
    return f"plus={list(tp)} minus={list(tm)}"
