"""Exact master-equation oracle for the lattice-mode model.

Builds the full continuous-time Markov chain generator on a small site space
(at most one particle per sort per site; birth rates onto occupied sites are
dropped), evolves distributions exactly by uniformization, enumerates Gibbs
measures for the environment, and extracts exact correlation functions.  This
is the ground truth against which simulators and hierarchy integrators are
validated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from bdlp.geometry import Lattice
from bdlp.params import ModelParams


@dataclass(frozen=True)
class LatticeModel:
    """Site coordinates plus kernel matrices evaluated at min-image distances.

    ``site_volume`` weighs birth-rate integrals so that lattice rates converge
    to their continuum counterparts as the grid refines.  Matrix diagonals are
    kept as evaluated; generator construction excludes self-interaction where
    the dynamics does (competition, potential), never by zeroing the matrix.
    """

    lattice: Lattice
    params: ModelParams
    A_plus: np.ndarray = field(repr=False, default=None)
    A_minus: np.ndarray = field(repr=False, default=None)
    B_minus: np.ndarray = field(repr=False, default=None)
    Psi: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        for name, kern in (
            ("A_plus", self.params.a_plus),
            ("A_minus", self.params.a_minus),
            ("B_minus", self.params.b_minus),
            ("Psi", self.params.psi),
        ):
            if getattr(self, name) is None:
                object.__setattr__(self, name, self.lattice.kernel_matrix(kern))

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def site_volume(self) -> float:
        return self.lattice.site_volume

    def coupling_row_mass(self) -> np.ndarray:
        """Lattice quadrature of the unit-mass coupling kernel per site:
        v * sum_y B_minus[x, y] (the finite-volume stand-in for ||b-||_1 = 1)."""
        return self.site_volume * self.B_minus.sum(axis=1)

    @staticmethod
    def from_params(params: ModelParams) -> "LatticeModel":
        if not isinstance(params.geometry, Lattice):
            raise ValueError("oracle needs lattice geometry")
        return LatticeModel(lattice=params.geometry, params=params)


@dataclass
class Distribution:
    """Probability vector over lattice occupancy states.

    kind 'joint' uses base-4 encoding (code site = s_plus + 2 s_minus), 'plus'
    and 'minus' use plain bitmasks over their single sort.
    """

    probs: np.ndarray
    n_sites: int
    kind: str = "joint"
    time: float = 0.0

    def __post_init__(self):
        expected = 4**self.n_sites if self.kind == "joint" else 2**self.n_sites
        if len(self.probs) != expected:
            raise ValueError("probability vector length does not match the state space")
        total = float(self.probs.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")
        if self.probs.min() < -1e-12:
            raise ValueError("negative probability beyond clamp tolerance")
        self.probs = np.clip(self.probs, 0.0, None)

    def as_json(self) -> dict:
        return {
            "kind": self.kind,
            "n_sites": self.n_sites,
            "time": self.time,
            "probs": self.probs.tolist(),
        }


# -- state coding -------------------------------------------------------------


def joint_occupancies(n_sites: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean occupancy tables (n_sites, 4^n_sites) for the two sorts."""
    n = 4**n_sites
    idx = np.arange(n)
    plus = np.zeros((n_sites, n), dtype=bool)
    minus = np.zeros((n_sites, n), dtype=bool)
    for s in range(n_sites):
        code = (idx // (4**s)) % 4
        plus[s] = (code % 2) == 1
        minus[s] = (code // 2) == 1
    return plus, minus


def single_occupancies(n_sites: int) -> np.ndarray:
    n = 2**n_sites
    idx = np.arange(n)
    occ = np.zeros((n_sites, n), dtype=bool)
    for s in range(n_sites):
        occ[s] = ((idx >> s) & 1) == 1
    return occ


def joint_index(plus_sites, minus_sites, n_sites: int) -> int:
    code = 0
    for s in plus_sites:
        code += 4**s
    for s in minus_sites:
        code += 2 * 4**s
    return code


def decode_joint(index: int, n_sites: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    plus, minus = [], []
    for s in range(n_sites):
        c = (index // (4**s)) % 4
        if c % 2:
            plus.append(s)
        if c // 2:
            minus.append(s)
    return tuple(plus), tuple(minus)


# -- generator ----------------------------------------------------------------


MAX_SITES = 12


def build_generator(model: LatticeModel, variant: str, epsilon: float | None = None,
                    rho: float | None = None) -> sp.csr_matrix:
    """Sparse CTMC rate matrix Q (rows sum to zero, Q[i, j] = rate i -> j).

    variant 'joint' acts on the 4^S product space; 'environment_only' on the
    2^S minus space; 'averaged' on the 2^S plus space with the environment
    replaced by its mean coupling g * rho * (v * sum_y B[x, y]).
    """
    S = model.n_sites
    if S > MAX_SITES:
        raise ValueError(
            f"state space 4^{S} = {4**S:.3g} exceeds the oracle limit (4^{MAX_SITES})"
        )
    p = model.params
    if epsilon is None:
        epsilon = p.epsilon
    inv_eps = 0.0 if math.isinf(epsilon) else 1.0 / epsilon
    v = model.site_volume
    if variant == "joint":
        return _joint_generator(model, inv_eps)
    if variant == "environment_only":
        return _environment_generator(model, inv_eps)
    if variant == "averaged":
        if rho is None:
            rho = float(np.mean(gibbs_density(model)))
        return _averaged_generator(model, rho)
    raise ValueError(f"unknown generator variant {variant!r}")


def _joint_generator(model: LatticeModel, inv_eps: float) -> sp.csr_matrix:
    S = model.n_sites
    p = model.params
    v = model.site_volume
    n = 4**S
    rows, cols, vals = [], [], []
    for i in range(n):
        plus, minus = decode_joint(i, S)
        pset, mset = set(plus), set(minus)
        exit_rate = 0.0
        for x in plus:
            rate = p.m
            rate += sum(model.A_minus[x, y] for y in plus if y != x)
            rate += p.g * sum(model.B_minus[x, y] for y in minus)
            if rate > 0:
                j = i - 4**x
                rows.append(i), cols.append(j), vals.append(rate)
                exit_rate += rate
        for y in range(S):
            if y in pset:
                continue
            rate = v * sum(model.A_plus[x, y] for x in plus)
            if rate > 0:
                j = i + 4**y
                rows.append(i), cols.append(j), vals.append(rate)
                exit_rate += rate
        if inv_eps > 0.0:
            for x in minus:
                j = i - 2 * 4**x
                rows.append(i), cols.append(j), vals.append(inv_eps)
                exit_rate += inv_eps
            for x in range(S):
                if x in mset:
                    continue
                energy = sum(model.Psi[x, y] for y in minus)
                weight = math.exp(-energy) if math.isfinite(energy) else 0.0
                rate = p.z * inv_eps * weight * v
                if rate > 0:
                    j = i + 2 * 4**x
                    rows.append(i), cols.append(j), vals.append(rate)
                    exit_rate += rate
        rows.append(i), cols.append(i), vals.append(-exit_rate)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _environment_generator(model: LatticeModel, inv_eps: float) -> sp.csr_matrix:
    S = model.n_sites
    p = model.params
    v = model.site_volume
    n = 2**S
    rows, cols, vals = [], [], []
    for i in range(n):
        occupied = [s for s in range(S) if (i >> s) & 1]
        exit_rate = 0.0
        for x in occupied:
            rows.append(i), cols.append(i ^ (1 << x)), vals.append(inv_eps)
            exit_rate += inv_eps
        for x in range(S):
            if (i >> x) & 1:
                continue
            energy = sum(model.Psi[x, y] for y in occupied)
            weight = math.exp(-energy) if math.isfinite(energy) else 0.0
            rate = p.z * inv_eps * weight * v
            if rate > 0:
                rows.append(i), cols.append(i | (1 << x)), vals.append(rate)
                exit_rate += rate
        rows.append(i), cols.append(i), vals.append(-exit_rate)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _averaged_generator(model: LatticeModel, rho: float) -> sp.csr_matrix:
    S = model.n_sites
    p = model.params
    v = model.site_volume
    bbar = model.coupling_row_mass()
    n = 2**S
    rows, cols, vals = [], [], []
    for i in range(n):
        occupied = [s for s in range(S) if (i >> s) & 1]
        exit_rate = 0.0
        for x in occupied:
            rate = p.m + p.g * rho * bbar[x]
            rate += sum(model.A_minus[x, y] for y in occupied if y != x)
            if rate > 0:
                rows.append(i), cols.append(i ^ (1 << x)), vals.append(rate)
                exit_rate += rate
        for y in range(S):
            if (i >> y) & 1:
                continue
            rate = v * sum(model.A_plus[x, y] for x in occupied)
            if rate > 0:
                rows.append(i), cols.append(i | (1 << y)), vals.append(rate)
                exit_rate += rate
        rows.append(i), cols.append(i), vals.append(-exit_rate)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


# -- exact evolution ----------------------------------------------------------


def evolve_exact(generator: sp.csr_matrix, initial: Distribution, t: float,
                 tol: float = 1e-12) -> Distribution:
    """Transient solve of dP/dt = Q^T P by uniformization.

    Exact up to the Poisson tail cutoff ``tol``; long horizons are split into
    segments so the Poisson weights never underflow.  Mass is conserved to the
    same tolerance and tiny negative entries are clamped.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    data = generator.data
    if not np.all(np.isfinite(data)):
        raise ValueError("generator has nonfinite rates")
    if t == 0.0:
        return Distribution(initial.probs.copy(), initial.n_sites, initial.kind, initial.time)
    rates = -generator.diagonal()
    lam = float(rates.max())
    p = initial.probs.astype(float).copy()
    if lam <= 0.0:
        return Distribution(p, initial.n_sites, initial.kind, initial.time + t)
    QT = generator.T.tocsr()
    n_segments = max(1, int(math.ceil(lam * t / 400.0)))
    dt = t / n_segments
    M = sp.identity(generator.shape[0], format="csr") + QT * (1.0 / lam)
    for _ in range(n_segments):
        a = lam * dt
        weight = math.exp(-a)
        acc = weight * p
        term = p
        total_weight = weight
        k = 0
        while total_weight < 1.0 - tol:
            k += 1
            term = M @ term
            weight *= a / k
            acc = acc + weight * term
            total_weight += weight
            if k > 100 * (a + 10):
                raise RuntimeError("uniformization failed to converge")
        p = acc / total_weight
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    return Distribution(p, initial.n_sites, initial.kind, initial.time + t)


def plus_marginal(dist: Distribution) -> Distribution:
    """Project a joint distribution onto the '+' occupancy bitmask space."""
    if dist.kind != "joint":
        raise ValueError("plus_marginal needs a joint distribution")
    S = dist.n_sites
    out = np.zeros(2**S)
    for i, pr in enumerate(dist.probs):
        if pr == 0.0:
            continue
        plus, _ = decode_joint(i, S)
        mask = 0
        for s in plus:
            mask |= 1 << s
        out[mask] += pr
    return Distribution(out, S, "plus", dist.time)


def minus_marginal(dist: Distribution) -> Distribution:
    if dist.kind != "joint":
        raise ValueError("minus_marginal needs a joint distribution")
    S = dist.n_sites
    out = np.zeros(2**S)
    for i, pr in enumerate(dist.probs):
        if pr == 0.0:
            continue
        _, minus = decode_joint(i, S)
        mask = 0
        for s in minus:
            mask |= 1 << s
        out[mask] += pr
    return Distribution(out, S, "minus", dist.time)


def product_distribution(model: LatticeModel, p_plus, p_minus) -> Distribution:
    """Independent per-site occupancies; scalars broadcast over sites."""
    S = model.n_sites
    pp = np.broadcast_to(np.asarray(p_plus, dtype=float), (S,))
    pm = np.broadcast_to(np.asarray(p_minus, dtype=float), (S,))
    probs = np.zeros(4**S)
    for i in range(4**S):
        plus, minus = decode_joint(i, S)
        val = 1.0
        for s in range(S):
            val *= pp[s] if s in plus else 1.0 - pp[s]
            val *= pm[s] if s in minus else 1.0 - pm[s]
        probs[i] = val
    return Distribution(probs, S, "joint")


def single_product_distribution(n_sites: int, p_occ, kind: str) -> Distribution:
    po = np.broadcast_to(np.asarray(p_occ, dtype=float), (n_sites,))
    probs = np.zeros(2**n_sites)
    for i in range(2**n_sites):
        val = 1.0
        for s in range(n_sites):
            val *= po[s] if (i >> s) & 1 else 1.0 - po[s]
        probs[i] = val
    return Distribution(probs, n_sites, kind)


def joint_from_marginals(plus_dist: Distribution, minus_dist: Distribution) -> Distribution:
    """Independent product of a 'plus' and a 'minus' single-sort distribution."""
    S = plus_dist.n_sites
    probs = np.zeros(4**S)
    for mp, prp in enumerate(plus_dist.probs):
        if prp == 0.0:
            continue
        plus_sites = [s for s in range(S) if (mp >> s) & 1]
        for mm, prm in enumerate(minus_dist.probs):
            if prm == 0.0:
                continue
            minus_sites = [s for s in range(S) if (mm >> s) & 1]
            probs[joint_index(plus_sites, minus_sites, S)] += prp * prm
    return Distribution(probs, S, "joint")


# -- Gibbs measure of the environment ------------------------------------------


def gibbs_distribution(model: LatticeModel) -> Distribution:
    """Finite-volume Gibbs measure with weight z^|eta| v^|eta| e^(-pair energy)."""
    S = model.n_sites
    if S > 20:
        raise ValueError("Gibbs enumeration limited to 20 sites")
    z, v = model.params.z, model.site_volume
    w = np.zeros(2**S)
    for i in range(2**S):
        occ = [s for s in range(S) if (i >> s) & 1]
        energy = 0.0
        for a in range(len(occ)):
            for b in range(a + 1, len(occ)):
                energy += model.Psi[occ[a], occ[b]]
        if math.isinf(energy):
            w[i] = 0.0
        else:
            w[i] = (z * v) ** len(occ) * math.exp(-energy)
    w /= w.sum()
    return Distribution(w, S, "minus")


def gibbs_density(model: LatticeModel) -> np.ndarray:
    """Per-site environment density rho_x = P(x occupied) / v under Gibbs."""
    dist = gibbs_distribution(model)
    S = model.n_sites
    occ = single_occupancies(S)
    return occ @ dist.probs / model.site_volume


# -- correlation extraction -----------------------------------------------------


def correlation_from_distribution(model: LatticeModel, dist: Distribution,
                                  max_order: tuple[int, int]):
    """Exact correlation table k(eta) = P(eta occupied) / v^|eta| up to the
    given orders per sort."""
    from bdlp.hierarchy import CorrelationTable

    S = model.n_sites
    n_max, m_max = max_order
    if n_max > S or m_max > S:
        raise ValueError("requested order exceeds the site count")
    v = model.site_volume
    if dist.kind == "joint":
        occ_p, occ_m = joint_occupancies(S)
    elif dist.kind == "plus":
        occ_p, occ_m = single_occupancies(S), None
        if m_max > 0:
            raise ValueError("plus-only distribution has no minus correlations")
    else:
        occ_p, occ_m = None, single_occupancies(S)
        if n_max > 0:
            raise ValueError("minus-only distribution has no plus correlations")

    table = CorrelationTable.empty(model.lattice, n_max, m_max)
    for (tp, tm) in table.keys():
        order = len(tp) + len(tm)
        if order == 0:
            continue
        mask = np.ones(len(dist.probs), dtype=bool)
        for s in tp:
            mask &= occ_p[s]
        for s in tm:
            mask &= occ_m[s]
        table.set(tp, tm, float(dist.probs[mask].sum()) / v**order)
    return table


def export_generator(generator: sp.csr_matrix, path) -> None:
    """Coordinate text dump (row col rate) for external inspection."""
    coo = generator.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# {generator.shape[0]} {generator.shape[1]} {coo.nnz}\n")
        for r, c, x in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {x:.17g}\n")
