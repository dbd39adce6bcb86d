"""Event-driven stochastic simulation of the two-component dynamics.

One global exponential clock (Gillespie); environment births on the continuum
use exact thinning from the constant-rate candidate stream z |domain| / eps:
a rejected candidate advances time without changing the configuration, which
is the exact simulation of the candidate-accept construction (the acceptance
probability exp(-E_psi) never exceeds one since psi >= 0).

Per-particle death rates are maintained incrementally: the competition and
coupling sums are cached per '+' particle and updated on each birth/death
with a cutoff at the kernel's effective support.  Lattice mode enumerates
every enabled transition exactly, matching the oracle generator rates.

Replicas draw independent counter-based streams derived from (master seed,
replica index), so results are bit-identical for any thread count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from bdlp.configs import FiniteConfig
from bdlp.geometry import Lattice, Torus
from bdlp.lyapunov import LyapunovSpec, lyapunov_value
from bdlp.params import ModelParams

VARIANTS = ("joint", "environment_only", "averaged")

# stream ids keep replica streams disjoint from any other randomness consumers
REPLICA_STREAM = 17
INITIAL_STREAM = 29


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, REPLICA_STREAM, replica])))


@dataclass
class SimState:
    """Mutable simulation state: one configuration plus its rate caches."""

    plus: list
    minus: list
    time: float = 0.0
    event_count: int = 0
    absorbed: bool = False
    comp: list = field(default_factory=list)  # per-'+': sum of a- over others
    coup: list = field(default_factory=list)  # per-'+': sum of b- over minus

    def config(self, mode: str) -> FiniteConfig:
        if mode == "lattice":
            return FiniteConfig(tuple(self.plus), tuple(self.minus))
        conv = lambda x: tuple(float(c) for c in np.atleast_1d(x))
        return FiniteConfig(tuple(conv(x) for x in self.plus), tuple(conv(x) for x in self.minus))


class _ContinuumStepper:
    """Exact Gillespie stepping on the torus with thinned environment births."""

    def __init__(self, params: ModelParams, geometry: Torus, variant: str, rho: float = 0.0):
        self.p = params
        self.geo = geometry
        self.variant = variant
        self.rho = rho
        self.a_plus_mass = params.a_plus.l1_norm()
        self.inv_eps = params.inv_epsilon
        self.cut_aminus = params.a_minus.effective_radius() if not params.a_minus.is_zero else 0.0
        self.cut_bminus = params.b_minus.effective_radius() if not params.b_minus.is_zero else 0.0

    # -- cache maintenance ------------------------------------------------

    def _pair_sums(self, x, points, kernel, cutoff) -> float:
        if kernel.is_zero or not points:
            return 0.0
        dist = self.geo.distances_to(x, np.asarray(points))
        mask = dist <= cutoff
        if not mask.any():
            return 0.0
        return float(kernel.eval_r_many(dist[mask]).sum())

    def init_caches(self, state: SimState) -> None:
        p = self.p
        state.comp = [
            self._pair_sums(x, [y for j, y in enumerate(state.plus) if j != i], p.a_minus, self.cut_aminus)
            for i, x in enumerate(state.plus)
        ]
        if self.variant == "joint":
            state.coup = [
                self._pair_sums(x, state.minus, p.b_minus, self.cut_bminus) for x in state.plus
            ]
        else:
            state.coup = [0.0] * len(state.plus)

    def _adjust_plus(self, state: SimState, y, sign: float) -> None:
        p = self.p
        if p.a_minus.is_zero or not state.plus:
            return
        dist = self.geo.distances_to(y, np.asarray(state.plus))
        mask = dist <= self.cut_aminus
        if mask.any():
            vals = p.a_minus.eval_r_many(dist[mask])
            for idx, val in zip(np.nonzero(mask)[0], vals):
                state.comp[idx] += sign * float(val)

    def _adjust_minus(self, state: SimState, y, sign: float) -> None:
        p = self.p
        if p.b_minus.is_zero or not state.plus or self.variant != "joint":
            return
        dist = self.geo.distances_to(y, np.asarray(state.plus))
        mask = dist <= self.cut_bminus
        if mask.any():
            vals = p.b_minus.eval_r_many(dist[mask])
            for idx, val in zip(np.nonzero(mask)[0], vals):
                state.coup[idx] += sign * float(val)

    # -- rates and one event ------------------------------------------------

    def death_rates(self, state: SimState) -> np.ndarray:
        p = self.p
        base = p.m + (p.g * self.rho if self.variant == "averaged" else 0.0)
        n = len(state.plus)
        out = np.empty(n)
        for i in range(n):
            out[i] = base + state.comp[i] + (p.g * state.coup[i] if self.variant == "joint" else 0.0)
        return out

    def step(self, state: SimState, rng: np.random.Generator, log=None) -> None:
        p = self.p
        env_on = self.variant in ("joint", "environment_only") and self.inv_eps > 0.0
        plus_on = self.variant in ("joint", "averaged")
        n_plus = len(state.plus) if plus_on else 0
        n_minus = len(state.minus)

        death = self.death_rates(state) if plus_on and n_plus else np.zeros(0)
        r_death = float(death.sum())
        r_birth = n_plus * self.a_plus_mass
        r_mdeath = n_minus * self.inv_eps if env_on else 0.0
        r_mbirth = p.z * self.geo.volume * self.inv_eps if env_on else 0.0
        total = r_death + r_birth + r_mdeath + r_mbirth
        if total <= 0.0:
            state.absorbed = True
            state.time = math.inf
            return
        state.time += rng.exponential(1.0 / total)
        state.event_count += 1
        u = rng.random() * total
        if u < r_death:
            i = _pick_index(death, u)
            x = state.plus.pop(i)
            state.comp.pop(i)
            state.coup.pop(i)
            self._adjust_plus(state, x, -1.0)
            if log is not None:
                log("plus_death", x, state)
        elif u < r_death + r_birth:
            parent = state.plus[int(rng.integers(len(state.plus)))]
            y = self.geo.wrap(parent + p.a_plus.sample_displacement(rng))
            comp_y = self._pair_sums(y, state.plus, p.a_minus, self.cut_aminus)
            coup_y = (
                self._pair_sums(y, state.minus, p.b_minus, self.cut_bminus)
                if self.variant == "joint"
                else 0.0
            )
            self._adjust_plus(state, y, +1.0)
            state.plus.append(y)
            state.comp.append(comp_y)
            state.coup.append(coup_y)
            if log is not None:
                log("plus_birth", y, state)
        elif u < r_death + r_birth + r_mdeath:
            i = int(rng.integers(n_minus))
            y = state.minus.pop(i)
            self._adjust_minus(state, y, -1.0)
            if log is not None:
                log("minus_death", y, state)
        else:
            x = self.geo.random_point(rng)
            energy = 0.0
            if not p.psi.is_zero and state.minus:
                dist = self.geo.distances_to(x, np.asarray(state.minus))
                vals = p.psi.eval_r_many(dist)
                energy = float(vals.sum()) if np.all(np.isfinite(vals)) else math.inf
            accept = math.exp(-energy) if math.isfinite(energy) else 0.0
            if rng.random() < accept:
                self._adjust_minus(state, x, +1.0)
                state.minus.append(x)
                if log is not None:
                    log("minus_birth", x, state)
            elif log is not None:
                log("minus_birth_rejected", x, state)


class _LatticeStepper:
    """Exact event enumeration on a site space; rates match the oracle rows."""

    def __init__(self, params: ModelParams, lattice: Lattice, variant: str, rho: float = 0.0):
        from bdlp.oracle import LatticeModel

        self.p = params
        self.lattice = lattice
        self.variant = variant
        self.rho = rho
        self.model = LatticeModel.from_params(params)
        self.inv_eps = params.inv_epsilon
        self.bbar = self.model.coupling_row_mass()

    def event_rates(self, state: SimState) -> tuple[list, np.ndarray]:
        """All enabled transitions as (kind, site) with their rates."""
        p, m = self.p, self.model
        v = m.site_volume
        plus, minus = set(state.plus), set(state.minus)
        events: list[tuple[str, int]] = []
        rates: list[float] = []
        if self.variant in ("joint", "averaged"):
            for x in sorted(plus):
                r = p.m + sum(m.A_minus[x, y] for y in plus if y != x)
                if self.variant == "joint":
                    r += p.g * sum(m.B_minus[x, y] for y in minus)
                else:
                    r += p.g * self.rho * self.bbar[x]
                events.append(("plus_death", x))
                rates.append(r)
            for y in range(m.n_sites):
                if y in plus:
                    continue
                r = v * sum(m.A_plus[x, y] for x in plus)
                if r > 0.0:
                    events.append(("plus_birth", y))
                    rates.append(r)
        if self.variant in ("joint", "environment_only") and self.inv_eps > 0.0:
            for x in sorted(minus):
                events.append(("minus_death", x))
                rates.append(self.inv_eps)
            for x in range(m.n_sites):
                if x in minus:
                    continue
                energy = sum(m.Psi[x, y] for y in minus)
                w = math.exp(-energy) if math.isfinite(energy) else 0.0
                r = p.z * self.inv_eps * w * v
                if r > 0.0:
                    events.append(("minus_birth", x))
                    rates.append(r)
        return events, np.asarray(rates)

    def init_caches(self, state: SimState) -> None:
        pass

    def step(self, state: SimState, rng: np.random.Generator, log=None) -> None:
        events, rates = self.event_rates(state)
        total = float(rates.sum())
        if total <= 0.0:
            state.absorbed = True
            state.time = math.inf
            return
        state.time += rng.exponential(1.0 / total)
        state.event_count += 1
        u = rng.random() * total
        kind, site = events[_pick_index(rates, u)]
        if kind == "plus_death":
            state.plus.remove(site)
        elif kind == "plus_birth":
            state.plus.append(site)
            state.plus.sort()
        elif kind == "minus_death":
            state.minus.remove(site)
        else:
            state.minus.append(site)
            state.minus.sort()
        if log is not None:
            log(kind, site, state)


def _pick_index(weights: np.ndarray, u: float) -> int:
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u < acc:
            return i
    return len(weights) - 1


def make_stepper(params: ModelParams, variant: str, rho: float = 0.0):
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if isinstance(params.geometry, Torus):
        return _ContinuumStepper(params, params.geometry, variant, rho)
    return _LatticeStepper(params, params.geometry, variant, rho)


def step_joint(state: SimState, params: ModelParams, rng: np.random.Generator) -> SimState:
    """Advance one event of the coupled dynamics (time moves even on a
    rejected environment candidate; that is the exact thinning)."""
    stepper = make_stepper(params, "joint")
    if isinstance(params.geometry, Torus) and not state.comp and state.plus:
        stepper.init_caches(state)
    stepper.step(state, rng)
    return state


def step_averaged(state: SimState, params: ModelParams, rho: float,
                  rng: np.random.Generator) -> SimState:
    """Advance one event of the '+'-only dynamics with mean coupling g*rho."""
    stepper = make_stepper(params, "averaged", rho)
    if isinstance(params.geometry, Torus) and not state.comp and state.plus:
        stepper.init_caches(state)
    stepper.step(state, rng)
    return state


# -- replica ensembles ---------------------------------------------------------


@dataclass
class TrajectoryStats:
    """Replica-ensemble summaries on a time grid."""

    t_grid: np.ndarray
    mean_plus: np.ndarray
    var_plus: np.ndarray
    mean_minus: np.ndarray
    var_minus: np.ndarray
    lyapunov_mean: np.ndarray | None
    window_means: np.ndarray  # (n_windows, n_times)
    window_vars: np.ndarray
    n_replicas: int
    seed: int
    partial_replicas: tuple[int, ...] = ()
    final_snapshots: list[FiniteConfig] | None = None

    def stderr_plus(self) -> np.ndarray:
        return np.sqrt(self.var_plus / self.n_replicas)

    def stderr_minus(self) -> np.ndarray:
        return np.sqrt(self.var_minus / self.n_replicas)

    def csv_rows(self) -> list[dict]:
        rows = []
        for i, t in enumerate(self.t_grid):
            row = {
                "t": float(t),
                "mean_plus": float(self.mean_plus[i]),
                "var_plus": float(self.var_plus[i]),
                "mean_minus": float(self.mean_minus[i]),
                "var_minus": float(self.var_minus[i]),
                "lyapunov_mean": float(self.lyapunov_mean[i]) if self.lyapunov_mean is not None else "",
            }
            for w in range(self.window_means.shape[0]):
                row[f"window_{w}"] = float(self.window_means[w, i])
            rows.append(row)
        return rows


def _window_count(plus_points, window, mode: str) -> int:
    if mode == "lattice":
        sites = set(window)
        return sum(1 for s in plus_points if s in sites)
    lo, hi = window
    count = 0
    for x in plus_points:
        v = float(np.atleast_1d(x)[0])
        if lo <= v < hi:
            count += 1
    return count


def run_replicas(
    params: ModelParams,
    variant: str,
    initial_sampler,
    t_grid,
    n_replicas: int,
    seed: int,
    threads: int = 1,
    rho: float = 0.0,
    windows=(),
    lyapunov_spec: LyapunovSpec | None = None,
    event_budget: int = 100_000_000,
    keep_final_snapshots: bool = False,
    event_log=None,
) -> TrajectoryStats:
    """Independent replicas with per-replica derived random streams.

    Observables are recorded at each grid time from the state after the last
    event before it.  A replica that exhausts the event budget freezes and is
    flagged as partial.  Results are reduced in replica order, so they do not
    depend on the thread schedule.
    """
    if n_replicas < 1:
        raise ValueError("n_replicas must be >= 1")
    t_grid = np.asarray([float(t) for t in t_grid])
    if np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0:
        raise ValueError("t_grid must be nonnegative and strictly increasing")
    mode = "lattice" if isinstance(params.geometry, Lattice) else "continuum"
    stepper = make_stepper(params, variant, rho)
    n_t = len(t_grid)
    n_w = len(windows)

    def one_replica(r: int):
        rng = replica_rng(seed, r)
        plus, minus = initial_sampler(rng)
        state = SimState(plus=list(plus), minus=list(minus))
        stepper.init_caches(state)
        plus_counts = np.zeros(n_t)
        minus_counts = np.zeros(n_t)
        lyap = np.zeros(n_t) if lyapunov_spec is not None else None
        wins = np.zeros((n_w, n_t))
        partial = False

        log = None
        if event_log is not None:
            def log(kind, where, st, _r=r):
                event_log.write(
                    json.dumps(
                        {
                            "replica": _r,
                            "t": st.time,
                            "event": kind,
                            "where": np.atleast_1d(where).tolist() if mode == "continuum" else where,
                        }
                    )
                    + "\n"
                )

        gi = 0
        while gi < n_t:
            while state.time <= t_grid[gi] and not state.absorbed:
                if state.event_count >= event_budget:
                    partial = True
                    break
                prev_plus = list(state.plus)
                prev_minus = list(state.minus)
                stepper.step(state, rng, log)
                if state.time > t_grid[gi] and not state.absorbed:
                    # the drawn event lies beyond the grid point: the recorded
                    # state at the grid time is the pre-event one
                    record_plus, record_minus = prev_plus, prev_minus
                    break
            else:
                record_plus, record_minus = list(state.plus), list(state.minus)
            if partial or state.absorbed:
                record_plus, record_minus = list(state.plus), list(state.minus)
            while gi < n_t and (state.time > t_grid[gi] or state.absorbed or partial):
                plus_counts[gi] = len(record_plus)
                minus_counts[gi] = len(record_minus)
                for w, window in enumerate(windows):
                    wins[w, gi] = _window_count(record_plus, window, mode)
                if lyap is not None:
                    lyap[gi] = lyapunov_value(record_plus, record_minus, lyapunov_spec, params.geometry)
                gi += 1
        snap = None
        if keep_final_snapshots:
            snap = SimState(plus=record_plus, minus=record_minus).config(mode)
        return plus_counts, minus_counts, lyap, wins, partial, snap

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_replica, range(n_replicas)))
    else:
        results = [one_replica(r) for r in range(n_replicas)]

    plus_all = np.array([r[0] for r in results])
    minus_all = np.array([r[1] for r in results])
    lyap_mean = None
    if lyapunov_spec is not None:
        lyap_all = np.array([r[2] for r in results])
        lyap_mean = lyap_all.mean(axis=0)
    wins_all = np.array([r[3] for r in results])  # (R, n_w, n_t)
    partial = tuple(i for i, r in enumerate(results) if r[4])
    snaps = [r[5] for r in results] if keep_final_snapshots else None
    ddof = 1 if n_replicas > 1 else 0
    return TrajectoryStats(
        t_grid=t_grid,
        mean_plus=plus_all.mean(axis=0),
        var_plus=plus_all.var(axis=0, ddof=ddof),
        mean_minus=minus_all.mean(axis=0),
        var_minus=minus_all.var(axis=0, ddof=ddof),
        lyapunov_mean=lyap_mean,
        window_means=wins_all.mean(axis=0) if n_w else np.zeros((0, n_t)),
        window_vars=wins_all.var(axis=0, ddof=ddof) if n_w else np.zeros((0, n_t)),
        n_replicas=n_replicas,
        seed=seed,
        partial_replicas=partial,
        final_snapshots=snaps,
    )


# -- initial conditions ---------------------------------------------------------


def make_initial_sampler(spec: dict, params: ModelParams):
    """Build an initial-state sampler from its JSON description.

    Continuum kinds: poisson (z_plus / z_minus intensities, optional
    minus_gibbs long-run Glauber burn-in), fixed (explicit positions).
    Lattice kinds: bernoulli (occupancy probabilities, optional minus_gibbs
    enumerated sample), fixed (site lists).
    """
    kind = spec.get("kind", "poisson")
    geo = params.geometry
    if isinstance(geo, Torus):
        if kind == "fixed":
            plus = [np.asarray(p, dtype=float) for p in spec.get("plus", [])]
            minus = [np.asarray(p, dtype=float) for p in spec.get("minus", [])]
            return lambda rng: ([p.copy() for p in plus], [m.copy() for m in minus])
        if kind != "poisson":
            raise ValueError(f"unknown continuum initial kind {kind!r}")
        z_plus = float(spec.get("z_plus", 0.0))
        z_minus = float(spec.get("z_minus", 0.0))
        minus_gibbs = bool(spec.get("minus_gibbs", False))
        burn = float(spec.get("burn_time", 10.0))

        def sample(rng: np.random.Generator):
            n_p = rng.poisson(z_plus * geo.volume)
            plus = [geo.random_point(rng) for _ in range(n_p)]
            if minus_gibbs:
                minus = _glauber_burn_in(params, rng, burn)
            else:
                n_m = rng.poisson(z_minus * geo.volume)
                minus = [geo.random_point(rng) for _ in range(n_m)]
            return plus, minus

        return sample
    # lattice
    if kind == "fixed":
        plus = [int(s) for s in spec.get("plus", [])]
        minus = [int(s) for s in spec.get("minus", [])]
        return lambda rng: (list(plus), list(minus))
    if kind != "bernoulli":
        raise ValueError(f"unknown lattice initial kind {kind!r}")
    p_plus = float(spec.get("p_plus", 0.0))
    p_minus = float(spec.get("p_minus", 0.0))
    minus_gibbs = bool(spec.get("minus_gibbs", False))
    gibbs_probs = None
    if minus_gibbs:
        from bdlp.oracle import LatticeModel, gibbs_distribution

        gibbs_probs = gibbs_distribution(LatticeModel.from_params(params)).probs

    def sample(rng: np.random.Generator):
        plus = [s for s in range(geo.n_sites) if rng.random() < p_plus]
        if gibbs_probs is not None:
            state = int(rng.choice(len(gibbs_probs), p=gibbs_probs))
            minus = [s for s in range(geo.n_sites) if (state >> s) & 1]
        else:
            minus = [s for s in range(geo.n_sites) if rng.random() < p_minus]
        return plus, minus

    return sample


def _glauber_burn_in(params: ModelParams, rng: np.random.Generator, burn: float) -> list:
    """Long-run environment-only sample used when the frozen-environment
    variant needs a near-stationary initial minus configuration."""
    eps = 1.0 if params.env_frozen else params.epsilon
    burn_params = params.with_(epsilon=eps)
    stepper = make_stepper(burn_params, "environment_only")
    n0 = rng.poisson(params.z * params.geometry.volume)
    state = SimState(plus=[], minus=[params.geometry.random_point(rng) for _ in range(n0)])
    horizon = burn * eps
    while state.time < horizon and not state.absorbed:
        stepper.step(state, rng)
    return state.minus
