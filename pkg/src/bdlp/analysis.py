"""Estimators and experiment metrics over replica ensembles and oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from bdlp.configs import FiniteConfig
from bdlp.envelopes import AVERAGED_REGIMES, EnvelopeSpec, theorem2_envelope, theorem5_envelope
from bdlp.geometry import Lattice, Torus
from bdlp.kernels import ball_volume
from bdlp.params import ModelParams


@dataclass
class PairCorrelationEstimate:
    """Radially binned low-order correlation estimates with standard errors."""

    bin_edges: np.ndarray
    k20: np.ndarray
    k20_se: np.ndarray
    k11: np.ndarray
    k11_se: np.ndarray
    k02: np.ndarray
    k02_se: np.ndarray
    density_plus: float
    density_plus_se: float
    density_minus: float
    density_minus_se: float
    n_replicas: int

    def csv_rows(self) -> list[dict]:
        rows = []
        for i in range(len(self.k20)):
            rows.append(
                {
                    "r_lo": float(self.bin_edges[i]),
                    "r_hi": float(self.bin_edges[i + 1]),
                    "k20": float(self.k20[i]),
                    "k20_se": float(self.k20_se[i]),
                    "k11": float(self.k11[i]),
                    "k11_se": float(self.k11_se[i]),
                    "k02": float(self.k02[i]),
                    "k02_se": float(self.k02_se[i]),
                }
            )
        return rows


def _positions(points) -> np.ndarray:
    if not points:
        return np.zeros((0, 1))
    return np.asarray([np.atleast_1d(np.asarray(p, dtype=float)) for p in points])


def _pair_distances(a: np.ndarray, b: np.ndarray | None, geometry: Torus) -> np.ndarray:
    """Min-image distances: ordered pairs within one set (b None) or cross."""
    if b is None:
        n = len(a)
        if n < 2:
            return np.zeros(0)
        diff = a[:, None, :] - a[None, :, :]
        diff -= geometry.length * np.round(diff / geometry.length)
        d = np.sqrt((diff * diff).sum(axis=-1))
        iu = np.triu_indices(n, k=1)
        return np.repeat(d[iu], 2)  # ordered pairs
    if len(a) == 0 or len(b) == 0:
        return np.zeros(0)
    diff = a[:, None, :] - b[None, :, :]
    diff -= geometry.length * np.round(diff / geometry.length)
    return np.sqrt((diff * diff).sum(axis=-1)).ravel()


def estimate_correlations(
    snapshots: list[FiniteConfig], geometry: Torus, bins
) -> PairCorrelationEstimate:
    """Standard point-process pair estimator on the torus.

    Ordered pair counts per radial shell are normalized by volume * shell
    measure * replicas, which is unbiased for the two-point correlation of a
    translation-invariant state; densities are mean counts over the volume.
    Standard errors come from the replica-to-replica spread.
    """
    edges = np.asarray([float(b) for b in bins])
    if len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bins must be at least two increasing edges")
    if len(snapshots) < 2:
        raise ValueError("need at least two replicas for standard errors")
    d = geometry.dimension
    vol = geometry.volume
    shell = ball_volume(d) * (edges[1:] ** d - edges[:-1] ** d)
    R = len(snapshots)
    per20 = np.zeros((R, len(shell)))
    per11 = np.zeros((R, len(shell)))
    per02 = np.zeros((R, len(shell)))
    np_counts = np.zeros(R)
    nm_counts = np.zeros(R)
    for i, cfg in enumerate(snapshots):
        P = _positions(list(cfg.plus))
        M = _positions(list(cfg.minus))
        np_counts[i] = len(P)
        nm_counts[i] = len(M)
        per20[i] = np.histogram(_pair_distances(P, None, geometry), bins=edges)[0] / (vol * shell)
        per11[i] = np.histogram(_pair_distances(P, M, geometry), bins=edges)[0] / (vol * shell)
        per02[i] = np.histogram(_pair_distances(M, None, geometry), bins=edges)[0] / (vol * shell)

    def mean_se(arr):
        return arr.mean(axis=0), arr.std(axis=0, ddof=1) / math.sqrt(R)

    k20, k20_se = mean_se(per20)
    k11, k11_se = mean_se(per11)
    k02, k02_se = mean_se(per02)
    dp, dp_se = mean_se(np_counts / vol)
    dm, dm_se = mean_se(nm_counts / vol)
    return PairCorrelationEstimate(
        bin_edges=edges,
        k20=k20,
        k20_se=k20_se,
        k11=k11,
        k11_se=k11_se,
        k02=k02,
        k02_se=k02_se,
        density_plus=float(dp),
        density_plus_se=float(dp_se),
        density_minus=float(dm),
        density_minus_se=float(dm_se),
        n_replicas=R,
    )


# -- observables on plus-marginal oracle distributions ---------------------------


def observable_name(spec: dict) -> str:
    kind = spec["kind"]
    if kind == "total_plus":
        return "total_plus"
    if kind == "window":
        return "window[" + ",".join(map(str, spec["sites"])) + "]"
    if kind == "kg":
        return spec.get("name", "kg")
    raise ValueError(f"unknown observable kind {kind!r}")


def eval_observable_plus(spec: dict, dist, site_volume: float) -> float:
    """Expectation of one observable under a 'plus' bitmask distribution."""
    from bdlp.oracle import single_occupancies

    S = dist.n_sites
    occ = single_occupancies(S)
    p = dist.probs
    kind = spec["kind"]
    if kind == "total_plus":
        return float(sum(occ[s] @ p for s in range(S)))
    if kind == "window":
        return float(sum(occ[int(s)] @ p for s in spec["sites"]))
    if kind == "kg":
        # expectation of the summation transform of a function supported on
        # at most two points: constant + singles + unordered pairs
        total = float(spec.get("g_empty", 0.0))
        for s, val in spec.get("singles", []):
            total += float(val) * float(occ[int(s)] @ p)
        for i, j, val in spec.get("pairs", []):
            total += float(val) * float((occ[int(i)] & occ[int(j)]) @ p)
        return total
    raise ValueError(f"unknown observable kind {kind!r}")


@dataclass
class AveragingResult:
    rows: list[dict]  # epsilon, observable, sup_error, stderr
    curves: dict  # (epsilon, observable) -> dict with t, joint, averaged

    def sup_errors(self, observable: str) -> list[tuple[float, float]]:
        return [
            (r["epsilon"], r["sup_error"]) for r in self.rows if r["observable"] == observable
        ]


def averaging_error(
    params: ModelParams,
    epsilon_list,
    t_grid,
    observables,
    mode: str = "oracle",
    initial: dict | None = None,
    replicas: int = 2000,
    seed: int = 1,
    threads: int = 1,
    stderr_inflation: float = 1.0,
) -> AveragingResult:
    """Distance between the joint '+' marginal and the averaged evolution.

    For each environment speed the sup over the grid of the absolute
    difference is reported per observable.  Oracle mode evolves the lattice
    master equation exactly; simulation mode uses replica ensembles and
    reports the per-time standard error maximum scaled by
    ``stderr_inflation`` (the sup over the grid is a union of per-time
    estimates).
    """
    t_grid = [float(t) for t in t_grid]
    if mode == "oracle":
        return _averaging_error_oracle(params, epsilon_list, t_grid, observables, initial)
    if mode != "simulation":
        raise ValueError("mode must be 'oracle' or 'simulation'")
    return _averaging_error_simulation(
        params, epsilon_list, t_grid, observables, initial, replicas, seed, threads,
        stderr_inflation,
    )


def _initial_joint_distribution(model, initial: dict | None):
    from bdlp import oracle

    initial = initial or {}
    p_plus = initial.get("p_plus", 0.5)
    if initial.get("minus_gibbs", True):
        S = model.n_sites
        plus_each = oracle.single_product_distribution(S, p_plus, "plus")
        return oracle.joint_from_marginals(plus_each, oracle.gibbs_distribution(model))
    return oracle.product_distribution(model, p_plus, initial.get("p_minus", 0.0))


def _averaging_error_oracle(params, epsilon_list, t_grid, observables, initial):
    from bdlp import oracle

    if not isinstance(params.geometry, Lattice):
        raise ValueError("oracle mode needs lattice geometry")
    model = oracle.LatticeModel.from_params(params)
    v = model.site_volume
    rho = float(np.mean(oracle.gibbs_density(model)))
    mu0 = _initial_joint_distribution(model, initial)
    mu0_plus = oracle.plus_marginal(mu0)

    gen_avg = oracle.build_generator(model, "averaged", rho=rho)
    avg_vals = {observable_name(o): [] for o in observables}
    dist = mu0_plus
    prev_t = 0.0
    for t in t_grid:
        dist = oracle.evolve_exact(gen_avg, dist, t - prev_t)
        prev_t = t
        for o in observables:
            avg_vals[observable_name(o)].append(eval_observable_plus(o, dist, v))

    rows, curves = [], {}
    for eps in epsilon_list:
        gen = oracle.build_generator(model, "joint", epsilon=float(eps))
        dist = mu0
        prev_t = 0.0
        joint_vals = {observable_name(o): [] for o in observables}
        for t in t_grid:
            dist = oracle.evolve_exact(gen, dist, t - prev_t)
            prev_t = t
            marg = oracle.plus_marginal(dist)
            for o in observables:
                joint_vals[observable_name(o)].append(eval_observable_plus(o, marg, v))
        for o in observables:
            name = observable_name(o)
            jv = np.asarray(joint_vals[name])
            av = np.asarray(avg_vals[name])
            rows.append(
                {
                    "epsilon": float(eps),
                    "observable": name,
                    "sup_error": float(np.max(np.abs(jv - av))),
                    "stderr": 0.0,
                }
            )
            curves[(float(eps), name)] = {"t": list(t_grid), "joint": jv.tolist(), "averaged": av.tolist()}
    return AveragingResult(rows, curves)


def _averaging_error_simulation(
    params, epsilon_list, t_grid, observables, initial, replicas, seed, threads,
    stderr_inflation,
):
    from bdlp.simulate import make_initial_sampler, run_replicas

    for o in observables:
        if o["kind"] not in ("total_plus", "window"):
            raise ValueError("simulation mode supports total_plus and window observables")
    windows = [o["sites"] if "sites" in o else o["window"] for o in observables if o["kind"] == "window"]
    initial = initial or {"kind": "poisson", "z_plus": 0.5}
    rho = params.z if params.psi.is_zero else _continuum_rho(params)

    def collect(variant, eps, rep_seed):
        p = params if eps is None else params.with_(epsilon=float(eps))
        sampler = make_initial_sampler(initial, p)
        if variant == "averaged":
            sampler_plus = lambda rng: (sampler(rng)[0], [])
            stats = run_replicas(
                p, "averaged", sampler_plus, t_grid, replicas, rep_seed,
                threads=threads, rho=rho, windows=windows,
            )
        else:
            stats = run_replicas(
                p, "joint", sampler, t_grid, replicas, rep_seed, threads=threads,
                windows=windows,
            )
        return stats

    avg_stats = collect("averaged", None, seed + 1)
    rows, curves = [], {}
    for eps in epsilon_list:
        eps_val = math.inf if eps in ("infinity", "inf") else float(eps)
        joint_stats = collect("joint", eps_val, seed)
        widx = 0
        for o in observables:
            name = observable_name(o) if o["kind"] != "window" else f"window_{widx}"
            if o["kind"] == "total_plus":
                jv, av = joint_stats.mean_plus, avg_stats.mean_plus
                jse, ase = joint_stats.stderr_plus(), avg_stats.stderr_plus()
            else:
                jv = joint_stats.window_means[widx]
                av = avg_stats.window_means[widx]
                jse = np.sqrt(joint_stats.window_vars[widx] / joint_stats.n_replicas)
                ase = np.sqrt(avg_stats.window_vars[widx] / avg_stats.n_replicas)
                widx += 1
            se = np.sqrt(jse**2 + ase**2)
            rows.append(
                {
                    "epsilon": float(eps_val) if math.isfinite(eps_val) else "infinity",
                    "observable": name,
                    "sup_error": float(np.max(np.abs(jv - av))),
                    "stderr": float(np.max(se) * stderr_inflation),
                }
            )
            curves[(eps, name)] = {
                "t": list(t_grid),
                "joint": jv.tolist(),
                "averaged": av.tolist(),
            }
    return AveragingResult(rows, curves)


def _continuum_rho(params: ModelParams) -> float:
    raise NotImplementedError(
        "continuum averaged runs need an explicit rho unless psi is zero"
    )


# -- extinction diagnostics -------------------------------------------------------


def extinction_diagnostics(
    stats,
    envelope: EnvelopeSpec,
    params: ModelParams,
    rho: float = 0.0,
) -> dict:
    """Tail decay of the mean '+' count against its envelope.

    Fits the log mean-count slope over the tail half of the grid, evaluates
    the envelope for the density entry (order one) scaled by the domain
    volume, and passes when the empirical curve stays below envelope plus
    three standard errors everywhere.
    """
    t = np.asarray(stats.t_grid)
    mean = np.asarray(stats.mean_plus)
    se = stats.stderr_plus()
    volume = params.geometry.volume
    env = np.array([_density_envelope(envelope, params, rho, float(tt)) * volume for tt in t])
    ok = mean <= env + 3.0 * se
    tail = t >= t[len(t) // 2]
    tail_mean = mean[tail]
    report = {
        "pass": bool(ok.all()),
        "envelope_decay": _envelope_rate(envelope, params, rho),
        "per_time": [
            {"t": float(tt), "mean_plus": float(mm), "envelope": float(ee), "ok": bool(oo)}
            for tt, mm, ee, oo in zip(t, mean, env, ok)
        ],
    }
    if np.all(tail_mean <= 0.0):
        report["extinct"] = True
        report["slope"] = None
        return report
    mask = tail_mean > 0.0
    x = t[tail][mask]
    y = np.log(tail_mean[mask])
    if len(x) < 2:
        report["extinct"] = False
        report["slope"] = None
        return report
    slope = float(np.polyfit(x, y, 1)[0])
    report["extinct"] = False
    report["slope"] = slope
    return report


def _density_envelope(spec: EnvelopeSpec, params: ModelParams, rho: float, t: float) -> float:
    if spec.regime in AVERAGED_REGIMES:
        return theorem5_envelope(spec, params, rho, t, 1)
    return theorem2_envelope(spec, params, t, 1, 0, 0.0)


def _envelope_rate(spec: EnvelopeSpec, params: ModelParams, rho: float) -> float:
    a1 = params.a_plus.l1_norm()
    eff_m = params.m + (params.g * rho if spec.regime in AVERAGED_REGIMES else 0.0)
    if spec.regime.endswith("supercritical"):
        return a1 + spec.delta - eff_m
    return -spec.delta
