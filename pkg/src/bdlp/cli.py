"""Batch experiment runner.

Subcommands: check | simulate | oracle | hierarchy | average-scan | lyapunov
| report.  Each reads one JSON config (schema documented in the README),
writes delimited results plus a manifest into the output directory, and uses
one master seed from which all replica streams are derived.  Exit codes:
0 success, 2 config validation failure, 3 failed report assertion, 4 I/O
failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

import bdlp
from bdlp import analysis, envelopes, hierarchy, lyapunov, reporting
from bdlp.admissibility import admissibility_report
from bdlp.envelopes import EnvelopeSpec
from bdlp.geometry import Lattice, Torus
from bdlp.kernels import Kernel
from bdlp.params import ModelParams

EXIT_OK, EXIT_VALIDATION, EXIT_ASSERTION, EXIT_IO = 0, 2, 3, 4

EXPERIMENTS = ("check", "simulate", "oracle", "hierarchy", "average_scan", "lyapunov", "report")


class ConfigError(ValueError):
    pass


def _check_keys(block: dict, allowed: set[str], where: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


_TOP_KEYS = {"model", "experiment", "output_dir", "seed", "threads"} | set(EXPERIMENTS)

_MODEL_KEYS = {
    "m", "g", "z", "epsilon", "vartheta", "lambda",
    "a_plus", "a_minus", "b_minus", "psi", "geometry",
}

_SIM_KEYS = {
    "variant", "t_grid", "replicas", "initial", "windows", "rho", "lyapunov",
    "estimate_pairs", "event_log", "snapshots", "event_budget",
}

_ORACLE_KEYS = {"variant", "epsilon", "rho", "t_grid", "initial", "orders", "export_generator"}

_HIER_KEYS = {
    "variant", "closure", "orders", "t_grid", "initial", "epsilon", "rho",
    "envelope", "alpha_norm", "rtol",
}

_SCAN_KEYS = {
    "epsilon_list", "t_grid", "observables", "mode", "initial", "replicas",
    "stderr_inflation",
}

_CHECK_KEYS = {"search_interval", "grid_step", "margin", "operating_margin", "stability_trials"}

_LYAP_KEYS = {"e", "kappa", "drift_trials", "simulate"}

_ENVELOPE_KEYS = {"norm_k0", "alpha_delta_plus", "alpha_minus", "delta", "regime", "rho"}


def validate_config(cfg: dict) -> None:
    _check_keys(cfg, _TOP_KEYS, "config")
    if "model" not in cfg:
        raise ConfigError("config needs a 'model' block")
    _check_keys(cfg["model"], _MODEL_KEYS, "model")
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}; got {exp!r}")
    checkers = {
        "simulate": _SIM_KEYS,
        "oracle": _ORACLE_KEYS,
        "hierarchy": _HIER_KEYS,
        "average_scan": _SCAN_KEYS,
        "check": _CHECK_KEYS,
        "lyapunov": _LYAP_KEYS,
    }
    if exp in checkers and exp in cfg:
        _check_keys(cfg[exp], checkers[exp], exp)
    if "envelope" in cfg.get("hierarchy", {}):
        _check_keys(cfg["hierarchy"]["envelope"], _ENVELOPE_KEYS, "hierarchy.envelope")


# -- output handling -----------------------------------------------------------


class OutputWriter:
    """Writes result files, recording a content hash of each for the manifest."""

    def __init__(self, out_dir: Path, quiet: bool):
        self.out_dir = out_dir
        self.quiet = quiet
        self.records: dict[str, str] = {}
        out_dir.mkdir(parents=True, exist_ok=True)

    def _register(self, path: Path) -> None:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.records[path.name] = digest
        if not self.quiet:
            print(f"wrote {path}")

    def csv(self, name: str, rows: list[dict], fieldnames=None) -> Path:
        path = self.out_dir / name
        if rows and fieldnames is None:
            fieldnames = list(rows[0].keys())
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames or [])
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _fmt(v) for k, v in row.items()})
        self._register(path)
        return path

    def json(self, name: str, obj) -> Path:
        path = self.out_dir / name
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=1, sort_keys=True, default=_json_default)
            fh.write("\n")
        self._register(path)
        return path

    def text_file(self, name: str, producer) -> Path:
        path = self.out_dir / name
        producer(path)
        self._register(path)
        return path

    def figure(self, name: str, producer) -> Path:
        return self.text_file(name, producer)

    def manifest(self, cfg: dict, seed: int, wall: float) -> Path:
        payload = {
            "config_sha256": hashlib.sha256(
                json.dumps(cfg, sort_keys=True).encode()
            ).hexdigest(),
            "seed": seed,
            "versions": {
                "bdlp": bdlp.__version__,
                "python": sys.version.split()[0],
                "numpy": np.__version__,
            },
            "wall_time_s": wall,
            "outputs": dict(sorted(self.records.items())),
        }
        path = self.out_dir / "manifest.json"
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")
        if not self.quiet:
            print(f"wrote {path}")
        return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


# -- experiment implementations ---------------------------------------------------


def _run_check(cfg: dict, params: ModelParams, out: OutputWriter, seed: int) -> dict:
    block = cfg.get("check", {})
    interval = block.get("search_interval")
    report = admissibility_report(
        params,
        search_interval=tuple(interval) if interval else None,
        grid_step=float(block.get("grid_step", 1e-3)),
        margin=float(block.get("margin", 1e-9)),
        operating_margin=block.get("operating_margin"),
        stability_trials=int(block.get("stability_trials", 40)),
        seed=seed,
    )
    out.json("admissibility.json", report.as_dict())
    rows = [{"alpha_minus": a, "c_psi": c} for a, c in sorted(report.c_psi_curve.items())]
    out.csv("c_psi_curve.csv", rows)
    return report.as_dict()


def _lyap_spec_from(block: dict, params: ModelParams) -> lyapunov.LyapunovSpec:
    e_kernel = Kernel.from_dict(block["e"], params.dimension)
    spec = lyapunov.LyapunovSpec(e_kernel=e_kernel, kappa=float(block["kappa"]))
    return lyapunov.lyapunov_constants(spec, params)


def _run_simulate(cfg: dict, params: ModelParams, out: OutputWriter, seed: int,
                  threads: int) -> dict:
    from bdlp.simulate import make_initial_sampler, run_replicas

    block = cfg.get("simulate", {})
    variant = block.get("variant", "joint")
    t_grid = block.get("t_grid", [1.0])
    replicas = int(block.get("replicas", 100))
    sampler = make_initial_sampler(block.get("initial", {"kind": "poisson"}), params)
    lyap_spec = None
    if "lyapunov" in block:
        lyap_spec = _lyap_spec_from(block["lyapunov"], params)
    rho = float(block.get("rho", params.z if params.psi.is_zero else 0.0))
    log_handle = None
    try:
        if block.get("event_log"):
            log_path = out.out_dir / "events.ndjson"
            log_handle = open(log_path, "w")
        stats = run_replicas(
            params, variant, sampler, t_grid, replicas, seed, threads=threads,
            rho=rho, windows=block.get("windows", ()), lyapunov_spec=lyap_spec,
            event_budget=int(block.get("event_budget", 100_000_000)),
            keep_final_snapshots=bool(block.get("estimate_pairs") or block.get("snapshots")),
            event_log=log_handle,
        )
    finally:
        if log_handle is not None:
            log_handle.close()
            out._register(out.out_dir / "events.ndjson")
    out.csv("trajectory.csv", stats.csv_rows())
    result = {"partial_replicas": list(stats.partial_replicas)}
    if block.get("estimate_pairs"):
        bins = block["estimate_pairs"]["bins"]
        est = analysis.estimate_correlations(stats.final_snapshots, params.geometry, bins)
        out.csv("pair_correlation.csv", est.csv_rows())
        result["density_plus"] = est.density_plus
        result["density_minus"] = est.density_minus
    if lyap_spec is not None:
        bound = [
            lyapunov.lyapunov_bound(lyap_spec, params, float(stats.lyapunov_mean[0]), float(t))
            for t in stats.t_grid
        ]
        rows = [
            {"t": float(t), "lyapunov_mean": float(v), "bound": float(b)}
            for t, v, b in zip(stats.t_grid, stats.lyapunov_mean, bound)
        ]
        out.csv("lyapunov_curve.csv", rows)
    return result


def _initial_distribution(model, block: dict, variant: str):
    from bdlp import oracle

    init = block.get("initial", {})
    if variant == "joint":
        if init.get("minus_gibbs"):
            plus = oracle.single_product_distribution(
                model.n_sites, init.get("p_plus", 0.5), "plus"
            )
            return oracle.joint_from_marginals(plus, oracle.gibbs_distribution(model))
        return oracle.product_distribution(
            model, init.get("p_plus", 0.5), init.get("p_minus", 0.0)
        )
    if variant == "environment_only":
        return oracle.single_product_distribution(
            model.n_sites, init.get("p_minus", 0.0), "minus"
        )
    return oracle.single_product_distribution(model.n_sites, init.get("p_plus", 0.5), "plus")


def _dist_totals(dist) -> tuple[float, float]:
    from bdlp import oracle

    S = dist.n_sites
    if dist.kind == "joint":
        occ_p, occ_m = oracle.joint_occupancies(S)
        return (
            float(sum(occ_p[s] @ dist.probs for s in range(S))),
            float(sum(occ_m[s] @ dist.probs for s in range(S))),
        )
    occ = oracle.single_occupancies(S)
    total = float(sum(occ[s] @ dist.probs for s in range(S)))
    return (total, 0.0) if dist.kind == "plus" else (0.0, total)


def _run_oracle(cfg: dict, params: ModelParams, out: OutputWriter, seed: int) -> dict:
    from bdlp import oracle

    block = cfg.get("oracle", {})
    variant = block.get("variant", "joint")
    model = oracle.LatticeModel.from_params(params)
    rho = block.get("rho")
    gen = oracle.build_generator(
        model, variant, epsilon=block.get("epsilon"), rho=rho if rho is None else float(rho)
    )
    dist = _initial_distribution(model, block, variant)
    t_grid = [float(t) for t in block.get("t_grid", [1.0])]
    orders = block.get("orders", [1, 1] if variant == "joint" else [1, 0])
    if variant == "environment_only":
        orders = block.get("orders", [0, 1])
    obs_rows, corr_rows = [], []
    prev = 0.0
    for t in t_grid:
        dist = oracle.evolve_exact(gen, dist, t - prev)
        prev = t
        tp, tm = _dist_totals(dist)
        obs_rows.append({"t": t, "total_plus": tp, "total_minus": tm})
        table = oracle.correlation_from_distribution(model, dist, (orders[0], orders[1]))
        for row in table.as_rows():
            row["t"] = t
            corr_rows.append(row)
    out.csv("oracle_observables.csv", obs_rows)
    out.csv(
        "oracle_correlations.csv",
        corr_rows,
        fieldnames=["t", "n_plus", "n_minus", "sites_plus", "sites_minus", "value"],
    )
    if block.get("export_generator"):
        out.text_file("generator.txt", lambda p: oracle.export_generator(gen, p))
    return {"t_final": t_grid[-1]}


def _envelope_from(block: dict, k0_table=None) -> EnvelopeSpec:
    norm = block.get("norm_k0", "auto")
    if norm == "auto":
        if k0_table is None:
            raise ConfigError("envelope.norm_k0 = auto needs an initial table")
        alpha = (float(block["alpha_delta_plus"]), float(block.get("alpha_minus", 0.0)))
        norm = k0_table.norm_K_alpha(alpha)
    return EnvelopeSpec(
        norm_k0=float(norm),
        alpha_delta_plus=float(block["alpha_delta_plus"]),
        alpha_minus=float(block.get("alpha_minus", 0.0)),
        delta=float(block.get("delta", 0.1)),
        regime=block.get("regime", "joint_subcritical"),
        rho=float(block.get("rho", 0.0)),
    )


def _run_hierarchy(cfg: dict, params: ModelParams, out: OutputWriter, seed: int) -> dict:
    block = cfg.get("hierarchy", {})
    if not isinstance(params.geometry, Lattice):
        raise ConfigError("hierarchy experiments need lattice geometry")
    variant = block.get("variant", "joint")
    closure = block.get("closure", "poisson_product")
    orders = block.get("orders")
    S = params.geometry.n_sites
    if orders is None:
        orders = [S, S if variant == "joint" else 0]
    init = block.get("initial", {})
    k0 = hierarchy.CorrelationTable.poisson(
        params.geometry, int(orders[0]), int(orders[1]),
        float(init.get("z_plus", 0.5)), float(init.get("z_minus", 0.0)),
    )
    t_grid = [float(t) for t in block.get("t_grid", [1.0])]
    rho = block.get("rho")
    tables = hierarchy.integrate_hierarchy(
        k0, params, variant, closure, t_grid,
        epsilon=block.get("epsilon"), rho=None if rho is None else float(rho),
        rtol=float(block.get("rtol", 1e-8)),
    )
    rows = []
    alpha_norm = block.get("alpha_norm", [0.0, 0.0])
    norm_rows = []
    for t, table in zip(t_grid, tables):
        for row in table.as_rows():
            row["t"] = t
            rows.append(row)
        norm_rows.append(
            {"t": t, "norm": table.norm_K_alpha((float(alpha_norm[0]), float(alpha_norm[1])))}
        )
    out.csv(
        "hierarchy_tables.csv",
        rows,
        fieldnames=["t", "n_plus", "n_minus", "sites_plus", "sites_minus", "value"],
    )
    out.csv("hierarchy_norms.csv", norm_rows)
    result: dict = {"closure": closure, "orders": orders}
    if "envelope" in block:
        spec = _envelope_from(block["envelope"], k0)
        report = hierarchy.ruelle_bound_check(
            tables, t_grid, spec, params, rho=None if rho is None else float(rho)
        )
        out.json("ruelle_report.json", report)
        result["ruelle_pass"] = report["pass"]
    return result


def _run_average_scan(cfg: dict, params: ModelParams, out: OutputWriter, seed: int,
                      threads: int) -> dict:
    block = cfg.get("average_scan", {})
    observables = block.get("observables", [{"kind": "total_plus"}])
    result = analysis.averaging_error(
        params,
        block.get("epsilon_list", [1.0, 0.3, 0.1, 0.03]),
        block.get("t_grid", [0.25, 0.5, 1.0, 1.5, 2.0]),
        observables,
        mode=block.get("mode", "oracle"),
        initial=block.get("initial"),
        replicas=int(block.get("replicas", 2000)),
        seed=seed,
        threads=threads,
        stderr_inflation=float(block.get("stderr_inflation", 1.0)),
    )
    out.csv(
        "averaging_error.csv", result.rows,
        fieldnames=["epsilon", "observable", "sup_error", "stderr"],
    )
    curve_rows = []
    for (eps, name), curve in result.curves.items():
        for t, jv, av in zip(curve["t"], curve["joint"], curve["averaged"]):
            curve_rows.append(
                {"epsilon": eps, "observable": name, "t": t, "joint": jv, "averaged": av}
            )
    out.csv(
        "averaging_curves.csv", curve_rows,
        fieldnames=["epsilon", "observable", "t", "joint", "averaged"],
    )
    return {"rows": result.rows}


def _run_lyapunov(cfg: dict, params: ModelParams, out: OutputWriter, seed: int,
                  threads: int) -> dict:
    block = cfg.get("lyapunov", {})
    spec = _lyap_spec_from(block, params)
    payload = {
        "kappa": spec.kappa,
        "c_kappa": spec.c_kappa,
        "c_prime": spec.c_prime,
        "c_minus": spec.c_minus,
        "c_epsilon": spec.c_epsilon,
        "norm_a_over_e_l1": spec.norm_a_over_e_l1,
        "norm_a_over_e_sup": spec.norm_a_over_e_sup,
        "norm_e_l1": spec.norm_e_l1,
    }
    trials = int(block.get("drift_trials", 0))
    if trials > 0:
        payload["drift_check"] = _drift_check(spec, params, trials, seed)
    result = dict(payload)
    if "simulate" in block:
        sim_cfg = {"simulate": dict(block["simulate"])}
        sim_cfg["simulate"]["lyapunov"] = block
        sim_result = _run_simulate(sim_cfg, params, out, seed, threads)
        result["simulate"] = sim_result
    out.json("lyapunov.json", payload)
    return result


def _drift_check(spec, params: ModelParams, trials: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    worst = -math.inf
    zterm = params.z * params.inv_epsilon * spec.norm_e_l1
    for _ in range(trials):
        n_p = int(rng.integers(0, 5))
        n_m = int(rng.integers(0, 5))
        plus = [(float(rng.normal(0, 2)),) for _ in range(n_p)]
        minus = [(float(rng.normal(0, 2)),) for _ in range(n_m)]
        v = lyapunov.lyapunov_value(plus, minus, spec, None)
        drift = lyapunov.lyapunov_drift(plus, minus, spec, params)
        margin = drift - (spec.c_epsilon * v + zterm)
        worst = max(worst, margin)
    return {"trials": trials, "worst_margin": worst, "pass": worst <= 1e-7}


# -- report mode -------------------------------------------------------------------


def _run_report(cfg: dict, params: ModelParams, out: OutputWriter, seed: int,
                threads: int) -> tuple[dict, bool]:
    from bdlp.simulate import make_initial_sampler, run_replicas

    blocks = cfg.get("report", {}).get("blocks", [])
    results = []
    all_pass = True
    for i, block in enumerate(blocks):
        name = block.get("name", f"block_{i}")
        kind = block["kind"]
        entry = {"name": name, "kind": kind}
        if kind == "check":
            rep = _run_check({"check": block.get("check", {})}, params, out, seed)
            ok = True
            for key, expected in block.get("expect", {}).items():
                got = rep.get(key) if key != "stability" else rep.get("stability_status")
                if got != expected:
                    ok = False
                    entry[f"mismatch_{key}"] = got
            out.figure(f"{name}_c_psi.png", lambda p: reporting.fig_c_psi_curve(
                {float(k): v for k, v in rep["c_psi_curve"].items()}, p))
            entry["pass"] = ok
        elif kind == "envelope_oracle":
            entry.update(_report_envelope_oracle(block, params, out, name))
        elif kind == "average_scan":
            scan_cfg = {"average_scan": block["scan"]}
            res = _run_average_scan(scan_cfg, params, out, seed, threads)
            obs = analysis.observable_name(block["scan"]["observables"][0])
            errs = [r["sup_error"] for r in res["rows"] if r["observable"] == obs]
            ok = True
            if block.get("expect_monotone", True):
                ok &= all(b < a for a, b in zip(errs, errs[1:]))
            ratio = block.get("expect_final_ratio")
            if ratio is not None and errs:
                ok &= errs[-1] < float(ratio) * errs[0]
            entry["errors"] = errs
            entry["pass"] = ok
            out.figure(f"{name}_averaging.png", lambda p: reporting.fig_averaging(res["rows"], p))
        elif kind == "lyapunov_sim":
            entry.update(_report_lyapunov_sim(block, params, out, seed, threads, name))
        elif kind == "stationarity":
            entry.update(_report_stationarity(block, params, out, seed, threads, name))
        else:
            raise ConfigError(f"unknown report block kind {kind!r}")
        all_pass &= bool(entry.get("pass", False))
        results.append(entry)
    out.json("report.json", {"blocks": results, "pass": all_pass})
    return {"blocks": results}, all_pass


def _report_envelope_oracle(block: dict, params: ModelParams, out: OutputWriter,
                            name: str) -> dict:
    from bdlp import oracle

    ob = block["oracle"]
    model = oracle.LatticeModel.from_params(params)
    variant = ob.get("variant", "joint")
    rho = ob.get("rho")
    rho = None if rho is None else float(rho)
    gen = oracle.build_generator(model, variant, epsilon=ob.get("epsilon"), rho=rho)
    dist = _initial_distribution(model, ob, variant)
    t_grid = [float(t) for t in ob.get("t_grid", [0.0, 1.0])]
    orders = ob.get("orders", [model.n_sites, model.n_sites if variant == "joint" else 0])
    tables = []
    prev = 0.0
    for t in t_grid:
        dist = oracle.evolve_exact(gen, dist, t - prev)
        prev = t
        tables.append(oracle.correlation_from_distribution(model, dist, tuple(orders)))
    spec = _envelope_from(block["envelope"], tables[0])
    report = hierarchy.ruelle_bound_check(tables, t_grid, spec, params, rho=rho)
    out.json(f"{name}_ruelle.json", report)
    out.figure(f"{name}_ratio.png", lambda p: reporting.fig_envelope_ratio(report, p))
    return {"pass": report["pass"], "max_ratio": report["max_ratio"]}


def _report_lyapunov_sim(block: dict, params: ModelParams, out: OutputWriter,
                         seed: int, threads: int, name: str) -> dict:
    from bdlp.simulate import make_initial_sampler, run_replicas

    spec = _lyap_spec_from(block, params)
    sim = block["simulate"]
    sampler = make_initial_sampler(sim.get("initial", {"kind": "poisson"}), params)
    stats = run_replicas(
        params, sim.get("variant", "joint"), sampler, sim.get("t_grid", [0.5, 1.0, 2.0]),
        int(sim.get("replicas", 500)), seed, threads=threads, lyapunov_spec=spec,
    )
    v0 = float(stats.lyapunov_mean[0])
    bound = np.array(
        [lyapunov.lyapunov_bound(spec, params, v0, float(t)) for t in stats.t_grid]
    )
    ok = bool(np.all(stats.lyapunov_mean <= bound * (1 + 1e-9)))
    rows = [
        {"t": float(t), "lyapunov_mean": float(v), "bound": float(b)}
        for t, v, b in zip(stats.t_grid, stats.lyapunov_mean, bound)
    ]
    out.csv(f"{name}_curve.csv", rows)
    out.figure(
        f"{name}_bound.png",
        lambda p: reporting.fig_lyapunov(stats.t_grid, stats.lyapunov_mean, bound, p),
    )
    return {"pass": ok, "c_epsilon": spec.c_epsilon}


def _report_stationarity(block: dict, params: ModelParams, out: OutputWriter,
                         seed: int, threads: int, name: str) -> dict:
    from bdlp.simulate import make_initial_sampler, run_replicas

    sim = block["simulate"]
    sampler = make_initial_sampler(sim.get("initial", {"kind": "poisson"}), params)
    stats = run_replicas(
        params, sim.get("variant", "environment_only"), sampler,
        sim.get("t_grid", [10.0]), int(sim.get("replicas", 2000)), seed,
        threads=threads, keep_final_snapshots=True,
    )
    expected = float(block["expect_mean_minus"])
    se = float(stats.stderr_minus()[-1])
    got = float(stats.mean_minus[-1])
    ok = abs(got - expected) <= 3.0 * max(se, 1e-12)
    entry = {"pass": ok, "mean_minus": got, "expected": expected, "stderr": se}
    if "bins" in block:
        est = analysis.estimate_correlations(
            stats.final_snapshots, params.geometry, block["bins"]
        )
        out.csv(f"{name}_pairs.csv", est.csv_rows())
        level = float(block.get("expect_pair_level", params.z**2))
        flat_ok = bool(
            np.all(np.abs(est.k02 - level) <= 3.0 * np.maximum(est.k02_se, 1e-12))
        )
        entry["pair_flat"] = flat_ok
        entry["pass"] = ok and flat_ok
        out.figure(
            f"{name}_pairs.png",
            lambda p: reporting.fig_pair_correlation(est, p, expected=level),
        )
    out.csv(f"{name}_trajectory.csv", stats.csv_rows())
    return entry


# -- driver ------------------------------------------------------------------------


def run(cfg: dict, seed_override: int | None = None, threads_override: int | None = None,
        out_override: str | None = None, quiet: bool = False) -> int:
    try:
        validate_config(cfg)
        params = ModelParams.from_dict(cfg["model"])
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    seed = int(seed_override if seed_override is not None else cfg.get("seed", 0))
    threads = int(
        threads_override
        if threads_override is not None
        else cfg.get("threads", os.environ.get("BDLP_THREADS", 1))
    )
    out_dir = Path(out_override if out_override is not None else cfg.get("output_dir", "out"))
    start = time.time()
    failed_assertion = False
    try:
        out = OutputWriter(out_dir, quiet)
        exp = cfg["experiment"]
        if exp == "check":
            _run_check(cfg, params, out, seed)
        elif exp == "simulate":
            _run_simulate(cfg, params, out, seed, threads)
        elif exp == "oracle":
            _run_oracle(cfg, params, out, seed)
        elif exp == "hierarchy":
            _run_hierarchy(cfg, params, out, seed)
        elif exp == "average_scan":
            _run_average_scan(cfg, params, out, seed, threads)
        elif exp == "lyapunov":
            _run_lyapunov(cfg, params, out, seed, threads)
        else:
            _, ok = _run_report(cfg, params, out, seed, threads)
            failed_assertion = not ok
        out.manifest(cfg, seed, time.time() - start)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_ASSERTION if failed_assertion else EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bdlp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        cmd = name.replace("_", "-")
        p = sub.add_parser(cmd, help=f"run a {cmd} experiment")
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default BDLP_THREADS or 1)")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    cfg["experiment"] = args.command.replace("-", "_")
    return run(cfg, args.seed, args.threads, args.out, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
