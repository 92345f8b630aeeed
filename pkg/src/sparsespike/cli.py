"""Experiment orchestration: JSON config parsing, seeded instance farms,
parameter sweeps, and CSV emission.

Every artifact embeds the full canonical config and master seed in its
header, and all randomness is derived from (master seed, instance index,
role tag), so reruns with an identical config are byte-identical and
results do not depend on the worker count.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analytic, ensembles, graphgen, observables, popdyn, spectral
from .errors import (
    ConfigError,
    GenerationError,
    SolverError,
    SparseSpikeError,
)

MODES = ("analytic", "popdyn", "diag", "densities", "sweep")


def seed_derivation(master_seed: int, instance_index: int, role_tag: str) -> int:
    """Collision-free stream seed from (master, index, tag) via SHA-256."""
    digest = hashlib.sha256(f"{master_seed}|{instance_index}|{role_tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(master_seed: int, instance_index: int, role_tag: str) -> np.random.Generator:
    return np.random.default_rng(seed_derivation(master_seed, instance_index, role_tag))


@dataclass
class ExperimentConfig:
    mode: str
    degree: dict
    weight: dict = field(default_factory=lambda: {"kind": "constant", "w": 1.0})
    spike: dict = field(default_factory=lambda: {"kind": "gaussian", "sigma_x2": 1.0})
    theta: list = field(default_factory=lambda: [0.0])
    c_grid: list | None = None
    n: int = 2000
    instances: int = 10
    seed: int = 0
    out_dir: str = "out"
    workers: int = 1
    popdyn: dict = field(default_factory=dict)
    eig_tol: float = 1e-10
    eig_max_iter: int = 20_000
    lambda_structural: float | None = None
    warm_start: bool = True
    density_samples: int = 200_000
    checkpoint: str | None = None
    save_checkpoint: bool = False

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config field {key!r}")
    if "mode" not in raw:
        raise ConfigError("missing field 'mode'")
    if raw["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {raw['mode']!r}")
    if "degree" not in raw or not isinstance(raw["degree"], dict):
        raise ConfigError("missing or invalid field 'degree'")
    cfg = ExperimentConfig(**raw)
    if isinstance(cfg.theta, (int, float)):
        cfg.theta = [float(cfg.theta)]
    cfg.theta = [float(t) for t in cfg.theta]
    if not cfg.theta:
        raise ConfigError("theta grid is empty")
    if any(t < 0 for t in cfg.theta):
        raise ConfigError("theta values must be non-negative")
    if cfg.c_grid is not None:
        if isinstance(cfg.c_grid, (int, float)):
            cfg.c_grid = [cfg.c_grid]
        if not cfg.c_grid:
            raise ConfigError("c_grid is empty")
    if cfg.mode in ("popdyn", "densities") and any(t <= 0 for t in cfg.theta):
        raise ConfigError(f"{cfg.mode} mode solves the spiked phase; theta must be positive")
    if cfg.n < 2:
        raise ConfigError("n must be >= 2")
    if cfg.instances < 1:
        raise ConfigError("instances must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.eig_tol <= 0:
        raise ConfigError("eig_tol must be positive")
    if cfg.density_samples < 1:
        raise ConfigError("density_samples must be >= 1")
    try:
        for c_value in cfg.c_grid if cfg.c_grid is not None else [None]:
            build_models(cfg, c_value)
        popdyn_config(cfg)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def build_models(cfg: ExperimentConfig, c_value=None):
    """Instantiate (degree, weight, spike) models; c_value overrides the
    degree parameter for sweep grid points."""
    deg = dict(cfg.degree)
    kind = deg.pop("kind", None)
    if kind == "regular":
        c = int(c_value if c_value is not None else deg.get("c"))
        degree_model = ensembles.regular(c)
    elif kind == "truncated_poisson":
        cbar = float(c_value if c_value is not None else deg.get("cbar"))
        degree_model = ensembles.truncated_poisson(cbar, int(deg.get("k_max", 20)))
    elif kind == "table":
        degree_model = ensembles.degree_table(deg.get("probs"))
    else:
        raise ValueError(f"unknown degree kind {kind!r}")

    wgt = dict(cfg.weight)
    wkind = wgt.pop("kind", None)
    if wkind == "constant":
        weight_model = ensembles.constant_weight(float(wgt.get("w", 1.0)))
    elif wkind == "rademacher_scaled":
        weight_model = ensembles.rademacher_weight(float(wgt.get("scale")))
    elif wkind == "custom_table":
        weight_model = ensembles.weight_table(wgt.get("values"), wgt.get("probs"))
    else:
        raise ValueError(f"unknown weight kind {wkind!r}")

    spk = dict(cfg.spike)
    skind = spk.pop("kind", None)
    if skind == "gaussian":
        spike_model = ensembles.gaussian_spike(float(spk.get("sigma_x2", 1.0)))
    elif skind == "rademacher":
        spike_model = ensembles.rademacher_spike(float(spk.get("sigma_x2", 1.0)))
    elif skind == "custom":
        spike_model = ensembles.custom_spike(spk.get("values"), spk.get("probs"))
    else:
        raise ValueError(f"unknown spike kind {skind!r}")
    return degree_model, weight_model, spike_model


def popdyn_config(cfg: ExperimentConfig) -> popdyn.PopDynConfig:
    return popdyn.PopDynConfig(**cfg.popdyn)


def generate_instance(cfg: ExperimentConfig, theta: float, index: int, c_value=None) -> graphgen.SpikedMatrix:
    degree_model, weight_model, spike_model = build_models(cfg, c_value)
    degrees = ensembles.sample_degree_sequence(
        degree_model, cfg.n, derive_rng(cfg.seed, index, "degrees")
    )
    graph = graphgen.configuration_model(degrees, derive_rng(cfg.seed, index, "graph"))
    graph = graphgen.assign_weights(graph, weight_model, derive_rng(cfg.seed, index, "weights"))
    return graphgen.assemble_spiked(graph, spike_model, theta, derive_rng(cfg.seed, index, "spike"))


def _instance_row(args: tuple) -> dict:
    raw_cfg, theta, c_value, index = args
    cfg = ExperimentConfig(**raw_cfg)
    a = generate_instance(cfg, theta, index, c_value)
    report = spectral.analyze_instance(
        a, tol=cfg.eig_tol, max_iter=cfg.eig_max_iter, rng=derive_rng(cfg.seed, index, "eig")
    )
    return {
        "index": index,
        "seed": seed_derivation(cfg.seed, index, "graph"),
        "n": cfg.n,
        "theta": theta,
        "c": c_value if c_value is not None else _degree_param(cfg),
        "lambda_top": report.lambda_top,
        "lambda_second": report.lambda_second,
        "overlap": report.overlap,
        "overlap_sq": report.overlap_sq,
        "residual_top": report.residual_top,
        "residual_second": report.residual_second,
        "iterations": report.iterations,
    }


def _degree_param(cfg: ExperimentConfig):
    return cfg.degree.get("c", cfg.degree.get("cbar"))


def _farm(cfg: ExperimentConfig, tasks: list) -> list:
    """Run instance tasks, deterministically ordered by task index."""
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_instance_row, tasks))
    else:
        rows = [_instance_row(t) for t in tasks]
    return sorted(rows, key=lambda r: (r["theta"], r["c"] if r["c"] is not None else 0, r["index"]))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: str, fieldnames: list, rows: list, cfg: ExperimentConfig) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config: {cfg.canonical()}\n")
        fh.write(f"# seed: {cfg.seed}\n")
        fh.write(",".join(fieldnames) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(name)) for name in fieldnames) + "\n")


def structural_for(cfg: ExperimentConfig, degree_model, weight_model) -> float:
    """Structural (theta=0) top eigenvalue for the configured noise."""
    if cfg.lambda_structural is not None:
        return float(cfg.lambda_structural)
    if degree_model.kind == "regular" and weight_model.values.size == 1 and weight_model.values[0] > 0:
        return degree_model.mean_c * float(weight_model.values[0])
    e_w2 = weight_model.second_moment_w
    floor = analytic.admissible_lambda_floor(degree_model, e_w2)
    if weight_model.values.min() < 0:
        return floor  # no Perron outlier for sign-mixed weights
    hi = analytic.gershgorin_bound(degree_model, weight_model) + 1.0
    lam, _ = popdyn.structural_lambda(
        degree_model, weight_model, popdyn_config(cfg), derive_rng(cfg.seed, 0, "structural"),
        lam_lo=floor, lam_hi=hi,
    )
    return lam


def analytic_report_for(cfg: ExperimentConfig, theta: float, c_value=None) -> analytic.AnalyticReport:
    degree_model, weight_model, spike_model = build_models(cfg, c_value)
    if (
        degree_model.kind == "regular"
        and weight_model.values.size == 1
        and float(weight_model.values[0]) == 1.0
    ):
        return analytic.rr_report(int(degree_model.mean_c), spike_model.sigma_x2, theta)
    lam_struct = structural_for(cfg, degree_model, weight_model)
    return analytic.poisson_report(degree_model, weight_model, spike_model, theta, lam_struct)


ANALYTIC_FIELDS = [
    "theta", "c", "theta_crit", "theta_b", "lambda_structural", "bulk_edge",
    "lambda_theta", "lambda_top", "overlap_sq", "c_crit", "c_b",
]


def run_analytic(cfg: ExperimentConfig) -> list:
    rows = []
    c_values = cfg.c_grid if cfg.c_grid is not None else [None]
    for c_value in c_values:
        for theta in cfg.theta:
            rep = analytic_report_for(cfg, theta, c_value)
            row = rep.as_flat_dict()
            row["c"] = c_value if c_value is not None else _degree_param(cfg)
            rows.append(row)
            for key in ANALYTIC_FIELDS:
                if row.get(key) is not None:
                    print(f"{key}={_fmt(row[key])}")
            print()
    _write_csv(os.path.join(cfg.out_dir, "analytic.csv"), ANALYTIC_FIELDS, rows, cfg)
    return rows


DIAG_FIELDS = [
    "index", "seed", "n", "theta", "c", "lambda_top", "lambda_second",
    "overlap", "overlap_sq", "residual_top", "residual_second", "iterations",
]


def run_diag(cfg: ExperimentConfig) -> list:
    raw = asdict(cfg)
    tasks = [
        (raw, theta, None, i)
        for theta in cfg.theta
        for i in range(cfg.instances)
    ]
    rows = _farm(cfg, tasks)
    _write_csv(os.path.join(cfg.out_dir, "diag.csv"), DIAG_FIELDS, rows, cfg)
    summary = _aggregate(rows, cfg)
    _write_csv(os.path.join(cfg.out_dir, "diag_summary.csv"), SUMMARY_FIELDS, summary, cfg)
    return rows


SUMMARY_FIELDS = [
    "theta", "c", "instances",
    "mean_lambda_top", "se_lambda_top", "std_lambda_top",
    "mean_lambda_second", "se_lambda_second",
    "mean_overlap", "mean_overlap_sq", "se_overlap_sq",
]


def _aggregate(rows: list, cfg: ExperimentConfig) -> list:
    out = []
    keys = sorted({(r["theta"], r["c"]) for r in rows})
    for theta, c in keys:
        sel = [r for r in rows if r["theta"] == theta and r["c"] == c]
        lt = np.array([r["lambda_top"] for r in sel])
        ls = np.array([r["lambda_second"] for r in sel], dtype=float)
        ov = np.array([r["overlap"] for r in sel])
        ov2 = np.array([r["overlap_sq"] for r in sel])
        m = len(sel)

        def se(a):
            return float(a.std(ddof=1) / np.sqrt(m)) if m > 1 else float("nan")

        out.append({
            "theta": theta, "c": c, "instances": m,
            "mean_lambda_top": float(lt.mean()), "se_lambda_top": se(lt),
            "std_lambda_top": float(lt.std(ddof=1)) if m > 1 else float("nan"),
            "mean_lambda_second": float(ls.mean()), "se_lambda_second": se(ls),
            "mean_overlap": float(ov.mean()),
            "mean_overlap_sq": float(ov2.mean()), "se_overlap_sq": se(ov2),
        })
    return out


POPDYN_FIELDS = [
    "theta", "c", "lambda", "q", "overlap_sq", "alpha1", "alpha2", "alpha1_se", "alpha2_se",
    "sweeps", "rescale_rounds",
]


def run_popdyn(cfg: ExperimentConfig) -> list:
    degree_model, weight_model, spike_model = build_models(cfg)
    pconf = popdyn_config(cfg)
    rows = []
    for i, theta in enumerate(cfg.theta):
        warm = None
        if cfg.warm_start:
            try:
                lam = analytic.lambda_signal(theta, degree_model, weight_model, spike_model)
                q = float(np.sqrt(analytic.overlap_sq(theta, degree_model, weight_model, spike_model)))
                warm = (lam, q)
            except SolverError:
                warm = None
        pop, q, lam, diag = popdyn.solve(
            theta, degree_model, weight_model, spike_model, pconf,
            derive_rng(cfg.seed, i, "popdyn"), warm_start=warm,
        )
        last = diag["history"][-1]
        rows.append({
            "theta": theta, "c": _degree_param(cfg), "lambda": lam, "q": q,
            "overlap_sq": q * q,
            "alpha1": last["alpha1"], "alpha2": last["alpha2"],
            "alpha1_se": last["alpha1_se"], "alpha2_se": last["alpha2_se"],
            "sweeps": pop.sweep_count, "rescale_rounds": diag["rounds"],
        })
        if cfg.save_checkpoint:
            popdyn.save_population(
                pop, os.path.join(cfg.out_dir, f"population_theta{theta:g}.npz"), seed=cfg.seed
            )
    _write_csv(os.path.join(cfg.out_dir, "popdyn.csv"), POPDYN_FIELDS, rows, cfg)
    return rows


def run_densities(cfg: ExperimentConfig) -> dict:
    degree_model, weight_model, spike_model = build_models(cfg)
    theta = cfg.theta[0]
    if cfg.checkpoint:
        pop = popdyn.load_population(cfg.checkpoint)
    else:
        warm = None
        if cfg.warm_start:
            try:
                lam = analytic.lambda_signal(theta, degree_model, weight_model, spike_model)
                q = float(np.sqrt(analytic.overlap_sq(theta, degree_model, weight_model, spike_model)))
                warm = (lam, q)
            except SolverError:
                warm = None
        pop, _, _, _ = popdyn.solve(
            theta, degree_model, weight_model, spike_model, popdyn_config(cfg),
            derive_rng(cfg.seed, 0, "popdyn"), warm_start=warm,
        )
    header = (f"config: {cfg.canonical()}", f"seed: {cfg.seed}")
    top = observables.rho_top(pop, degree_model, weight_model, spike_model,
                              cfg.density_samples, derive_rng(cfg.seed, 1, "rho_top"))
    ov = observables.rho_ov(pop, degree_model, weight_model, spike_model,
                            cfg.density_samples, derive_rng(cfg.seed, 2, "rho_ov"))
    marg = observables.marginals(pop)
    observables.write_histogram_csv(top, os.path.join(cfg.out_dir, "rho_top_hist.csv"), header)
    observables.write_histogram_csv(ov, os.path.join(cfg.out_dir, "rho_ov_hist.csv"), header)
    observables.write_samples_csv(top, os.path.join(cfg.out_dir, "rho_top_samples.csv"), header_lines=header)
    observables.write_samples_csv(ov, os.path.join(cfg.out_dir, "rho_ov_samples.csv"), header_lines=header)
    stride = max(1, pop.n_pop // 10_000)
    observables.write_cdf_csv(marg["omega_x"], marg["omega_cdf"],
                              os.path.join(cfg.out_dir, "omega_cdf.csv"), header, stride)
    observables.write_cdf_csv(marg["h_x"], marg["h_cdf"],
                              os.path.join(cfg.out_dir, "h_cdf.csv"), header, stride)
    moments = observables.overlap_moments(ov)
    print(f"overlap_mean={moments.mean!r}")
    print(f"overlap_sq={moments.overlap_sq!r}")
    print(f"omega_atom_mass={marg['atom_mass']!r}")
    return {"rho_top": top, "rho_ov": ov, "marginals": marg, "moments": moments}


SWEEP_FIELDS = [
    "theta", "c", "instances",
    "mean_lambda_top", "se_lambda_top", "std_lambda_top",
    "mean_lambda_second", "se_lambda_second",
    "mean_overlap", "mean_overlap_sq", "se_overlap_sq",
    "analytic_lambda_theta", "analytic_overlap_sq", "theta_crit", "theta_b",
]


def run_sweep(cfg: ExperimentConfig) -> list:
    c_values = cfg.c_grid if cfg.c_grid is not None else [_degree_param(cfg)]
    raw = asdict(cfg)
    tasks = []
    point_index = 0
    for c_value in c_values:
        for theta in cfg.theta:
            for i in range(cfg.instances):
                tasks.append((raw, theta, c_value, point_index * cfg.instances + i))
            point_index += 1
    rows = _farm(cfg, tasks)
    summary = _aggregate(rows, cfg)
    by_point = {(s["theta"], s["c"]): s for s in summary}
    out = []
    for c_value in c_values:
        for theta in cfg.theta:
            rep = analytic_report_for(cfg, theta, c_value)
            s = by_point[(theta, c_value)]
            s = dict(s)
            s["analytic_lambda_theta"] = rep.lambda_theta
            s["analytic_overlap_sq"] = rep.overlap_sq
            s["theta_crit"] = rep.theta_crit
            s["theta_b"] = rep.theta_b
            out.append(s)
    _write_csv(os.path.join(cfg.out_dir, "sweep.csv"), SWEEP_FIELDS, out, cfg)
    return out


def run(cfg: ExperimentConfig) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    if cfg.mode == "analytic":
        run_analytic(cfg)
    elif cfg.mode == "diag":
        run_diag(cfg)
    elif cfg.mode == "popdyn":
        run_popdyn(cfg)
    elif cfg.mode == "densities":
        run_densities(cfg)
    elif cfg.mode == "sweep":
        run_sweep(cfg)
    else:
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sparsespike",
        description="Recovery-threshold experiments for spiked sparse random matrices",
    )
    parser.add_argument("config", help="path to a JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out-dir", default=None, help="override the output directory")
    parser.add_argument("--workers", type=int, default=None, help="override the worker count")
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out_dir is not None:
            raw["out_dir"] = args.out_dir
        if args.workers is not None:
            raw["workers"] = args.workers
        cfg = parse_config(raw)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GenerationError as exc:
        print(f"generation failure: {exc}", file=sys.stderr)
        return 4
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except SparseSpikeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
