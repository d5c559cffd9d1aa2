"""Synthetic marketplace experiments with known ground-truth ATE.

Outcomes follow the linear exposure-response model
y_in = alpha_i + beta_i * H_i + noise, so the true ATE is mean(beta).
Optional violation modes (quadratic, threshold) deliberately break the
linear response for robustness studies. Emitted files use the exact
ingest CSV formats, so everything round-trips through the parser.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import estimators, inference
from .exposure import ExposurePanel, assemble_panel
from .graph import BipartiteGraph, GraphBuildConfig, build_graph
from .ingest import (
    AssignmentTable,
    InteractionEvent,
    OutcomeTable,
    Variant,
    write_assignments,
    write_events,
    write_outcomes,
)


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class FixedDegree:
    """Every seller interacts with k distinct buyers."""

    k: int


@dataclass(frozen=True)
class ZipfDegree:
    """Seller interaction counts follow a truncated Zipf(s) law; buyers are
    drawn with replacement, so repeat interactions occur."""

    s: float = 2.0
    k_max: int = 50


@dataclass(frozen=True)
class SimConfig:
    m: int = 200
    n: int = 150
    degree: FixedDegree | ZipfDegree = FixedDegree(3)
    p_treat: float = 0.5
    alpha_mean: float = 0.0
    alpha_sd: float = 1.0
    beta_mean: float = 1.0
    beta_sd: float = 0.25
    noise_sd: float = 1.0
    noise_mode: str = "homoskedastic"  # or "exposure_scaled"
    pre_corr: float = 0.5
    violation: tuple | None = None  # ("quadratic", gamma) | ("threshold", t)
    favorite_rates: tuple[float, float] | None = None  # (control, treated)
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise SimulationError("m and n must be >= 1")
        if not 0.0 < self.p_treat < 1.0:
            raise SimulationError("p_treat must lie in (0,1)")
        if not 0.0 <= self.pre_corr <= 1.0:
            raise SimulationError("pre_corr must lie in [0,1]")
        if isinstance(self.degree, FixedDegree) and self.degree.k > self.m:
            raise SimulationError("fixed degree k cannot exceed buyer count m")
        if self.noise_mode not in ("homoskedastic", "exposure_scaled"):
            raise SimulationError(f"unknown noise_mode {self.noise_mode!r}")
        if self.violation is not None and self.violation[0] not in (
            "quadratic",
            "threshold",
        ):
            raise SimulationError(f"unknown violation {self.violation!r}")


@dataclass
class SimTruth:
    true_tau: float
    alpha: np.ndarray
    beta: np.ndarray
    graph_seed_digest: str


@dataclass
class SimulatedExperiment:
    """One synthetic experiment plus the internals needed to re-randomize."""

    config: SimConfig
    events: list[InteractionEvent]
    assignments: AssignmentTable
    outcomes: OutcomeTable
    truth: SimTruth
    graph: BipartiteGraph
    eps: np.ndarray
    y_pre: np.ndarray
    omitted_sellers: int = 0


def _seller_response(config, alpha, beta, h, eps):
    if config.violation is None:
        structural = alpha + beta * h
    elif config.violation[0] == "quadratic":
        structural = alpha + beta * h + config.violation[1] * h * h
    else:
        structural = alpha + beta * (h > config.violation[1]).astype(float)
    return structural + eps


def _draw_noise(rng, config, h):
    base = rng.normal(0.0, 1.0, len(h))
    if config.noise_mode == "exposure_scaled":
        return config.noise_sd * (0.5 + h) * base
    return config.noise_sd * base


def _make_outcomes(config, graph, assignments, truth, eps, y_pre, treatment="On"):
    from .exposure import realized_exposure

    h = realized_exposure(graph, assignments, treatment)
    # graph sellers are sorted "s%06d" ids, so index i recovers the seller number
    order = [int(s[1:]) for s in graph.sellers]
    alpha = truth.alpha[order]
    beta = truth.beta[order]
    y_in = _seller_response(config, alpha, beta, h, eps[order])
    entries = {
        seller: (float(y), float(y_pre[k]))
        for seller, y, k in zip(graph.sellers, y_in, order)
    }
    return OutcomeTable(entries, has_pre=True)


def simulate_experiment(
    config: SimConfig, out_dir: str | Path | None = None
) -> SimulatedExperiment:
    """Generate one experiment; optionally write the three ingest files plus
    truth.json into `out_dir`. Fully deterministic given config.seed."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    buyers = [f"b{i:06d}" for i in range(config.m)]
    sellers = [f"s{i:06d}" for i in range(config.n)]

    # interaction multigraph
    events: list[InteractionEvent] = []
    ts = 0
    for sid in sellers:
        if isinstance(config.degree, FixedDegree):
            chosen = rng.choice(config.m, size=config.degree.k, replace=False)
        else:
            d = min(int(rng.zipf(config.degree.s)), config.degree.k_max)
            chosen = rng.integers(0, config.m, size=d)
        for b in chosen:
            events.append(InteractionEvent(buyers[int(b)], sid, "view", ts))
            ts += 1

    # treatment assignment: independent Bernoulli(p_treat)
    treated = rng.random(config.m) < config.p_treat
    entries = {b: ("On" if t else "Off") for b, t in zip(buyers, treated)}
    variants = [
        Variant("Off", 1.0 - config.p_treat, control=True),
        Variant("On", config.p_treat, control=False),
    ]
    assignments = AssignmentTable(entries, variants)

    # potential-outcome parameters
    alpha = rng.normal(config.alpha_mean, config.alpha_sd, config.n)
    beta = rng.normal(config.beta_mean, config.beta_sd, config.n)
    alpha_z = (alpha - alpha.mean()) / alpha.std() if alpha.std() > 0 else alpha * 0.0
    y_pre = config.pre_corr * alpha_z + np.sqrt(
        max(0.0, 1.0 - config.pre_corr**2)
    ) * rng.normal(0.0, 1.0, config.n)

    graph, _ = build_graph(
        events, assignments, GraphBuildConfig(kind_filter=frozenset({"view"}))
    )
    omitted = config.n - graph.n_sellers

    edge_digest = hashlib.sha256()
    for i, seller in enumerate(graph.sellers):
        idx, w = graph.row(i)
        for j, weight in zip(idx, w):
            edge_digest.update(f"{seller},{graph.buyers[j]},{weight!r};".encode())
    truth = SimTruth(
        true_tau=float(np.mean(beta)),
        alpha=alpha,
        beta=beta,
        graph_seed_digest=edge_digest.hexdigest(),
    )

    # noise is part of the potential outcomes: drawn once, fixed across Z
    h0 = graph.matrix() @ assignments.indicator(graph.buyers, "On")
    eps_graph = _draw_noise(rng, config, h0)
    eps = np.zeros(config.n)
    eps[[int(s[1:]) for s in graph.sellers]] = eps_graph

    outcomes = _make_outcomes(config, graph, assignments, truth, eps, y_pre)

    if config.favorite_rates is not None:
        rate_c, rate_t = config.favorite_rates
        fav = []
        for ev in events:
            rate = rate_t if entries[ev.buyer_id] == "On" else rate_c
            if rng.random() < rate:
                fav.append(
                    InteractionEvent(ev.buyer_id, ev.seller_id, "favorite", ts)
                )
                ts += 1
        events = events + fav

    exp = SimulatedExperiment(
        config=config,
        events=events,
        assignments=assignments,
        outcomes=outcomes,
        truth=truth,
        graph=graph,
        eps=eps,
        y_pre=y_pre,
        omitted_sellers=omitted,
    )
    if out_dir is not None:
        write_experiment(exp, out_dir)
    return exp


def write_experiment(exp: SimulatedExperiment, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_events(out / "events.csv", exp.events)
    write_assignments(out / "assignments.csv", exp.assignments)
    write_outcomes(out / "outcomes.csv", exp.outcomes)
    payload = {
        "true_tau": exp.truth.true_tau,
        "graph_seed_digest": exp.truth.graph_seed_digest,
        "omitted_sellers": exp.omitted_sellers,
        "config": sim_config_to_dict(exp.config),
    }
    with open(out / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def rerandomize(exp: SimulatedExperiment, seed: int) -> SimulatedExperiment:
    """Fresh assignment draw over the same graph and potential outcomes.

    SimTruth is unchanged: the estimand does not depend on Z.
    """
    rng = np.random.default_rng(np.random.SeedSequence((exp.config.seed, seed)))
    buyers = [f"b{i:06d}" for i in range(exp.config.m)]
    treated = rng.random(exp.config.m) < exp.config.p_treat
    entries = {b: ("On" if t else "Off") for b, t in zip(buyers, treated)}
    assignments = AssignmentTable(entries, exp.assignments.variants)
    outcomes = _make_outcomes(
        exp.config, exp.graph, assignments, exp.truth, exp.eps, exp.y_pre
    )
    return replace(exp, assignments=assignments, outcomes=outcomes)


def experiment_panel(
    exp: SimulatedExperiment, treatment: str = "On"
) -> ExposurePanel:
    panel, _ = assemble_panel(exp.graph, exp.assignments, exp.outcomes, treatment)
    return panel


# --- validation study -----------------------------------------------------


@dataclass
class ValidationRow:
    estimator: str
    method: str
    n_ok: int
    n_failed: int
    mean_tau: float
    bias: float
    mc_sd: float
    coverage: float
    median_ci_width: float


@dataclass
class ValidationTable:
    true_tau: float
    sim_replications: int
    rows: list[ValidationRow] = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(
                "estimator,method,n_ok,n_failed,mean_tau,bias,mc_sd,"
                "coverage,median_ci_width\n"
            )
            for r in self.rows:
                fh.write(
                    f"{r.estimator},{r.method},{r.n_ok},{r.n_failed},"
                    f"{r.mean_tau!r},{r.bias!r},{r.mc_sd!r},"
                    f"{r.coverage!r},{r.median_ci_width!r}\n"
                )

    def __str__(self):
        header = (
            f"{'estimator':<10}{'method':<15}{'bias':>12}{'mc_sd':>12}"
            f"{'coverage':>10}{'ci_width':>12}{'failed':>8}"
        )
        lines = [f"true_tau = {self.true_tau:.6f}", header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.estimator:<10}{r.method:<15}{r.bias:>12.5f}{r.mc_sd:>12.5f}"
                f"{r.coverage:>10.3f}{r.median_ci_width:>12.5f}{r.n_failed:>8d}"
            )
        return "\n".join(lines)


def run_validation(
    config: SimConfig,
    estimator_ids: Sequence[str],
    methods: Sequence[str],
    sim_replications: int = 100,
    ci_replications: int = 500,
    level: float = 0.95,
    seed: int = 0,
) -> ValidationTable:
    """Bias / variance / coverage study: one base experiment, then
    `sim_replications` fresh randomizations over the same graph, running
    the full estimator + CI pipeline each time."""
    if sim_replications < 1:
        raise SimulationError("sim_replications must be >= 1")
    if not estimator_ids:
        raise SimulationError("at least one estimator required")
    for mid in methods:
        if mid not in ("bootstrap", "randomization"):
            raise SimulationError(f"unknown inference method {mid!r}")
    base = simulate_experiment(config)
    true_tau = base.truth.true_tau
    results: dict[tuple[str, str], dict[str, list]] = {
        (e, m): {"tau": [], "width": [], "covered": [], "failed": 0}
        for e in estimator_ids
        for m in methods
    }
    for rep in range(sim_replications):
        exp = rerandomize(base, seed=seed * 1_000_003 + rep)
        panel = experiment_panel(exp)
        for est in estimator_ids:
            for method in methods:
                bucket = results[(est, method)]
                try:
                    if method == "bootstrap":
                        ci = inference.bootstrap_ci(
                            panel,
                            est,
                            replications=ci_replications,
                            seed=seed * 1_000_003 + rep,
                            level=level,
                        )
                    else:
                        ci = inference.randomization_ci(
                            exp.graph,
                            exp.assignments,
                            exp.outcomes,
                            est,
                            replications=ci_replications,
                            seed=seed * 1_000_003 + rep,
                            level=level,
                        )
                except (ValueError, estimators.EstimationError):
                    bucket["failed"] += 1
                    continue
                bucket["tau"].append(ci.point.tau_hat)
                bucket["width"].append(ci.width)
                bucket["covered"].append(ci.ci_low <= true_tau <= ci.ci_high)
    table = ValidationTable(true_tau=true_tau, sim_replications=sim_replications)
    for est in estimator_ids:
        for method in methods:
            bucket = results[(est, method)]
            taus = np.array(bucket["tau"])
            n_ok = len(taus)
            table.rows.append(
                ValidationRow(
                    estimator=est,
                    method=method,
                    n_ok=n_ok,
                    n_failed=bucket["failed"],
                    mean_tau=float(taus.mean()) if n_ok else float("nan"),
                    bias=float(taus.mean() - true_tau) if n_ok else float("nan"),
                    mc_sd=float(taus.std(ddof=1)) if n_ok > 1 else float("nan"),
                    coverage=float(np.mean(bucket["covered"])) if n_ok else float("nan"),
                    median_ci_width=float(np.median(bucket["width"]))
                    if n_ok
                    else float("nan"),
                )
            )
    return table


# --- JSON config (CLI surface) -------------------------------------------


def sim_config_to_dict(config: SimConfig) -> dict:
    if isinstance(config.degree, FixedDegree):
        degree = {"kind": "fixed", "k": config.degree.k}
    else:
        degree = {"kind": "zipf", "s": config.degree.s, "k_max": config.degree.k_max}
    violation = None
    if config.violation is not None:
        kind, value = config.violation
        violation = {"kind": kind, ("gamma" if kind == "quadratic" else "t"): value}
    return {
        "m": config.m,
        "n": config.n,
        "degree": degree,
        "p_treat": config.p_treat,
        "alpha": [config.alpha_mean, config.alpha_sd],
        "beta": [config.beta_mean, config.beta_sd],
        "noise_sd": config.noise_sd,
        "noise_mode": config.noise_mode,
        "pre_corr": config.pre_corr,
        "violation": violation,
        "favorite_rates": list(config.favorite_rates)
        if config.favorite_rates
        else None,
        "seed": config.seed,
    }


def sim_config_from_dict(payload: dict) -> SimConfig:
    degree_raw = payload.get("degree", {"kind": "fixed", "k": 3})
    if degree_raw["kind"] == "fixed":
        degree = FixedDegree(int(degree_raw["k"]))
    elif degree_raw["kind"] == "zipf":
        degree = ZipfDegree(float(degree_raw["s"]), int(degree_raw["k_max"]))
    else:
        raise SimulationError(f"unknown degree kind {degree_raw['kind']!r}")
    violation = None
    v_raw = payload.get("violation")
    if v_raw is not None:
        if v_raw["kind"] == "quadratic":
            violation = ("quadratic", float(v_raw["gamma"]))
        elif v_raw["kind"] == "threshold":
            violation = ("threshold", float(v_raw["t"]))
        else:
            raise SimulationError(f"unknown violation kind {v_raw['kind']!r}")
    alpha = payload.get("alpha", [0.0, 1.0])
    beta = payload.get("beta", [1.0, 0.25])
    fav = payload.get("favorite_rates")
    return SimConfig(
        m=int(payload["m"]),
        n=int(payload["n"]),
        degree=degree,
        p_treat=float(payload.get("p_treat", 0.5)),
        alpha_mean=float(alpha[0]),
        alpha_sd=float(alpha[1]),
        beta_mean=float(beta[0]),
        beta_sd=float(beta[1]),
        noise_sd=float(payload.get("noise_sd", 1.0)),
        noise_mode=payload.get("noise_mode", "homoskedastic"),
        pre_corr=float(payload.get("pre_corr", 0.5)),
        violation=violation,
        favorite_rates=tuple(fav) if fav else None,
        seed=int(payload.get("seed", 0)),
    )


def load_sim_config(path) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return sim_config_from_dict(json.load(fh))
