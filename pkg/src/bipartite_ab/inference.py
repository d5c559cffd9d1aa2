"""Resampling inference and the exact pairwise variance estimator.

Three methods:

* bootstrap_ci: percentile bootstrap over outcome units (panel rows).
* randomization_ci: Monte Carlo re-draws of the assignment vector; the
  estimator is recomputed per draw with realized outcomes held fixed and
  the interval is point +/- z * sd(draws).
* pairwise_variance: the O(n^2) design-based variance estimator
  V = (1/n^2) sum_ij Y_i Y_j R_ij(H_i, H_j), where each R_ij is the
  affine-in-(H_i H_j, H_i, H_j, 1) weighting whose design expectation
  matches Cov(tau_i, tau_j) under the linear response model. Guarded by
  an n_max limit; meant for validation at small n.

All methods are pure functions of (inputs, seed, replications): each
replicate derives its generator from (seed, replicate index).
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .estimators import (
    ESTIMATOR_IDS,
    EstimationError,
    PointEstimate,
    crerl_estimate,
    point_estimate,
)
from .exposure import ExposurePanel, assemble_panel, effective_treatment_prob
from .graph import BipartiteGraph
from .ingest import AssignmentTable, OutcomeTable

MIN_REPLICATIONS = 200
DEFAULT_REPLICATIONS = 1000
PAIRWISE_N_MAX = 5000
EPS_DET = 1e-12


class InferenceError(ValueError):
    pass


class BootstrapFailureError(InferenceError):
    pass


class PairwiseSizeError(InferenceError):
    pass


class DegeneratePairError(InferenceError):
    pass


@dataclass
class IntervalEstimate:
    point: PointEstimate
    ci_low: float
    ci_high: float
    level: float
    method: str
    replications: int
    seed: int

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise InferenceError(f"level {self.level} outside (0,1)")
        if self.ci_low > self.ci_high:
            raise InferenceError("ci_low exceeds ci_high")

    @property
    def width(self) -> float:
        return self.ci_high - self.ci_low


def _replicate_rngs(seed: int, replications: int):
    return [
        np.random.default_rng(child)
        for child in np.random.SeedSequence(seed).spawn(replications)
    ]


def _validate_common(estimator_id: str, replications: int, level: float):
    if estimator_id not in ESTIMATOR_IDS:
        raise InferenceError(f"unknown estimator {estimator_id!r}")
    if replications < MIN_REPLICATIONS:
        raise InferenceError(
            f"replications must be >= {MIN_REPLICATIONS}, got {replications}"
        )
    if not 0.0 < level < 1.0:
        raise InferenceError(f"level {level} outside (0,1)")


def bootstrap_ci(
    panel: ExposurePanel,
    estimator_id: str,
    replications: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    level: float = 0.95,
) -> IntervalEstimate:
    """Percentile bootstrap resampling outcome units with replacement.

    Each replicate redraws n panel rows and recomputes the estimator;
    estimator failures in more than 1% of replicates abort the interval.
    """
    _validate_common(estimator_id, replications, level)
    point = point_estimate(panel, estimator_id)
    n = panel.n
    taus = np.empty(replications)
    failures = 0
    for r, rng in enumerate(_replicate_rngs(seed, replications)):
        idx = rng.integers(0, n, n)
        try:
            taus[r] = point_estimate(panel.subset(idx), estimator_id).tau_hat
        except (EstimationError, ValueError):
            taus[r] = np.nan
            failures += 1
    if failures > 0.01 * replications:
        raise BootstrapFailureError(
            f"estimator failed in {failures}/{replications} bootstrap replicates"
        )
    good = taus[~np.isnan(taus)]
    alpha = 1.0 - level
    lo, hi = np.quantile(good, [alpha / 2.0, 1.0 - alpha / 2.0])
    return IntervalEstimate(
        point=point,
        ci_low=float(lo),
        ci_high=float(hi),
        level=level,
        method="bootstrap",
        replications=replications,
        seed=seed,
    )


def randomization_ci(
    graph: BipartiteGraph,
    assignments: AssignmentTable,
    outcomes: OutcomeTable,
    estimator_id: str,
    replications: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    level: float = 0.95,
    treatment: str | None = None,
    control: str | None = None,
    allow_missing_outcomes: bool = False,
) -> IntervalEstimate:
    """Monte Carlo randomization interval.

    Fresh assignment vectors are drawn from the declared design, the
    exposures recomputed per draw, and the estimator re-evaluated with the
    realized outcomes held fixed; the sd of these draws yields a symmetric
    normal-quantile interval around the point estimate.
    """
    _validate_common(estimator_id, replications, level)
    if treatment is None:
        non_control = [v for v in assignments.labels if v != assignments.control_label]
        if len(non_control) != 1:
            raise InferenceError("treatment label required for multi-variant designs")
        treatment = non_control[0]
    panel, _ = assemble_panel(
        graph,
        assignments,
        outcomes,
        treatment,
        control=control,
        allow_missing_outcomes=allow_missing_outcomes,
    )
    point = point_estimate(panel, estimator_id)
    p = effective_treatment_prob(assignments, treatment, control)
    matrix = graph.matrix()
    m = graph.n_buyers
    rows = panel.graph_rows
    taus = np.empty(replications)
    lam = point.lam
    for r, rng in enumerate(_replicate_rngs(seed, replications)):
        z = (rng.random(m) < p).astype(np.float64)
        h = (matrix @ z)[rows]
        draw = ExposurePanel(
            seller_ids=panel.seller_ids,
            h=h,
            e_h=panel.e_h,
            var_h=panel.var_h,
            y_in=panel.y_in,
            y_pre=panel.y_pre,
            p=panel.p,
            graph_rows=rows,
            treatment=panel.treatment,
            control=panel.control,
        )
        if estimator_id == "crerl":
            taus[r] = crerl_estimate(draw, lam=lam).tau_hat
        else:
            taus[r] = point_estimate(draw, estimator_id).tau_hat
    sd = float(np.std(taus, ddof=1))
    z_crit = float(norm.ppf(0.5 + level / 2.0))
    return IntervalEstimate(
        point=point,
        ci_low=point.tau_hat - z_crit * sd,
        ci_high=point.tau_hat + z_crit * sd,
        level=level,
        method="randomization",
        replications=replications,
        seed=seed,
    )


# --- pairwise design-based variance estimator -----------------------------


@dataclass
class JointMomentTable:
    """Exact exposure moments under independent Bernoulli(p) assignment.

    `uni[i, k]` holds E[H_i^k] for k = 0..4 (panel-indexed); `pairs` maps
    (i, j) with i < j to the 3x3 table T[a, b] = E[H_i^a H_j^b] and is
    populated only for pairs with overlapping buyer neighborhoods — for
    disjoint pairs the matched weighting is identically zero.
    """

    p: float
    uni: np.ndarray
    pairs: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)


def _uni_moments(weights: np.ndarray, p: float) -> np.ndarray:
    """E[(sum_r w_r Z_r)^k], k = 0..4, by per-buyer accumulation."""
    mu = np.zeros(5)
    mu[0] = 1.0
    binom = [[1], [1, 1], [1, 2, 1], [1, 3, 3, 1], [1, 4, 6, 4, 1]]
    for u in weights:
        upow = [1.0, u, u * u, u**3, u**4]
        new = np.zeros(5)
        for k in range(5):
            acc = mu[k]  # j = 0 term, E[Z^0] = 1
            for j in range(1, k + 1):
                acc += binom[k][j] * upow[j] * p * mu[k - j]
            new[k] = acc
        mu = new
    return mu


def _pair_moments(u: np.ndarray, v: np.ndarray, p: float) -> np.ndarray:
    """T[a, b] = E[H_i^a H_j^b], a, b <= 2, over shared Bernoulli draws."""
    T = np.zeros((3, 3))
    T[0, 0] = 1.0
    binom = [[1], [1, 1], [1, 2, 1]]
    for ur, vr in zip(u, v):
        upow = [1.0, ur, ur * ur]
        vpow = [1.0, vr, vr * vr]
        new = np.zeros((3, 3))
        for a in range(3):
            for b in range(3):
                acc = 0.0
                for k in range(a + 1):
                    for l in range(b + 1):
                        ez = 1.0 if k + l == 0 else p
                        acc += (
                            binom[a][k]
                            * binom[b][l]
                            * upow[k]
                            * vpow[l]
                            * ez
                            * T[a - k, b - l]
                        )
                new[a, b] = acc
        T = new
    return T


def exposure_moment_table(
    graph: BipartiteGraph, p: float, rows: np.ndarray
) -> JointMomentTable:
    """Univariate moments for every panel unit plus joint moments for every
    pair of units sharing at least one buyer.

    `rows` maps panel index -> graph row, as in ExposurePanel.graph_rows.
    """
    n = len(rows)
    uni = np.empty((n, 5))
    supports: list[dict[int, float]] = []
    for k, i in enumerate(rows):
        idx, w = graph.row(int(i))
        uni[k] = _uni_moments(w, p)
        supports.append(dict(zip(idx.tolist(), w.tolist())))

    buyer_to_units: dict[int, list[int]] = {}
    for k, sup in enumerate(supports):
        for b in sup:
            buyer_to_units.setdefault(b, []).append(k)
    overlapping: set[tuple[int, int]] = set()
    for units in buyer_to_units.values():
        for a, b in itertools.combinations(units, 2):
            overlapping.add((a, b) if a < b else (b, a))

    pairs: dict[tuple[int, int], np.ndarray] = {}
    for i, j in sorted(overlapping):
        union = sorted(set(supports[i]) | set(supports[j]))
        u = np.array([supports[i].get(b, 0.0) for b in union])
        v = np.array([supports[j].get(b, 0.0) for b in union])
        pairs[(i, j)] = _pair_moments(u, v, p)
    return JointMomentTable(p=p, uni=uni, pairs=pairs)


def _diag_weighting(mu: np.ndarray) -> tuple[np.ndarray, bool]:
    """Coefficients (a, b, c) of R(H) = a H^2 + b H + c with
    E[H^g R] matching the variance terms of Y W for g = 0, 1, 2.

    When the exposure distribution spans fewer than three points (e.g. a
    single-buyer seller with Bernoulli exposure) the system is singular;
    the minimum-norm least-squares fit is returned with a degeneracy flag.
    """
    m1, v = mu[1], mu[2] - mu[1] ** 2
    M = np.array(
        [
            [mu[2], mu[1], mu[0]],
            [mu[3], mu[2], mu[1]],
            [mu[4], mu[3], mu[2]],
        ]
    )
    e_h_c2 = mu[3] - 2 * m1 * mu[2] + m1**2 * mu[1]  # E[H (H-m)^2]
    e_h2_c2 = mu[4] - 2 * m1 * mu[3] + m1**2 * mu[2]  # E[H^2 (H-m)^2]
    rhs = np.array([1.0 / v, e_h_c2 / v**2, e_h2_c2 / v**2 - 1.0])
    try:
        sol = np.linalg.solve(M, rhs)
        if np.all(np.isfinite(sol)) and np.linalg.cond(M) < 1e12:
            return sol, False
    except np.linalg.LinAlgError:
        pass
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    return sol, True


def _pair_weighting(T: np.ndarray, mi: float, mj: float, vi: float, vj: float):
    """Coefficients of R(H_i, H_j) = a H_i H_j + b H_i + c H_j + d whose
    expectation against {1, H_j, H_i, H_i H_j} matches the covariance
    terms of (Y_i W_i, Y_j W_j). Returns None when the 4x4 system is
    numerically singular (degenerate pair)."""
    gs = [(0, 0), (0, 1), (1, 0), (1, 1)]
    bs = [(1, 1), (1, 0), (0, 1), (0, 0)]
    M = np.array([[T[g[0] + b[0], g[1] + b[1]] for b in bs] for g in gs])
    denom = vi * vj
    cov_ww = (T[1, 1] - mi * mj) / denom
    cov_w_hw = (T[1, 2] - mj * T[1, 1] - mi * T[0, 2] + mi * mj * T[0, 1]) / denom
    cov_hw_w = (T[2, 1] - mi * T[1, 1] - mj * T[2, 0] + mi * mj * T[1, 0]) / denom
    cov_hw_hw = (T[2, 2] - mi * T[1, 2] - mj * T[2, 1] + mi * mj * T[1, 1]) / denom - 1.0
    rhs = np.array([cov_ww, cov_w_hw, cov_hw_w, cov_hw_hw])
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    return sol


@dataclass
class PairwiseVariance:
    value: float
    n_units: int
    n_pairs_evaluated: int
    degenerate_pairs: list[tuple[str, str]]
    policy: str
    degenerate_units: list[str] = field(default_factory=list)


def pairwise_variance(
    panel: ExposurePanel,
    joint_moments: JointMomentTable,
    policy: str = "merge",
    eps_det: float = EPS_DET,
    n_max: int = PAIRWISE_N_MAX,
    force: bool = False,
) -> PairwiseVariance:
    """Design-based variance estimate via pair-level moment matching.

    Pairs whose exposure covariance matrix is (near) singular — e.g. two
    sellers with identically weighted edges — are flagged and handled per
    `policy`: 'merge' adds a conservative product-of-sds upper bound,
    'drop' zeroes them with a warning, 'strict' raises. The quadratic cost
    is guarded by `n_max` (use the bootstrap beyond it).
    """
    if policy not in ("merge", "drop", "strict"):
        raise InferenceError(f"unknown degeneracy policy {policy!r}")
    n = panel.n
    if n > n_max and not force:
        raise PairwiseSizeError(
            f"n={n} exceeds n_max={n_max}; the pairwise estimator is O(n^2), "
            "use bootstrap_ci instead (or pass force=True)"
        )
    uni = joint_moments.uni
    if uni.shape[0] != n:
        raise InferenceError("moment table does not match panel size")
    y = panel.y_in
    h = panel.h

    diag_vals = np.empty(n)
    degenerate_units: list[str] = []
    for i in range(n):
        (a, b, c), singular = _diag_weighting(uni[i])
        if singular:
            degenerate_units.append(panel.seller_ids[i])
            if policy == "strict":
                raise DegeneratePairError(
                    f"unit {panel.seller_ids[i]!r} has a degenerate exposure "
                    "distribution (fewer than three support points)"
                )
        diag_vals[i] = y[i] * y[i] * (a * h[i] * h[i] + b * h[i] + c)
    total = float(np.sum(diag_vals))
    unit_sd = np.sqrt(np.maximum(diag_vals, 0.0))

    degenerate: list[tuple[str, str]] = []
    evaluated = 0
    for (i, j), T in joint_moments.pairs.items():
        mi, mj = uni[i, 1], uni[j, 1]
        vi = uni[i, 2] - mi * mi
        vj = uni[j, 2] - mj * mj
        cov = T[1, 1] - mi * mj
        det = vi * vj - cov * cov
        sol = _pair_weighting(T, mi, mj, vi, vj) if det > eps_det else None
        if sol is None:
            pair_ids = (panel.seller_ids[i], panel.seller_ids[j])
            degenerate.append(pair_ids)
            if policy == "strict":
                raise DegeneratePairError(
                    f"degenerate exposure pair {pair_ids!r}: det(Sigma) <= {eps_det}"
                )
            if policy == "merge":
                total += 2.0 * unit_sd[i] * unit_sd[j]
            continue
        a, b, c, d = sol
        total += 2.0 * y[i] * y[j] * (a * h[i] * h[j] + b * h[i] + c * h[j] + d)
        evaluated += 1
    if degenerate and policy == "drop":
        warnings.warn(
            f"{len(degenerate)} degenerate exposure pairs dropped from the "
            "variance estimate",
            stacklevel=2,
        )
    return PairwiseVariance(
        value=total / (n * n),
        n_units=n,
        n_pairs_evaluated=evaluated,
        degenerate_pairs=degenerate,
        policy=policy,
        degenerate_units=degenerate_units,
    )


def pairwise_variance_ci(
    panel: ExposurePanel,
    joint_moments: JointMomentTable,
    level: float = 0.95,
    **kwargs,
) -> IntervalEstimate:
    """Normal-quantile interval for the ERL estimate using the pairwise
    variance estimate (clipped at zero)."""
    from .estimators import erl_estimate

    point = erl_estimate(panel)
    pv = pairwise_variance(panel, joint_moments, **kwargs)
    sd = float(np.sqrt(max(pv.value, 0.0)))
    z_crit = float(norm.ppf(0.5 + level / 2.0))
    return IntervalEstimate(
        point=point,
        ci_low=point.tau_hat - z_crit * sd,
        ci_high=point.tau_hat + z_crit * sd,
        level=level,
        method="pairwise",
        replications=0,
        seed=0,
    )


def unit_variance_terms(
    panel: ExposurePanel, joint_moments: JointMomentTable
) -> np.ndarray:
    """Per-unit variance estimates Y_i^2 R_i(H_i); pairwise_variance reduces
    to (1/n^2) times their sum when buyer neighborhoods are disjoint."""
    out = np.empty(panel.n)
    for i in range(panel.n):
        (a, b, c), _ = _diag_weighting(joint_moments.uni[i])
        h = panel.h[i]
        out[i] = panel.y_in[i] ** 2 * (a * h * h + b * h + c)
    return out
