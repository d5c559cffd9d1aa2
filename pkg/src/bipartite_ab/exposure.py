"""Exposure scores and their design moments under Bernoulli randomization.

For seller i with row-normalized weights w_ir, the realized exposure is
h_i = sum_r w_ir * 1[variant(r) = treatment]. With each buyer treated
independently with probability p, the design moments are

    E[H_i]   = p * sum_r w_ir = p
    Var[H_i] = p (1 - p) * sum_r w_ir^2

On a two-variant subgraph drawn from a multi-variant experiment the same
formulas apply with the conditional probability p = p_t / (p_t + p_c).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import BipartiteGraph
from .ingest import AssignmentTable, IngestError, OutcomeTable

EPS_VAR = 1e-12


class ExposureError(ValueError):
    pass


class MissingOutcomeError(ExposureError):
    def __init__(self, sellers):
        preview = ", ".join(sellers[:5])
        suffix = "" if len(sellers) <= 5 else f" (+{len(sellers) - 5} more)"
        super().__init__(
            f"{len(sellers)} graph sellers have no outcome row: {preview}{suffix}; "
            "pass allow_missing_outcomes=True to drop them"
        )
        self.sellers = sellers


def effective_treatment_prob(
    assignments: AssignmentTable, treatment: str, control: str | None = None
) -> float:
    """Marginal treatment probability, or the conditional probability
    p_t/(p_t+p_c) when analyzing a control-vs-treatment subgraph."""
    p_t = assignments.probability(treatment)
    if control is None:
        p = p_t
    else:
        if control == treatment:
            raise ExposureError("control and treatment must differ")
        p_c = assignments.probability(control)
        p = p_t / (p_t + p_c)
    if not 0.0 < p < 1.0:
        raise ExposureError(f"treatment probability {p} outside (0,1)")
    return p


def realized_exposure(
    graph: BipartiteGraph, assignments: AssignmentTable, treatment: str
) -> np.ndarray:
    """h_i = weighted share of seller i's interactions from treated buyers."""
    z = assignments.indicator(graph.buyers, treatment)
    if treatment not in assignments.labels:
        raise IngestError(f"unknown variant {treatment!r}")
    return graph.matrix() @ z


def design_moments(
    graph: BipartiteGraph,
    assignments: AssignmentTable,
    treatment: str,
    control: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (E[H], Var[H]) per seller under independent Bernoulli
    assignment with the design's treatment probability."""
    p = effective_treatment_prob(assignments, treatment, control)
    e_h = p * graph.row_sums()
    var_h = p * (1.0 - p) * graph.row_sumsq()
    return e_h, var_h


@dataclass
class ExposurePanel:
    """Per-seller vectors, index-aligned with `graph_rows` into the source graph."""

    seller_ids: list[str]
    h: np.ndarray
    e_h: np.ndarray
    var_h: np.ndarray
    y_in: np.ndarray
    y_pre: np.ndarray | None
    p: float
    graph_rows: np.ndarray
    treatment: str
    control: str | None = None

    def __post_init__(self):
        n = len(self.seller_ids)
        for name in ("h", "e_h", "var_h", "y_in", "graph_rows"):
            if len(getattr(self, name)) != n:
                raise ExposureError(f"panel vector {name} has wrong length")
        if self.y_pre is not None and len(self.y_pre) != n:
            raise ExposureError("panel vector y_pre has wrong length")
        if np.any(self.h < -1e-12) or np.any(self.h > 1.0 + 1e-12):
            raise ExposureError("exposure outside [0,1]")

    @property
    def n(self) -> int:
        return len(self.seller_ids)

    def subset(self, idx: np.ndarray) -> "ExposurePanel":
        return ExposurePanel(
            seller_ids=[self.seller_ids[i] for i in idx],
            h=self.h[idx],
            e_h=self.e_h[idx],
            var_h=self.var_h[idx],
            y_in=self.y_in[idx],
            y_pre=None if self.y_pre is None else self.y_pre[idx],
            p=self.p,
            graph_rows=self.graph_rows[idx],
            treatment=self.treatment,
            control=self.control,
        )


@dataclass
class DegenerateReport:
    """Sellers excluded from the panel, with the reason for each."""

    excluded: list[tuple[str, str]]

    @property
    def n_missing_outcome(self) -> int:
        return sum(1 for _, r in self.excluded if r == "no outcome row")

    @property
    def n_zero_variance(self) -> int:
        return sum(1 for _, r in self.excluded if r == "zero variance")


def assemble_panel(
    graph: BipartiteGraph,
    assignments: AssignmentTable,
    outcomes: OutcomeTable,
    treatment: str,
    control: str | None = None,
    allow_missing_outcomes: bool = False,
    eps_var: float = EPS_VAR,
) -> tuple[ExposurePanel, DegenerateReport]:
    """Join exposures with outcomes, excluding degenerate units.

    Units with Var[H] <= eps_var carry no identifying variation and are
    split out into the report; sellers without an outcome row are a hard
    error unless `allow_missing_outcomes` drops them (imputing 0 would
    bias the estimators).
    """
    h = realized_exposure(graph, assignments, treatment)
    e_h, var_h = design_moments(graph, assignments, treatment, control)
    p = effective_treatment_prob(assignments, treatment, control)

    missing = [s for s in graph.sellers if s not in outcomes]
    if missing and not allow_missing_outcomes:
        raise MissingOutcomeError(missing)

    excluded: list[tuple[str, str]] = []
    rows: list[int] = []
    for i, seller in enumerate(graph.sellers):
        if seller not in outcomes:
            excluded.append((seller, "no outcome row"))
        elif var_h[i] <= eps_var:
            excluded.append((seller, "zero variance"))
        else:
            rows.append(i)
    if not rows:
        raise ExposureError("no usable outcome units after exclusions")
    rows_arr = np.asarray(rows, dtype=np.int64)
    kept_sellers = [graph.sellers[i] for i in rows]
    y_in = np.array([outcomes.y_in(s) for s in kept_sellers])
    y_pre = None
    if outcomes.has_pre:
        y_pre = np.array(
            [np.nan if outcomes.y_pre(s) is None else outcomes.y_pre(s) for s in kept_sellers]
        )
    panel = ExposurePanel(
        seller_ids=kept_sellers,
        h=h[rows_arr],
        e_h=e_h[rows_arr],
        var_h=var_h[rows_arr],
        y_in=y_in,
        y_pre=y_pre,
        p=p,
        graph_rows=rows_arr,
        treatment=treatment,
        control=control,
    )
    return panel, DegenerateReport(excluded)


def exposure_histogram(
    h: Sequence[float], bins: int = 50
) -> tuple[np.ndarray, np.ndarray]:
    """Counts over `bins` uniform bins on [0,1]; h == 1 lands in the last bin."""
    counts, edges = np.histogram(np.asarray(h), bins=bins, range=(0.0, 1.0))
    return counts, edges


def write_exposure_histogram(h, path, bins: int = 50):
    counts, edges = exposure_histogram(h, bins)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("bin_lower,bin_upper,count\n")
        for i, c in enumerate(counts):
            fh.write(f"{edges[i]!r},{edges[i + 1]!r},{int(c)}\n")
