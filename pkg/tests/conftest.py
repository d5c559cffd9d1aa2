import itertools

import numpy as np
import pytest

from bipartite_ab.graph import BipartiteGraph
from bipartite_ab.ingest import AssignmentTable, InteractionEvent, Variant


def make_events(rows):
    """rows: iterable of (buyer, seller, kind, ts)."""
    return [InteractionEvent(b, s, k, t) for b, s, k, t in rows]


def two_variant_assignments(on_buyers, off_buyers, p_on=0.5):
    entries = {b: "On" for b in on_buyers}
    entries.update({b: "Off" for b in off_buyers})
    return AssignmentTable(
        entries,
        [Variant("Off", 1 - p_on, control=True), Variant("On", p_on)],
    )


def random_sparse_graph(rng, m, n, min_deg=2, max_deg=4):
    """Random row-normalized graph with distinct per-seller buyer sets."""
    indptr, bidx, wts = [0], [], []
    for _ in range(n):
        d = int(rng.integers(min_deg, max_deg + 1))
        cols = sorted(rng.choice(m, size=d, replace=False).tolist())
        raw = rng.random(d) + 0.2
        raw = raw / raw.sum()
        bidx += cols
        wts += raw.tolist()
        indptr.append(len(bidx))
    return BipartiteGraph(
        [f"b{i}" for i in range(m)],
        [f"s{i}" for i in range(n)],
        indptr,
        bidx,
        wts,
    )


def enumerate_assignments(m):
    """All 2^m treatment vectors as float arrays."""
    for bits in itertools.product([0.0, 1.0], repeat=m):
        yield np.array(bits)


def assignment_probability(z, p):
    k = int(z.sum())
    return p**k * (1 - p) ** (len(z) - k)


@pytest.fixture
def rng():
    return np.random.default_rng(20240819)
