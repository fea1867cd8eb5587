"""Structural entropy of component partitions and its loss over time.

For a partition of ``N`` nodes into components of sizes ``c_i``::

    H = -sum_i (c_i / N) * ln(c_i / N)  =  ln N - (1 / N) * sum_i c_i ln c_i

The second form is what makes incremental updates cheap: merging components
of sizes ``a`` and ``b`` only changes one term of the sum. All logarithms
are natural.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Collection, Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptyDatasetError, ParameterError
from .graph import ComponentPartition, EdgeKind, Mode, build_graph
from .ingest import Dataset
from .model import Layer

__all__ = [
    "ProbabilityVector",
    "EntropyReport",
    "SeriesPoint",
    "EntropySeries",
    "Correlation",
    "RunningEntropy",
    "structural_entropy",
    "entropy_from_sizes",
    "entropy_loss",
    "entropy_series",
    "growth_correlation",
    "write_series_csv",
    "TWO_DAYS",
    "SERIES_COLUMNS",
]

TWO_DAYS = 172_800
SERIES_COLUMNS = (
    "bucket_index",
    "bucket_start_ts",
    "h_before",
    "h_after",
    "loss",
    "cumulative_loss",
    "new_users",
)


@dataclass(frozen=True)
class ProbabilityVector:
    """Component-size shares ``c_i / N`` kept as exact rationals."""

    sizes: tuple[int, ...]
    total: int

    @property
    def entries(self) -> list[Fraction]:
        return [Fraction(c, self.total) for c in self.sizes]


@dataclass(frozen=True)
class EntropyReport:
    h: float
    n_components: int
    n_nodes: int
    vector: ProbabilityVector
    degenerate: bool = False


def _clean_sizes(sizes: Iterable[int]) -> tuple[int, ...]:
    out = tuple(sorted((int(c) for c in sizes), reverse=True))
    if out and out[-1] <= 0:
        raise ParameterError("component sizes must be positive")
    return out


def entropy_from_sizes(sizes: Iterable[int]) -> float:
    """Structural entropy (nats) of a component-size multiset."""
    sizes = [c for c in sizes]
    n = sum(sizes)
    if n == 0:
        return 0.0
    h = -math.fsum((c / n) * math.log(c / n) for c in sizes)
    return h if h > 0.0 else 0.0


def structural_entropy(partition: ComponentPartition | Iterable[int]) -> EntropyReport:
    """Entropy report for a partition or a plain iterable of component sizes.

    An empty partition is reported as ``h = 0`` with ``degenerate=True``.
    """
    if isinstance(partition, ComponentPartition):
        sizes = _clean_sizes(partition.sizes.values())
    else:
        sizes = _clean_sizes(partition)
    n = sum(sizes)
    vec = ProbabilityVector(sizes, n)
    if n == 0:
        return EntropyReport(0.0, 0, 0, vec, degenerate=True)
    return EntropyReport(entropy_from_sizes(sizes), len(sizes), n, vec)


def entropy_loss(before: EntropyReport | float, after: EntropyReport | float) -> float:
    """``H(before) - H(after)``; positive values mean privacy was lost."""
    hb = before.h if isinstance(before, EntropyReport) else float(before)
    ha = after.h if isinstance(after, EntropyReport) else float(after)
    return hb - ha


class RunningEntropy:
    """Entropy maintained under node additions and component merges.

    Tracks ``S = sum c ln c`` with Kahan compensation so that ``H`` stays
    within ~1e-12 of a from-scratch evaluation over long edge sequences.
    """

    __slots__ = ("n", "_s", "_comp")

    def __init__(self, sizes: Iterable[int] = ()) -> None:
        self.n = 0
        self._s = 0.0
        self._comp = 0.0
        for c in sizes:
            self.n += c
            self._add(c * math.log(c))

    def _add(self, x: float) -> None:
        y = x - self._comp
        t = self._s + y
        self._comp = (t - self._s) - y
        self._s = t

    def add_singletons(self, k: int = 1) -> None:
        self.n += k

    def merge(self, a: int, b: int) -> None:
        c = a + b
        self._add(c * math.log(c) - a * math.log(a) - b * math.log(b))

    @property
    def h(self) -> float:
        if self.n == 0:
            return 0.0
        h = math.log(self.n) - self._s / self.n
        return h if h > 0.0 else 0.0


@dataclass(frozen=True)
class SeriesPoint:
    bucket_index: int
    bucket_start_ts: int
    h_before: float
    h_after: float
    loss: float
    new_users: int
    n_nodes: int


@dataclass(frozen=True)
class EntropySeries:
    mode: Mode
    bucket_seconds: int
    origin_ts: int
    node_convention: str
    points: tuple[SeriesPoint, ...]
    cumulative: tuple[tuple[int, float], ...]

    @property
    def losses(self) -> list[float]:
        return [p.loss for p in self.points]

    @property
    def new_users(self) -> list[int]:
        return [p.new_users for p in self.points]

    @property
    def total_loss(self) -> float:
        return self.cumulative[-1][1] if self.cumulative else 0.0


def _bucket_of(ts: int, origin: int, width: int) -> int:
    return (ts - origin) // width


def entropy_series(
    dataset: Dataset,
    mode: Mode | str = Mode.WEAK,
    bucket_seconds: int = TWO_DAYS,
    edge_filter: Collection[EdgeKind | str] | None = None,
    nodes: str = "pre",
    layers: Collection[Layer] | None = None,
) -> EntropySeries:
    """Per-bucket entropy before/after each bucket's edges, plus cumulative loss.

    Buckets are ``bucket_seconds`` wide and start at the earliest successful
    transaction. Accounts join the node set in the bucket of their
    ``first_seen`` timestamp; accounts never seen in a successful transaction
    are left out. With ``nodes="pre"`` the bucket's new accounts are already
    present in ``h_before`` so the loss reflects linking only; with
    ``nodes="post"`` they arrive together with the edges.
    """
    mode = Mode(mode)
    if not isinstance(bucket_seconds, int) or isinstance(bucket_seconds, bool) or bucket_seconds <= 0:
        raise ParameterError(f"bucket_seconds must be a positive integer, got {bucket_seconds!r}")
    if nodes not in ("pre", "post"):
        raise ParameterError(f"nodes must be 'pre' or 'post', got {nodes!r}")
    if edge_filter is not None and EdgeKind.FOLLOW in {EdgeKind(k) for k in edge_filter}:
        raise ParameterError("follow edges carry no timestamp and cannot be bucketed")

    graph = build_graph(dataset, include=edge_filter, layers=layers)
    seen = [(i, a.first_seen) for i, a in enumerate(graph.nodes) if a.first_seen is not None]
    if not seen:
        raise EmptyDatasetError("dataset has no successful transactions to bucket")
    origin = min(ts for _, ts in seen)
    width = bucket_seconds

    node_bucket = np.full(graph.n_nodes, -1, dtype=np.int64)
    for i, ts in seen:
        node_bucket[i] = _bucket_of(ts, origin, width)
    last_edge = max((e.timestamp for e in graph.edges), default=origin)
    n_buckets = int(max(node_bucket.max(), _bucket_of(last_edge, origin, width))) + 1
    new_counts = np.bincount(node_bucket[node_bucket >= 0], minlength=n_buckets)

    edge_buckets: list[list[int]] = [[] for _ in range(n_buckets)]
    for eid, e in enumerate(graph.edges):
        edge_buckets[_bucket_of(e.timestamp, origin, width)].append(eid)  # type: ignore[arg-type]

    if mode is Mode.WEAK:
        pairs = _weak_series(graph, edge_buckets, new_counts, nodes)
    else:
        pairs = _strong_series(graph, edge_buckets, node_bucket, new_counts, nodes)

    points = []
    for b, (hb, ha, n_nodes) in enumerate(pairs):
        points.append(
            SeriesPoint(b, origin + b * width, hb, ha, hb - ha, int(new_counts[b]), n_nodes)
        )
    losses = [p.loss for p in points]
    cumulative = tuple(
        (p.bucket_index, math.fsum(losses[: k + 1])) for k, p in enumerate(points)
    )
    return EntropySeries(mode, width, origin, nodes, tuple(points), cumulative)


def _weak_series(graph, edge_buckets, new_counts, nodes):
    partition = ComponentPartition.singletons(graph.n_nodes)
    run = RunningEntropy()
    edges = graph.edges
    out = []
    for b, eids in enumerate(edge_buckets):
        if nodes == "pre":
            run.add_singletons(int(new_counts[b]))
        hb = run.h
        if nodes == "post":
            run.add_singletons(int(new_counts[b]))
        for eid in eids:
            e = edges[eid]
            if e.src == e.dst:
                continue
            merged = partition.union(e.src, e.dst)
            if merged is not None:
                run.merge(merged[0], merged[1])
        out.append((hb, run.h, run.n))
    return out


def _strong_series(graph, edge_buckets, node_bucket, new_counts, nodes):
    n = graph.n_nodes
    src, dst = graph.edge_arrays()
    order = np.concatenate([np.asarray(e, dtype=np.int64) for e in edge_buckets]) if n else np.zeros(0, np.int64)
    src, dst = src[order], dst[order]
    prev_sizes: list[int] = []
    n_active = 0
    consumed = 0
    out = []
    for b, eids in enumerate(edge_buckets):
        k = int(new_counts[b])
        before = prev_sizes + [1] * k if nodes == "pre" else prev_sizes
        hb = entropy_from_sizes(before)
        n_active += k
        consumed += len(eids)
        if eids:
            mat = csr_matrix(
                (np.ones(consumed, dtype=np.int8), (src[:consumed], dst[:consumed])), shape=(n, n)
            )
            _, labels = connected_components(mat, directed=True, connection="strong")
            active = (node_bucket >= 0) & (node_bucket <= b)
            counts = np.bincount(labels[active])
            sizes = counts[counts > 0].tolist()
        else:
            sizes = prev_sizes + [1] * k
        ha = entropy_from_sizes(sizes)
        out.append((hb, ha, n_active))
        prev_sizes = sizes
    return out


def write_series_csv(series: EntropySeries, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for p, (_, cum) in zip(series.points, series.cumulative):
            w.writerow(
                [p.bucket_index, p.bucket_start_ts, repr(p.h_before), repr(p.h_after),
                 repr(p.loss), repr(cum), p.new_users]
            )


@dataclass(frozen=True)
class Correlation:
    slope: float
    intercept: float
    r: float
    r_defined: bool
    n: int


def growth_correlation(
    series: EntropySeries | Sequence[float], new_users_per_bucket: Sequence[int] | None = None
) -> Correlation:
    """Least-squares fit of per-bucket loss against new-user count.

    When either variable has zero variance, ``r`` is reported as 0 with
    ``r_defined=False`` (and the slope as 0 when the user counts are flat).
    """
    if isinstance(series, EntropySeries):
        y = series.losses
        x = list(series.new_users if new_users_per_bucket is None else new_users_per_bucket)
    else:
        y = [float(v) for v in series]
        if new_users_per_bucket is None:
            raise ParameterError("new_users_per_bucket is required for a plain loss sequence")
        x = list(new_users_per_bucket)
    if len(x) != len(y):
        raise ParameterError(f"length mismatch: {len(y)} losses vs {len(x)} user counts")
    n = len(y)
    if n < 2:
        raise ParameterError("need at least 2 buckets")
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    if sxx == 0.0:
        return Correlation(0.0, my, 0.0, False, n)
    slope = sxy / sxx
    intercept = my - slope * mx
    if syy == 0.0:
        return Correlation(slope, intercept, 0.0, False, n)
    r = sxy / math.sqrt(sxx * syy)
    return Correlation(slope, intercept, max(-1.0, min(1.0, r)), True, n)

