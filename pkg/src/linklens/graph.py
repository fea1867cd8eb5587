"""Typed directed multigraph over accounts and its component partitions.

Weak partitions are union-find forests that can absorb new edges in place
(:func:`insert_edge_incremental`). Strong partitions are strongly connected
component decompositions and are only ever recomputed in batch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Collection, Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ParameterError, UnsupportedModeError
from .ingest import Dataset
from .model import Account, Address, Layer, MethodKind

__all__ = [
    "EdgeKind",
    "Mode",
    "Edge",
    "SocialGraph",
    "ComponentPartition",
    "ComponentDelta",
    "DEFAULT_EDGE_KINDS",
    "build_graph",
    "components",
    "insert_edge_incremental",
]


class EdgeKind(str, Enum):
    TRANSFER = MethodKind.TRANSFER.value
    BUY_SHARE = MethodKind.BUY_SHARE.value
    SELL_SHARE = MethodKind.SELL_SHARE.value
    CONTRACT_OTHER = MethodKind.CONTRACT_OTHER.value
    FOLLOW = "Follow"

    @classmethod
    def of(cls, kind: MethodKind) -> EdgeKind:
        return cls(kind.value)


DEFAULT_EDGE_KINDS: frozenset[EdgeKind] = frozenset(
    {EdgeKind.TRANSFER, EdgeKind.BUY_SHARE, EdgeKind.SELL_SHARE}
)


class Mode(str, Enum):
    WEAK = "weak"
    STRONG = "strong"


@dataclass(frozen=True, slots=True)
class Edge:
    kind: EdgeKind
    src: int
    dst: int
    weight_wei: int = 0
    timestamp: int | None = None
    tx_hash: str | None = None


class SocialGraph:
    """Nodes are accounts indexed in canonical address order; edges are kept
    as a multi-edge list in insertion order. Adjacency lists are built lazily.
    """

    def __init__(self, nodes: Iterable[Account] = ()) -> None:
        self.nodes: list[Account] = []
        self.edges: list[Edge] = []
        self._index: dict[tuple[Address, Layer], int] = {}
        self._out: list[list[int]] | None = None
        self._in: list[list[int]] | None = None
        for acct in nodes:
            self.add_node(acct)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def __contains__(self, account: Account) -> bool:
        return account.key in self._index

    def index_of(self, address: str | Account, layer: Layer = Layer.L2) -> int:
        if isinstance(address, Account):
            return self._index[address.key]
        return self._index[(Address(address), layer)]

    def add_node(self, account: Account) -> int:
        idx = self._index.get(account.key)
        if idx is not None:
            return idx
        idx = len(self.nodes)
        self.nodes.append(account)
        self._index[account.key] = idx
        if self._out is not None:
            self._out.append([])
            self._in.append([])  # type: ignore[union-attr]
        return idx

    def add_edge(self, edge: Edge) -> Edge:
        n = len(self.nodes)
        if not (0 <= edge.src < n and 0 <= edge.dst < n):
            raise IndexError(f"edge endpoint out of range: {edge.src}->{edge.dst}")
        eid = len(self.edges)
        self.edges.append(edge)
        if self._out is not None:
            self._out[edge.src].append(eid)
            self._in[edge.dst].append(eid)  # type: ignore[index]
        return edge

    def _adjacency(self) -> tuple[list[list[int]], list[list[int]]]:
        if self._out is None:
            out: list[list[int]] = [[] for _ in self.nodes]
            inn: list[list[int]] = [[] for _ in self.nodes]
            for eid, e in enumerate(self.edges):
                out[e.src].append(eid)
                inn[e.dst].append(eid)
            self._out, self._in = out, inn
        return self._out, self._in  # type: ignore[return-value]

    def out_edges(self, i: int) -> list[Edge]:
        return [self.edges[e] for e in self._adjacency()[0][i]]

    def in_edges(self, i: int) -> list[Edge]:
        return [self.edges[e] for e in self._adjacency()[1][i]]

    def edge_count(self, i: int, j: int) -> int:
        """Number of parallel edges i -> j (the multigraph adjacency entry)."""
        return sum(1 for e in self._adjacency()[0][i] if self.edges[e].dst == j)

    def has_edge(self, i: int, j: int) -> bool:
        return any(self.edges[e].dst == j for e in self._adjacency()[0][i])

    def successors(self, i: int) -> list[int]:
        return sorted({self.edges[e].dst for e in self._adjacency()[0][i]})

    def predecessors(self, i: int) -> list[int]:
        return sorted({self.edges[e].src for e in self._adjacency()[1][i]})

    def neighbors(self, i: int) -> list[int]:
        return sorted(set(self.successors(i)) | set(self.predecessors(i)))

    def isolated(self) -> np.ndarray:
        """Boolean mask of nodes with no edge other than self-loops."""
        mask = np.ones(self.n_nodes, dtype=bool)
        for e in self.edges:
            if e.src != e.dst:
                mask[e.src] = False
                mask[e.dst] = False
        return mask

    def to_csr(self, edges: Iterable[Edge] | None = None) -> csr_matrix:
        src, dst = self.edge_arrays(edges)
        data = np.ones(len(src), dtype=np.int8)
        n = self.n_nodes
        return csr_matrix((data, (src, dst)), shape=(n, n))

    def edge_arrays(self, edges: Iterable[Edge] | None = None) -> tuple[np.ndarray, np.ndarray]:
        es = self.edges if edges is None else list(edges)
        src = np.fromiter((e.src for e in es), dtype=np.int64, count=len(es))
        dst = np.fromiter((e.dst for e in es), dtype=np.int64, count=len(es))
        return src, dst

    def write_edge_list(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["from", "to", "kind", "wei", "timestamp"])
            for e in self.edges:
                w.writerow(
                    [
                        self.nodes[e.src].address,
                        self.nodes[e.dst].address,
                        e.kind.value,
                        e.weight_wei,
                        "" if e.timestamp is None else e.timestamp,
                    ]
                )

    def write_node_list(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "address", "layer", "first_seen"])
            for i, a in enumerate(self.nodes):
                w.writerow([i, a.address, a.layer.value, "" if a.first_seen is None else a.first_seen])


def build_graph(
    dataset: Dataset,
    include: Collection[EdgeKind | str] | None = None,
    window: tuple[int, int] | None = None,
    layers: Collection[Layer] | None = None,
) -> SocialGraph:
    """Graph over every dataset account (isolated ones included).

    Only successful transactions whose kind is in *include* and whose
    timestamp falls in ``[t0, t1)`` become edges. Follow edges (kind
    ``Follow``) carry no timestamp and are dropped when a window is given.
    """
    kinds = DEFAULT_EDGE_KINDS if include is None else frozenset(EdgeKind(k) for k in include)
    if window is not None:
        t0, t1 = window
        if t0 >= t1:
            raise ParameterError(f"empty window: t0={t0} >= t1={t1}")
    layer_set = None if layers is None else frozenset(Layer(x) for x in layers)

    nodes = [a for a in dataset.accounts if layer_set is None or a.layer in layer_set]
    nodes.sort(key=lambda a: (a.address, a.layer.value))
    g = SocialGraph(nodes)
    index = g._index
    tx_kinds = {MethodKind(k.value) for k in kinds if k is not EdgeKind.FOLLOW}
    edges = g.edges
    for tx in dataset.transactions:
        if tx.error is not None or tx.method.kind not in tx_kinds:
            continue
        if layer_set is not None and tx.layer not in layer_set:
            continue
        if window is not None and not (window[0] <= tx.timestamp < window[1]):
            continue
        edges.append(
            Edge(
                EdgeKind.of(tx.method.kind),
                index[(tx.sender, tx.layer)],
                index[(tx.recipient, tx.layer)],
                tx.amount_wei,
                tx.timestamp,
                tx.tx_hash,
            )
        )
    if EdgeKind.FOLLOW in kinds and window is None and (layer_set is None or Layer.L2 in layer_set):
        for f in dataset.follows:
            edges.append(
                Edge(EdgeKind.FOLLOW, index[(f.follower, Layer.L2)], index[(f.followee, Layer.L2)])
            )
    return g


class ComponentPartition:
    """Node -> component assignment.

    Weak partitions are a union-find forest (path halving, union by size);
    a component's id is its root node index. Strong partitions are frozen
    label arrays whose ids are the smallest member index. Nodes excluded as
    isolated carry assignment ``-1`` and do not count towards ``total_nodes``.
    """

    def __init__(self, mode: Mode, parent: list[int], size: list[int], included: list[bool]) -> None:
        self.mode = Mode(mode)
        self._parent = parent
        self._size = size
        self._included = included
        self.total_nodes = sum(included)
        self.n_components = sum(
            1 for i, p in enumerate(parent) if p == i and included[i]
        )

    @classmethod
    def singletons(cls, n: int, mode: Mode = Mode.WEAK) -> ComponentPartition:
        return cls(mode, list(range(n)), [1] * n, [True] * n)

    @classmethod
    def from_labels(
        cls, mode: Mode, labels: Iterable[int], included: Iterable[bool] | None = None
    ) -> ComponentPartition:
        labels = list(labels)
        inc = [True] * len(labels) if included is None else list(included)
        rep: dict[int, int] = {}
        for i, lab in enumerate(labels):
            if inc[i] and lab not in rep:
                rep[lab] = i
        parent = list(range(len(labels)))
        size = [1] * len(labels)
        for i, lab in enumerate(labels):
            if not inc[i]:
                continue
            r = rep[lab]
            parent[i] = r
            if r != i:
                size[r] += 1
        return cls(mode, parent, size, inc)

    def copy(self) -> ComponentPartition:
        return ComponentPartition(self.mode, list(self._parent), list(self._size), list(self._included))

    def find(self, i: int) -> int:
        parent = self._parent
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def __len__(self) -> int:
        return len(self._parent)

    @property
    def assignment(self) -> list[int]:
        return [self.find(i) if self._included[i] else -1 for i in range(len(self._parent))]

    @property
    def sizes(self) -> dict[int, int]:
        return {
            i: self._size[i]
            for i, p in enumerate(self._parent)
            if p == i and self._included[i]
        }

    def size_multiset(self) -> list[int]:
        return sorted(self.sizes.values(), reverse=True)

    def component_of(self, i: int) -> int:
        return self.find(i) if self._included[i] else -1

    def blocks(self) -> set[frozenset[int]]:
        """The partition as a set of node sets (label-free comparison)."""
        groups: dict[int, list[int]] = {}
        for i, c in enumerate(self.assignment):
            if c >= 0:
                groups.setdefault(c, []).append(i)
        return {frozenset(v) for v in groups.values()}

    # -- mutation (weak mode only) ----------------------------------------

    def _require_weak(self) -> None:
        if self.mode is not Mode.WEAK:
            raise UnsupportedModeError(
                "strong partitions are recomputed per window batch, not updated incrementally"
            )

    def add_node(self, included: bool = True) -> int:
        self._require_weak()
        idx = len(self._parent)
        self._parent.append(idx)
        self._size.append(1)
        self._included.append(included)
        if included:
            self.total_nodes += 1
            self.n_components += 1
        return idx

    def include(self, i: int) -> bool:
        """Bring an excluded isolated node into the partition as a singleton."""
        if self._included[i]:
            return False
        self._included[i] = True
        self.total_nodes += 1
        self.n_components += 1
        return True

    def union(self, i: int, j: int) -> tuple[int, int, int] | None:
        """Merge the components of i and j.

        Returns ``(size_a, size_b, new_root)`` when two components merged,
        ``None`` when i and j were already connected.
        """
        self._require_weak()
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return None
        size = self._size
        a, b = size[ri], size[rj]
        if a < b or (a == b and rj < ri):
            ri, rj = rj, ri
        self._parent[rj] = ri
        size[ri] = a + b
        self.n_components -= 1
        return a, b, ri


@dataclass(frozen=True)
class ComponentDelta:
    merged: tuple[int, int, int] | None
    """``(id_a, id_b, id_new)`` when the edge joined two components."""
    added_nodes: tuple[int, ...] = ()
    size_changes: dict[int, int] = field(default_factory=dict)
    """Component id -> new size; a size of 0 means the id was absorbed."""


def components(
    graph: SocialGraph, mode: Mode | str = Mode.WEAK, include_isolated: bool = True
) -> ComponentPartition:
    """Batch component decomposition of *graph*.

    Weak mode ignores edge direction; strong mode yields strongly connected
    components. Isolated nodes are singleton components unless
    *include_isolated* is false, in which case they are left out of |N|.
    """
    mode = Mode(mode)
    n = graph.n_nodes
    if n == 0:
        return ComponentPartition(mode, [], [], [])
    _, labels = connected_components(
        graph.to_csr(), directed=True, connection="weak" if mode is Mode.WEAK else "strong"
    )
    included = None if include_isolated else (~graph.isolated()).tolist()
    return ComponentPartition.from_labels(mode, labels.tolist(), included)


def insert_edge_incremental(
    partition: ComponentPartition,
    graph: SocialGraph,
    src: Account,
    dst: Account,
    kind: EdgeKind | str = EdgeKind.TRANSFER,
    weight_wei: int = 0,
    timestamp: int | None = None,
    tx_hash: str | None = None,
) -> ComponentDelta:
    """Append one edge to *graph* and fold it into the weak *partition*.

    Endpoints not yet in the graph are added as new nodes first.
    """
    partition._require_weak()
    if len(partition) != graph.n_nodes:
        raise ParameterError("partition does not match graph node count")
    added: list[int] = []
    ends = []
    for acct in (src, dst):
        if acct in graph:
            idx = graph.index_of(acct)
        else:
            idx = graph.add_node(acct)
            partition.add_node()
            added.append(idx)
        ends.append(idx)
    u, v = ends
    graph.add_edge(Edge(EdgeKind(kind), u, v, weight_wei, timestamp, tx_hash))

    changes: dict[int, int] = {}
    if u != v:
        for idx in (u, v):
            if partition.include(idx):
                changes[idx] = 1
    ru, rv = partition.component_of(u), partition.component_of(v)
    res = partition.union(u, v) if u != v else None
    if res is None:
        return ComponentDelta(None, tuple(added), changes)
    a, b, root = res
    other = rv if root == ru else ru
    changes[other] = 0
    changes[root] = a + b
    return ComponentDelta((ru, rv, root), tuple(added), changes)

