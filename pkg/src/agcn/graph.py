"""Immutable in-memory attributed graph with compressed adjacency.

Nodes carry sparse real-valued attribute vectors; edges carry grouped
categorical attributes (each group is logically a one-hot block, stored as a
single index per group, never densified). The graph is undirected: one
attribute record is shared by both directions of an edge. Construction
validates everything once; afterwards the structure is read-only and safe to
share across threads.

Text formats (tab-separated, one record per line):

  schema file   group_name <TAB> cardinality
  node file     node_id <TAB> dim:weight,dim:weight,...   (attr list may be empty)
  edge file     src <TAB> dst <TAB> group=value_index;group=value_index;...

Groups omitted on an edge line are MISSING (the all-zero one-hot block).
Node files may start with a ``# d=<int>`` comment pinning the attribute
dimension; without it the dimension is inferred as max index + 1. ``export``
always writes the directive so ingest(export(g)) reproduces g exactly.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DuplicateEdge,
    NodeIdOutOfRange,
    ParseError,
    SchemaMismatch,
    SelfLoop,
)

logger = logging.getLogger(__name__)

# Sentinel for an absent categorical value; encodes as the all-zero one-hot
# block, so group-wise products over paths naturally zero out.
MISSING = -1


@dataclass(frozen=True)
class AttrGroupSchema:
    """Ordered list of (group name, cardinality) for edge attributes."""

    groups: tuple[tuple[str, int], ...]

    def __post_init__(self):
        names = [name for name, _ in self.groups]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicate group names in schema: {names}")
        for name, card in self.groups:
            if card < 1:
                raise SchemaMismatch(f"group {name!r} has cardinality {card}, need >= 1")

    @property
    def group_count(self) -> int:
        return len(self.groups)

    @property
    def total_dim(self) -> int:
        return sum(card for _, card in self.groups)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.groups)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(card for _, card in self.groups)

    def offsets(self) -> tuple[int, ...]:
        """Start of each group's block in the concatenated one-hot layout."""
        out, acc = [], 0
        for _, card in self.groups:
            out.append(acc)
            acc += card
        return tuple(out)

    def index_of(self, name: str) -> int:
        for g, (gname, _) in enumerate(self.groups):
            if gname == name:
                return g
        raise SchemaMismatch(f"unknown group name {name!r}")

    def canonical_text(self) -> str:
        return "".join(f"{name}\t{card}\n" for name, card in self.groups)

    def digest(self) -> bytes:
        """Stable 32-byte identity used to bind checkpoints to a schema."""
        return hashlib.sha256(self.canonical_text().encode()).digest()


@dataclass(frozen=True)
class EdgeAttr:
    """Per-group categorical values for one edge; MISSING marks absent groups."""

    values: tuple[int, ...]

    def validate(self, schema: AttrGroupSchema, context: str = "edge") -> None:
        if len(self.values) != schema.group_count:
            raise SchemaMismatch(
                f"{context}: {len(self.values)} group values, schema has "
                f"{schema.group_count} groups")
        for (name, card), v in zip(schema.groups, self.values):
            if v != MISSING and not (0 <= v < card):
                raise SchemaMismatch(
                    f"{context}: group {name!r} value {v} outside [0, {card})")

    def all_missing(self) -> bool:
        return all(v == MISSING for v in self.values)


@dataclass(frozen=True)
class NodeAttr:
    """Sparse attribute vector: (dimension, weight) pairs, dims strictly increasing."""

    entries: tuple[tuple[int, float], ...]
    dim: int

    def __post_init__(self):
        last = -1
        for d, w in self.entries:
            if d <= last:
                raise SchemaMismatch(
                    f"node attr dims must be strictly increasing, got {d} after {last}")
            if not (0 <= d < self.dim):
                raise SchemaMismatch(f"node attr dim {d} outside [0, {self.dim})")
            if not np.isfinite(w):
                raise SchemaMismatch(f"node attr weight at dim {d} is not finite")
            last = d

    @classmethod
    def from_dense(cls, vec: Sequence[float]) -> "NodeAttr":
        entries = tuple((i, float(w)) for i, w in enumerate(vec) if w != 0.0)
        return cls(entries, len(vec))

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        for d, w in self.entries:
            out[d] = w
        return out


class AttributedGraph:
    """Validated immutable graph; use :func:`build_graph` or :func:`ingest`."""

    __slots__ = ("node_count", "node_dim", "schema", "_node_attrs",
                 "_indptr", "_nbr", "_rec_of", "_records")

    def __init__(self, node_count, node_dim, schema, node_attrs,
                 indptr, nbr, rec_of, records):
        self.node_count = node_count
        self.node_dim = node_dim
        self.schema = schema
        self._node_attrs = node_attrs       # tuple[NodeAttr]
        self._indptr = indptr               # int64[node_count + 1]
        self._nbr = nbr                     # int64[2 * edge_count], sorted per row
        self._rec_of = rec_of               # record index per adjacency entry
        self._records = records             # tuple[EdgeAttr], one per edge

    # -- read API ------------------------------------------------------

    @property
    def edge_count(self) -> int:
        return len(self._records)

    def check_node(self, v: int) -> None:
        if not (0 <= v < self.node_count):
            raise NodeIdOutOfRange(f"node id {v} outside [0, {self.node_count})")

    def degree(self, v: int) -> int:
        self.check_node(v)
        return int(self._indptr[v + 1] - self._indptr[v])

    def neighbors(self, v: int) -> np.ndarray:
        """Sorted neighbor ids of v (read-only view)."""
        self.check_node(v)
        return self._nbr[self._indptr[v]:self._indptr[v + 1]]

    def _find_entry(self, i: int, j: int) -> int:
        lo, hi = self._indptr[i], self._indptr[i + 1]
        pos = lo + np.searchsorted(self._nbr[lo:hi], j)
        if pos < hi and self._nbr[pos] == j:
            return int(pos)
        return -1

    def has_edge(self, i: int, j: int) -> bool:
        self.check_node(i)
        self.check_node(j)
        return self._find_entry(i, j) >= 0

    def edge_attr(self, i: int, j: int) -> EdgeAttr | None:
        """Shared attribute record of edge (i, j), or None if absent."""
        self.check_node(i)
        self.check_node(j)
        pos = self._find_entry(i, j)
        if pos < 0:
            return None
        return self._records[self._rec_of[pos]]

    def edge_record_index(self, i: int, j: int) -> int:
        """Index of the shared record for (i, j), or -1."""
        pos = self._find_entry(i, j)
        return -1 if pos < 0 else int(self._rec_of[pos])

    def edge_record(self, idx: int) -> EdgeAttr:
        return self._records[idx]

    def node_attr(self, v: int) -> NodeAttr:
        self.check_node(v)
        return self._node_attrs[v]

    def node_matrix(self, ids: Sequence[int]) -> np.ndarray:
        """Dense (len(ids) x node_dim) attribute matrix for the given nodes."""
        out = np.zeros((len(ids), self.node_dim))
        for r, v in enumerate(ids):
            for d, w in self._node_attrs[v].entries:
                out[r, d] = w
        return out

    def edges(self) -> Iterator[tuple[int, int, EdgeAttr]]:
        """All edges once, as (u, v, attr) with u < v, in canonical order."""
        for u in range(self.node_count):
            for pos in range(self._indptr[u], self._indptr[u + 1]):
                v = int(self._nbr[pos])
                if u < v:
                    yield u, v, self._records[self._rec_of[pos]]

    def __eq__(self, other):
        if not isinstance(other, AttributedGraph):
            return NotImplemented
        return (self.node_count == other.node_count
                and self.node_dim == other.node_dim
                and self.schema == other.schema
                and self._node_attrs == other._node_attrs
                and np.array_equal(self._indptr, other._indptr)
                and np.array_equal(self._nbr, other._nbr)
                and tuple(self._records[k] for k in self._rec_of)
                == tuple(other._records[k] for k in other._rec_of))

    __hash__ = None


def build_graph(nodes: Sequence[NodeAttr],
                edges: Sequence[tuple[int, int, EdgeAttr]],
                schema: AttrGroupSchema) -> AttributedGraph:
    """Validate records and assemble the compressed graph.

    Raises SelfLoop, NodeIdOutOfRange, DuplicateEdge or SchemaMismatch,
    naming the offending record.
    """
    n = len(nodes)
    node_dim = nodes[0].dim if nodes else 0
    for v, attr in enumerate(nodes):
        if attr.dim != node_dim:
            raise SchemaMismatch(
                f"node {v}: attr dim {attr.dim} != graph dim {node_dim}")

    canonical = []
    for k, (i, j, attr) in enumerate(edges):
        if not (0 <= i < n) or not (0 <= j < n):
            raise NodeIdOutOfRange(f"edge #{k} ({i}, {j}): endpoint outside [0, {n})")
        if i == j:
            raise SelfLoop(f"edge #{k}: self-loop at node {i}")
        attr.validate(schema, context=f"edge #{k} ({i}, {j})")
        u, v = (i, j) if i < j else (j, i)
        canonical.append((u, v, attr))

    canonical.sort(key=lambda e: (e[0], e[1]))
    for a, b in zip(canonical, canonical[1:]):
        if a[0] == b[0] and a[1] == b[1]:
            raise DuplicateEdge(f"duplicate edge ({a[0]}, {a[1]})")

    m = len(canonical)
    deg = np.zeros(n, dtype=np.int64)
    for u, v, _ in canonical:
        deg[u] += 1
        deg[v] += 1
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    nbr = np.zeros(2 * m, dtype=np.int64)
    rec_of = np.zeros(2 * m, dtype=np.int64)
    cursor = indptr[:-1].copy()
    for rec, (u, v, _) in enumerate(canonical):
        nbr[cursor[u]] = v
        rec_of[cursor[u]] = rec
        cursor[u] += 1
        nbr[cursor[v]] = u
        rec_of[cursor[v]] = rec
        cursor[v] += 1
    # canonical order already emits each row's neighbors ascending for the
    # lower endpoint but not the higher one; sort rows once
    for v in range(n):
        lo, hi = indptr[v], indptr[v + 1]
        order = np.argsort(nbr[lo:hi], kind="stable")
        nbr[lo:hi] = nbr[lo:hi][order]
        rec_of[lo:hi] = rec_of[lo:hi][order]

    nbr.setflags(write=False)
    rec_of.setflags(write=False)
    indptr.setflags(write=False)
    return AttributedGraph(n, node_dim, schema, tuple(nodes), indptr, nbr,
                           rec_of, tuple(attr for _, _, attr in canonical))


# -- text ingestion / export ------------------------------------------------

def load_schema(path) -> AttrGroupSchema:
    groups = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(path, line_no, f"expected 'name<TAB>cardinality', got {line!r}")
            name, card_s = parts
            try:
                card = int(card_s)
            except ValueError:
                raise ParseError(path, line_no, f"cardinality {card_s!r} is not an integer")
            groups.append((name, card))
    try:
        return AttrGroupSchema(tuple(groups))
    except SchemaMismatch as e:
        raise ParseError(path, None, str(e))


def _parse_node_line(path, line_no, line):
    parts = line.split("\t")
    if len(parts) not in (1, 2):
        raise ParseError(path, line_no, f"expected 'id<TAB>attrs', got {line!r}")
    try:
        node_id = int(parts[0])
    except ValueError:
        raise ParseError(path, line_no, f"node id {parts[0]!r} is not an integer")
    entries = []
    if len(parts) == 2 and parts[1]:
        for item in parts[1].split(","):
            if ":" not in item:
                raise ParseError(path, line_no, f"expected 'dim:weight', got {item!r}")
            d_s, w_s = item.split(":", 1)
            try:
                d, w = int(d_s), float(w_s)
            except ValueError:
                raise ParseError(path, line_no, f"bad attr entry {item!r}")
            entries.append((d, w))
    return node_id, entries


def _parse_edge_attrs(path, line_no, field, schema: AttrGroupSchema) -> EdgeAttr:
    values = [MISSING] * schema.group_count
    if field:
        for item in field.split(";"):
            if "=" not in item:
                raise ParseError(path, line_no, f"expected 'group=value', got {item!r}")
            name, v_s = item.split("=", 1)
            try:
                g = schema.index_of(name)
            except SchemaMismatch:
                raise ParseError(path, line_no, f"unknown group name {name!r}")
            try:
                v = int(v_s)
            except ValueError:
                raise ParseError(path, line_no, f"value {v_s!r} for group {name!r} is not an integer")
            card = schema.cardinalities[g]
            if not (0 <= v < card):
                raise ParseError(path, line_no,
                                 f"group {name!r} value {v} outside [0, {card})")
            if values[g] != MISSING:
                raise ParseError(path, line_no, f"group {name!r} given twice")
            values[g] = v
    return EdgeAttr(tuple(values))


def ingest(node_file, edge_file, schema_file) -> AttributedGraph:
    """Build a graph from the three text files.

    Duplicate edge lines are collapsed keep-first with a warning; everything
    else that is malformed raises ParseError with the line number, and graph
    validation errors propagate from build_graph.
    """
    schema = load_schema(schema_file)

    directive_dim = None
    raw_nodes = {}
    with open(node_file, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line.startswith("#"):
                stripped = line[1:].strip()
                if stripped.startswith("d="):
                    try:
                        directive_dim = int(stripped[2:])
                    except ValueError:
                        raise ParseError(node_file, line_no, f"bad dimension directive {line!r}")
                continue
            if not line:
                continue
            node_id, entries = _parse_node_line(node_file, line_no, line)
            if node_id in raw_nodes:
                raise ParseError(node_file, line_no, f"node id {node_id} repeated")
            raw_nodes[node_id] = entries

    n = len(raw_nodes)
    if raw_nodes and sorted(raw_nodes) != list(range(n)):
        raise ParseError(node_file, None,
                         f"node ids must cover 0..{n - 1} exactly")
    if directive_dim is not None:
        node_dim = directive_dim
    else:
        node_dim = 1 + max((d for entries in raw_nodes.values() for d, _ in entries),
                           default=-1)
    try:
        nodes = [NodeAttr(tuple(sorted(raw_nodes[v], key=lambda e: e[0])), node_dim)
                 for v in range(n)]
    except SchemaMismatch as e:
        raise ParseError(node_file, None, str(e))

    edges = []
    seen = set()
    with open(edge_file, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ParseError(edge_file, line_no,
                                 f"expected 'src<TAB>dst<TAB>attrs', got {line!r}")
            try:
                src, dst = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(edge_file, line_no, f"bad endpoints in {line!r}")
            attr = _parse_edge_attrs(edge_file, line_no,
                                     parts[2] if len(parts) == 3 else "", schema)
            key = (src, dst) if src < dst else (dst, src)
            if key in seen:
                logger.warning("%s:%d: duplicate edge (%d, %d) dropped (keep-first)",
                               edge_file, line_no, src, dst)
                continue
            seen.add(key)
            edges.append((src, dst, attr))

    return build_graph(nodes, edges, schema)


def _fmt_weight(w: float) -> str:
    return repr(w)


def export(g: AttributedGraph, node_file, edge_file, schema_file) -> None:
    """Write the graph back out byte-deterministically (canonical order)."""
    with open(schema_file, "w", encoding="utf-8") as fh:
        fh.write(g.schema.canonical_text())
    with open(node_file, "w", encoding="utf-8") as fh:
        fh.write(f"# d={g.node_dim}\n")
        for v in range(g.node_count):
            entries = g.node_attr(v).entries
            attr_s = ",".join(f"{d}:{_fmt_weight(w)}" for d, w in entries)
            fh.write(f"{v}\t{attr_s}\n")
    with open(edge_file, "w", encoding="utf-8") as fh:
        names = g.schema.names
        for u, v, attr in g.edges():
            attr_s = ";".join(f"{names[gi]}={val}"
                              for gi, val in enumerate(attr.values)
                              if val != MISSING)
            fh.write(f"{u}\t{v}\t{attr_s}\n")
