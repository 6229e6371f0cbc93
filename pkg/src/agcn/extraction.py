"""Enclosing-subgraph extraction and simple-path enumeration.

A subgraph around a target pair (i, j) is grown by h rounds of frontier
expansion starting from both targets; each frontier node contributes at most
``neighbor_cap`` uniformly sampled 1-hop neighbors, the new frontier is the
union of samples minus everything already collected, and the edge set is the
one induced by the collected nodes. In ``train_positive`` mode the target
edge itself is dropped from the result, so a positive example never reveals
its own label.

Path enumeration finds every simple path from target i to target j up to a
length bound, in deterministic DFS order (ascending local index), with a hard
cap that flags truncation on dense pockets.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .errors import (
    NegativeSamplingExhausted,
    NodeIdOutOfRange,
    PositiveNotAnEdge,
    TargetsEqual,
)
from .graph import AttributedGraph, EdgeAttr

MODE_TRAIN_POSITIVE = "train_positive"
MODE_INFERENCE = "inference"


@dataclass(eq=False)
class Subgraph:
    """Local view around a target pair; local ids 0 and 1 are the targets."""

    local_ids: np.ndarray                      # global node ids
    node_matrix: np.ndarray                    # |V| x d dense node attributes
    edge_records: list[tuple[int, int, EdgeAttr]]  # (lu, lv, attr), lu < lv
    neighbors: list[np.ndarray]                # sorted local adjacency
    _edge_index: dict[tuple[int, int], int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._edge_index:
            for k, (u, v, _) in enumerate(self.edge_records):
                self._edge_index[(u, v)] = k
                self._edge_index[(v, u)] = k

    @property
    def num_nodes(self) -> int:
        return len(self.local_ids)

    def record_index(self, u: int, v: int) -> int:
        """Record index for local pair (u, v), or -1."""
        return self._edge_index.get((u, v), -1)

    def edge_attr(self, u: int, v: int) -> EdgeAttr | None:
        k = self.record_index(u, v)
        return None if k < 0 else self.edge_records[k][2]

    def has_target_edge(self) -> bool:
        return self.record_index(0, 1) >= 0


@dataclass(frozen=True)
class PathRecord:
    """One simple path from local 0 to local 1 with its edge attributes."""

    node_seq: tuple[int, ...]
    edge_seq: tuple[EdgeAttr, ...]

    @property
    def length(self) -> int:
        return len(self.edge_seq)


@dataclass
class PathBundle:
    paths: list[PathRecord]
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.paths)


@dataclass(eq=False)
class TrainingExample:
    sub: Subgraph
    bundle: PathBundle
    label: int


def _pair_rng(seed: int, i: int, j: int) -> np.random.Generator:
    # Per-pair stream so extractions are reproducible independently of order.
    return np.random.default_rng([seed & 0x7FFFFFFF, i, j])


def extract_subgraph(g: AttributedGraph, i: int, j: int, hops: int,
                     neighbor_cap: int, mode: str = MODE_INFERENCE,
                     seed: int = 0) -> Subgraph:
    """Grow the capped h-hop enclosing subgraph around targets (i, j).

    With ``neighbor_cap`` at least the maximum degree no sampling happens and
    the result is the exact h-hop enclosing subgraph. Sampling is uniform
    without replacement from each frontier node's full neighbor list, and the
    sampled set is then deduplicated against already-collected nodes.
    """
    g.check_node(i)
    g.check_node(j)
    if i == j:
        raise TargetsEqual(f"target nodes must differ, got ({i}, {j})")
    if hops < 1:
        raise ValueError(f"hops must be >= 1, got {hops}")
    if neighbor_cap < 1:
        raise ValueError(f"neighbor_cap must be >= 1, got {neighbor_cap}")
    if mode not in (MODE_TRAIN_POSITIVE, MODE_INFERENCE):
        raise ValueError(f"unknown mode {mode!r}")

    rng = _pair_rng(seed, i, j)
    collected = {i: 0, j: 1}        # global id -> local id, insertion ordered
    frontier = [i, j]
    for _ in range(hops):
        sampled = set()
        for v in frontier:
            nbrs = g.neighbors(v)
            if len(nbrs) <= neighbor_cap:
                take = nbrs
            else:
                take = rng.choice(nbrs, size=neighbor_cap, replace=False)
            sampled.update(int(w) for w in take)
        new_nodes = sorted(sampled - collected.keys())
        for w in new_nodes:
            collected[w] = len(collected)
        frontier = new_nodes
        if not frontier:
            break

    local_ids = np.array(list(collected), dtype=np.int64)
    n_local = len(local_ids)

    edge_records: list[tuple[int, int, EdgeAttr]] = []
    neighbors: list[list[int]] = [[] for _ in range(n_local)]
    for u_local, u_global in enumerate(local_ids):
        for w in g.neighbors(int(u_global)):
            v_local = collected.get(int(w))
            if v_local is None or v_local <= u_local:
                continue
            if mode == MODE_TRAIN_POSITIVE and {u_local, v_local} == {0, 1}:
                continue
            rec = g.edge_record(g.edge_record_index(int(u_global), int(w)))
            edge_records.append((u_local, v_local, rec))
            neighbors[u_local].append(v_local)
            neighbors[v_local].append(u_local)

    adj = [np.array(sorted(ns), dtype=np.int64) for ns in neighbors]
    return Subgraph(local_ids=local_ids,
                    node_matrix=g.node_matrix(local_ids),
                    edge_records=edge_records,
                    neighbors=adj)


def enumerate_paths(sub: Subgraph, max_len: int, max_paths: int = 64) -> PathBundle:
    """All simple paths from local 0 to local 1 with length <= max_len.

    DFS visits neighbors in ascending local index, so output order is
    deterministic. Stops early and sets ``truncated`` once ``max_paths``
    paths have been collected.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    if max_paths < 1:
        raise ValueError(f"max_paths must be >= 1, got {max_paths}")

    paths: list[PathRecord] = []
    truncated = False
    on_path = [False] * sub.num_nodes
    on_path[0] = True
    stack: list[int] = [0]

    def dfs(u: int) -> bool:
        """Returns False once the cap is hit, aborting the search."""
        nonlocal truncated
        for v in sub.neighbors[u]:
            v = int(v)
            if v == 1:
                paths.append(PathRecord(
                    node_seq=tuple(stack) + (1,),
                    edge_seq=tuple(sub.edge_records[sub.record_index(a, b)][2]
                                   for a, b in zip(stack, stack[1:] + [1]))))
                if len(paths) >= max_paths:
                    truncated = True
                    return False
                continue
            if on_path[v] or len(stack) >= max_len:
                continue
            on_path[v] = True
            stack.append(v)
            if not dfs(v):
                return False
            stack.pop()
            on_path[v] = False
        return True

    dfs(0)
    return PathBundle(paths=paths, truncated=truncated)


def examples_for_pairs(g: AttributedGraph,
                       labeled_pairs: list[tuple[int, int, int]], *,
                       hops: int, neighbor_cap: int, max_len: int,
                       max_paths: int = 64, seed: int = 0,
                       train_mode: bool = True,
                       threads: int = 1) -> list[TrainingExample]:
    """Extract one example per (i, j, label) pair, preserving input order.

    With ``train_mode`` label-1 pairs must be existing edges and are
    extracted with the target edge removed; label-0 pairs (and everything at
    inference time) keep the graph as-is.
    """
    if train_mode:
        for i, j, label in labeled_pairs:
            if label == 1 and not g.has_edge(i, j):
                raise PositiveNotAnEdge(f"pair ({i}, {j}) labeled 1 is not an edge")

    def one(pair):
        i, j, label = pair
        mode = (MODE_TRAIN_POSITIVE if train_mode and label == 1
                else MODE_INFERENCE)
        sub = extract_subgraph(g, i, j, hops, neighbor_cap, mode=mode, seed=seed)
        bundle = enumerate_paths(sub, max_len, max_paths)
        return TrainingExample(sub=sub, bundle=bundle, label=label)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, labeled_pairs))
    return [one(p) for p in labeled_pairs]


def sample_negative_pairs(g: AttributedGraph, count: int,
                          seed: int = 0) -> list[tuple[int, int]]:
    """Uniform distinct non-adjacent pairs via seeded rejection sampling."""
    if g.node_count < 2:
        raise NegativeSamplingExhausted("graph has fewer than 2 nodes")
    rng = np.random.default_rng([seed & 0x7FFFFFFF, 0x6E65])
    out: list[tuple[int, int]] = []
    chosen = set()
    attempts = 0
    limit = 200 * count + 1000
    while len(out) < count:
        attempts += 1
        if attempts > limit:
            raise NegativeSamplingExhausted(
                f"could not find {count} non-edges after {limit} attempts")
        i, j = rng.integers(0, g.node_count, size=2)
        i, j = int(i), int(j)
        if i == j:
            continue
        key = (i, j) if i < j else (j, i)
        if key in chosen or g.has_edge(i, j):
            continue
        chosen.add(key)
        out.append((i, j))
    return out


def build_dataset(g: AttributedGraph, positives: list[tuple[int, int]],
                  neg_ratio: float, *, hops: int, neighbor_cap: int,
                  max_len: int, max_paths: int = 64, seed: int = 0,
                  threads: int = 1) -> list[TrainingExample]:
    """Positives (target edge removed, label 1) followed by sampled
    non-adjacent negatives (label 0); deterministic under the seed."""
    if neg_ratio <= 0:
        raise ValueError(f"neg_ratio must be > 0, got {neg_ratio}")
    for i, j in positives:
        if not g.has_edge(i, j):
            raise PositiveNotAnEdge(f"positive pair ({i}, {j}) is not an edge")

    n_neg = ceil(neg_ratio * len(positives))
    negatives = sample_negative_pairs(g, n_neg, seed=seed)
    labeled = ([(i, j, 1) for i, j in positives]
               + [(i, j, 0) for i, j in negatives])
    return examples_for_pairs(g, labeled, hops=hops, neighbor_cap=neighbor_cap,
                              max_len=max_len, max_paths=max_paths, seed=seed,
                              threads=threads)
