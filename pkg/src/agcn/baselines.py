"""Heuristic scorers and the attribute-concatenation GNN comparator.

The heuristics are standard first/second-order neighbor measures on the
immutable graph. The Concat model is the attribute-aware but interaction-free
comparator: each neighbor message is the raw neighbor embedding concatenated
with the projected edge attributes, mixed by one widened matrix per layer;
there is no element-wise interaction and no path unit, so anything it learns
about attribute agreement has to come out of summed projections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, SchemaMismatch
from .extraction import PathBundle, Subgraph
from .graph import AttributedGraph, AttrGroupSchema
from .model import (
    Checkpoint,
    CompiledExample,
    MlpParams,
    ModelConfig,
    bce_on_tape,
    compile_example,
    glorot,
    merge_compiled,
    save_checkpoint,
)
from .tensor import Slot, Tape


def common_neighbors_score(g: AttributedGraph, i: int, j: int,
                           normalized: bool = False) -> float:
    """Size of the shared 1-hop neighborhood (the first-order heuristic).

    ``normalized`` divides by the union size instead (classic Jaccard
    coefficient); ranking differs only when degrees vary.
    """
    g.check_node(i)
    g.check_node(j)
    inter = np.intersect1d(g.neighbors(i), g.neighbors(j), assume_unique=True).size
    if not normalized:
        return float(inter)
    union = g.degree(i) + g.degree(j) - inter
    return inter / union if union else 0.0


def _aa_weight(degree: int, degree_one_weight: float) -> float:
    # ln(1) = 0 would blow up; simple graphs cannot produce a degree-1 common
    # neighbor, but the guard keeps the formula total.
    if degree <= 1:
        return degree_one_weight
    return 1.0 / math.log(degree)


def adamic_adar_score(g: AttributedGraph, i: int, j: int,
                      degree_one_weight: float = 1e6) -> float:
    """Sum of 1/ln(degree) over common neighbors (second-order heuristic)."""
    g.check_node(i)
    g.check_node(j)
    common = np.intersect1d(g.neighbors(i), g.neighbors(j), assume_unique=True)
    return float(sum(_aa_weight(g.degree(int(z)), degree_one_weight)
                     for z in common))


# -- Concat GNN ---------------------------------------------------------------

@dataclass
class ConcatLayerParams:
    w_edge: np.ndarray   # one-hot total dim x hidden
    w_wide: np.ndarray   # (in dim + hidden) x hidden


@dataclass
class ConcatParams:
    layers: list[ConcatLayerParams]
    classifier: MlpParams

    def named(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for l, lp in enumerate(self.layers):
            out.append((f"layer{l}.w_edge", lp.w_edge))
            out.append((f"layer{l}.w_wide", lp.w_wide))
        c = self.classifier
        out += [("classifier.w1", c.w1), ("classifier.b1", c.b1),
                ("classifier.w2", c.w2), ("classifier.b2", c.b2)]
        return out


def init_concat_params(schema: AttrGroupSchema, node_dim: int, cfg: ModelConfig,
                       seed: int = 0) -> ConcatParams:
    rng = np.random.default_rng([seed & 0x7FFFFFFF, 0x9B])
    n, f = schema.total_dim, cfg.hidden_dim
    layers = []
    in_dim = node_dim
    for _ in range(cfg.num_layers):
        layers.append(ConcatLayerParams(w_edge=glorot(rng, n, f),
                                        w_wide=glorot(rng, in_dim + f, f)))
        in_dim = f
    z = 2 * f
    classifier = MlpParams(w1=glorot(rng, z, cfg.mlp_hidden),
                           b1=np.zeros((1, cfg.mlp_hidden)),
                           w2=glorot(rng, cfg.mlp_hidden, 1),
                           b2=np.zeros((1, 1)))
    return ConcatParams(layers, classifier)


class ConcatModel:
    """Trains and scores exactly like the main model, minus interaction/paths.

    Per layer, node y aggregates [V_x ‖ edge projection] over neighbors x
    plus its own [V_y ‖ 0], normalized by 1/(degree+1) and mixed by the
    widened matrix. All-missing edge attributes contribute a zero block, so
    the network degrades to a plain GCN over node attributes.
    """

    kind = "concat"

    def __init__(self, schema: AttrGroupSchema, node_dim: int,
                 cfg: ModelConfig | None = None,
                 params: ConcatParams | None = None, seed: int = 0):
        self.schema = schema
        self.node_dim = node_dim
        self.cfg = cfg or ModelConfig()
        self.params = params or init_concat_params(schema, node_dim, self.cfg, seed)

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        return self.params.named()

    def compile(self, sub: Subgraph, bundle: PathBundle,
                label: int | None = None) -> CompiledExample:
        # path vector is compiled but unused by this architecture
        return compile_example(sub, bundle, self.schema, None, label)

    def _forward_with_slots(self, tape: Tape, comp: CompiledExample,
                            param_slots: dict[str, Slot]):
        cfg = self.cfg
        proj, g_src, g_rec, scatter = comp.operators()
        v = tape.input(comp.x0)
        for l in range(len(self.params.layers)):
            w_edge = param_slots[f"layer{l}.w_edge"]
            w_wide = param_slots[f"layer{l}.w_wide"]
            eproj = tape.spmm(proj, w_edge)
            msgs = tape.hconcat([tape.spmm(g_src, v),
                                 tape.spmm(g_rec, eproj)])
            agg = tape.spmm(scatter, msgs)
            self_cat = tape.hconcat([
                v, tape.input(np.zeros((comp.n_nodes, cfg.hidden_dim)))])
            pre = tape.row_scale(tape.add(self_cat, agg), comp.coeff)
            v = tape.leaky_relu(tape.matmul(pre, w_wide), cfg.leaky_slope)

        t0 = tape.gather_rows(v, comp.t0_idx)
        t1 = tape.gather_rows(v, comp.t1_idx)
        z = tape.hconcat([t0, t1])
        hidden = tape.leaky_relu(
            tape.add_bias(tape.matmul(z, param_slots["classifier.w1"]),
                          param_slots["classifier.b1"]),
            cfg.leaky_slope)
        logit = tape.add_bias(tape.matmul(hidden, param_slots["classifier.w2"]),
                              param_slots["classifier.b2"])
        return v, logit, tape.sigmoid(logit)

    def loss_on_tape(self, tape: Tape, comp: CompiledExample, labels=None
                     ) -> tuple[Slot, Slot, dict[str, Slot]]:
        if labels is None:
            labels = comp.labels
        param_slots = {name: tape.input(arr) for name, arr in self.named_params()}
        _, _, prob = self._forward_with_slots(tape, comp, param_slots)
        return bce_on_tape(tape, prob, labels), prob, param_slots

    def predict_batch(self, comps: list[CompiledExample],
                      chunk: int = 256) -> np.ndarray:
        out = []
        for start in range(0, len(comps), chunk):
            comp = merge_compiled(comps[start:start + chunk])
            tape = Tape()
            param_slots = {name: tape.input(arr)
                           for name, arr in self.named_params()}
            _, _, prob = self._forward_with_slots(tape, comp, param_slots)
            out.append(prob.value[:, 0])
        return np.concatenate(out) if out else np.empty(0)

    def predict_proba(self, comp: CompiledExample) -> float:
        return float(self.predict_batch([comp])[0])

    def node_embeddings(self, sub: Subgraph) -> np.ndarray:
        """Final-layer embeddings (exposes the all-missing degradation)."""
        comp = self.compile(sub, PathBundle(paths=[]))
        tape = Tape()
        param_slots = {name: tape.input(arr) for name, arr in self.named_params()}
        v, _, _ = self._forward_with_slots(tape, comp, param_slots)
        return v.value

    def save(self, path) -> None:
        save_checkpoint(path, self.kind, self.schema, self.node_dim, self.cfg,
                        self.named_params())

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint,
                        schema: AttrGroupSchema) -> "ConcatModel":
        if ckpt.kind != cls.kind:
            raise CheckpointError(f"checkpoint holds a {ckpt.kind!r} model")
        if ckpt.schema_digest != schema.digest():
            raise SchemaMismatch("checkpoint schema digest does not match graph schema")
        arrays = dict(ckpt.arrays)
        cfg = ckpt.config
        layers = [ConcatLayerParams(w_edge=arrays[f"layer{l}.w_edge"],
                                    w_wide=arrays[f"layer{l}.w_wide"])
                  for l in range(cfg.num_layers)]
        classifier = MlpParams(w1=arrays["classifier.w1"], b1=arrays["classifier.b1"],
                               w2=arrays["classifier.w2"], b2=arrays["classifier.b2"])
        return cls(schema, ckpt.node_dim, cfg, ConcatParams(layers, classifier))
