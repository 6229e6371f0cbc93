"""Edge-attribute-aware GCN for subgraph classification.

The network scores a target pair from its enclosing subgraph and the paths
between the targets:

* interaction unit: each neighbor message is the element-wise product of the
  edge's projected one-hot attributes and the neighbor's projected embedding,
  so a node-edge pair lands in one shared latent space;
* GCN layer: mean-style aggregation of the self projection plus interacted
  neighbor messages, followed by a square mixing matrix and activation;
* path unit: non-parametric per-group agreement bits for every simple path
  between the targets (1 iff all edges on the path carry the same present
  value in that group), sum-pooled over paths;
* classifier: a small MLP over [target embeddings ‖ pooled path vector]
  ending in a sigmoid.

Edge projections never materialize one-hot vectors: a concatenated one-hot
row times a projection matrix is the sum of the selected rows, so cost is
proportional to the number of present groups.

The module has two forward implementations: readable per-node reference
functions (:func:`interaction_unit_forward`, :func:`gcn_layer_forward`) and a
vectorized tape-backed pass used for training and batch scoring. Tests pin
them to each other.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, SchemaMismatch, ShapeMismatch
from .extraction import PathBundle, PathRecord, Subgraph
from .graph import MISSING, AttrGroupSchema, EdgeAttr
from .tensor import Slot, Tape

PROB_EPS = 1e-12  # probability clamp before log


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 32          # latent width of every GCN layer
    num_layers: int = 2           # >= hop count of the extracted subgraphs
    mlp_hidden: int = 32
    leaky_slope: float = 0.01     # activation is leaky ReLU everywhere
    symmetric_readout: bool = False   # (u+v, |u-v|) instead of (u, v)
    # Groups whose one-hot blocks feed the interaction unit (the parametric,
    # "high-frequency" projection); None means all groups qualify. The path
    # unit always sees every group.
    projection_groups: tuple[int, ...] | None = None


@dataclass
class LayerParams:
    w_edge: np.ndarray   # one-hot total dim x hidden
    w_node: np.ndarray   # in dim x hidden
    w_agg: np.ndarray    # hidden x hidden


@dataclass
class MlpParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class ModelParams:
    layers: list[LayerParams]
    classifier: MlpParams

    def named(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for l, lp in enumerate(self.layers):
            out.append((f"layer{l}.w_edge", lp.w_edge))
            out.append((f"layer{l}.w_node", lp.w_node))
            out.append((f"layer{l}.w_agg", lp.w_agg))
        c = self.classifier
        out += [("classifier.w1", c.w1), ("classifier.b1", c.b1),
                ("classifier.w2", c.w2), ("classifier.b2", c.b2)]
        return out


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    s = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=(rows, cols))


def init_params(schema: AttrGroupSchema, node_dim: int, cfg: ModelConfig,
                seed: int = 0) -> ModelParams:
    """Seeded uniform init, zero biases."""
    rng = np.random.default_rng([seed & 0x7FFFFFFF, 0x9A])
    n, f = schema.total_dim, cfg.hidden_dim
    layers = []
    in_dim = node_dim
    for _ in range(cfg.num_layers):
        layers.append(LayerParams(w_edge=glorot(rng, n, f),
                                  w_node=glorot(rng, in_dim, f),
                                  w_agg=glorot(rng, f, f)))
        in_dim = f
    z = 2 * f + schema.group_count
    classifier = MlpParams(w1=glorot(rng, z, cfg.mlp_hidden),
                           b1=np.zeros((1, cfg.mlp_hidden)),
                           w2=glorot(rng, cfg.mlp_hidden, 1),
                           b2=np.zeros((1, 1)))
    return ModelParams(layers, classifier)


# -- path unit ---------------------------------------------------------------

def encode_path(path: PathRecord, schema: AttrGroupSchema) -> np.ndarray:
    """Per-group agreement bits for one path.

    Bit g is 1 iff every edge on the path carries the same present value in
    group g (the group-wise product of identical one-hots survives; any
    MISSING or any disagreement zeroes it).
    """
    for e in path.edge_seq:
        e.validate(schema, context="path edge")
    bits = np.zeros(schema.group_count)
    for g in range(schema.group_count):
        vals = [e.values[g] for e in path.edge_seq]
        if vals and vals[0] != MISSING and all(v == vals[0] for v in vals):
            bits[g] = 1.0
    return bits


def path_unit_forward(bundle: PathBundle, schema: AttrGroupSchema) -> np.ndarray:
    """Sum-pooled agreement bits over all paths; zero vector when empty."""
    out = np.zeros(schema.group_count)
    for p in bundle.paths:
        out += encode_path(p, schema)
    return out


# -- reference (per-node) forward pass ---------------------------------------

def _edge_projection(edge: EdgeAttr, w_edge: np.ndarray,
                     schema: AttrGroupSchema,
                     projection_groups: tuple[int, ...] | None) -> np.ndarray:
    offsets = schema.offsets()
    groups = range(schema.group_count) if projection_groups is None else projection_groups
    out = np.zeros(w_edge.shape[1])
    for g in groups:
        v = edge.values[g]
        if v != MISSING:
            out += w_edge[offsets[g] + v]
    return out


def interaction_unit_forward(v_row: np.ndarray, edge: EdgeAttr,
                             layer: LayerParams, schema: AttrGroupSchema,
                             projection_groups: tuple[int, ...] | None = None
                             ) -> np.ndarray:
    """Element-wise product of the projected edge and projected node row."""
    edge.validate(schema)
    v_row = np.asarray(v_row, dtype=np.float64).reshape(-1)
    if v_row.shape[0] != layer.w_node.shape[0]:
        raise ShapeMismatch(
            f"node row dim {v_row.shape[0]} vs projection rows {layer.w_node.shape[0]}")
    if layer.w_edge.shape[0] != schema.total_dim:
        raise ShapeMismatch(
            f"edge projection rows {layer.w_edge.shape[0]} vs schema dim {schema.total_dim}")
    return _edge_projection(edge, layer.w_edge, schema, projection_groups) \
        * (v_row @ layer.w_node)


def gcn_layer_forward(sub: Subgraph, v_mat: np.ndarray, layer: LayerParams,
                      schema: AttrGroupSchema, leaky_slope: float = 0.01,
                      projection_groups: tuple[int, ...] | None = None
                      ) -> np.ndarray:
    """One aggregation layer, computed node by node.

    Each node's update is (self projection + sum of interacted neighbor
    messages) / (degree + 1), mixed by the square matrix and passed through
    the activation. Isolated nodes reduce to f(v W_node W_agg).
    """
    v_mat = np.asarray(v_mat, dtype=np.float64)
    if v_mat.shape[0] != sub.num_nodes:
        raise ShapeMismatch(f"{v_mat.shape[0]} rows for {sub.num_nodes} nodes")
    out = np.zeros((sub.num_nodes, layer.w_agg.shape[1]))
    for y in range(sub.num_nodes):
        acc = v_mat[y] @ layer.w_node
        for x in sub.neighbors[y]:
            x = int(x)
            edge = sub.edge_records[sub.record_index(x, y)][2]
            acc = acc + interaction_unit_forward(v_mat[x], edge, layer, schema,
                                                 projection_groups)
        pre = (acc / (len(sub.neighbors[y]) + 1)) @ layer.w_agg
        out[y] = np.where(pre > 0, pre, leaky_slope * pre)
    return out


# -- vectorized tape-backed pass ----------------------------------------------

@dataclass(eq=False)
class CompiledExample:
    """Static index arrays for one or more (subgraph, bundle) pairs.

    A batch of examples is the disjoint union of their subgraphs: node,
    record and message arrays are concatenated with offsets, target rows are
    tracked per example, and path vectors are stacked. Message passing over
    the union equals per-example message passing, so one tape evaluates a
    whole mini-batch.
    """

    x0: np.ndarray              # N x d node attributes (all examples stacked)
    onehot_dim: int
    n_nodes: int
    n_records: int
    src: np.ndarray             # directed source node per message
    dst: np.ndarray             # directed destination node per message
    rec: np.ndarray             # shared record index per message
    coeff: np.ndarray           # 1 / (degree + 1) per node
    we_rows: np.ndarray         # one-hot row per (record, present group)
    we_segs: np.ndarray         # owning record per one-hot row
    path_mat: np.ndarray        # B x group_count pooled path bits
    t0_idx: np.ndarray          # row of target i per example
    t1_idx: np.ndarray          # row of target j per example
    labels: np.ndarray | None = None
    _ops: tuple | None = None

    @property
    def batch_size(self) -> int:
        return len(self.t0_idx)

    def operators(self):
        """Constant sparse operators (projection, gathers, scatter)."""
        if self._ops is None:
            from scipy.sparse import csr_array
            n_dir = len(self.src)
            ones = np.ones(n_dir)
            arange = np.arange(n_dir + 1)
            proj = csr_array((np.ones(len(self.we_rows)),
                              (self.we_segs, self.we_rows)),
                             shape=(self.n_records, self.onehot_dim))
            g_src = csr_array((ones, self.src, arange),
                              shape=(n_dir, self.n_nodes))
            g_rec = csr_array((ones, self.rec, arange),
                              shape=(n_dir, self.n_records))
            scatter = csr_array((ones, (self.dst, np.arange(n_dir))),
                                shape=(self.n_nodes, n_dir))
            self._ops = (proj, g_src, g_rec, scatter)
        return self._ops


def compile_example(sub: Subgraph, bundle: PathBundle, schema: AttrGroupSchema,
                    projection_groups: tuple[int, ...] | None = None,
                    label: int | None = None) -> CompiledExample:
    n_rec = len(sub.edge_records)
    src = np.empty(2 * n_rec, dtype=np.int64)
    dst = np.empty(2 * n_rec, dtype=np.int64)
    rec = np.empty(2 * n_rec, dtype=np.int64)
    for k, (u, v, _) in enumerate(sub.edge_records):
        src[2 * k], dst[2 * k], rec[2 * k] = u, v, k
        src[2 * k + 1], dst[2 * k + 1], rec[2 * k + 1] = v, u, k
    deg = np.array([len(ns) for ns in sub.neighbors], dtype=np.float64)
    offsets = schema.offsets()
    groups = range(schema.group_count) if projection_groups is None else projection_groups
    we_rows, we_segs = [], []
    for k, (_, _, attr) in enumerate(sub.edge_records):
        for g in groups:
            v = attr.values[g]
            if v != MISSING:
                we_rows.append(offsets[g] + v)
                we_segs.append(k)
    return CompiledExample(
        x0=np.asarray(sub.node_matrix, dtype=np.float64),
        onehot_dim=schema.total_dim,
        n_nodes=sub.num_nodes,
        n_records=n_rec,
        src=src, dst=dst, rec=rec,
        coeff=1.0 / (deg + 1.0),
        we_rows=np.array(we_rows, dtype=np.int64),
        we_segs=np.array(we_segs, dtype=np.int64),
        path_mat=path_unit_forward(bundle, schema).reshape(1, -1),
        t0_idx=np.array([0], dtype=np.int64),
        t1_idx=np.array([1], dtype=np.int64),
        labels=None if label is None else np.array([label], dtype=np.float64))


def merge_compiled(comps: list[CompiledExample]) -> CompiledExample:
    """Disjoint union of compiled examples (the batch operator)."""
    if len(comps) == 1:
        return comps[0]
    node_off = np.cumsum([0] + [c.n_nodes for c in comps])
    rec_off = np.cumsum([0] + [c.n_records for c in comps])
    labels = None
    if all(c.labels is not None for c in comps):
        labels = np.concatenate([c.labels for c in comps])
    return CompiledExample(
        x0=np.vstack([c.x0 for c in comps]),
        onehot_dim=comps[0].onehot_dim,
        n_nodes=int(node_off[-1]),
        n_records=int(rec_off[-1]),
        src=np.concatenate([c.src + node_off[k] for k, c in enumerate(comps)]),
        dst=np.concatenate([c.dst + node_off[k] for k, c in enumerate(comps)]),
        rec=np.concatenate([c.rec + rec_off[k] for k, c in enumerate(comps)]),
        coeff=np.concatenate([c.coeff for c in comps]),
        we_rows=np.concatenate([c.we_rows for c in comps]),
        we_segs=np.concatenate([c.we_segs + rec_off[k]
                                for k, c in enumerate(comps)]),
        path_mat=np.vstack([c.path_mat for c in comps]),
        t0_idx=np.concatenate([c.t0_idx + node_off[k]
                               for k, c in enumerate(comps)]),
        t1_idx=np.concatenate([c.t1_idx + node_off[k]
                               for k, c in enumerate(comps)]),
        labels=labels)


@dataclass(eq=False)
class ForwardState:
    node_embeddings: list[np.ndarray]   # per layer, input first
    path_vector: np.ndarray
    logit: float
    probability: float


def bce_on_tape(tape: Tape, probs: Slot, labels) -> Slot:
    """Mean clamped cross-entropy over a (B x 1) probability column."""
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    if y.shape != probs.value.shape:
        raise ShapeMismatch(f"{y.shape[0]} labels for {probs.value.shape[0]} probs")
    y_slot = tape.input(y)
    pc = tape.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    log_p = tape.log(pc)
    log_q = tape.log(tape.affine(pc, -1.0, 1.0))
    terms = tape.add(tape.elementwise_mul(y_slot, log_p),
                     tape.elementwise_mul(tape.affine(y_slot, -1.0, 1.0), log_q))
    return tape.scale(tape.total_sum(terms), -1.0 / y.shape[0])


class AgcnModel:
    """Bundles schema, config and parameters with the taped forward pass."""

    kind = "agcn"

    def __init__(self, schema: AttrGroupSchema, node_dim: int,
                 cfg: ModelConfig | None = None,
                 params: ModelParams | None = None, seed: int = 0):
        self.schema = schema
        self.node_dim = node_dim
        self.cfg = cfg or ModelConfig()
        self.params = params or init_params(schema, node_dim, self.cfg, seed)

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        return self.params.named()

    def compile(self, sub: Subgraph, bundle: PathBundle,
                label: int | None = None) -> CompiledExample:
        return compile_example(sub, bundle, self.schema,
                               self.cfg.projection_groups, label)

    def loss_on_tape(self, tape: Tape, comp: CompiledExample, labels=None
                     ) -> tuple[Slot, Slot, dict[str, Slot]]:
        """Build the mean loss over the compiled batch.

        Returns (loss, probabilities, parameter slots); parameter slots are
        registered in named order so the trainer can read gradients back by
        name after ``tape.backward``.
        """
        if labels is None:
            labels = comp.labels
        param_slots = {name: tape.input(arr) for name, arr in self.named_params()}
        _, _, _, prob = self._forward_with_slots(tape, comp, param_slots)
        return bce_on_tape(tape, prob, labels), prob, param_slots

    def _forward_with_slots(self, tape: Tape, comp: CompiledExample,
                            param_slots: dict[str, Slot]):
        cfg = self.cfg
        proj, g_src, g_rec, scatter = comp.operators()
        v = tape.input(comp.x0)
        layer_slots = [v]
        for l in range(len(self.params.layers)):
            w_edge = param_slots[f"layer{l}.w_edge"]
            w_node = param_slots[f"layer{l}.w_node"]
            w_agg = param_slots[f"layer{l}.w_agg"]
            h = tape.matmul(v, w_node)
            eproj = tape.spmm(proj, w_edge)
            msgs = tape.elementwise_mul(tape.spmm(g_rec, eproj),
                                        tape.spmm(g_src, h))
            agg = tape.spmm(scatter, msgs)
            pre = tape.row_scale(tape.add(h, agg), comp.coeff)
            v = tape.leaky_relu(tape.matmul(pre, w_agg), cfg.leaky_slope)
            layer_slots.append(v)

        t0 = tape.gather_rows(v, comp.t0_idx)
        t1 = tape.gather_rows(v, comp.t1_idx)
        path_slot = tape.input(comp.path_mat)
        if cfg.symmetric_readout:
            z = tape.hconcat([tape.add(t0, t1),
                              tape.absval(tape.add(t0, tape.affine(t1, -1.0))),
                              path_slot])
        else:
            z = tape.hconcat([t0, t1, path_slot])
        hidden = tape.leaky_relu(
            tape.add_bias(tape.matmul(z, param_slots["classifier.w1"]),
                          param_slots["classifier.b1"]),
            cfg.leaky_slope)
        logit = tape.add_bias(tape.matmul(hidden, param_slots["classifier.w2"]),
                              param_slots["classifier.b2"])
        prob = tape.sigmoid(logit)
        return layer_slots, path_slot, logit, prob

    def predict_batch(self, comps: list[CompiledExample],
                      chunk: int = 256) -> np.ndarray:
        """Probabilities for many compiled examples, chunked into batches."""
        out = []
        for start in range(0, len(comps), chunk):
            comp = merge_compiled(comps[start:start + chunk])
            tape = Tape()
            param_slots = {name: tape.input(arr)
                           for name, arr in self.named_params()}
            _, _, _, prob = self._forward_with_slots(tape, comp, param_slots)
            out.append(prob.value[:, 0])
        return np.concatenate(out) if out else np.empty(0)

    def predict_proba(self, comp: CompiledExample) -> float:
        return float(self.predict_batch([comp])[0])

    def forward(self, sub: Subgraph, bundle: PathBundle) -> ForwardState:
        comp = self.compile(sub, bundle)
        tape = Tape()
        param_slots = {name: tape.input(arr) for name, arr in self.named_params()}
        layers, path_slot, logit, prob = self._forward_with_slots(tape, comp, param_slots)
        return ForwardState(node_embeddings=[s.value for s in layers],
                            path_vector=path_slot.value.reshape(-1).copy(),
                            logit=float(logit.value[0, 0]),
                            probability=float(prob.value[0, 0]))

    def save(self, path) -> None:
        save_checkpoint(path, self.kind, self.schema, self.node_dim, self.cfg,
                        self.named_params())

    @classmethod
    def from_checkpoint(cls, ckpt: "Checkpoint",
                        schema: AttrGroupSchema) -> "AgcnModel":
        if ckpt.kind != cls.kind:
            raise CheckpointError(f"checkpoint holds a {ckpt.kind!r} model")
        if ckpt.schema_digest != schema.digest():
            raise SchemaMismatch("checkpoint schema digest does not match graph schema")
        arrays = dict(ckpt.arrays)
        cfg = ckpt.config
        layers = [LayerParams(w_edge=arrays[f"layer{l}.w_edge"],
                              w_node=arrays[f"layer{l}.w_node"],
                              w_agg=arrays[f"layer{l}.w_agg"])
                  for l in range(cfg.num_layers)]
        classifier = MlpParams(w1=arrays["classifier.w1"], b1=arrays["classifier.b1"],
                               w2=arrays["classifier.w2"], b2=arrays["classifier.b2"])
        return cls(schema, ckpt.node_dim, cfg, ModelParams(layers, classifier))


# -- checkpoint format ---------------------------------------------------------

_MAGIC = b"AGCN"
_VERSION = 1


@dataclass
class Checkpoint:
    kind: str
    node_dim: int
    schema_digest: bytes
    config: ModelConfig
    arrays: list[tuple[str, np.ndarray]]


def save_checkpoint(path, kind: str, schema: AttrGroupSchema, node_dim: int,
                    cfg: ModelConfig, named_arrays: list[tuple[str, np.ndarray]]
                    ) -> None:
    """Versioned binary: header, config, schema digest, then the parameter
    blobs (float64, row-major) in declared order."""
    kind_code = {"agcn": 0, "concat": 1}[kind]
    groups = cfg.projection_groups
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HBB", _VERSION, kind_code,
                             int(cfg.symmetric_readout)))
        fh.write(struct.pack("<IIIId", cfg.num_layers, cfg.hidden_dim,
                             cfg.mlp_hidden, node_dim, cfg.leaky_slope))
        if groups is None:
            fh.write(struct.pack("<i", -1))
        else:
            fh.write(struct.pack("<i", len(groups)))
            fh.write(struct.pack(f"<{len(groups)}I", *groups) if groups else b"")
        fh.write(schema.digest())
        fh.write(struct.pack("<I", len(named_arrays)))
        for name, arr in named_arrays:
            name_b = name.encode()
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        if data[:4] != _MAGIC:
            raise CheckpointError(f"{path}: not a model checkpoint")
        off = 4
        version, kind_code, symmetric = struct.unpack_from("<HBB", data, off)
        off += 4
        if version != _VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        num_layers, hidden, mlp_hidden, node_dim, slope = struct.unpack_from(
            "<IIIId", data, off)
        off += 24
        (n_groups,) = struct.unpack_from("<i", data, off)
        off += 4
        if n_groups < 0:
            groups = None
        else:
            groups = struct.unpack_from(f"<{n_groups}I", data, off)
            off += 4 * n_groups
        digest = data[off:off + 32]
        off += 32
        (n_arrays,) = struct.unpack_from("<I", data, off)
        off += 4
        arrays = []
        for _ in range(n_arrays):
            (name_len,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + name_len].decode()
            off += name_len
            rows, cols = struct.unpack_from("<II", data, off)
            off += 8
            nbytes = rows * cols * 8
            arr = np.frombuffer(data[off:off + nbytes], dtype="<f8").reshape(rows, cols).copy()
            off += nbytes
            arrays.append((name, arr))
    except (struct.error, IndexError, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({e})")
    kind = {0: "agcn", 1: "concat"}[kind_code]
    cfg = ModelConfig(hidden_dim=hidden, num_layers=num_layers,
                      mlp_hidden=mlp_hidden, leaky_slope=slope,
                      symmetric_readout=bool(symmetric),
                      projection_groups=groups)
    return Checkpoint(kind=kind, node_dim=node_dim, schema_digest=digest,
                      config=cfg, arrays=arrays)
