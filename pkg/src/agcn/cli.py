"""Command-line front end.

Subcommands: ingest, extract, synth, train, eval, predict, baseline, stats.
Every run logs its fully resolved configuration (defaults included) to
stderr, so any output can be reproduced from the log line alone.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

Training options resolve in three layers: built-in defaults, then the
``--config`` file (flat ``key = value`` lines), then explicit flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .baselines import ConcatModel, adamic_adar_score, common_neighbors_score
from .errors import DataError, DivergedLoss, ParseError
from .evaluation import SynthConfig, auc, generate_synthetic, path_stats
from .extraction import build_dataset, enumerate_paths, examples_for_pairs, extract_subgraph
from .graph import MISSING, export, ingest
from .model import AgcnModel, ModelConfig, load_checkpoint
from .training import TrainConfig, train

logger = logging.getLogger(__name__)

TRAIN_DEFAULTS = {
    "model": "agcn",
    "epochs": 30,
    "batch_size": 32,
    "learning_rate": 1e-3,
    "optimizer": "adam",
    "l2_weight": 0.0,
    "seed": 0,
    "neg_ratio": 1.0,
    "early_stop_patience": 0,
    "val_fraction": 0.1,
    "hops": 2,
    "neighbor_cap": 64,
    "max_len": 2,
    "max_paths": 64,
    "hidden_dim": 32,
    "mlp_hidden": 32,
    "num_layers": 2,
    "symmetric_readout": False,
}


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors (default would be 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _log_config(command: str, resolved: dict) -> None:
    body = " ".join(f"{k}={resolved[k]}" for k in sorted(resolved))
    print(f"config: command={command} {body}", file=sys.stderr)


def _load_graph(args):
    return ingest(args.nodes, args.edges, args.schema)


def read_pairs(path) -> list[tuple[int, int]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(path, line_no, f"expected 'i<TAB>j', got {line!r}")
            try:
                out.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ParseError(path, line_no, f"non-integer pair {line!r}")
    return out


def read_labeled_pairs(path) -> list[tuple[int, int, int]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, line_no,
                                 f"expected 'i<TAB>j<TAB>label', got {line!r}")
            try:
                i, j, label = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError:
                raise ParseError(path, line_no, f"non-integer field in {line!r}")
            if label not in (0, 1):
                raise ParseError(path, line_no, f"label must be 0 or 1, got {label}")
            out.append((i, j, label))
    return out


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; types taken from TRAIN_DEFAULTS."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(path, line_no, f"expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in TRAIN_DEFAULTS:
                raise ParseError(path, line_no, f"unknown option {key!r}")
            default = TRAIN_DEFAULTS[key]
            try:
                if isinstance(default, bool):
                    out[key] = value.lower() in ("1", "true", "yes")
                elif isinstance(default, int):
                    out[key] = int(value)
                elif isinstance(default, float):
                    out[key] = float(value)
                else:
                    out[key] = value
            except ValueError:
                raise ParseError(path, line_no, f"bad value {value!r} for {key!r}")
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


# -- subcommand implementations -------------------------------------------------

def cmd_ingest(args) -> int:
    g = _load_graph(args)
    degree_sum = sum(g.degree(v) for v in range(g.node_count))
    print(f"nodes\t{g.node_count}")
    print(f"edges\t{g.edge_count}")
    print(f"node_dim\t{g.node_dim}")
    print(f"groups\t{g.schema.group_count}")
    print(f"degree_sum\t{degree_sum}")
    if args.export_prefix:
        export(g, f"{args.export_prefix}nodes.tsv", f"{args.export_prefix}edges.tsv",
               f"{args.export_prefix}schema.tsv")
    return 0


def cmd_extract(args) -> int:
    g = _load_graph(args)
    pairs = read_pairs(args.pairs)
    names = g.schema.names
    with open(args.out, "w", encoding="utf-8") as fh:
        for i, j in pairs:
            sub = extract_subgraph(g, i, j, args.hops, args.cap,
                                   mode=args.mode, seed=args.seed)
            bundle = enumerate_paths(sub, args.max_len, args.max_paths)
            record = {
                "i": i,
                "j": j,
                "local_ids": [int(v) for v in sub.local_ids],
                "edges": [[u, v, {names[gi]: val
                                  for gi, val in enumerate(attr.values)
                                  if val != MISSING}]
                          for u, v, attr in sub.edge_records],
                "num_paths": len(bundle),
                "paths_truncated": bundle.truncated,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return 0


def cmd_synth(args) -> int:
    import os
    cfg = SynthConfig(n_users=args.users, n_items=args.items, n_edges=args.edges_count,
                      signal_group=args.signal_group,
                      signal_strength=args.signal_strength,
                      noise_rate=args.noise_rate, n_test=args.n_test,
                      seed=args.seed)
    data = generate_synthetic(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    base = args.out_dir.rstrip("/")
    export(data.graph, f"{base}/nodes.tsv", f"{base}/edges.tsv", f"{base}/schema.tsv")
    with open(f"{base}/pairs.tsv", "w", encoding="utf-8") as fh:
        for i, j in data.positives:
            fh.write(f"{i}\t{j}\n")
    with open(f"{base}/test_pairs.tsv", "w", encoding="utf-8") as fh:
        for i, j, label in data.test_pairs:
            fh.write(f"{i}\t{j}\t{label}\n")
    with open(f"{base}/truth.json", "w", encoding="utf-8") as fh:
        json.dump(data.truth, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"wrote {base}/(schema|nodes|edges|pairs|test_pairs).tsv and truth.json")
    return 0


def _resolve_train_options(args) -> dict:
    resolved = dict(TRAIN_DEFAULTS)
    if args.config:
        resolved.update(read_config_file(args.config))
    for key in TRAIN_DEFAULTS:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            resolved[key] = flag_val
    return resolved


def _build_model(kind: str, schema, node_dim, opts, seed):
    mcfg = ModelConfig(hidden_dim=opts["hidden_dim"], num_layers=opts["num_layers"],
                       mlp_hidden=opts["mlp_hidden"],
                       symmetric_readout=opts["symmetric_readout"])
    cls = {"agcn": AgcnModel, "concat": ConcatModel}[kind]
    return cls(schema, node_dim, mcfg, seed=seed)


def cmd_train(args) -> int:
    opts = _resolve_train_options(args)
    _log_config("train", {**opts, "nodes": args.nodes, "edges": args.edges,
                          "schema": args.schema, "pairs": args.pairs,
                          "out": args.out, "trace": args.trace,
                          "threads": args.threads})
    if opts["model"] not in ("agcn", "concat"):
        raise DataError(f"unknown model {opts['model']!r}")
    g = _load_graph(args)
    positives = read_pairs(args.pairs)
    dataset = build_dataset(g, positives, opts["neg_ratio"], hops=opts["hops"],
                            neighbor_cap=opts["neighbor_cap"],
                            max_len=opts["max_len"], max_paths=opts["max_paths"],
                            seed=opts["seed"], threads=args.threads)
    model = _build_model(opts["model"], g.schema, g.node_dim, opts, opts["seed"])
    tcfg = TrainConfig(epochs=opts["epochs"], batch_size=opts["batch_size"],
                       learning_rate=opts["learning_rate"],
                       optimizer=opts["optimizer"], l2_weight=opts["l2_weight"],
                       seed=opts["seed"], neg_ratio=opts["neg_ratio"],
                       early_stop_patience=opts["early_stop_patience"],
                       val_fraction=opts["val_fraction"])
    result = train(dataset, model, tcfg)
    model.save(args.out)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss,val_auc\n")
            for row in result.trace:
                fh.write(f"{row.epoch},{_fmt(row.train_loss)},{_fmt(row.val_auc)}\n")
    last = result.trace[-1]
    print(f"trained {opts['model']} for {len(result.trace)} epochs "
          f"loss={last.train_loss:.4f} val_auc={last.val_auc:.4f}")
    return 0


def _load_model(path, schema):
    ckpt = load_checkpoint(path)
    cls = {"agcn": AgcnModel, "concat": ConcatModel}[ckpt.kind]
    return cls.from_checkpoint(ckpt, schema)


def _score_pairs(g, model, pairs, args):
    examples = examples_for_pairs(
        g, [(i, j, 0) for i, j in pairs], hops=args.hops, neighbor_cap=args.cap,
        max_len=args.max_len, max_paths=args.max_paths, seed=args.seed,
        train_mode=False, threads=args.threads)
    return list(model.predict_batch(
        [model.compile(ex.sub, ex.bundle) for ex in examples]))


def cmd_predict(args) -> int:
    g = _load_graph(args)
    model = _load_model(args.checkpoint, g.schema)
    pairs = read_pairs(args.pairs)
    scores = _score_pairs(g, model, pairs, args)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for (i, j), s in zip(pairs, scores):
            out.write(f"{i}\t{j}\t{_fmt(s)}\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_eval(args) -> int:
    g = _load_graph(args)
    model = _load_model(args.checkpoint, g.schema)
    labeled = read_labeled_pairs(args.pairs)
    scores = _score_pairs(g, model, [(i, j) for i, j, _ in labeled], args)
    labels = [label for _, _, label in labeled]
    value = auc(scores, labels)
    if args.scores_out:
        with open(args.scores_out, "w", encoding="utf-8") as fh:
            fh.write("i,j,score,label\n")
            for (i, j, label), s in zip(labeled, scores):
                fh.write(f"{i},{j},{_fmt(s)},{label}\n")
    print(_fmt(value))
    return 0


def cmd_baseline(args) -> int:
    g = _load_graph(args)
    pairs = read_pairs(args.pairs)
    if args.method == "cn":
        scores = [common_neighbors_score(g, i, j, normalized=args.normalized)
                  for i, j in pairs]
    elif args.method == "aa":
        scores = [adamic_adar_score(g, i, j) for i, j in pairs]
    else:  # concat
        if not args.checkpoint:
            raise DataError("--checkpoint is required for the concat baseline")
        model = _load_model(args.checkpoint, g.schema)
        scores = _score_pairs(g, model, pairs, args)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for (i, j), s in zip(pairs, scores):
            out.write(f"{i}\t{j}\t{_fmt(s)}\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_stats(args) -> int:
    g = _load_graph(args)
    labeled = read_labeled_pairs(args.pairs)
    examples = examples_for_pairs(g, labeled, hops=args.hops, neighbor_cap=args.cap,
                                  max_len=args.max_len, max_paths=args.max_paths,
                                  seed=args.seed,
                                  train_mode=(args.mode == "train"),
                                  threads=args.threads)
    stats = path_stats(examples, k=args.k)
    print(f"label\tn\tmean_paths\tfrac_le_{stats.k}")
    for label in sorted(stats.per_label, reverse=True):
        s = stats.per_label[label]
        name = "positive" if label == 1 else "negative"
        print(f"{name}\t{s.n_examples}\t{s.mean_paths:.4f}\t{s.frac_le:.4f}")
    if args.histogram:
        print("label\tpath_len\tcount")
        for label in sorted(stats.per_label, reverse=True):
            for length, count in stats.per_label[label].length_hist.items():
                print(f"{label}\t{length}\t{count}")
    return 0


# -- parser construction ------------------------------------------------------------

def _add_graph_args(p):
    p.add_argument("--nodes", required=True, help="node attribute TSV")
    p.add_argument("--edges", required=True, help="edge TSV")
    p.add_argument("--schema", required=True, help="attribute group schema TSV")


def _add_extraction_args(p, with_mode=False):
    p.add_argument("--hops", type=int, default=2, help="subgraph radius (default 2)")
    p.add_argument("--cap", type=int, default=64,
                   help="max sampled neighbors per frontier node (default 64)")
    p.add_argument("--max-len", type=int, default=2, dest="max_len",
                   help="max path length between targets (default 2)")
    p.add_argument("--max-paths", type=int, default=64, dest="max_paths",
                   help="path cap per pair (default 64)")
    p.add_argument("--seed", type=int, default=0)
    if with_mode:
        p.add_argument("--mode", choices=["train_positive", "inference"],
                       default="inference")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="agcn",
                     description="Edge-attribute-aware GCN link prediction toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate graph files and report stats")
    _add_graph_args(p)
    p.add_argument("--export-prefix", default=None,
                   help="re-export canonical files under this path prefix")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="dump enclosing subgraphs as JSON lines")
    _add_graph_args(p)
    p.add_argument("--pairs", required=True, help="TSV of 'i<TAB>j'")
    _add_extraction_args(p, with_mode=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("synth", help="generate a planted-signal synthetic dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--users", type=int, default=1000)
    p.add_argument("--items", type=int, default=1000)
    p.add_argument("--edges-count", type=int, default=3000)
    p.add_argument("--signal-group", type=int, default=0)
    p.add_argument("--signal-strength", type=float, default=1.0)
    p.add_argument("--noise-rate", type=float, default=0.0)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on positive pairs")
    _add_graph_args(p)
    p.add_argument("--pairs", required=True, help="TSV of positive 'i<TAB>j'")
    p.add_argument("--config", default=None, help="flat key = value option file")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--trace", default=None, help="CSV of epoch,loss,val_auc")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--model", choices=["agcn", "concat"], default=None)
    for key in ("epochs", "batch_size", "seed", "early_stop_patience", "hops",
                "neighbor_cap", "max_len", "max_paths", "hidden_dim",
                "mlp_hidden", "num_layers"):
        p.add_argument(f"--{key.replace('_', '-')}", type=int, default=None,
                       dest=key)
    for key in ("learning_rate", "l2_weight", "neg_ratio", "val_fraction"):
        p.add_argument(f"--{key.replace('_', '-')}", type=float, default=None,
                       dest=key)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default=None)
    p.add_argument("--symmetric-readout", action="store_const", const=True,
                   default=None, dest="symmetric_readout")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="AUC of a checkpoint on labeled pairs")
    _add_graph_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", required=True, help="TSV of 'i<TAB>j<TAB>label'")
    p.add_argument("--scores-out", default=None, help="CSV of i,j,score,label")
    _add_extraction_args(p)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="score pairs with a checkpoint")
    _add_graph_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", required=True, help="TSV of 'i<TAB>j'")
    p.add_argument("--out", default=None, help="TSV out (default stdout)")
    _add_extraction_args(p)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("baseline", help="heuristic or concat-GNN scores")
    _add_graph_args(p)
    p.add_argument("--method", choices=["cn", "aa", "concat"], required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--normalized", action="store_true",
                   help="cn only: divide by the neighborhood union size")
    p.add_argument("--checkpoint", default=None, help="required for concat")
    p.add_argument("--out", default=None)
    _add_extraction_args(p)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("stats", help="path-count statistics per label")
    _add_graph_args(p)
    p.add_argument("--pairs", required=True, help="TSV of 'i<TAB>j<TAB>label'")
    p.add_argument("--mode", choices=["train", "inference"], default="train",
                   help="train removes the target edge under label-1 pairs")
    p.add_argument("--k", type=int, default=1, help="threshold for frac_le column")
    p.add_argument("--histogram", action="store_true")
    _add_extraction_args(p)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return 1
    if getattr(args, "func", None) is not cmd_train:
        shown = {k: v for k, v in vars(args).items()
                 if k not in ("func", "command") and v is not None}
        _log_config(args.command, shown)
    try:
        return args.func(args) or 0
    except DivergedLoss as e:
        print(f"agcn: numerical failure: {e}", file=sys.stderr)
        return 3
    except (DataError, OSError, ValueError) as e:
        print(f"agcn: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
