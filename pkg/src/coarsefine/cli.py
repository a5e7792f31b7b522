"""Command-line interface.

Subcommands: build-index, retrieve, eval, add-docs, train-adapter, inspect.
Every engine parameter can come from (in rising precedence) built-in
defaults, a flat JSON config file (--config), or a command-line flag. All
randomness flows from the single `seed` parameter. Exit codes: 0 on success,
1 for domain errors, 2 for I/O and usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .corpus import TrainingPair, load_corpus, load_queries, qrels_mapping
from .embed import load_embedding_sidecar
from .errors import ParseError, RetrievalError
from .evaluation import EvalReport, evaluate_results, index_diagnostics, position_error_rate
from .intra import train_adapter
from .kmeans import derive_seed
from .pipeline import (
    RetrievalConfig,
    add_documents,
    build_index,
    load_config,
    load_index,
    retrieve,
    save_index,
)

CONFIG_FLAGS = [
    ("beta", float, "fusion weight on the dense within-cluster score"),
    ("gamma", float, "weight on same-cluster negatives in the training loss"),
    ("beam_size", int, "beam width for identifier decoding"),
    ("length_penalty", float, "exponent of the hypothesis length penalty"),
    ("k_clusters", int, "number of clusters recalled per query"),
    ("expected_clusters", int, "target leaf count used to derive the recursion threshold"),
    ("branching", int, "k-means branching factor of the identifier tree"),
    ("temperature", float, "softmax temperature of the centroid step scorer"),
    ("dim", int, "embedding dimension"),
    ("seed", int, "master seed; all per-stage seeds derive from it"),
    ("n_spans", int, "synthetic query spans per document"),
    ("span_len", int, "tokens per synthetic query span"),
    ("n_a", int, "same-cluster negatives per training pair"),
]


def _add_config_flags(parser: argparse.ArgumentParser, names: list[str] | None = None) -> None:
    parser.add_argument("--config", help="flat JSON config file")
    for name, typ, help_text in CONFIG_FLAGS:
        if names is None or name in names:
            parser.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None,
                                help=help_text, dest=name)


def _resolve_config(args: argparse.Namespace, base: RetrievalConfig | None = None) -> RetrievalConfig:
    """Defaults (or the index's stored config), then config file, then flags."""
    values = dataclasses.asdict(base if base is not None else RetrievalConfig())
    if getattr(args, "config", None):
        file_cfg = load_config(args.config)
        values.update(dataclasses.asdict(file_cfg))
    for name, _, _ in CONFIG_FLAGS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    try:
        return RetrievalConfig(**values)
    except ValueError as exc:
        raise ParseError(f"invalid configuration: {exc}")


def _load_sidecar_if_given(args: argparse.Namespace):
    bin_path = getattr(args, "doc_embeddings_bin", None)
    manifest = getattr(args, "doc_embeddings_manifest", None)
    if (bin_path is None) != (manifest is None):
        raise ParseError("--doc-embeddings-bin and --doc-embeddings-manifest go together")
    if bin_path is None:
        return None
    ids, matrix = load_embedding_sidecar(bin_path, manifest)
    return {doc_id: matrix[i] for i, doc_id in enumerate(ids)}


def cmd_build_index(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    docs = load_corpus(args.corpus)
    doc_embeddings = _load_sidecar_if_given(args)
    index = build_index(docs, config, doc_embeddings=doc_embeddings)
    save_index(index, args.out)
    print(f"indexed {len(index.corpus)} documents into {index.tree.leaf_count} leaf clusters")
    if args.qrels:
        qrels = qrels_mapping(load_queries(args.qrels, require_relevant=True))
        report = index_diagnostics(index.tree.leaves, index.tree.cid_by_doc, qrels)
        print(report.format_table())
    return 0


def cmd_retrieve(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    index.config = _resolve_config(args, base=index.config)
    index.scorer = dataclasses.replace(index.scorer, temperature=index.config.temperature)
    queries = load_queries(args.queries)
    with open(args.out, "w", encoding="utf-8") as fh:
        for query in queries:
            result = retrieve(index, query.text, args.k)
            fh.write(json.dumps({
                "query_id": query.query_id,
                "query_text": query.text,
                "k": args.k,
                "results": [dataclasses.asdict(entry) for entry in result.entries],
            }, sort_keys=True))
            fh.write("\n")
    print(f"retrieved top-{args.k} for {len(queries)} queries -> {args.out}")
    return 0


def _load_results(path: str) -> dict[str, list[str]]:
    ranked: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise ParseError(f"{path}: line {lineno}: invalid JSON", line=lineno)
            if "query_id" not in obj or "results" not in obj:
                raise ParseError(f"{path}: line {lineno}: malformed results record",
                                 line=lineno)
            ranked[obj["query_id"]] = [entry["doc_id"] for entry in obj["results"]]
    return ranked


def cmd_eval(args: argparse.Namespace) -> int:
    results = _load_results(args.results)
    qrels = qrels_mapping(load_queries(args.qrels, require_relevant=True))
    report = evaluate_results(results, qrels, args.k)
    if args.index:
        index = load_index(args.index)
        scored_qrels = {qid: docs for qid, docs in qrels.items() if qid in results}
        diag = index_diagnostics(index.tree.leaves, index.tree.cid_by_doc, scored_qrels)
        report.leaf_count = diag.leaf_count
        report.cid_length_histogram = diag.cid_length_histogram
        report.mean_prefix_overlap = diag.mean_prefix_overlap
        predicted = {
            qid: _unique_cids(docs, index.tree.cid_by_doc) for qid, docs in results.items()
        }
        relevant_cids = {
            qid: {index.tree.cid_by_doc[d] for d in docs if d in index.tree.cid_by_doc}
            for qid, docs in qrels.items()
        }
        max_len = max((len(c) for cids in predicted.values() for c in cids), default=0)
        for pos in range(1, max_len + 1):
            report.position_error_rates[pos] = position_error_rate(predicted, relevant_cids, pos)
    print(report.format_table())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
            fh.write("\n")
    return 0


def _unique_cids(doc_ids: list[str], cid_by_doc: dict) -> list:
    out = []
    for doc_id in doc_ids:
        cid = cid_by_doc.get(doc_id)
        if cid is not None and cid not in out:
            out.append(cid)
    return out


def cmd_add_docs(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    docs = load_corpus(args.corpus)
    before = {cid: len(leaf.members) for cid, leaf in index.tree.leaves.items()}
    add_documents(index, docs)
    save_index(index, args.index)
    print(f"added {len(docs)} documents")
    for cid, leaf in sorted(index.tree.leaves.items()):
        delta = len(leaf.members) - before[cid]
        if delta:
            print(f"  {'.'.join(map(str, cid))}: +{delta}")
    return 0


def _load_pairs(path: str) -> list[TrainingPair]:
    pairs: list[TrainingPair] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise ParseError(f"{path}: line {lineno}: invalid JSON", line=lineno)
            try:
                pairs.append(TrainingPair(
                    query_id=obj["query_id"],
                    query_text=obj["query_text"],
                    positive_doc_id=obj["positive_doc_id"],
                ))
            except (KeyError, TypeError):
                raise ParseError(f"{path}: line {lineno}: malformed training pair",
                                 line=lineno)
    return pairs


def cmd_train_adapter(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    index.config = _resolve_config(args, base=index.config)
    pairs = _load_pairs(args.pairs)
    query_embeddings = {p.query_id: index.embedder.embed(p.query_text) for p in pairs}
    adapter, losses = train_adapter(
        pairs,
        index.tree,
        index.embeddings,
        query_embeddings,
        gamma=index.config.gamma,
        n_a=index.config.n_a,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        seed=derive_seed(index.config.seed, "train"),
        batch_size=args.batch_size,
    )
    index.adapter = adapter
    save_index(index, args.index)
    for epoch, loss in enumerate(losses, start=1):
        print(f"epoch {epoch}: loss {loss:.6f}")
    print(f"adapter trained on {len(pairs)} pairs -> {args.index}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    qrels = None
    if args.qrels:
        qrels = qrels_mapping(load_queries(args.qrels, require_relevant=True))
    report = index_diagnostics(index.tree.leaves, index.tree.cid_by_doc, qrels)
    print(f"documents           {len(index.corpus)}")
    print(f"adapter             {'yes' if index.adapter is not None else 'no'}")
    print(report.format_table())
    print("config:")
    for key, value in sorted(dataclasses.asdict(index.config).items()):
        print(f"  {key} = {value}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coarsefine",
        description="Coarse-to-fine document retrieval over a cluster-identifier tree.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="embed a corpus and build an index directory")
    p.add_argument("--corpus", required=True, help="JSONL corpus of {id, text}")
    p.add_argument("--out", required=True, help="index directory to create")
    p.add_argument("--qrels", help="optional qrels JSONL; prints overlap diagnostics")
    p.add_argument("--doc-embeddings-bin", help="external document embeddings (f32 binary)")
    p.add_argument("--doc-embeddings-manifest", help="manifest JSON for --doc-embeddings-bin")
    _add_config_flags(p)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("retrieve", help="run queries against an index")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True, help="JSONL of {query_id, query_text}")
    p.add_argument("--out", required=True, help="JSONL results file to write")
    p.add_argument("--k", type=int, default=20, help="documents returned per query")
    _add_config_flags(p, ["beta", "beam_size", "k_clusters", "length_penalty", "temperature"])
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval", help="score a results file against qrels")
    p.add_argument("--results", required=True, help="JSONL written by retrieve")
    p.add_argument("--qrels", required=True, help="JSONL of {query_id, query_text, relevant}")
    p.add_argument("--k", type=int, nargs="+", default=[20, 100], help="cutoffs to report")
    p.add_argument("--index", help="optional index directory for structural diagnostics")
    p.add_argument("--out", help="optional JSON report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("add-docs", help="append documents to an existing index")
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", required=True, help="JSONL corpus of new documents")
    p.set_defaults(func=cmd_add_docs)

    p = sub.add_parser("train-adapter", help="fit the query-side adapter on training pairs")
    p.add_argument("--index", required=True)
    p.add_argument("--pairs", required=True,
                   help="JSONL of {query_id, query_text, positive_doc_id}")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=16)
    _add_config_flags(p, ["gamma", "n_a"])
    p.set_defaults(func=cmd_train_adapter)

    p = sub.add_parser("inspect", help="print index statistics")
    p.add_argument("--index", required=True)
    p.add_argument("--qrels", help="optional qrels JSONL; adds overlap diagnostics")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RetrievalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
