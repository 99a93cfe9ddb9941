"""Command-line interface binding the retrieval modules together.

Every flag can also be supplied through a flat ``key=value`` config
file (``--config FILE``); explicit command-line flags win over the
file.  Keys use the flag name with dashes or underscores
interchangeably, e.g. ``k-retrieve=90`` or ``k_retrieve=90``.
"""

import argparse
import json
import sys

from . import dense, lexical, metrics, mining, segment
from .corpus import answers_per_question, load_corpus, load_qa, normalize_qa, split_train_eval
from .errors import DataFormatError, LegalRankError, ParameterError
from .losslab import TrainConfig, demo_pairs, toy_train
from .pipeline import (
    BlendScorer,
    Bm25Scorer,
    CosineScorer,
    EvalSet,
    IndexBundle,
    OracleScorer,
    PipelineConfig,
    RemoteScorer,
    retrieve_rerank,
)


def _write_json(obj, path=None) -> None:
    text = json.dumps(obj, ensure_ascii=False)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_pairs_jsonl(path):
    """Read {"qid","question","cid"} JSON lines (the normalized store)."""
    from .corpus import QaPair

    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pairs.append(QaPair(qid=obj["qid"], question=obj["question"], cid=obj["cid"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataFormatError(f"{path}:{lineno}: bad pair object") from exc
    return pairs


def _save_pairs_jsonl(pairs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(
                {"qid": p.qid, "question": p.question, "cid": p.cid},
                ensure_ascii=False) + "\n")


def _load_queries(path) -> dict[str, str]:
    """qid -> question from TSV lines or a pairs JSONL file."""
    queries: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.lstrip().startswith("{"):
                try:
                    obj = json.loads(line)
                    queries[obj["qid"]] = obj["question"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise DataFormatError(f"{path}:{lineno}: bad query object") from exc
            else:
                qid, sep, question = line.partition("\t")
                if not sep:
                    raise DataFormatError(f"{path}:{lineno}: expected 'qid<TAB>question'")
                queries[qid] = question
    return queries


def _load_any_index(path):
    """Open an index file of either kind, dispatching on its format tag."""
    try:
        return lexical.InvertedIndex.load(path)
    except DataFormatError:
        return dense.EmbeddingIndex.load(path)


def _bm25_params(args, index=None) -> lexical.Bm25Params:
    base = index.default_params if index is not None else lexical.Bm25Params()
    return lexical.Bm25Params(
        variant=args.variant if args.variant is not None else base.variant,
        k1=args.k1 if args.k1 is not None else base.k1,
        b=args.b if args.b is not None else base.b,
        delta=args.delta if args.delta is not None else base.delta,
    )


def _resolve_embedder(args, index=None):
    spec = args.embedder
    if spec is None and index is not None and index.embedder_desc:
        spec = index.embedder_desc
    if spec is None:
        spec = "hashedbow"
    seg = segment.get_segmenter(args.segmenter)
    return dense.make_embedder(spec, dim=args.dim, segmenter=seg,
                               timeout=args.timeout, batch_size=args.batch_size)


def _cmd_ingest(args) -> int:
    corpus = load_corpus(args.corpus)
    records = load_qa(args.qa)
    pairs = normalize_qa(records, corpus)
    _save_pairs_jsonl(pairs, args.out)
    if args.qrels_out:
        qrels: dict[str, set[str]] = {}
        for p in pairs:
            qrels.setdefault(p.qid, set()).add(p.cid)
        metrics.save_qrels(qrels, args.qrels_out)
    print(f"documents={len(corpus)} records={len(records)} pairs={len(pairs)}")
    return 0


def _cmd_split(args) -> int:
    pairs = _load_pairs_jsonl(args.pairs)
    train, eval_ = split_train_eval(pairs, args.ratio, args.seed)
    _save_pairs_jsonl(train, args.train_out)
    _save_pairs_jsonl(eval_, args.eval_out)
    print(f"train_pairs={len(train)} eval_pairs={len(eval_)}")
    return 0


def _cmd_index_lexical(args) -> int:
    corpus = load_corpus(args.corpus)
    seg = segment.get_segmenter(args.segmenter)
    index = lexical.build_lexical_index(corpus, seg)
    index.default_params = _bm25_params(args)
    index.save(args.out)
    print(f"indexed={index.n} terms={len(index.terms)} avgdl={index.avgdl:.2f}")
    return 0


def _cmd_index_dense(args) -> int:
    corpus = load_corpus(args.corpus)
    embedder = _resolve_embedder(args)
    index = dense.build_dense_index(corpus, embedder)
    index.save(args.out)
    flagged = f" zero_vectors={len(index.zero_cids)}" if index.zero_cids else ""
    print(f"indexed={index.n} dim={index.dim}{flagged}")
    return 0


def _cmd_retrieve(args) -> int:
    index = _load_any_index(args.index)
    queries = _load_queries(args.queries)
    run: dict = {}
    if isinstance(index, lexical.InvertedIndex):
        seg = segment.get_segmenter(
            args.segmenter if args.segmenter != "default" else index.segmenter_desc
        )
        params = _bm25_params(args, index)
        for qid, question in queries.items():
            run[qid] = lexical.lexical_topk(index, params, question, args.k, seg)
    else:
        embedder = _resolve_embedder(args, index)
        vectors = dense.embed_queries(list(queries.items()), embedder)
        for qid in queries:
            run[qid] = dense.dense_topk(index, vectors[qid], args.k)
    metrics.save_run(run, args.out)
    print(f"queries={len(run)} k={args.k}")
    return 0


def _make_scorer(args, corpus, queries):
    spec = args.scorer

    def _scorer_lexical_index():
        path = args.lexical_index or args.index
        if not path:
            raise ParameterError(f"scorer {spec!r} needs --lexical-index (or --index)")
        return lexical.InvertedIndex.load(path)

    if spec == "cosine":
        return CosineScorer(_resolve_embedder(args))
    if spec == "bm25":
        index = _scorer_lexical_index()
        return Bm25Scorer(index, _bm25_params(args, index),
                          segment.get_segmenter(args.segmenter))
    if spec == "blend":
        index = _scorer_lexical_index()
        return BlendScorer(
            Bm25Scorer(index, _bm25_params(args, index),
                       segment.get_segmenter(args.segmenter)),
            CosineScorer(_resolve_embedder(args)),
            w_bm25=args.w_bm25, w_cosine=args.w_cosine,
        )
    if spec.startswith("remote:"):
        return RemoteScorer(spec[len("remote:"):], timeout=args.timeout,
                            batch_size=args.batch_size)
    if spec == "oracle":
        if not args.qrels:
            raise ParameterError("--qrels is required for the oracle scorer")
        return OracleScorer(corpus, metrics.load_qrels(args.qrels), queries)
    raise ParameterError(f"unknown scorer {spec!r}")


def _cmd_rerank(args) -> int:
    corpus = load_corpus(args.corpus)
    index = _load_any_index(args.index)
    queries = _load_queries(args.queries)
    cfg = PipelineConfig(
        retriever="lexical" if isinstance(index, lexical.InvertedIndex) else "dense",
        k_retrieve=args.k_retrieve, k_final=args.k_final,
    )
    bundle = IndexBundle(segmenter=segment.get_segmenter(args.segmenter))
    if isinstance(index, lexical.InvertedIndex):
        bundle.lexical = index
        bundle.bm25 = _bm25_params(args, index)
    else:
        bundle.dense = index
        bundle.embedder = _resolve_embedder(args, index)
    scorer = _make_scorer(args, corpus, queries)
    run = {}
    for qid, question in queries.items():
        run[qid] = retrieve_rerank(question, cfg, bundle, scorer, corpus)
    metrics.save_run(run, args.out)
    print(f"queries={len(run)} k_retrieve={cfg.k_retrieve} k_final={cfg.k_final}")
    return 0


def _cmd_mine(args) -> int:
    corpus = load_corpus(args.corpus)
    pairs = _load_pairs_jsonl(args.pairs)
    candidates = metrics.load_run(args.candidates)
    cfg = mining.MiningConfig(strategy=args.strategy, n=args.n, seed=args.seed,
                              pool_size=args.pool_size)
    groups: dict[str, dict] = {}
    for p in pairs:
        g = groups.setdefault(p.qid, {"question": p.question, "gold": set()})
        g["gold"].add(p.cid)
    negatives = []
    for qid, g in groups.items():
        cand = candidates.get(qid, [])
        neg_cids = mining.mine_negatives(qid, cand, g["gold"], corpus, cfg)
        negatives.extend(mining.label_negatives(qid, g["question"], neg_cids,
                                                cfg.strategy, cand))
    mining.export_pairs(pairs, negatives, args.out)
    if args.band_report:
        scorer = _make_scorer(args, corpus, {qid: g["question"] for qid, g in groups.items()})
        scores = []
        for n in negatives:
            scores.append(scorer.score(n.question, corpus.lookup(n.cid).text))
        _write_json(mining.band_stats(scores).to_json_dict(), args.band_report)
    print(f"questions={len(groups)} positives={len(pairs)} negatives={len(negatives)}")
    return 0


def _cmd_eval(args) -> int:
    run = metrics.load_run(args.run)
    qrels = metrics.load_qrels(args.qrels)
    exist = metrics.exist_at_m(run, qrels, args.m)
    mrr = metrics.mrr_at_k(run, qrels, args.k)
    report = metrics.metric_report(exist, mrr, len(qrels), args.m, args.k)
    _write_json(report, args.out)
    print(f"exist@{args.m} = {exist:.4f}")
    print(f"mrr@{args.k} = {mrr:.4f}")
    return 0


def _cmd_stats(args) -> int:
    if not args.corpus and not args.qa:
        raise ParameterError("stats needs --corpus and/or --qa")
    seg = segment.get_segmenter(args.segmenter)
    edges = [int(e) for e in args.edges.split(",")]
    if args.corpus:
        corpus = load_corpus(args.corpus)
        counts = segment.length_histogram([d.text for d in corpus], edges, seg)
        print("# corpus document token lengths")
        print("\n".join(segment.format_histogram(edges, counts)))
    if args.qa:
        records = load_qa(args.qa)
        counts = segment.length_histogram([r.question for r in records], edges, seg)
        print("# question token lengths")
        print("\n".join(segment.format_histogram(edges, counts)))
        apq_edges = (1, 2, 3, 4)
        apq = answers_per_question(records, apq_edges)
        print("# answers per question")
        print("\n".join(segment.format_histogram(apq_edges, apq)))
    return 0


def _cmd_losslab(args) -> int:
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                      batch_size=args.batch_size, dim=args.dim,
                      seed=args.seed, scale=args.scale)
    result = toy_train(demo_pairs(), args.loss, cfg)
    lines = [json.dumps(entry, ensure_ascii=False) for entry in result.trace]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    return 0


def _add_bm25_flags(p):
    p.add_argument("--variant", choices=["okapi", "plus"], default=None)
    p.add_argument("--k1", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)


def _add_embedder_flags(p):
    p.add_argument("--embedder", default=None,
                   help="hashedbow | hashedbow:dim=D | file:PATH | remote:URL")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--batch-size", type=int, default=64)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="legalrank",
        description="Two-stage legal-document retrieval toolkit",
    )
    parser.add_argument("--config", default=None, help="flat key=value defaults file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="corpus + QA CSV -> normalized pair store")
    p.add_argument("--corpus", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--qrels-out", default=None)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("split", help="split pairs into train/eval by question")
    p.add_argument("--pairs", required=True)
    p.add_argument("--ratio", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--train-out", required=True)
    p.add_argument("--eval-out", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("index-lexical", help="build a BM25 inverted index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--segmenter", default="default")
    _add_bm25_flags(p)
    p.set_defaults(func=_cmd_index_lexical)

    p = sub.add_parser("index-dense", help="build a dense embedding index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--segmenter", default="default")
    _add_embedder_flags(p)
    p.set_defaults(func=_cmd_index_dense)

    p = sub.add_parser("retrieve", help="first-stage top-k candidates")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=90)
    p.add_argument("--out", required=True)
    p.add_argument("--segmenter", default="default")
    _add_bm25_flags(p)
    _add_embedder_flags(p)
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("rerank", help="two-stage retrieve + re-rank")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scorer", default="blend",
                   help="cosine | bm25 | blend | remote:URL | oracle")
    p.add_argument("--k-retrieve", type=int, default=90)
    p.add_argument("--k-final", type=int, default=10)
    p.add_argument("--lexical-index", default=None,
                   help="lexical index for the bm25/blend scorer")
    p.add_argument("--qrels", default=None, help="gold labels for the oracle scorer")
    p.add_argument("--w-bm25", type=float, default=0.5)
    p.add_argument("--w-cosine", type=float, default=0.5)
    p.add_argument("--segmenter", default="default")
    _add_bm25_flags(p)
    _add_embedder_flags(p)
    p.set_defaults(func=_cmd_rerank)

    p = sub.add_parser("mine", help="mine negative training examples")
    p.add_argument("--pairs", required=True)
    p.add_argument("--candidates", required=True, help="first-stage run file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", choices=["hard", "semi_hard", "easy"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--pool-size", type=int, default=90)
    p.add_argument("--band-report", default=None,
                   help="also score the mined negatives and write band stats")
    p.add_argument("--scorer", default="cosine")
    p.add_argument("--lexical-index", default=None)
    p.add_argument("--index", default=None)
    p.add_argument("--qrels", default=None)
    p.add_argument("--w-bm25", type=float, default=0.5)
    p.add_argument("--w-cosine", type=float, default=0.5)
    p.add_argument("--segmenter", default="default")
    _add_bm25_flags(p)
    _add_embedder_flags(p)
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("eval", help="score a run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--m", type=int, default=90)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("stats", help="token-length and answers-per-question histograms")
    p.add_argument("--corpus", default=None)
    p.add_argument("--qa", default=None)
    p.add_argument("--edges", default="0,128,256,512,1024")
    p.add_argument("--segmenter", default="default")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("losslab", help="emit a training trace of the toy encoder")
    p.add_argument("--loss", choices=["mnrl", "cosine_mse"], default="mnrl")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--scale", type=float, default=20.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_losslab)

    return parser


def _read_config(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise DataFormatError(f"{path}:{lineno}: expected 'key=value'")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    """Install config values as defaults on every matching action."""
    stack = [parser]
    known: set[str] = set()
    while stack:
        current = stack.pop()
        for action in current._actions:
            if isinstance(action, argparse._SubParsersAction):
                stack.extend(action.choices.values())
                continue
            if action.dest in values:
                known.add(action.dest)
                raw = values[action.dest]
                if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                    action.default = raw.lower() in ("1", "true", "yes")
                elif action.type is not None:
                    action.default = action.type(raw)
                else:
                    action.default = raw
                action.required = False
    unknown = set(values) - known
    if unknown:
        raise ParameterError(f"unknown config key(s): {', '.join(sorted(unknown))}")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # Peek at --config before real parsing so file values become defaults.
    config_path = None
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif arg.startswith("--config="):
            config_path = arg.split("=", 1)[1]
    try:
        if config_path:
            _apply_config(parser, _read_config(config_path))
        args = parser.parse_args(argv)
        return args.func(args)
    except LegalRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
