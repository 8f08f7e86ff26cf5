"""Command-line surface.

Subcommands: train (with --continue for checkpointed training), eval,
generate, inspect, instances, reweigh, and curve. Every run is reproducible
from its flags plus input files; eval reports echo the invocation, and
mistakes exit with distinct codes per error class (2 usage, 3 I/O,
4 malformed input, 5 incompatible/corrupt model, 1 anything else).
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import classify as classify_mod
from . import evaluate as evaluate_mod
from .corpus import dump_instances, load_token_stream, load_vocabulary, window_instances
from .errors import (
    CorruptModelError,
    EmptyStreamError,
    IncompatibleModelError,
    MalformedCorpusError,
    MalformedVocabularyError,
    MtlmError,
    UnknownTokenError,
    UnsupportedOperationError,
)
from .generate import GenerationConfig, generate
from .storage import chain_digest, file_digest, load_model, save_model
from .trie import build_trie, insert_instance, node_count, prune_igtree
from .weights import compute_weights, dump_weights, order_by_gain_ratio

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_MALFORMED = 4
EXIT_INCOMPATIBLE = 5

_MALFORMED = (MalformedVocabularyError, MalformedCorpusError, UnknownTokenError, EmptyStreamError)
_INCOMPATIBLE = (IncompatibleModelError, CorruptModelError)


def _add_common(p):
    p.add_argument("--ids", action="store_true",
                   help="corpus/prompt tokens are integer IDs, and output uses IDs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtlm", description="Memory-based language modeling on prefix tries")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model (or continue a checkpoint) from a corpus")
    p.add_argument("corpus")
    p.add_argument("--model", required=True, help="output model path")
    p.add_argument("--vocab", help="vocabulary file (required unless --continue)")
    p.add_argument("--algorithm", choices=["ib1", "tribl2", "igtree"], default="tribl2")
    p.add_argument("--context", type=int, default=4, help="context width n (default 4)")
    p.add_argument("--continue", dest="continue_model", metavar="MODEL",
                   help="load MODEL, insert the corpus, re-save (lossless models only)")
    p.add_argument("--checkpoint-interval", type=int, default=0, metavar="N",
                   help="auto-save every N inserted instances (0 = off)")
    p.add_argument("--dump-weights", action="store_true", help="print the weight table to stdout")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate next-token prediction on a test corpus")
    p.add_argument("corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--metric", choices=["accuracy", "perplexity", "all"], default="all")
    p.add_argument("-k", type=int, default=1, help="equidistance ranks to merge (default 1)")
    p.add_argument("--normalize", choices=["proportional", "softmax"], default="proportional")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, help="break prediction ties randomly with this seed")
    p.add_argument("--deterministic", action="store_true",
                   help="deterministic tie-breaking (the default)")
    p.add_argument("--log", help="write the per-token prediction log (TSV) here")
    p.add_argument("--json", dest="json_path", help="write the report as JSON here")
    p.add_argument("--figures", metavar="DIR", help="render report figures into DIR")
    _add_common(p)

    p = sub.add_parser("generate", help="autoregressive generation from a prompt")
    p.add_argument("prompt", nargs="*", help="prompt tokens (texts, or IDs with --ids)")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=["greedy", "sample", "top_k"], default="greedy")
    p.add_argument("--max-tokens", type=int, default=50)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--stop", help="stop (without emitting) when this token is produced")
    p.add_argument("--top-k", dest="top_k_size", type=int, help="candidate pool size for top_k mode")
    p.add_argument("--normalize", choices=["proportional", "softmax"], default="proportional")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("-k", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("inspect", help="explain one classification, neighbor by neighbor")
    p.add_argument("query", nargs="+", help="exactly n context tokens")
    p.add_argument("--model", required=True)
    p.add_argument("-k", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("instances", help="dump windowed instances (n context IDs + target per line)")
    p.add_argument("corpus")
    p.add_argument("--vocab", required=True)
    p.add_argument("--context", type=int, default=4)
    _add_common(p)

    p = sub.add_parser("reweigh", help="recompute frozen feature weights from a corpus")
    p.add_argument("corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="write here instead of overwriting --model")
    _add_common(p)

    p = sub.add_parser("curve", help="fit accuracy = a + b ln(size) over measured points")
    p.add_argument("points", help="TSV file of training_size<TAB>accuracy rows")
    p.add_argument("--figures", metavar="DIR", help="render the learning-curve figure into DIR")

    return parser


def _resolve_tokens(texts, vocab, id_mode):
    ids = []
    for col, tok in enumerate(texts, start=1):
        if id_mode:
            try:
                tid = int(tok, 10)
            except ValueError:
                raise MalformedCorpusError(f"non-integer token {tok!r} (id-mode)") from None
            if tid < 0 or tid >= vocab.size:
                raise UnknownTokenError(tok, 0, col)
        else:
            tid = vocab.id_of(tok)
            if tid is None:
                raise UnknownTokenError(tok, 0, col)
        ids.append(tid)
    return ids


def _echo_config(args) -> str:
    parts = [args.command]
    for key, value in sorted(vars(args).items()):
        if key == "command" or value in (None, False):
            continue
        parts.append(f"{key}={value}")
    return " ".join(parts)


def cmd_train(args) -> int:
    started = time.perf_counter()
    if args.continue_model:
        model = load_model(args.continue_model)
        if model.pruned:
            raise UnsupportedOperationError(
                "cannot continue training a pruned igtree model; retrain from the lossless corpus"
            )
        vocab = model.vocab
        if args.vocab:
            supplied = load_vocabulary(args.vocab)
            if supplied.entries != vocab.entries:
                raise IncompatibleModelError("--vocab does not match the model's vocabulary")
        stream = load_token_stream(args.corpus, vocab, id_mode=args.ids)
        inserted = 0
        try:
            for inst in window_instances(stream, model.context_width, vocab.boundary_id):
                insert_instance(model, inst)
                inserted += 1
                if args.checkpoint_interval and inserted % args.checkpoint_interval == 0:
                    save_model(model, args.model)
        except MemoryError:
            print(f"error: out of memory after {inserted} inserted instances", file=sys.stderr)
            raise
        if inserted:
            old = bytes.fromhex(model.metadata.get("corpus_digest", "00" * 32))
            model.metadata["corpus_digest"] = chain_digest(old, file_digest(args.corpus)).hex()
        model.metadata["config"] = _echo_config(args)
        save_model(model, args.model)
        print(f"continued: +{inserted} instances "
              f"({model.instance_count} total), {node_count(model)} nodes, "
              f"{time.perf_counter() - started:.2f}s")
        return EXIT_OK

    if not args.vocab:
        raise MalformedCorpusError("--vocab is required when training from scratch")
    if args.context < 1:
        raise MalformedCorpusError("--context must be >= 1")
    vocab = load_vocabulary(args.vocab)
    stream = load_token_stream(args.corpus, vocab, id_mode=args.ids)
    n = args.context
    weights = compute_weights(window_instances(stream, n, vocab.boundary_id), n)
    if args.dump_weights:
        dump_weights(weights, sys.stdout)
    built = 0

    def counted():
        nonlocal built
        for inst in window_instances(stream, n, vocab.boundary_id):
            built += 1
            yield inst

    try:
        model = build_trie(counted(), weights, n, algorithm=args.algorithm, vocab=vocab)
    except MemoryError:
        print(f"error: out of memory after {built} instances", file=sys.stderr)
        raise
    if args.algorithm == "igtree":
        prune_igtree(model)
    model.metadata["corpus_digest"] = file_digest(args.corpus).hex()
    model.metadata["config"] = _echo_config(args)
    save_model(model, args.model)
    print(f"trained {args.algorithm}: {model.instance_count} instances, "
          f"{node_count(model)} nodes, {time.perf_counter() - started:.2f}s")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    stream = load_token_stream(args.corpus, model.vocab, id_mode=args.ids)
    policy = (classify_mod.TiePolicy("seeded", args.seed)
              if args.seed is not None and not args.deterministic
              else classify_mod.DETERMINISTIC)
    report, records = evaluate_mod.evaluate_model(
        model, stream, k=args.k, normalization=args.normalize,
        temperature=args.temperature, policy=policy,
    )
    print(f"# {_echo_config(args)}")
    if args.metric == "accuracy":
        print(f"token_count\t{report.token_count}")
        print(f"correct_count\t{report.correct_count}")
        print(f"accuracy\t{report.accuracy:.6g}")
    elif args.metric == "perplexity":
        ppl = "nan" if report.perplexity is None else f"{report.perplexity:.6g}"
        print(f"perplexity\t{ppl}")
        print(f"coverage\t{report.coverage:.6g}")
    else:
        sys.stdout.write(report.render())
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            evaluate_mod.write_prediction_log(records, fh)
    if args.json_path:
        payload = {"config": _echo_config(args), **report.as_dict()}
        with open(args.json_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    if args.figures:
        from pathlib import Path

        from . import plots

        outdir = Path(args.figures)
        outdir.mkdir(parents=True, exist_ok=True)
        binning = evaluate_mod.frequency_bins(
            (r.predicted for r in records), model.root.counts
        )
        plots.plot_frequency_bins(binning, outdir / "frequency_bins.png")
        plots.plot_distribution_sizes([r.dist_size for r in records],
                                      outdir / "distribution_sizes.png")
    return EXIT_OK


def cmd_generate(args) -> int:
    model = load_model(args.model)
    prompt = _resolve_tokens(args.prompt, model.vocab, args.ids)
    stop = None
    if args.stop is not None:
        stop = _resolve_tokens([args.stop], model.vocab, args.ids)[0]
    cfg = GenerationConfig(
        mode=args.mode,
        max_tokens=args.max_tokens,
        seed=args.seed,
        stop_token=stop,
        normalization=args.normalize,
        temperature=args.temperature,
        top_k=args.top_k_size,
    )
    tokens = generate(model, prompt, cfg, k=args.k)
    if args.ids:
        print(" ".join(str(t) for t in tokens))
    else:
        print(" ".join(model.vocab.text_of(t) for t in tokens))
    return EXIT_OK


def cmd_inspect(args, parser=None) -> int:
    model = load_model(args.model)
    if len(args.query) != model.context_width:
        raise SystemExit2(f"query needs exactly {model.context_width} tokens, got {len(args.query)}")
    query = _resolve_tokens(args.query, model.vocab, args.ids)
    report = classify_mod.explain(model, query, k=args.k)
    sys.stdout.write(report.render(model.vocab))
    return EXIT_OK


class SystemExit2(MtlmError):
    """Usage error discovered after argparse (wrong query arity, ...)."""


def cmd_instances(args) -> int:
    vocab = load_vocabulary(args.vocab)
    if args.context < 1:
        raise MalformedCorpusError("--context must be >= 1")
    stream = load_token_stream(args.corpus, vocab, id_mode=args.ids)
    dump_instances(window_instances(stream, args.context, vocab.boundary_id), sys.stdout)
    return EXIT_OK


def cmd_reweigh(args) -> int:
    model = load_model(args.model)
    stream = load_token_stream(args.corpus, model.vocab, id_mode=args.ids)
    n = model.context_width
    new_weights = compute_weights(window_instances(stream, n, model.vocab.boundary_id), n)
    if order_by_gain_ratio(new_weights.gain_ratio) != model.feature_order:
        raise UnsupportedOperationError(
            "refreshed weights change the feature order; the trie layout is frozen, retrain instead"
        )
    model.weights = new_weights
    save_model(model, args.out or args.model)
    dump_weights(new_weights, sys.stdout)
    return EXIT_OK


def cmd_curve(args) -> int:
    points = []
    with open(args.points, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            size_s, acc_s = line.split("\t")
            points.append((float(size_s), float(acc_s)))
    fit = evaluate_mod.fit_loglinear(points)
    print(f"intercept\t{fit.intercept:.10g}")
    print(f"slope\t{fit.slope:.10g}")
    print(f"r\t{fit.r:.10g}")
    if args.figures:
        from pathlib import Path

        from . import plots

        outdir = Path(args.figures)
        outdir.mkdir(parents=True, exist_ok=True)
        plots.plot_learning_curve(fit, outdir / "learning_curve.png")
    return EXIT_OK


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "generate": cmd_generate,
    "inspect": cmd_inspect,
    "instances": cmd_instances,
    "reweigh": cmd_reweigh,
    "curve": cmd_curve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SystemExit2 as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except _MALFORMED as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_MALFORMED
    except _INCOMPATIBLE as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except MtlmError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
