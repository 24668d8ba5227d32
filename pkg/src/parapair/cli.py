"""Command-line entry point: ``parapair <command> [options]``.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, corpus, evaluation, sentiment
from .errors import ParapairError
from .training import TrainConfig, build_model, new_state, train_epoch
from .variants import VARIANT_NAMES

log = logging.getLogger("parapair")

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- config -----------------------------------------------------------------

def read_config(path):
    """Flat ``key = value`` file; blank lines and ``#`` comments ignored."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _settings(args, defaults=None):
    values = dict(defaults or {})
    if args.config:
        values.update(read_config(args.config))
    for item in args.set or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    if args.seed is not None:
        values["seed"] = args.seed
    return values


def _train_config(args, extra=None):
    values = _settings(args)
    values.update({k: v for k, v in (extra or {}).items() if v is not None})
    paths = {k: values.pop(k) for k in list(values) if k.endswith("_file") or k in ("output_dir", "checkpoint")}
    for k in [k for k in values if k.startswith("head_")]:
        del values[k]
    try:
        return TrainConfig.from_mapping(values), paths
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def _output_dir(args, names):
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    clash = [n for n in names if (out / n).exists()]
    if clash and not args.force:
        raise ParapairError(f"{out} already holds {', '.join(sorted(clash))}; pass --force to overwrite")
    return out


def _need_file(path, what):
    if not path:
        raise UsageError(f"{what} is required")
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return Path(path)


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\r\n") for line in fh]


def _fmt(x):
    return repr(float(x))


# -- train ------------------------------------------------------------------

def _decode_texts(model, vocab, batch, t_max):
    f = model.encode(batch.sources, batch.source_lengths)
    return [vocab.decode(ids) for ids in model.decode_greedy(f, t_max)]


def cmd_train(args):
    config, paths = _train_config(args, {"variant": args.variant, "epochs": args.epochs})
    train_path = _need_file(args.data or paths.get("train_file"), "--data")
    pairs = corpus.ingest_pairs(train_path, keep_only_duplicates=not args.all_pairs)
    val_path = args.val or paths.get("val_file")
    if val_path:
        val = corpus.ingest_pairs(_need_file(val_path, "--val"), keep_only_duplicates=not args.all_pairs)
        train = list(pairs)
    else:
        n_val = max(1, len(pairs) // 10)
        train, val, _ = corpus.split(pairs, (len(pairs) - n_val, n_val, 0), seed=config.seed)
    if len(train) < 1:
        raise ParapairError("no training pairs")
    names = [f"checkpoint_epoch{e:03d}.ckpt" for e in range(1, config.epochs + 1)]
    out = _output_dir(args, names + ["vocab.txt", "train_log.jsonl", "metrics.csv"])
    vocab = corpus.build_vocab((corpus.tokenize(p.question1) + corpus.tokenize(p.question2) for p in train),
                               min_freq=config.min_freq, max_size=config.vocab_size)
    vocab.save(out / "vocab.txt")
    data = corpus.encode_batch(train, vocab, config.max_len)
    val_batch = corpus.encode_batch(val, vocab, config.max_len)
    val_refs = [corpus.tokenize(p.question2) for p in val]
    refs_ids = [vocab.decode(vocab.encode(r)) for r in val_refs]
    model = build_model(config, len(vocab))
    state = new_state(config)
    columns = ["epoch", "bleu_1", "bleu_2", "bleu_3", "bleu_4", "rouge_l", "meteor_lite", "cider",
               "ter", "local", "global", "total"]
    with open(out / "train_log.jsonl", "w", encoding="utf-8") as log_sink, \
            open(out / "metrics.csv", "w", encoding="utf-8", newline="") as mfh:
        writer = csv.writer(mfh, lineterminator="\n")
        writer.writerow(columns)
        for epoch in range(1, config.epochs + 1):
            summary = train_epoch(model, data, config, state, log_sink)
            hyps = _decode_texts(model, vocab, val_batch, config.t_max)
            rep = evaluation.evaluate_corpus(hyps, refs_ids)
            writer.writerow([epoch] + [_fmt(getattr(rep, c)) for c in columns[1:9]]
                            + [_fmt(summary.local), _fmt(summary.global_), _fmt(summary.total)])
            mfh.flush()
            checkpoint.save_checkpoint(model, vocab, config, out / names[epoch - 1])
            log.info("epoch %d: total %.4f  val bleu_1 %.4f", epoch, summary.total, rep.bleu_1)
    return EXIT_OK


# -- generate / embed -------------------------------------------------------

def _load(args):
    path = _need_file(args.checkpoint, "--checkpoint")
    model, vocab, config = checkpoint.load_checkpoint(path)
    if args.vocab:
        other = corpus.Vocabulary.load(args.vocab)
        if other != vocab:
            raise ParapairError(f"vocabulary {args.vocab} does not match checkpoint {path}")
    return model, vocab, config


def _sentences(path):
    lines = _read_lines(path)
    return [line.split("\t")[0] for line in lines]


def _writer(args, default_name):
    if args.output == "-" or (not args.output and not args.output_dir):
        return sys.stdout, False
    path = Path(args.output) if args.output else _output_dir(args, [default_name]) / default_name
    if args.output and path.exists() and not args.force:
        raise ParapairError(f"{path} exists; pass --force to overwrite")
    return open(path, "w", encoding="utf-8", newline=""), True


def cmd_generate(args):
    model, vocab, config = _load(args)
    sents = _sentences(_need_file(args.input, "--input"))
    t_max = args.t_max or config.t_max
    fh, close = _writer(args, "generated.tsv")
    try:
        for i in range(0, len(sents), 256):
            chunk = sents[i:i + 256]
            batch = corpus.encode_batch([(s, "") for s in chunk], vocab, config.max_len)
            for src, hyp in zip(chunk, _decode_texts(model, vocab, batch, t_max)):
                fh.write(f"{src}\t{' '.join(hyp)}\n")
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_embed(args):
    model, vocab, config = _load(args)
    sents = _sentences(_need_file(args.input, "--input"))
    X = sentiment.embed_phrases(sents, model, vocab, config.max_len)
    fh, close = _writer(args, "embeddings.txt")
    try:
        for row in X:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    finally:
        if close:
            fh.close()
    return EXIT_OK


# -- evaluate ---------------------------------------------------------------

def cmd_evaluate(args):
    hyps = [corpus.tokenize(s) for s in _read_lines(_need_file(args.hyps, "--hyps"))]
    ref_sets = [[corpus.tokenize(s) for s in _read_lines(_need_file(p, "--refs"))] for p in args.refs]
    for refs in ref_sets:
        if len(refs) != len(hyps):
            raise evaluation.AlignmentError(f"{len(hyps)} hypotheses but {len(refs)} reference lines")
    refs = [[rs[i] for rs in ref_sets] for i in range(len(hyps))]
    report = evaluation.evaluate_corpus(hyps, refs).as_dict()
    fh, close = _writer(args, "metrics.json")
    try:
        fh.write(json.dumps(report, sort_keys=True) + "\n")
    finally:
        if close:
            fh.close()
    return EXIT_OK


# -- sentiment --------------------------------------------------------------

def _head_config(args):
    values = _settings(args)
    cfg = sentiment.HeadConfig()
    mapping = {"head_learning_rate": "learning_rate", "head_batch_size": "batch_size",
               "head_alpha": "alpha", "head_epsilon": "epsilon", "head_epochs": "epochs", "seed": "seed"}
    for key, attr in mapping.items():
        if key in values:
            kind = type(getattr(cfg, attr))
            setattr(cfg, attr, kind(values[key]))
    if args.epochs is not None:
        cfg.epochs = args.epochs
    return cfg


def save_head(head, path):
    with open(path, "wb") as fh:
        np.savez(fh, W=head.W.data, b=head.b.data)


def load_head(path):
    with np.load(path) as z:
        return sentiment.SentimentHead(z["W"].shape[1], z["W"], z["b"])


def cmd_sentiment_train(args):
    examples = corpus.ingest_phrases(_need_file(args.train, "--train"))
    if not examples:
        raise ParapairError("no usable phrases in the training file")
    hcfg = _head_config(args)
    names = ["sentiment_head.npz"]
    if args.checkpoint:
        model, vocab, config = _load(args)
    else:
        config, _ = _train_config(args)
        names.append("encoder.ckpt")
        vocab = corpus.build_vocab((corpus.tokenize(e.phrase) for e in examples),
                                   min_freq=config.min_freq, max_size=config.vocab_size)
        model = build_model(config, len(vocab))
    out = _output_dir(args, names)
    head = sentiment.train_head(examples, model, vocab, hcfg, config.max_len)
    save_head(head, out / "sentiment_head.npz")
    if not args.checkpoint:
        checkpoint.save_checkpoint(model, vocab, config, out / "encoder.ckpt")
    X = sentiment.embed_phrases([e.phrase for e in examples], model, vocab, config.max_len)
    acc = float(np.mean(np.argmax(head.probabilities(X), axis=1) == [e.sentiment for e in examples]))
    print(json.dumps({"examples": len(examples), "train_accuracy": acc}))
    return EXIT_OK


def cmd_sentiment_predict(args):
    model, vocab, config = _load(args)
    head = load_head(_need_file(args.head, "--head"))
    examples = corpus.ingest_phrases(_need_file(args.input, "--input"))
    X = sentiment.embed_phrases([e.phrase for e in examples], model, vocab, config.max_len)
    probs = head.probabilities(X) if len(X) else np.zeros((0, 5))
    fh, close = _writer(args, "predictions.tsv")
    try:
        for e, p in zip(examples, probs):
            fh.write("\t".join([str(e.phrase_id), str(int(np.argmax(p)))] + [_fmt(x) for x in p]) + "\n")
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_saliency(args):
    model, vocab, config = _load(args)
    head = load_head(_need_file(args.head, "--head"))
    examples = corpus.ingest_phrases(_need_file(args.input, "--input"))
    names = [f"{e.phrase_id}.saliency.csv" for e in examples]
    out = _output_dir(args, names)
    for e, name in zip(examples, names):
        smap = sentiment.saliency(e.phrase, model, vocab, head, config.max_len, mode=args.mode)
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["word"] + [f"f{j}" for j in range(model.d)] + ["word_score"])
            for tok, row, score in zip(smap.tokens, smap.values, smap.word_scores):
                w.writerow([tok] + [_fmt(x) for x in row] + [_fmt(score)])
    return EXIT_OK


# -- significance -----------------------------------------------------------

def read_scores(path):
    """CSV with header ``dataset,method_1,...`` and one row of scores per dataset."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or len(rows[0]) < 3:
        raise ParapairError(f"{path}: need a header and at least one dataset row with two methods")
    methods = [m.strip() for m in rows[0][1:]]
    try:
        scores = [[float(x) for x in r[1:]] for r in rows[1:] if r]
    except ValueError as exc:
        raise ParapairError(f"{path}: {exc}") from None
    if any(len(r) != len(methods) for r in scores):
        raise ParapairError(f"{path}: ragged score rows")
    return methods, np.array(scores)


def cmd_significance(args):
    methods, scores = read_scores(_need_file(args.scores, "--scores"))
    result = evaluation.nemenyi_test(scores, methods, args.alpha, not args.lower_is_better)
    if args.output_dir:
        out = _output_dir(args, ["cd_diagram.csv"])
        with open(out / "cd_diagram.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "mean_rank", "cd"])
            for m in methods:
                w.writerow([m, _fmt(result["average_ranks"][m]), _fmt(result["cd"])])
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def _variant_name(text):
    name = text.upper()
    if name not in VARIANT_NAMES:
        raise argparse.ArgumentTypeError(f"invalid variant {text!r} (choose from {', '.join(VARIANT_NAMES)})")
    return name


def build_parser():
    parser = argparse.ArgumentParser(prog="parapair", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a paraphrase model")
    _common(p)
    p.add_argument("--variant", type=_variant_name, help=f"one of {', '.join(VARIANT_NAMES)}")
    p.add_argument("--epochs", type=int)
    p.add_argument("--data", help="training pairs TSV")
    p.add_argument("--val", help="validation pairs TSV (default: hold out 10%% of --data)")
    p.add_argument("--all-pairs", action="store_true", help="keep non-duplicate rows too")
    p.set_defaults(func=cmd_train)

    def model_io(p, default_out=True):
        _common(p)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--vocab", help="vocabulary file to check against the checkpoint")
        p.add_argument("--input", required=True)
        if default_out:
            p.add_argument("--output", help="output file ('-' for stdout)")

    p = sub.add_parser("generate", help="generate paraphrases for one sentence per line")
    model_io(p)
    p.add_argument("--t-max", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("embed", help="write one sentence embedding per input line")
    model_io(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("evaluate", help="score hypotheses against references")
    _common(p)
    p.add_argument("--hyps", required=True)
    p.add_argument("--refs", required=True, action="append", help="reference file (repeatable)")
    p.add_argument("--output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sentiment", help="sentiment head on frozen embeddings")
    ssub = p.add_subparsers(dest="action", required=True)
    q = ssub.add_parser("train")
    _common(q)
    q.add_argument("--train", required=True, help="phrase TSV")
    q.add_argument("--checkpoint", help="encoder checkpoint (default: fresh encoder on the phrase vocabulary)")
    q.add_argument("--vocab")
    q.add_argument("--epochs", type=int)
    q.set_defaults(func=cmd_sentiment_train)
    q = ssub.add_parser("predict")
    model_io(q)
    q.add_argument("--head", required=True)
    q.set_defaults(func=cmd_sentiment_predict)
    q = ssub.add_parser("saliency")
    model_io(q, default_out=False)
    q.add_argument("--head", required=True)
    q.add_argument("--mode", choices=("logprob", "score"), default="logprob")
    q.set_defaults(func=cmd_saliency)

    p = sub.add_parser("saliency", help="per-word saliency maps (same as 'sentiment saliency')")
    model_io(p, default_out=False)
    p.add_argument("--head", required=True)
    p.add_argument("--mode", choices=("logprob", "score"), default="logprob")
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("significance", help="Nemenyi critical difference over method ranks")
    _common(p)
    p.add_argument("--scores", required=True, help="CSV: dataset,method_1,method_2,...")
    p.add_argument("--alpha", type=float, choices=(0.05, 0.10), default=0.05)
    p.add_argument("--lower-is-better", action="store_true")
    p.set_defaults(func=cmd_significance)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "saliency" or getattr(args, "action", None) == "saliency":
        if not args.output_dir:
            args.output_dir = "."
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"parapair: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParapairError, OSError, ValueError) as exc:
        print(f"parapair: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
