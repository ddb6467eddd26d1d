"""Command-line pipeline: generate, pretrain, train, tag, eval.

Diagnostics go to stderr; data goes to files or stdout. Every command is
deterministic given identical inputs and seed. A run manifest (resolved
config, seed, input digests) is written before training starts.
"""

import argparse
import hashlib
import json
import os
import sys
import time

from . import __version__
from .corpus import (
    LABEL_BOL_ID,
    WORD_BOS_ID,
    Sentence,
    Vocabulary,
    build_vocabulary,
    decode_labels,
    encode,
    load_column_file,
    write_column_file,
)
from .errors import ConfigError, LabelRnnError
from .mathcore import new_rng, xavier_init
from .metrics import evaluate
from .models import (
    DIR_BWD,
    DIR_FWD,
    VARIANTS,
    load_model,
    save_model,
    tag_bidirectional,
    tag_greedy,
)
from .pretrain import load_external_embeddings, save_embeddings, train_nnlm
from .synthetic import Grammar, generate_corpus_files
from .training import TrainConfig, train_bidirectional, train_tagger, write_log

CONFIG_PATH_ENV = "LABELRNN_CONFIG"


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _info(msg):
    print(msg, file=sys.stderr)


# -- generate ----------------------------------------------------------------

def cmd_generate(args) -> int:
    grammar = Grammar.from_json(args.grammar) if args.grammar else None
    paths = generate_corpus_files(args.out_dir, args.size, args.seed, grammar)
    for name, path in paths.items():
        _info(f"wrote {name} split to {path}")
    return 0


# -- pretrain ------------------------------------------------------------------

def cmd_pretrain(args) -> int:
    sentences = load_column_file(args.train)
    if not sentences:
        raise ConfigError(f"training file {args.train} is empty")
    vocab = build_vocabulary(sentences, lowercase=not args.no_lowercase)
    if args.target == "words":
        sequences = [[vocab.word_id(w) for w in s.words] for s in sentences]
        size, pad, id_to_token = vocab.n_words, WORD_BOS_ID, vocab.id_to_word
        epochs = args.epochs if args.epochs is not None else 30
    else:
        sequences = [[vocab.label_id(l) for l in s.labels] for s in sentences]
        size, pad, id_to_token = vocab.n_labels, LABEL_BOL_ID, vocab.id_to_label
        epochs = args.epochs if args.epochs is not None else 20
    table, losses = train_nnlm(
        sequences, size, pad, context=args.context, embed_size=args.embed_size,
        hidden_size=args.hidden_size, epochs=epochs, lr0=args.lr0,
        rng=new_rng(args.seed),
    )
    save_embeddings(table, id_to_token, args.out)
    _info(f"{args.target} NNLM: {epochs} epochs, loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    _info(f"wrote embeddings to {args.out}")
    return 0


# -- train --------------------------------------------------------------------

def _resolve_config(args) -> TrainConfig:
    if args.preset == "media-like":
        config = TrainConfig.media_like()
    else:
        config = TrainConfig.atis_like()
    path = args.config or os.environ.get(CONFIG_PATH_ENV)
    if path:
        with open(path, encoding="utf-8") as fh:
            file_config = TrainConfig.from_kv(fh.read())
        config = file_config
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        config = TrainConfig.from_kv(config.to_kv() + item + "\n")
    if args.seed is not None:
        config.seed = args.seed
    if args.use_classes:
        config.use_classes = True
    if args.use_chars:
        config.use_chars = True
    config.validate()
    return config


def _write_manifest(path, config: TrainConfig, inputs: dict):
    digests = {name: _sha256(p) for name, p in inputs.items()}
    payload = {
        "config": {line.split("=", 1)[0]: line.split("=", 1)[1]
                   for line in config.to_kv().strip().splitlines()},
        "seed": config.seed,
        "inputs": digests,
        "version": __version__,
    }
    payload["run_digest"] = hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()
    ).hexdigest()
    payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _load_init_table(path, token_to_id, rows, cols, seed):
    table = xavier_init(rows, cols, new_rng(seed))
    loaded = load_external_embeddings(path, token_to_id, table)
    _info(f"loaded {loaded} pretrained rows from {path}")
    return table


def cmd_train(args) -> int:
    config = _resolve_config(args)
    train_sents = load_column_file(args.train)
    dev_sents = load_column_file(args.dev) if args.dev else train_sents

    if args.direction == "bidir":
        if not args.fwd_model or not args.bwd_model:
            raise ConfigError("--direction bidir requires --fwd-model and --bwd-model")
        fwd = load_model(args.fwd_model)
        bwd = load_model(args.bwd_model)
        vocab = Vocabulary.load(args.fwd_model + ".vocab")
        if fwd.vocab_hash != vocab.hash() or bwd.vocab_hash != vocab.hash():
            raise ConfigError("component models disagree with the stored vocabulary")
        inputs = {"train": args.train, "fwd_model": args.fwd_model, "bwd_model": args.bwd_model}
        if args.dev:
            inputs["dev"] = args.dev
        _write_manifest(args.out + ".manifest.json", config, inputs)
        train_seqs = [encode(s, vocab) for s in train_sents]
        dev_seqs = [encode(s, vocab) for s in dev_sents]
        fwd2, bwd2, log = train_bidirectional(fwd, bwd, train_seqs, dev_seqs, vocab, config)
        save_model(fwd2, args.out + ".fwd")
        save_model(bwd2, args.out + ".bwd")
        vocab.save(args.out + ".vocab")
        write_log(log, args.out + ".log")
        _info(f"wrote bidirectional pair to {args.out}.fwd / {args.out}.bwd")
        return 0

    direction = DIR_FWD if args.direction == "fwd" else DIR_BWD
    vocab = build_vocabulary(train_sents, min_count=config.min_count,
                             lowercase=config.lowercase)
    inputs = {"train": args.train}
    if args.dev:
        inputs["dev"] = args.dev
    for name in ("word_emb", "label_emb"):
        if getattr(args, name):
            inputs[name] = getattr(args, name)
    _write_manifest(args.out + ".manifest.json", config, inputs)

    train_seqs = [encode(s, vocab) for s in train_sents]
    dev_seqs = [encode(s, vocab) for s in dev_sents]
    init_w = init_l = None
    if args.word_emb:
        init_w = _load_init_table(args.word_emb, vocab.words, vocab.n_words,
                                  config.embed_size, config.seed + 1)
    if args.label_emb:
        init_l = _load_init_table(args.label_emb, vocab.labels, vocab.n_labels,
                                  config.embed_size, config.seed + 2)
    model, log = train_tagger(train_seqs, dev_seqs, vocab, config, args.variant,
                              direction, init_word_emb=init_w, init_label_emb=init_l)
    save_model(model, args.out)
    vocab.save(args.out + ".vocab")
    write_log(log, args.out + ".log")
    best = max(log, key=lambda e: e.dev_acc if config.dev_metric == "accuracy" else e.dev_f1)
    with open(args.out + ".summary", "w", encoding="utf-8") as fh:
        fh.write(f"best_epoch={best.epoch}\nbest_dev_acc={best.dev_acc:.4f}\n"
                 f"best_dev_f1={best.dev_f1:.4f}\nfinal_train_loss={log[-1].train_loss:.6f}\n")
    _info(f"wrote model to {args.out} (best dev acc {best.dev_acc:.2f}%)")
    return 0


# -- tag -----------------------------------------------------------------------

def cmd_tag(args) -> int:
    if args.model:
        model = load_model(args.model)
        vocab = Vocabulary.load(args.vocab or args.model + ".vocab")
        if model.vocab_hash != vocab.hash():
            raise ConfigError("vocabulary hash mismatch between model and vocabulary file")
        tagger = lambda seq: tag_greedy(model, seq)
    elif args.fwd_model and args.bwd_model:
        fwd = load_model(args.fwd_model)
        bwd = load_model(args.bwd_model)
        vocab = Vocabulary.load(args.vocab or args.fwd_model + ".vocab")
        if fwd.vocab_hash != vocab.hash() or bwd.vocab_hash != vocab.hash():
            raise ConfigError("vocabulary hash mismatch between models and vocabulary file")
        tagger = lambda seq: tag_bidirectional(fwd, bwd, seq)
    else:
        raise ConfigError("tag requires --model, or --fwd-model plus --bwd-model")

    sentences = load_column_file(args.input)
    tagged = []
    for sent in sentences:
        seq = encode(sent, vocab, with_labels=False)
        out = tagger(seq)
        predicted = decode_labels(out.labels, vocab)
        tagged.append(Sentence(words=sent.words, classes=sent.classes, labels=predicted))
    write_column_file(tagged, args.output)
    _info(f"tagged {len(tagged)} sentences into {args.output}")
    return 0


# -- eval ------------------------------------------------------------------------

def cmd_eval(args) -> int:
    gold = [s.labels for s in load_column_file(args.gold)]
    pred = [s.labels for s in load_column_file(args.pred)]
    report = evaluate(gold, pred, mode=args.chunk_mode)
    print(report.to_text())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_kv())
    return 0


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelrnn",
        description="sequence-labeling taggers with label-embedding feedback",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic slot-filling corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--size", type=int, required=True, help="training sentences; dev/test get size/10")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--grammar", help="JSON grammar file (default: built-in flight grammar)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("pretrain", help="train an NNLM and export its embeddings")
    p.add_argument("--train", required=True)
    p.add_argument("--target", choices=("words", "labels"), required=True)
    p.add_argument("--epochs", type=int, default=None, help="default 30 for words, 20 for labels")
    p.add_argument("--out", required=True)
    p.add_argument("--context", type=int, default=4)
    p.add_argument("--embed-size", type=int, default=200)
    p.add_argument("--hidden-size", type=int, default=200)
    p.add_argument("--lr0", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--no-lowercase", action="store_true")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train a tagger (fwd/bwd) or fine-tune a bidirectional pair")
    p.add_argument("--variant", choices=VARIANTS, default="irnn")
    p.add_argument("--direction", choices=("fwd", "bwd", "bidir"), default="fwd")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--config", help="key=value config file (flags override)")
    p.add_argument("--preset", choices=("atis-like", "media-like"), default="atis-like")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config field")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--use-classes", action="store_true")
    p.add_argument("--use-chars", action="store_true")
    p.add_argument("--word-emb", help="pretrained word embeddings (text format)")
    p.add_argument("--label-emb", help="pretrained label embeddings (text format)")
    p.add_argument("--fwd-model", help="bidir: trained forward model")
    p.add_argument("--bwd-model", help="bidir: trained backward model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="label a column file with a trained model")
    p.add_argument("--model")
    p.add_argument("--fwd-model")
    p.add_argument("--bwd-model")
    p.add_argument("--vocab", help="vocabulary file (default: <model>.vocab)")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("eval", help="score a predicted column file against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--chunk-mode", choices=("bio-suffix", "bio-prefix", "plain"),
                   default="bio-suffix")
    p.add_argument("--out", help="also write a key=value report file")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LabelRnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
