"""Command-line entry point.

Subcommands cover the whole workflow: preprocess raw data into token caches,
train from a preset or config file, predict spans with a checkpoint, score
predictions, ensemble several prediction sets, benchmark throughput, and
export attention heatmaps.  Data paths resolve against $CONVQA_DATA_DIR when
they are not found as given.  Any expected failure prints ``error: ...`` to
stderr and exits 1.
"""

import argparse
import os
import sys

from . import kernels
from .attention import export_attention_heatmap
from .data import (MAX_CONTEXT_LEN, MAX_QUESTION_LEN, load_dataset,
                   load_examples, load_glove, load_squad, make_batches,
                   make_synthetic_dataset, save_examples)
from .errors import ConvqaError
from .evaluation import ensemble, evaluate, format_report
from .models import Model, apply_overrides, load_config, load_model, load_preset
from .span import (out_of_order_rate, read_confidences, read_predictions,
                   write_confidences, write_predictions)
from .training import TrainConfig, scaling_profile, train


def _resolve(path):
    """Use $CONVQA_DATA_DIR as a fallback root for paths that don't exist."""
    if path is None or os.path.exists(path):
        return path
    root = os.environ.get("CONVQA_DATA_DIR")
    if root:
        candidate = os.path.join(root, path)
        if os.path.exists(candidate):
            return candidate
    return path


def _load_model_config(args):
    if args.preset and args.config:
        raise ConvqaError("give either --preset or --config, not both")
    if args.preset:
        config = load_preset(args.preset)
    elif args.config:
        config = load_config(_resolve(args.config))
    else:
        raise ConvqaError("a model needs --preset or --config")
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConvqaError("--set expects key=value, got %r" % item)
        overrides[key.strip()] = value.strip()
    if overrides:
        config = apply_overrides(config, overrides)
    return config


def _add_config_args(sub):
    sub.add_argument("--preset", help="bundled configuration name")
    sub.add_argument("--config", help="configuration file path")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a configuration option (repeatable)")


def cmd_preprocess(args):
    path = _resolve(args.data)
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    if first.lstrip().startswith('{"format"'):
        examples = load_examples(path)
        print("loaded %d cached examples" % len(examples))
    else:
        examples, stats = load_squad(path)
        print("loaded %d examples (%d unalignable, %d empty skipped)"
              % (stats["examples"], stats["skipped_unaligned"],
                 stats["skipped_empty"]))
    save_examples(examples, args.out)
    print("wrote %s" % args.out)
    return 0


def cmd_train(args):
    config = _load_model_config(args)
    vocab = load_glove(_resolve(args.glove), config.embedding_dim)
    train_examples = load_dataset(_resolve(args.data))
    dev_examples = load_dataset(_resolve(args.dev)) if args.dev else None
    model = Model(config, vocab, seed=args.seed)
    print("model %s: %d parameters, %s conv backend"
          % (config.name, model.param_count(), kernels.backend_name()))
    train_config = TrainConfig(
        steps=args.steps, batch_size=args.batch_size, lr=args.lr,
        clip_norm=args.clip_norm, eval_interval=args.eval_interval,
        seed=args.seed, max_context_len=args.max_context_len,
        max_question_len=args.max_question_len, out_dir=args.out_dir)
    result = train(model, train_examples, dev_examples, train_config,
                   log=print)
    print("finished %d steps in %.1fs (final loss %.4f)"
          % (result.steps, result.wall_seconds, result.final_loss))
    if dev_examples:
        print("best dev f1 %.4f (em %.4f) at step %d"
              % (result.best_f1, result.best_em, result.best_step))
    print("checkpoint: %s" % result.checkpoint_path)
    return 0


def _span_cap(value, config):
    if value is None:
        return config.max_span_len
    return None if value <= 0 else value


def cmd_predict(args):
    model = load_model(_resolve(args.checkpoint))
    examples = load_dataset(_resolve(args.data))
    batches = make_batches(examples, model.vocab, args.batch_size,
                           args.max_context_len, args.max_question_len)
    decode_kind = "naive" if args.naive else None
    predictions = model.predict(batches, decode_kind=decode_kind,
                                max_span_len=_span_cap(args.max_span_len,
                                                       model.config))
    write_predictions(args.out, {qid: p.answer_text
                                 for qid, p in predictions.items()})
    print("wrote %d predictions to %s" % (len(predictions), args.out))
    if args.naive:
        rate = out_of_order_rate((p.start, p.end)
                                 for p in predictions.values())
        print("out-of-order spans: %.1f%%" % (100.0 * rate))
    if args.confidences:
        write_confidences(args.confidences, predictions)
        print("wrote confidences to %s" % args.confidences)
    return 0


def cmd_eval(args):
    predictions = read_predictions(_resolve(args.pred))
    examples = load_dataset(_resolve(args.data))
    report = evaluate(predictions, examples)
    print(format_report(report))
    return 0


def cmd_ensemble(args):
    members = [read_confidences(_resolve(path)) for path in args.inputs]
    combined = ensemble(members)
    write_predictions(args.out, {qid: p.answer_text
                                 for qid, p in combined.items()})
    print("ensembled %d members over %d questions -> %s"
          % (len(members), len(combined), args.out))
    if args.confidences:
        write_confidences(args.confidences, combined)
        print("wrote confidences to %s" % args.confidences)
    return 0


def cmd_bench(args):
    config = _load_model_config(args)
    _, vocab = make_synthetic_dataset(1, vocab_size=200,
                                      dim=config.embedding_dim, seed=0)
    model = Model(config, vocab, seed=args.seed)
    print("model %s: %d parameters (reference: %s)"
          % (config.name, model.param_count(),
             config.reference_params if config.reference_params else "n/a"))
    print("conv backend: %s" % kernels.backend_name())
    profile = scaling_profile(model, args.context_len, args.question_len,
                              args.batch_size, args.repeats, seed=args.seed)
    print("context %4d: %8.2f examples/sec" % (args.context_len,
                                               profile["eps_base"]))
    print("context %4d: %8.2f examples/sec" % (2 * args.context_len,
                                               profile["eps_double"]))
    print("cost doubling ratio: %.2f  (2.0 = linear in context length;"
          " self-attention pushes it toward 4.0)" % profile["doubling_ratio"])
    if config.reference_eps:
        print("reference throughput for this configuration: %.1f examples/sec"
              % config.reference_eps)
    return 0


def cmd_attn_export(args):
    model = load_model(_resolve(args.checkpoint))
    examples = load_dataset(_resolve(args.data))
    if args.example_id:
        matches = [e for e in examples if e.id == args.example_id]
        if not matches:
            raise ConvqaError("no example with id %r in %s"
                              % (args.example_id, args.data))
        example = matches[0]
    else:
        example = examples[0]
    weights, ctokens, qtokens = model.attention_weights(example)
    export_attention_heatmap(weights, ctokens, qtokens, args.out,
                             image_path=args.image)
    print("wrote %dx%d attention heatmap for %r to %s"
          % (len(ctokens), len(qtokens), example.id, args.out))
    if args.image:
        print("wrote image to %s" % args.image)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="convqa",
        description="Lightweight convolutional extractive question answering.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="tokenize a dataset into a cache")
    p.add_argument("--data", required=True, help="SQuAD JSON or cache file")
    p.add_argument("--out", required=True, help="cache file to write")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model")
    _add_config_args(p)
    p.add_argument("--data", required=True, help="training dataset")
    p.add_argument("--dev", help="dev dataset for periodic evaluation")
    p.add_argument("--glove", required=True, help="embedding text file")
    p.add_argument("--out-dir", default="run", help="logs and checkpoints")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--eval-interval", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-context-len", type=int, default=MAX_CONTEXT_LEN)
    p.add_argument("--max-question-len", type=int, default=MAX_QUESTION_LEN)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="decode spans with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="predictions JSON to write")
    p.add_argument("--confidences", help="also write per-span confidences")
    p.add_argument("--naive", action="store_true",
                   help="independent start/end argmax instead of ordered decode")
    p.add_argument("--max-span-len", type=int,
                   help="span width cap (0 disables; default from config)")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-context-len", type=int, default=MAX_CONTEXT_LEN)
    p.add_argument("--max-question-len", type=int, default=MAX_QUESTION_LEN)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against gold answers")
    p.add_argument("--pred", required=True, help="predictions JSON")
    p.add_argument("--data", required=True, help="dataset with gold answers")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ensemble",
                       help="combine confidence files from several models")
    p.add_argument("--inputs", nargs="+", required=True,
                   help="confidence JSON files")
    p.add_argument("--out", required=True, help="predictions JSON to write")
    p.add_argument("--confidences", help="also write combined confidences")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("bench", help="measure inference throughput scaling")
    _add_config_args(p)
    p.add_argument("--context-len", type=int, default=256)
    p.add_argument("--question-len", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("attn-export",
                       help="export context-question attention as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--example-id", help="default: first example")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--image", help="optional heatmap image path")
    p.set_defaults(func=cmd_attn_export)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConvqaError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
