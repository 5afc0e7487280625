"""``mergecap`` command line.

Exit codes: 0 success, 2 usage/input error, 3 data error, 4 numeric failure.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from ._io import atomic_write_bytes, atomic_write_text
from .bleu import BleuConfig, bleu_score, format_table, parse_weights, read_candidates_tsv, write_candidates_tsv
from .captioner import ModelConfig, build_model, greedy_decode, train
from .checkpoint import load_checkpoint, load_checkpoint_file
from .dataloader import stream_epoch
from .errors import CaptionTooLong, DimMismatch, InputError, MergecapError, MissingFeature
from .feature_store import DEFAULT_DIM, read_store, synth_features, write_store
from .optim import OptimizerConfig
from .plotting import format_loss_csv, plot_loss_file, render_loss_svg
from .text_prep import (
    END,
    START,
    build_caption_set,
    build_vocabulary,
    parse_token_file,
    read_descriptions_file,
    read_split_ids,
    write_descriptions_file,
)

log = logging.getLogger("mergecap")

MANIFEST = "run_manifest.txt"
LOSS_CSV = "loss.csv"
LOSS_SVG = "loss.svg"


def _require_file(path, flag):
    if path is None:
        raise InputError(f"{flag} is required")
    if not os.path.isfile(path):
        raise InputError(f"{flag}: no such file: {path}")
    return path


def _read_text(path, flag):
    with open(_require_file(path, flag), encoding="utf-8") as fh:
        return fh.read()


def _read_bytes(path, flag):
    with open(_require_file(path, flag), "rb") as fh:
        return fh.read()


def _load_descriptions(args):
    captions = read_descriptions_file(_read_text(args.descriptions, "--descriptions"))
    if args.split_ids:
        captions = captions.subset(read_split_ids(_read_text(args.split_ids, "--split-ids")))
    return captions


def _check_coverage(captions, store):
    missing = [image_id for image_id in captions if image_id not in store]
    for image_id in missing:
        print(f"missing feature: {image_id}", file=sys.stderr)
    if missing:
        raise MissingFeature(missing[0] if len(missing) == 1 else f"{len(missing)} images, first {missing[0]}")


# ---------------------------------------------------------------- subcommands


def cmd_prepare(args):
    raw = _read_text(args.tokens, "--tokens")
    if args.split_ids:
        _require_file(args.split_ids, "--split-ids")
    if args.out is None:
        raise InputError("--out is required")
    records = parse_token_file(raw)
    if args.split_ids:
        keep = set(read_split_ids(_read_text(args.split_ids, "--split-ids")))
        records = [r for r in records if r.image_id in keep]
    captions = build_caption_set(records)
    vocab = build_vocabulary(captions, args.min_count)
    atomic_write_text(args.out, write_descriptions_file(captions))
    print(f"images={len(captions)}")
    print(f"captions={captions.n_captions()}")
    print(f"dropped={captions.dropped}")
    print(f"vocab_size={vocab.size}")
    print(f"max_caption_length={captions.max_length()}")
    return 0


def cmd_synth(args):
    if args.descriptions:
        ids = list(read_descriptions_file(_read_text(args.descriptions, "--descriptions")))
    elif args.tokens:
        ids = list(dict.fromkeys(r.image_id for r in parse_token_file(_read_text(args.tokens, "--tokens"))))
    else:
        raise InputError("synth needs --descriptions or --tokens to know the image ids")
    if args.out is None:
        raise InputError("--out is required")
    store = synth_features(ids, args.feature_dim, args.seed)
    atomic_write_bytes(args.out, write_store(store))
    print(f"images={len(store)} dim={store.dim} seed={args.seed}")
    return 0


def _model_config(args, vocab_size):
    return ModelConfig(
        vocab_size=vocab_size,
        feature_dim=args.feature_dim,
        max_len=args.max_len,
        embed_dim=args.embed_dim,
        hidden_dim=args.hidden_dim,
        dropout_rate=args.dropout,
    ).validate()


def cmd_train(args):
    features_raw = _read_bytes(args.features, "--features")
    captions = _load_descriptions(args)
    if args.out is None:
        raise InputError("--out is required")
    store = read_store(features_raw)
    if store.dim != args.feature_dim:
        raise DimMismatch(f"feature store dim {store.dim} != --feature-dim {args.feature_dim}")
    _check_coverage(captions, store)
    longest = captions.max_length()
    if longest > args.max_len:
        raise CaptionTooLong(f"longest caption has {longest} tokens; raise --max-len to at least {longest}")

    vocab = build_vocabulary(captions, args.min_count)
    config = _model_config(args, vocab.size)
    model = build_model(config, init_seed=args.seed, vocab=vocab)
    opt = OptimizerConfig(name=args.optimizer, lr=args.lr if args.lr is not None else _default_lr(args.optimizer))

    os.makedirs(args.out, exist_ok=True)
    manifest = {
        "subcommand": "train",
        "version": __version__,
        "features": args.features,
        "descriptions": args.descriptions,
        "split_ids": args.split_ids or "",
        "images": len(captions),
        "captions": captions.n_captions(),
        "epochs": args.epochs,
        "images_per_batch": args.images_per_batch,
        "seed": args.seed,
        "shuffle": not args.no_shuffle,
        "min_count": args.min_count,
        "optimizer": opt.name,
        "lr": opt.lr,
        "param_count": config.param_count(),
        **{f"model.{k}": v for k, v in vars(config).items()},
    }
    atomic_write_text(os.path.join(args.out, MANIFEST), "".join(f"{k}={v}\n" for k, v in sorted(manifest.items())))

    losses = []
    csv_path = os.path.join(args.out, LOSS_CSV)

    def make_stream(epoch):
        return stream_epoch(
            captions,
            store,
            vocab,
            config.max_len,
            images_per_batch=args.images_per_batch,
            epoch_seed=[args.seed, epoch],
            shuffle=not args.no_shuffle,
        )

    def on_epoch(epoch, loss):
        losses.append(loss)
        atomic_write_text(csv_path, format_loss_csv(losses))

    report = train(model, make_stream, args.epochs, opt, checkpoint_dir=args.out, seed=args.seed, on_epoch=on_epoch)
    atomic_write_bytes(os.path.join(args.out, LOSS_SVG), render_loss_svg(list(range(1, report.epochs + 1)), losses))
    print(f"epochs={report.epochs} samples_per_epoch={report.samples_per_epoch} final_loss={losses[-1]:.6f}")
    return 0


def _default_lr(optimizer):
    return 1e-3 if optimizer == "adam" else 1e-2


def _bleu_rows(args):
    if args.bleu:
        return [parse_weights(args.bleu)]
    return [parse_weights(str(n)) for n in (1, 2, 3, 4)]


def _report(entries, args):
    reports = {}
    for label, weights in _bleu_rows(args):
        cfg = BleuConfig(weights, args.smoothing)
        reports[label] = (weights, bleu_score(entries, cfg))
    return reports


def cmd_evaluate(args):
    ckpt_raw = _read_bytes(args.checkpoint, "--checkpoint")
    features_raw = _read_bytes(args.features, "--features")
    captions = _load_descriptions(args)
    model = load_checkpoint(ckpt_raw).model()
    store = read_store(features_raw)
    if store.dim != model.config.feature_dim:
        raise DimMismatch(f"feature store dim {store.dim} != model feature_dim {model.config.feature_dim}")
    _check_coverage(captions, store)

    rows = []
    for image_id, caps in captions.entries.items():
        candidate = greedy_decode(model, store[image_id])
        refs = [[t for t in cap if t not in (START, END)] for cap in caps]
        rows.append((image_id, candidate, refs))
    reports = _report([(cand, refs) for _, cand, refs in rows], args)
    print(f"images={len(rows)}")
    sys.stdout.write(format_table(reports))
    if args.out:
        atomic_write_text(args.out, write_candidates_tsv(rows))
    return 0


def cmd_score(args):
    rows = read_candidates_tsv(_read_text(args.candidates, "candidates"))
    reports = _report([(cand, refs) for _, cand, refs in rows], args)
    print(f"images={len(rows)}")
    sys.stdout.write(format_table(reports))
    return 0


def _read_vector(path):
    text = _read_text(path, "--vector")
    try:
        return np.array([float(x) for x in text.split()], dtype=np.float32)
    except ValueError as exc:
        raise InputError(f"--vector: {exc}") from None


def cmd_caption(args):
    model = load_checkpoint_file(_require_file(args.checkpoint, "--checkpoint")).model()
    if args.vector:
        image_id = os.path.splitext(os.path.basename(args.vector))[0]
        vec = _read_vector(args.vector)
    elif args.features and args.image_id:
        store = read_store(_read_bytes(args.features, "--features"))
        image_id = args.image_id
        if image_id not in store:
            raise MissingFeature(image_id)
        vec = store[image_id]
    else:
        raise InputError("caption needs --vector, or --features with --image-id")
    if vec.shape != (model.config.feature_dim,):
        raise DimMismatch(f"feature vector has {vec.size} components, model expects {model.config.feature_dim}")
    words = greedy_decode(model, vec)
    print(f"[INFO] [{image_id}]: Generated Caption: {' '.join(words)}")
    return 0


def cmd_plot_loss(args):
    _require_file(args.loss_csv, "loss_csv")
    out = args.out or os.path.splitext(args.loss_csv)[0] + ".svg"
    n = plot_loss_file(args.loss_csv, out)
    print(f"points={n} svg={out}")
    return 0


# ---------------------------------------------------------------- parser


def _add_model_flags(p):
    p.add_argument("--feature-dim", type=int, default=DEFAULT_DIM)
    p.add_argument("--max-len", type=int, default=34)
    p.add_argument("--embed-dim", type=int, default=256)
    p.add_argument("--hidden-dim", type=int, default=256)
    p.add_argument("--dropout", type=float, default=0.5)


def _add_bleu_flags(p):
    p.add_argument("--bleu", help="1|2|3|4|custom:w1,w2,w3,w4 (default: all four presets)")
    p.add_argument("--smoothing", choices=("none", "floor"), default="none")


def build_parser():
    parser = argparse.ArgumentParser(prog="mergecap", description="Merge-model image captioning on precomputed features.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress per-epoch log lines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="clean a token file into a descriptions file")
    p.add_argument("--tokens", required=True)
    p.add_argument("--split-ids")
    p.add_argument("--out", required=True)
    p.add_argument("--min-count", type=int, default=1)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("synth", help="write deterministic synthetic features for every image id")
    p.add_argument("--descriptions")
    p.add_argument("--tokens")
    p.add_argument("--out", required=True)
    p.add_argument("--feature-dim", type=int, default=DEFAULT_DIM)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the merge model, one checkpoint per epoch")
    p.add_argument("--features", required=True)
    p.add_argument("--descriptions", required=True)
    p.add_argument("--split-ids")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--images-per-batch", type=int, default=1)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--no-shuffle", action="store_true")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="greedy-decode every image and report BLEU")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--descriptions", required=True)
    p.add_argument("--split-ids")
    p.add_argument("--out", help="optional TSV of per-image candidates and references")
    _add_bleu_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("score", help="BLEU for a TSV of id, candidate, references")
    p.add_argument("candidates")
    _add_bleu_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("caption", help="caption one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features")
    p.add_argument("--image-id")
    p.add_argument("--vector", help="text file of whitespace-separated feature components")
    p.set_defaults(func=cmd_caption)

    p = sub.add_parser("plot-loss", help="render loss.csv as an SVG line chart")
    p.add_argument("loss_csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot_loss)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "epochs", 1) < 1 or getattr(args, "images_per_batch", 1) < 1:
        print("error: --epochs and --images-per-batch must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except MergecapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
