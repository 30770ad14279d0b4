"""Command-line front door: ingest, split, replace, vocab, train, eval, grid.

Every run writes a manifest (resolved configuration, input checksums,
version, wall-clock) next to its outputs so any reported number can be
reproduced from the manifest alone. A flat ``key = value`` config file can
supply defaults; explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import replace as dc_replace
from pathlib import Path

import numpy as np

from . import __version__
from . import corpus as corpus_mod
from .corpus import (
    Corpus,
    CorpusError,
    FilterResult,
    SplitMode,
    SplitSpec,
    filter_channel,
    filter_pair,
    read_corpus,
    split_corpus,
    write_corpus,
)
from .decoding import build_score_matrix, decode_global, decode_local
from .encoders import (
    EncoderConfig,
    EncoderKind,
    Pooling,
    build_vocab,
    init_model,
    load_model,
    save_model,
)
from .evalharness import (
    mrr,
    report_global,
    report_local,
    run_grid,
)
from .mathml import MalformedXml, linearize_mathml
from .symbols import (
    Level,
    ProtectedSet,
    ReplacementLevel,
    read_protected_set,
    replace_corpus,
)
from .training import Objective, Optimizer, TrainConfig, train, write_history

_LEVELS = {lv.value: lv for lv in Level}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CorpusError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_defaults(args: argparse.Namespace, parser: argparse.ArgumentParser,
                           argv: list[str]) -> None:
    """File values fill in only options the user did not pass explicitly."""
    if not args.config:
        return
    file_values = _read_config_file(args.config)
    explicit = {a.lstrip("-").replace("-", "_").split("=")[0]
                for a in argv if a.startswith("--")}
    for key, raw in file_values.items():
        if key in explicit or not hasattr(args, key):
            continue
        current = getattr(args, key)
        caster = type(current) if current is not None else str
        if caster is bool:
            setattr(args, key, raw.lower() in ("1", "true", "yes"))
        else:
            setattr(args, key, caster(raw))


def _write_manifest(args: argparse.Namespace, out_dir: Path, command: str,
                    inputs: list[Path], started: float) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": {k: (str(v) if isinstance(v, Path) else v)
                   for k, v in sorted(vars(args).items())
                   if k not in ("func", "inputs")},
        "inputs": {str(p): _sha256(p) for p in inputs if Path(p).is_file()},
        "wall_clock_sec": round(time.time() - started, 3),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"manifest-{command}.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _channel_corpus(corpus: Corpus, channel: str) -> Corpus:
    if channel == "both":
        return corpus
    return Corpus([
        dc_replace(p, statement=filter_channel(p.statement, channel),
                   proof=filter_channel(p.proof, channel))
        for p in corpus.pairs
    ], split_tag=corpus.split_tag)


def _encoder_config(args) -> EncoderConfig:
    kinds = {"pooled": EncoderKind.POOLED, "selfattn": EncoderKind.SELF_ATTENTIVE}
    return EncoderConfig(
        kind=kinds[args.encoder],
        d=args.dim, layers=args.layers, heads=args.heads, d_k=args.dk,
        pooling=Pooling.MEAN if args.pooling == "mean" else Pooling.MAX,
    )


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        objective=Objective.HYBRID if args.objective == "hybrid" else Objective.LOCAL,
        batch_size=args.batch_size,
        epochs=args.epochs,
        lr=args.lr,
        optimizer=Optimizer.SGD if args.optimizer == "sgd" else Optimizer.AVERAGED_SGD,
        lr_decay=args.lr_decay,
        eval_every=args.eval_every,
        seed=args.seed,
    )


def _load_protected(args) -> ProtectedSet | None:
    if getattr(args, "protected", None):
        return read_protected_set(args.protected)
    return None


def _replacement_level(args) -> ReplacementLevel:
    return ReplacementLevel(_LEVELS[args.level], args.alpha)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_ingest(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kept, rejected = [], {"too_short": 0, "too_long": 0}
    with open(args.input, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            record = _parse_raw_record(line, lineno)
            verdict = filter_pair(record)
            if verdict is FilterResult.KEEP:
                kept.append(record)
            else:
                rejected[verdict.value] += 1
    out_path = out_dir / args.output
    write_corpus(Corpus(kept), out_path)
    n_rej = sum(rejected.values())
    _say(args, f"kept {len(kept)}, rejected {n_rej} "
               f"(too short {rejected['too_short']}, "
               f"too long {rejected['too_long']})")
    if args.strict and n_rej:
        return 2
    return 0


def _parse_raw_record(line: str, lineno: int):
    """Raw records use the corpus grammar plus ``x:payload`` items carrying
    percent-encoded Presentation-MathML to linearize in place."""
    fields = line.split("\t")
    if len(fields) != 5:
        raise corpus_mod.FormatError(
            f"expected 5 tab-separated fields, got {len(fields)}", lineno)

    def parse_list(s):
        toks = []
        for item in s.split(" "):
            if not item:
                continue
            if item.startswith("x:"):
                fragment = corpus_mod._unescape(item[2:])
                try:
                    toks.extend(linearize_mathml(fragment))
                except MalformedXml as exc:
                    raise corpus_mod.FormatError(str(exc), lineno) from exc
            else:
                toks.append(corpus_mod.parse_token(item, lineno))
        return toks

    return corpus_mod.PairRecord(
        pair_id=corpus_mod._unescape(fields[0]),
        article_id=corpus_mod._unescape(fields[1]),
        categories=[corpus_mod._unescape(c) for c in fields[2].split(",")]
        if fields[2] else [],
        statement=parse_list(fields[3]),
        proof=parse_list(fields[4]),
    )


def cmd_split(args) -> int:
    corpus = read_corpus(args.corpus)
    spec = SplitSpec(
        mode=SplitMode.UNMIXED if args.mode == "unmixed" else SplitMode.MIXED,
        ratios=tuple(float(r) for r in args.ratios.split(",")),
        seed=args.seed,
    )
    parts = split_corpus(corpus, spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.corpus).stem
    for part, name in zip(parts, ("train", "dev", "test")):
        path = out_dir / f"{stem}.{name}.tsv"
        write_corpus(part, path)
        _say(args, f"{name}: {len(part)} pairs -> {path}")
    return 0


def cmd_replace(args) -> int:
    corpus = read_corpus(args.corpus)
    level = _replacement_level(args)
    replaced = replace_corpus(corpus, level, _load_protected(args), args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / args.output
    write_corpus(replaced, out_path)
    _say(args, f"replaced ({args.level}, alpha={args.alpha}) -> {out_path}")
    return 0


def cmd_vocab(args) -> int:
    corpus = _channel_corpus(read_corpus(args.corpus), args.channel)
    vocab = build_vocab(corpus, args.min_freq)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / args.output
    with open(out_path, "w", encoding="utf-8") as fh:
        for i, tok in enumerate(vocab.tokens):
            item = "<unk>" if tok is None else corpus_mod.format_token(tok)
            fh.write(f"{i}\t{item}\n")
    _say(args, f"vocabulary of {len(vocab)} entries -> {out_path}")
    return 0


def cmd_train(args) -> int:
    train_c = _channel_corpus(read_corpus(args.train_corpus), args.channel)
    dev_c = _channel_corpus(read_corpus(args.dev_corpus), args.channel)
    vocab = build_vocab(train_c, args.min_freq)
    state = init_model(vocab, _encoder_config(args), args.seed)
    best, history = train(train_c, dev_c, state, _train_config(args))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / args.output
    save_model(best, model_path)
    write_history(history, out_dir / (Path(args.output).stem + ".log"))
    last = history.dev_accuracy[-1] if history.dev_accuracy else (0, 0.0)
    _say(args, f"model -> {model_path} (dev accuracy {last[1]:.4f} "
               f"at epoch {last[0]})")
    return 0


def cmd_eval(args) -> int:
    state = load_model(args.model)
    corpus = _channel_corpus(read_corpus(args.corpus), args.channel)
    m = build_score_matrix(state,
                           [p.statement for p in corpus.pairs],
                           [p.proof for p in corpus.pairs])
    if args.decode == "global":
        k = None if args.k in (None, 0) else args.k
        report = report_global(decode_global(m, k))
        k_name = "all" if k is None else str(k)
        line = (f"decode=global\tk={k_name}\tmrr=-\t"
                f"accuracy={report.accuracy:.6f}\tn={report.n}")
    else:
        report = report_local(decode_local(m))
        line = (f"decode=local\tmrr={report.mrr:.6f}\t"
                f"accuracy={report.accuracy:.6f}\tn={report.n}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "eval.tsv", "w", encoding="utf-8") as fh:
        fh.write(line + "\n")
    _say(args, line)
    return 0


def cmd_grid(args) -> int:
    train_c = _channel_corpus(read_corpus(args.train_corpus), args.channel)
    dev_c = _channel_corpus(read_corpus(args.dev_corpus), args.channel)
    test_c = _channel_corpus(read_corpus(args.test_corpus), args.channel)
    levels = [ReplacementLevel(_LEVELS[name], args.alpha)
              for name in args.levels.split(",")]
    report = run_grid(train_c, dev_c, test_c, levels, _encoder_config(args),
                      _train_config(args), _load_protected(args),
                      seed=args.seed, min_freq=args.min_freq)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "grid.txt", "w", encoding="utf-8") as fh:
        fh.write(report.to_text() + "\n")
    with open(out_dir / "grid.tsv", "w", encoding="utf-8") as fh:
        fh.write("\n".join(report.to_records()) + "\n")
    _say(args, report.to_text())
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--channel", choices=("both", "text", "math"), default="both")
    p.add_argument("--quiet", action="store_true")


def _add_encoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--encoder", choices=("pooled", "selfattn"), default="pooled")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--dk", type=int, default=32)
    p.add_argument("--pooling", choices=("max", "mean"), default="max")
    p.add_argument("--min-freq", type=int, default=1)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--objective", choices=("local", "hybrid"), default="local")
    p.add_argument("--batch-size", type=int, default=60)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=5e-3)
    p.add_argument("--optimizer", choices=("sgd", "asgd"), default="asgd")
    p.add_argument("--lr-decay", type=float, default=0.996)
    p.add_argument("--eval-every", type=int, default=20)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="match",
        description="Match mathematical proofs to statements.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate, linearize and filter raw records")
    p.add_argument("input", type=Path)
    p.add_argument("--output", default="corpus.tsv")
    p.add_argument("--strict", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_ingest, inputs=lambda a: [a.input])

    p = sub.add_parser("split", help="train/dev/test split")
    p.add_argument("corpus", type=Path)
    p.add_argument("--mode", choices=("mixed", "unmixed"), default="mixed")
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    _add_common(p)
    p.set_defaults(func=cmd_split, inputs=lambda a: [a.corpus])

    p = sub.add_parser("replace", help="apply a symbol-replacement level")
    p.add_argument("corpus", type=Path)
    p.add_argument("--output", default="replaced.tsv")
    p.add_argument("--level", choices=tuple(_LEVELS), default="full")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--protected", type=Path, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_replace, inputs=lambda a: [a.corpus])

    p = sub.add_parser("vocab", help="build and dump a vocabulary")
    p.add_argument("corpus", type=Path)
    p.add_argument("--output", default="vocab.tsv")
    p.add_argument("--min-freq", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_vocab, inputs=lambda a: [a.corpus])

    p = sub.add_parser("train", help="train a matching model")
    p.add_argument("train_corpus", type=Path)
    p.add_argument("dev_corpus", type=Path)
    p.add_argument("--output", default="model.pmm")
    _add_encoder_flags(p)
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train,
                   inputs=lambda a: [a.train_corpus, a.dev_corpus])

    p = sub.add_parser("eval", help="evaluate a model on a corpus")
    p.add_argument("model", type=Path)
    p.add_argument("corpus", type=Path)
    p.add_argument("--decode", choices=("local", "global"), default="local")
    p.add_argument("--k", type=int, default=None,
                   help="top-k pruning for global decoding (default: dense)")
    _add_common(p)
    p.set_defaults(func=cmd_eval, inputs=lambda a: [a.model, a.corpus])

    p = sub.add_parser("grid", help="cross-replacement experiment grid")
    p.add_argument("train_corpus", type=Path)
    p.add_argument("dev_corpus", type=Path)
    p.add_argument("test_corpus", type=Path)
    p.add_argument("--levels",
                   default="conservation,partial,full,transposition")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--protected", type=Path, default=None)
    _add_encoder_flags(p)
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_grid,
                   inputs=lambda a: [a.train_corpus, a.dev_corpus, a.test_corpus])

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # MATCH_THREADS caps worker parallelism; all current code paths are
    # single-threaded, so the value is recorded in the manifest only.
    os.environ.setdefault("MATCH_THREADS", "1")
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_config_defaults(args, parser, argv)
    started = time.time()
    try:
        code = args.func(args)
    except (CorpusError, MalformedXml, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_manifest(args, Path(args.out_dir), args.command,
                    args.inputs(args), started)
    return code


if __name__ == "__main__":
    sys.exit(main())
