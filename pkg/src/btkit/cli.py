"""Command-line entry point.

    btkit --config cfg.yaml --out-dir run [--seed N] [--workers N] COMMAND ...

Commands: make-toy, prep, learn-bpe, train, backtranslate, augment,
translate, bleu, lm, analyze, sweep. Exit codes: 0 success, 1 usage/config
error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from btkit import harness
from btkit.config import Config, load_config, validate_config
from btkit.errors import BtkitError, ConfigError, DataError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse usage errors -> exit code 1
        raise ConfigError(message)


def build_parser() -> _Parser:
    p = _Parser(prog="btkit", description="Back-translation generation-method lab")
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out-dir", default="btkit-run", help="run directory")
    p.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("make-toy", help="generate the shipped toy language pair")
    sub.add_parser("prep", help="tokenize/filter/dedup the corpora")
    sub.add_parser("learn-bpe", help="learn joint BPE and segment the corpora")

    q = sub.add_parser("train", help="train a translation model")
    q.add_argument("--data", help="training TSV (default: bpe/bitext.tsv)")
    q.add_argument("--direction", choices=("fwd", "rev"), default="fwd")
    q.add_argument("--name", help="model file name (default: <direction>.model)")
    q.add_argument("--upsample-rate", type=float, default=None)

    q = sub.add_parser("backtranslate", help="generate synthetic sources")
    q.add_argument("--model", help="reverse model (default: models/rev.model)")
    q.add_argument("--mono", help="monolingual target file (default: bpe/mono.txt)")
    q.add_argument("--method", help="generation method (default: gen.method)")
    q.add_argument("--amount", type=int, help="only the first N sentences")

    q = sub.add_parser("augment", help="combine bitext with synthetic data")
    q.add_argument("--synthetic", required=True, help="synthetic TSV from backtranslate")
    q.add_argument("--bitext", help="bitext TSV (default: bpe/bitext.tsv)")
    q.add_argument("--preview-batches", type=int, default=0,
                   help="write a batch-composition CSV for N batches")

    q = sub.add_parser("translate", help="decode a test set with beam search")
    q.add_argument("--model", help="model file (default: models/fwd.model)")
    q.add_argument("--input", help="input TSV/mono file (default: bpe/test.tsv)")
    q.add_argument("--name", default="test", help="output name")

    q = sub.add_parser("bleu", help="corpus BLEU of a hypothesis file")
    q.add_argument("--hyp", required=True)
    q.add_argument("--ref", required=True, help="reference mono file or TSV (target column)")
    q.add_argument("--config-id", default="run")
    q.add_argument("--test-set", default="test")

    q = sub.add_parser("lm", help="train the Kneser-Ney LM; report perplexity")
    q.add_argument("--train-file", help="training text (default: prep/mono.txt)")
    q.add_argument("--eval", action="append", default=[], help="text file to score")

    sub.add_parser("analyze", help="richness and loss analyses")
    sub.add_parser("sweep", help="generation-method / data-amount sweep")
    return p


def _load(args) -> Config:
    cfg = load_config(args.config) if args.config else validate_config({})
    if args.seed is not None:
        cfg.data["seed"] = args.seed
    return cfg


def run(args) -> int:
    cfg = _load(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cmd = args.command
    if cmd == "make-toy":
        harness.stage_make_toy(cfg, out)
    elif cmd == "prep":
        harness.stage_prep(cfg, out)
    elif cmd == "learn-bpe":
        harness.stage_learn_bpe(cfg, out)
    elif cmd == "train":
        path = harness.stage_train(cfg, out, data=args.data, direction=args.direction,
                                   name=args.name, upsample_rate=args.upsample_rate)
        print(f"model written to {path}")
    elif cmd == "backtranslate":
        path = harness.stage_backtranslate(cfg, out, model=args.model, mono=args.mono,
                                           method=args.method, amount=args.amount)
        print(f"synthetic corpus written to {path}")
    elif cmd == "augment":
        path = harness.stage_augment(cfg, out, synthetic=args.synthetic,
                                     bitext=args.bitext,
                                     preview_batches=args.preview_batches)
        print(f"augmented data written to {path}")
    elif cmd == "translate":
        path = harness.stage_translate(cfg, out, model=args.model,
                                       input_file=args.input, name=args.name)
        print(f"translations written to {path}")
    elif cmd == "bleu":
        report = harness.stage_bleu(cfg, out, hyp=args.hyp, ref=args.ref,
                                    config_id=args.config_id, test_set=args.test_set)
        print(f"BLEU = {report.bleu:.2f}")
    elif cmd == "lm":
        path = harness.stage_lm(cfg, out, train_file=args.train_file,
                                eval_files=args.eval)
        print(f"LM counts written to {path}")
    elif cmd == "analyze":
        path = harness.stage_analyze(cfg, out)
        print(f"reports written to {path}")
    elif cmd == "sweep":
        path = harness.stage_sweep(cfg, out, workers=args.workers)
        print(f"sweep report written to {path}")
    else:  # pragma: no cover - argparse enforces the choices
        raise ConfigError(f"unknown command {cmd!r}")
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except BtkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
