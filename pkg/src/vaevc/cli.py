"""``vaevc`` command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .corpus import CorpusSpec, default_speakers, gen_synthetic_corpus, read_manifest
from .errors import ConfigError, VCError
from .evaluation import compare_systems, read_reports_csv
from .fileio import load_model, save_model


def cmd_gen_corpus(args):
    spec = CorpusSpec(
        speakers=default_speakers(args.speakers),
        train_utterances=args.utterances,
        eval_utterances=args.eval_utterances,
        seed=args.seed,
        parallel=not args.disjoint,
    )
    records = gen_synthetic_corpus(spec, args.out, force=args.force)
    print(f"wrote {len(records)} utterances to {Path(args.out) / 'manifest.tsv'}")


def cmd_extract(args):
    written = pl.extract_corpus(args.manifest, args.out, force=args.force)
    print(f"wrote {len(written)} feature bundles")


def cmd_train(args):
    cfg = pl.RunConfig.load(args.config)
    for key in ("manifest", "features", "out"):
        if getattr(args, key):
            setattr(cfg, key, getattr(args, key))
    if not cfg.manifest or not cfg.out:
        raise ConfigError("config needs manifest and out")
    manifest = Path(cfg.manifest)
    features = Path(cfg.features) if cfg.features else manifest.parent / "features"
    out = Path(cfg.out)
    pl._ensure_writable(out / "model.vcmd", args.force)
    records = read_manifest(manifest)
    result, data = pl.train_variant(cfg, records, features)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.vcmd", result.model)
    pl.write_history(out / "history.csv", result.history)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    best = result.history[result.best_epoch - 1]
    note = " (diverged, kept last good checkpoint)" if result.diverged else ""
    print(f"trained {cfg.variant} on {len(data)} frames; best epoch {result.best_epoch} elbo {best.elbo:.3f}{note}")


def cmd_convert(args):
    model = load_model(args.model)
    done = pl.convert_corpus(
        model, args.manifest, args.source, args.target, args.out, args.features, args.system, args.force
    )
    print(f"converted {len(done)} utterances into {args.out}")


def cmd_enmf(args):
    done = pl.enmf_corpus(
        args.manifest, args.source, args.target, args.out, K=args.K, seed=args.seed,
        features_dir=args.features, iterations=args.iterations, margin_db=args.margin_db, force=args.force,
    )
    print(f"converted {len(done)} utterances into {args.out}")


def cmd_eval(args):
    out = Path(args.out)
    pl._ensure_writable(out, args.force)
    align = not args.no_align
    reports = [pl.evaluate_converted(d, args.reference_manifest, align, args.margin_db) for d in args.converted]
    for src, tgt in args.baseline or ():
        reports.append(pl.evaluate_baseline(args.reference_manifest, src, tgt, align, args.margin_db))
    _, csv_text, table = compare_systems(reports)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text, encoding="utf-8")
    print(table, end="")


def cmd_report(args):
    reports = []
    for path in args.reports:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        try:
            reports += read_reports_csv(text)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{path}: not a report CSV") from exc
    print(compare_systems(reports)[2], end="")


class _Parser(argparse.ArgumentParser):
    # usage errors share the single-line "error:" contract
    def error(self, message):
        self.exit(2, f"error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vaevc", description="VAE spectral voice conversion toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-corpus", help="render a synthetic vowel corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--speakers", type=int, default=2)
    s.add_argument("--utterances", type=int, default=40, help="training utterances per speaker")
    s.add_argument("--eval-utterances", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--disjoint", action="store_true", help="give each speaker its own training sentences")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_gen_corpus)

    s = sub.add_parser("extract", help="analyze every manifest utterance into a feature bundle")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", help="feature directory (default: <corpus>/features)")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", help="train a VAE variant from a key = value config")
    s.add_argument("--config", required=True)
    s.add_argument("--manifest")
    s.add_argument("--features")
    s.add_argument("--out")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("convert", help="convert eval utterances with a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--source", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--features")
    s.add_argument("--system", default="VAE", help="system label used in reports")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("enmf", help="exemplar NMF baseline conversion")
    s.add_argument("--manifest", required=True)
    s.add_argument("--source", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("-K", type=int, default=512, help="dictionary size")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--iterations", type=int, default=100)
    s.add_argument("--margin-db", type=float, default=40.0)
    s.add_argument("--features")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_enmf)

    s = sub.add_parser("eval", help="score converted outputs by mel-cepstral distortion")
    s.add_argument("--converted", nargs="*", default=[], help="conversion output directories")
    s.add_argument("--reference-manifest", required=True)
    s.add_argument("--out", required=True, help="report CSV")
    s.add_argument("--baseline", nargs=2, action="append", metavar=("SOURCE", "TARGET"),
                   help="also score unconverted source speech against the target")
    s.add_argument("--no-align", action="store_true", help="compare frames index by index")
    s.add_argument("--margin-db", type=float, default=40.0)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="rank systems from one or more report CSVs")
    s.add_argument("reports", nargs="+")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "eval" and not args.converted and not args.baseline:
        print("error: nothing to evaluate (give --converted or --baseline)", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return 1
    except (VCError, ValueError, FloatingPointError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
