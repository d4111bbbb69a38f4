"""Command-line entry point.

Subcommands: synth, split, embed-mock, train, eval, ablate. Exit codes:
0 success, 1 usage error, 2 data error, 3 numeric failure. Every
subcommand is deterministic given --seed; ZRFORGE_LOG sets the log level.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from .errors import DataError, NumericError, UsageError
from . import kgdata, relsem, split as splitmod, synth
from .forecaster import (
    TrainConfig,
    checkpoint_emb_file,
    fit,
    load_checkpoint,
    save_checkpoint,
)

log = logging.getLogger("zrforge")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _setup_logging() -> None:
    level = os.environ.get("ZRFORGE_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _limit_threads(n: int) -> None:
    if n < 1:
        raise UsageError("--threads must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file with TrainConfig fields")
    defaults = TrainConfig()
    for f in dataclasses.fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            p.add_argument(flag, action="store_true", default=None)
        elif f.type == "int":
            p.add_argument(flag, type=int, default=None)
        else:
            p.add_argument(flag, type=float, default=None)
    p.set_defaults(_train_defaults=defaults)


def _resolve_config(args) -> TrainConfig:
    config = (TrainConfig.from_kv_file(args.config) if args.config
              else TrainConfig())
    overrides = {}
    for f in dataclasses.fields(TrainConfig):
        value = getattr(args, f.name, None)
        if value is not None and not (f.type == "bool" and value is False):
            overrides[f.name] = value
    config = dataclasses.replace(config, **overrides)
    config.validate()
    log.info("resolved config: %s", json.dumps(dataclasses.asdict(config),
                                               sort_keys=True))
    return config


def _load_dataset_with_store(args, config: TrainConfig | None = None):
    dataset = kgdata.load_dataset(args.data_dir)
    dataset = kgdata.add_reciprocals(dataset)
    store = None
    emb_file = getattr(args, "emb_file", None)
    if emb_file and not (config and config.random_frozen_rel_emb):
        store = relsem.load_text_matrices(emb_file,
                                          required_ids=dataset.relations.all_ids())
    return dataset, store


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    config = synth.SynthConfig(
        seed=args.seed, n_entities=args.entities, n_clusters=args.clusters,
        relations_per_cluster=args.relations_per_cluster,
        holdout_per_cluster=args.holdout_per_cluster, n_pairs=args.pairs,
        pairs_per_subject=args.pairs_per_subject, train_steps=args.train_steps,
        eval_steps=args.eval_steps, emit_prob=args.emit_prob,
        holdout_emit_prob=args.holdout_emit_prob)
    rows, labels, truth = synth.generate(config)
    synth.write_outputs(args.out_dir, rows, labels, truth)
    log.info("wrote %d facts, %d relations to %s (suggested threshold %d)",
             len(rows), len(labels), args.out_dir, truth.suggested_threshold)
    return 0


def cmd_split(args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        facts, entities, relations, timeline = kgdata.parse_quadruples(fh)
    if args.split_ts is not None:
        if args.split_ts not in timeline:
            raise DataError(f"timestamp {args.split_ts!r} not present in the input")
        split_ts = timeline.index(args.split_ts)
    elif args.train_fraction is not None:
        split_ts = splitmod.split_timestamp_for_fraction(facts, args.train_fraction)
    else:
        raise UsageError("one of --split-ts / --train-fraction is required")
    config = splitmod.SplitConfig(split_ts, args.threshold)
    dataset = splitmod.build_zero_shot_dataset(facts, entities, relations.labels,
                                               timeline, config)
    kgdata.save_dataset(dataset, args.out_dir)
    stats = splitmod.stats_json(dataset)
    with open(os.path.join(args.out_dir, "stats.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(stats)
    sys.stdout.write(stats)
    return 0


def cmd_embed_mock(args) -> int:
    labels = kgdata.read_id_tsv(args.relations)
    vocab = kgdata.RelationVocab(labels).with_reciprocals()
    store = relsem.mock_store_for_vocab(vocab, args.d_w, args.seed)
    sidecar = {str(rid): {"text": vocab.text(rid), "erd": vocab.text(rid)}
               for rid in vocab.all_ids()}
    relsem.write_text_matrices(args.out, store, sidecar)
    log.info("wrote %d matrices (d_w=%d) to %s", len(store), args.d_w, args.out)
    return 0


def cmd_train(args) -> int:
    config = _resolve_config(args)
    dataset, store = _load_dataset_with_store(args, config)
    if store is None and not config.random_frozen_rel_emb:
        raise UsageError("--emb-file is required unless --random-frozen-rel-emb is set")
    def _progress(entry):
        log.info("epoch %d loss %.4f valid_mrr %.4f", entry["epoch"],
                 entry["loss"], entry.get("valid_mrr", float("nan")))

    model, train_log = fit(dataset, config, store, progress=_progress)
    emb_path = os.path.abspath(args.emb_file) if args.emb_file else None
    save_checkpoint(args.out, model, train_log, emb_path)
    log.info("saved checkpoint to %s", args.out)
    return 0


def cmd_eval(args) -> int:
    from .evalharness import evaluate_split

    dataset = kgdata.add_reciprocals(kgdata.load_dataset(args.data_dir))
    emb_file = args.emb_file or checkpoint_emb_file(args.checkpoint)
    store = None
    if emb_file:
        store = relsem.load_text_matrices(emb_file,
                                          required_ids=dataset.relations.all_ids())
    model, _ = load_checkpoint(args.checkpoint, dataset, store)
    report = evaluate_split(model, model.dataset, args.split)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.to_json())
    sys.stdout.write(report.table())
    return 0


ABLATION_VARIANTS = ("full", "-ERD-analog", "-RHL")


def cmd_ablate(args) -> int:
    from .evalharness import evaluate_split

    base_config = _resolve_config(args)
    dataset, store = _load_dataset_with_store(args, None)
    if store is None:
        raise UsageError("--emb-file is required for ablation")
    os.makedirs(args.out_dir, exist_ok=True)
    results = {}
    for variant in ABLATION_VARIANTS:
        config = dataclasses.replace(
            base_config,
            random_frozen_rel_emb=(variant == "-ERD-analog"),
            no_rhl=(variant == "-RHL"),
        )
        model, _ = fit(dataset, config, store)
        report = evaluate_split(model, model.dataset, "both")
        results[variant] = {b: report.bucket(b) for b in
                            ("zero_shot", "seen", "overall")}
        log.info("%s: zero %.3f seen %.3f overall %.3f", variant,
                 results[variant]["zero_shot"]["mrr"],
                 results[variant]["seen"]["mrr"],
                 results[variant]["overall"]["mrr"])
    lines = [f"{'Variant':<14}{'Zero-MRR':>10}{'Seen-MRR':>10}{'Overall-MRR':>13}"]
    for variant in ABLATION_VARIANTS:
        r = results[variant]
        lines.append(f"{variant:<14}{r['zero_shot']['mrr']:>10.3f}"
                     f"{r['seen']['mrr']:>10.3f}{r['overall']['mrr']:>13.3f}")
    table = "\n".join(lines) + "\n"
    with open(os.path.join(args.out_dir, "ablate.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(args.out_dir, "ablate.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(table)
    sys.stdout.write(table)
    return 0


# -- wiring ---------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="zrforge", description=__doc__)
    parser.add_argument("--threads", type=int, default=1,
                        help="bound internal (BLAS) parallelism")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted synthetic TKG")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--entities", type=int, default=200)
    p.add_argument("--clusters", type=int, default=6)
    p.add_argument("--relations-per-cluster", type=int, default=4)
    p.add_argument("--holdout-per-cluster", type=int, default=1)
    p.add_argument("--pairs", type=int, default=240)
    p.add_argument("--pairs-per-subject", type=int, default=2)
    p.add_argument("--train-steps", type=int, default=60)
    p.add_argument("--eval-steps", type=int, default=20)
    p.add_argument("--emit-prob", type=float, default=0.55)
    p.add_argument("--holdout-emit-prob", type=float, default=0.2)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="build a zero-shot dataset from quadruples")
    p.add_argument("--input", required=True)
    p.add_argument("--split-ts", help="raw label of the first evaluation timestamp")
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--threshold", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("embed-mock", help="deterministic stand-in text matrices")
    p.add_argument("--relations", required=True, help="relations.tsv")
    p.add_argument("--out", required=True, help="ZRLE output path")
    p.add_argument("--d-w", type=int, default=32)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_embed_mock)

    p = sub.add_parser("train", help="fit a model on a dataset directory")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--emb-file")
    p.add_argument("--out", required=True, help="checkpoint path")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rank evaluation against a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--split", choices=["valid", "test", "both"], default="both")
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--emb-file", help="override the recorded ZRLE path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="full / -ERD-analog / -RHL comparison")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--emb-file", required=True)
    p.add_argument("--out-dir", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _limit_threads(args.threads)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 1
    except (DataError, OSError) as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return 2
    except NumericError as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
