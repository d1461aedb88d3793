"""Command line interface.

Subcommands: gen-data, pretrain, finetune, eval, analyze. Every command
resolves its configuration as defaults < --config file < --set overrides,
writes a run manifest before doing work, and maps errors to exit codes
(2 config, 3 data/checkpoint, 4 numeric).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

from . import datagen, evaluation, training
from .checkpoint import load_checkpoint
from .config import RunConfig, config_to_dict, load_config
from .errors import (CheckpointError, ConfigError, DataError, NumericError)
from .textproc import build_vocab, save_vocab, serialize_document
from .training import CACHE_ENV_VAR


def _file_sha256(path) -> str | None:
    try:
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
        return h.hexdigest()
    except OSError:
        return None


def _write_run_manifest(path, command: str, cfg: RunConfig, inputs: dict,
                        outputs: list) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    manifest = {
        "command": command,
        "config": config_to_dict(cfg),
        "inputs": {str(k): _file_sha256(v) for k, v in inputs.items()
                   if v is not None},
        "input_paths": {str(k): os.path.abspath(str(v))
                        for k, v in inputs.items() if v is not None},
        "outputs": [os.path.abspath(str(p)) for p in outputs],
        "created_unix": int(time.time()),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cache_dir() -> str | None:
    return os.environ.get(CACHE_ENV_VAR) or None


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, args.set)
    os.makedirs(args.out, exist_ok=True)
    _write_run_manifest(
        os.path.join(args.out, "run_manifest.json"), "gen-data", cfg,
        {"config": args.config}, [args.out])
    datagen.generate_dataset(cfg.generator, args.out)
    print(f"wrote corpus and preference data to {args.out}")
    return 0


def _load_corpus_features(data_dir, cfg: RunConfig, vocab):
    corpus = datagen.load_corpus(data_dir, cfg.generator.holdout_modulus)
    features = training.featurize_corpus(
        corpus, cfg.mel, vocab, cfg.text_encoder.max_text_len,
        cache_dir=_cache_dir())
    return corpus, features


def cmd_pretrain(args) -> int:
    cfg = load_config(args.config, args.set)
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.ckpt")
    _write_run_manifest(
        os.path.join(args.out, "run_manifest.json"), "pretrain", cfg,
        {"config": args.config,
         "manifest": os.path.join(args.data, "manifest.tsv")},
        [ckpt_path])
    corpus = datagen.load_corpus(args.data, cfg.generator.holdout_modulus)
    train_ids = corpus.train_ids
    vocab = build_vocab(
        (serialize_document(corpus.texts[i]) for i in train_ids),
        cfg.text_encoder.vocab_size)
    cfg.text_encoder.vocab_size = vocab.size
    cfg.validate()
    features = training.featurize_corpus(
        corpus, cfg.mel, vocab, cfg.text_encoder.max_text_len,
        cache_dir=_cache_dir())
    model = training.build_model(cfg, seed=cfg.pretrain.seed)
    entries = training.pretrain(
        model, features, cfg.pretrain, cfg.loss, train_ids,
        log_path=os.path.join(args.out, "training_log.jsonl"))
    training.save_training_checkpoint(ckpt_path, model, cfg, vocab,
                                      "pretrain", cfg.pretrain.steps)
    save_vocab(os.path.join(args.out, "vocab.tsv"), vocab)
    print(f"pretrain done: {len(entries)} steps, final loss "
          f"{entries[-1].total:.4f}, checkpoint at {ckpt_path}")
    return 0


def cmd_finetune(args) -> int:
    cli_cfg = load_config(args.config, args.set)
    bundle = load_checkpoint(args.init)
    model, cfg, vocab, _, _ = training.model_from_bundle(bundle)
    # architecture, frontend, and vocabulary come from the checkpoint;
    # stage-2 hyperparameters come from the command line config.  fusion
    # width is architecture: the fusion tensors were built at init time,
    # so the checkpoint value wins or eval would reject our own output
    cfg.finetune = cli_cfg.finetune
    fusion_hidden = cfg.loss.fusion_hidden
    cfg.loss = cli_cfg.loss
    cfg.loss.fusion_hidden = fusion_hidden
    if args.ablation is not None:
        cfg.finetune.ablation = args.ablation
    cfg.validate()
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.ckpt")
    triplet_path = os.path.join(args.data, "triplets.tsv")
    pair_path = os.path.join(args.data, "cooccurrence.tsv")
    _write_run_manifest(
        os.path.join(args.out, "run_manifest.json"), "finetune", cfg,
        {"config": args.config, "init": args.init,
         "manifest": os.path.join(args.data, "manifest.tsv"),
         "triplets": triplet_path, "cooccurrence": pair_path},
        [ckpt_path])
    _, features = _load_corpus_features(args.data, cfg, vocab)
    if cfg.finetune.ablation == "cf_pairs":
        pairs = datagen.load_cooccurrence(pair_path)
    else:
        pairs = datagen.load_triplets(triplet_path)
    entries = training.finetune(
        model, features, cfg.finetune, cfg.loss, pairs,
        log_path=os.path.join(args.out, "training_log.jsonl"))
    training.save_training_checkpoint(ckpt_path, model, cfg, vocab,
                                      "finetune", cfg.finetune.steps)
    save_vocab(os.path.join(args.out, "vocab.tsv"), vocab)
    print(f"finetune ({cfg.finetune.ablation}) done: {len(entries)} steps, "
          f"final loss {entries[-1].total:.4f}, checkpoint at {ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    model, cfg, vocab, stage, step = training.model_from_bundle(bundle)
    _write_run_manifest(
        f"{args.report}.manifest.json", "eval", cfg,
        {"checkpoint": args.checkpoint,
         "manifest": os.path.join(args.data, "manifest.tsv")},
        [args.report])
    corpus, features = _load_corpus_features(args.data, cfg, vocab)
    store = evaluation.embed_corpus(model, features,
                                    batch_size=cfg.eval.embed_batch)
    train_rows = features.rows_for(corpus.train_ids)
    hold_rows = features.rows_for(corpus.holdout_ids)
    metrics = {"stage": stage, "step": step}
    metrics["genre_probe_acc"] = evaluation.linear_probe(
        store.matrix[train_rows], features.genres[train_rows], cfg.probe,
        store.matrix[hold_rows], features.genres[hold_rows])
    metrics["language_probe_acc"] = evaluation.linear_probe(
        store.matrix[train_rows], features.languages[train_rows], cfg.probe,
        store.matrix[hold_rows], features.languages[hold_rows])
    matching_path = os.path.join(args.data, "matching.tsv")
    if os.path.exists(matching_path):
        matching = datagen.load_matching(matching_path)
        metrics["hr_at_cutoff"] = evaluation.hr_at_k(
            matching, store, cfg.eval.k_retrieve, cfg.eval.hr_cutoff)
        metrics["hr_cutoff"] = cfg.eval.hr_cutoff
    ranking_path = os.path.join(args.data, "ranking.tsv")
    if os.path.exists(ranking_path):
        ranking = datagen.load_ranking(ranking_path)
        report = evaluation.ranking_auc(ranking, store, cfg.eval)
        metrics["click_auc"] = report.click_auc
        metrics["favor_auc"] = report.favor_auc
    evaluation.write_metric_report(args.report, metrics)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def cmd_analyze(args) -> int:
    data_dir = args.data or os.path.dirname(os.path.abspath(args.pairs))
    bundle = load_checkpoint(args.checkpoint)
    model, cfg, vocab, stage, _ = training.model_from_bundle(bundle)
    os.makedirs(args.out, exist_ok=True)
    _write_run_manifest(
        os.path.join(args.out, "run_manifest.json"), "analyze", cfg,
        {"checkpoint": args.checkpoint, "baseline": args.baseline,
         "pairs": args.pairs,
         "manifest": os.path.join(data_dir, "manifest.tsv")},
        [args.out])
    pairs = datagen.load_eval_pairs(args.pairs)
    corpus, features = _load_corpus_features(data_dir, cfg, vocab)
    store = evaluation.embed_corpus(model, features,
                                    batch_size=cfg.eval.embed_batch)
    report = evaluation.distance_distribution(pairs, store,
                                              cfg.eval.hist_bins)
    evaluation.write_histogram_tsv(os.path.join(args.out, "pos_hist.tsv"),
                                   report.bin_edges, report.pos_hist)
    evaluation.write_histogram_tsv(os.path.join(args.out, "neg_hist.tsv"),
                                   report.bin_edges, report.neg_hist)
    out = {"checkpoint": {"stage": stage, **report.to_dict()}}
    if args.baseline:
        base_bundle = load_checkpoint(args.baseline)
        base_model, base_cfg, base_vocab, base_stage, _ = \
            training.model_from_bundle(base_bundle)
        base_features = training.featurize_corpus(
            corpus, base_cfg.mel, base_vocab,
            base_cfg.text_encoder.max_text_len, cache_dir=_cache_dir())
        base_store = evaluation.embed_corpus(
            base_model, base_features, batch_size=base_cfg.eval.embed_batch)
        base_report = evaluation.distance_distribution(
            pairs, base_store, cfg.eval.hist_bins)
        evaluation.write_histogram_tsv(
            os.path.join(args.out, "baseline_pos_hist.tsv"),
            base_report.bin_edges, base_report.pos_hist)
        evaluation.write_histogram_tsv(
            os.path.join(args.out, "baseline_neg_hist.tsv"),
            base_report.bin_edges, base_report.neg_hist)
        out["baseline"] = {"stage": base_stage, **base_report.to_dict()}
        out["separation_auc_delta"] = (report.separation_auc
                                       - base_report.separation_auc)
        out["mean_gap_delta"] = report.mean_gap - base_report.mean_gap
    report_path = os.path.join(args.out, "analysis_report.json")
    evaluation.write_metric_report(report_path, out)
    summary = {k: v for k, v in out.items() if not isinstance(v, dict)}
    summary["separation_auc"] = report.separation_auc
    summary["mean_gap"] = report.mean_gap
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tunesim",
        description="Two-stage contrastive music representation learning "
                    "on a synthetic corpus")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None,
                       help="JSON config file (defaults apply when omitted)")
        p.add_argument("--set", action="append", default=[], metavar="K=V",
                       help="dotted config override, e.g. "
                            "--set pretrain.steps=500")

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    add_common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", help="stage-1 audio-text training")
    add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="stage-2 preference training")
    add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--init", required=True,
                   help="checkpoint to start from (stage-1 output)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ablation", choices=["none", "cf_pairs", "no_text"],
                   default=None,
                   help="override finetune.ablation from the config")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="metric report for a checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--report", required=True, help="metric report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze",
                       help="distance-distribution analysis on labeled pairs")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--baseline", default=None,
                   help="optional second checkpoint to compare against")
    p.add_argument("--pairs", required=True, help="labeled pair TSV")
    p.add_argument("--data", default=None,
                   help="dataset directory (default: the pairs file's "
                        "directory)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
