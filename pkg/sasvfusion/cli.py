"""Command-line entry point: ``sasvfusion gen|train|eval|ablate|hist``."""
import argparse
import itertools
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from sasvfusion.data import (
    MIN_SPEAKERS,
    SynthConfig,
    TrialLabel,
    TrialQuotas,
    attack_split_masks,
    build_eval_trials,
    generate,
    read_metadata,
    read_protocol,
    read_store,
    split_speakers,
    write_metadata,
    write_protocol,
    write_store,
)
from sasvfusion.exceptions import ConfigError, ContractViolation, MissingUtteranceError, StoreFormatError
from sasvfusion.logger import PACKAGE_LOGGER, get_logger, setup_logger
from sasvfusion.metrics import (
    ADcfConfig,
    MinADcfMetric,
    SasvEerMetric,
    ScoreEvaluator,
    default_metrics,
    min_adcf,
    read_scores,
    sasv_eer,
    write_histograms,
    write_metric_report,
    write_scores,
)
from sasvfusion.model import DEFAULT_DROPOUT, load_checkpoint, save_checkpoint
from sasvfusion.training import (
    TrainConfig,
    cm_baseline_scores,
    cosine_baseline_scores,
    export_scores,
    fit_model,
    load_config,
    training_datasets,
    write_report,
)
from sasvfusion.utils import ensure_directory_exists, write_tsv

logger = get_logger(__name__)

EXIT_MISSING_FILE = 2
EXIT_CONFIG = 3
EXIT_CONTRACT = 4
EXIT_STORE_FORMAT = 5
EXIT_MISSING_UTTERANCE = 6

ABLATION_COLUMNS = ["bn", "dropout", "atmm", "sasv_eer", "sasv_eer_ci_lower", "sasv_eer_ci_upper",
                    "min_adcf", "min_adcf_ci_lower", "min_adcf_ci_upper",
                    "dev_sasv_eer", "dev_min_adcf", "eval_sasv_eer", "eval_min_adcf"]


def _on_off(value):
    value = value.lower()
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected 'on' or 'off', got '{value}'")
    return value == "on"


def _train_config(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    return cfg.with_overrides(
        strategy=args.strategy, atmm=args.atmm, use_batchnorm=args.bn,
        dropout_rate=args.dropout, seed=args.seed,
    )


def _training_utterances(args):
    return read_metadata(args.metadata) if args.metadata else None


# --- commands ----------------------------------------------------------------

def cmd_gen(args):
    if args.speakers < MIN_SPEAKERS:
        raise ConfigError(f"gen needs --speakers >= {MIN_SPEAKERS} for a speaker-disjoint "
                          f"train/eval split, got {args.speakers}")
    out = ensure_directory_exists(args.out)
    cfg = SynthConfig(
        n_speakers=args.speakers, utts_per_speaker=args.utts, spoofs_per_speaker=args.spoofs,
        asv_dim=args.asv_dim, cm_dim=args.cm_dim, speaker_noise=args.noise,
        spoof_mimicry=args.mimicry, cm_separation=args.separation,
        n_unseen_attacks=args.unseen_attacks if args.unseen_spoofs else 0,
        unseen_spoofs_per_speaker=args.unseen_spoofs, seed=args.seed,
    )
    store = generate(cfg)
    write_store(store, out / "store.sgem")
    utts = store.metas()
    train, evaluation = split_speakers(utts, args.eval_fraction, args.seed)
    unseen = set(cfg.unseen_attacks)
    # unseen attacks only ever reach the held-out protocol
    train = [u for u in train if u.attack_id not in unseen]
    write_metadata(utts, out / "metadata.tsv")
    write_metadata(train, out / "train_metadata.tsv")
    write_metadata(evaluation, out / "eval_metadata.tsv")
    q = args.eval_quota
    trials = build_eval_trials(evaluation, TrialQuotas(q, q, q, enroll_size=args.enroll_size), args.seed)
    write_protocol(trials, out / "eval_protocol.tsv")
    logger.info(f"Wrote {len(store)} utterances and {len(trials)} evaluation trials to {out}")


def cmd_train(args):
    store = read_store(args.store)
    cfg = _train_config(args)
    model, rows = fit_model(store, cfg, _training_utterances(args))
    out = ensure_directory_exists(args.out)
    checkpoint = Path(args.checkpoint) if args.checkpoint else out / "model.ckpt"
    save_checkpoint(model, checkpoint)
    write_report(rows, out / "train_report.tsv")


def _evaluator(args):
    return ScoreEvaluator(default_metrics(ADcfConfig()), replicates=args.replicates, level=args.level,
                          seed=args.seed if args.seed is not None else 0, n_jobs=args.n_jobs)


def cmd_eval(args):
    store = read_store(args.store)
    trials = read_protocol(args.protocol)
    if args.baseline == "asv":
        scores = cosine_baseline_scores(trials, store)
    else:
        if not args.checkpoint:
            raise ContractViolation("eval needs --checkpoint unless --baseline asv is given")
        model = load_checkpoint(args.checkpoint)
        if args.baseline == "cm":
            scores = cm_baseline_scores(model, trials, store)
        else:
            scores = export_scores(model, trials, store)
    out = ensure_directory_exists(args.out)
    write_scores(scores, out / "scores.tsv")
    write_metric_report(_evaluator(args).evaluate(scores), out / "metrics.tsv")


def _view_point_estimates(scores, mask, view):
    """(SASV-EER, min a-DCF) of one protocol view; NaN when the view has no spoof trial."""
    labels = scores.labels[mask]
    if not np.any(labels == TrialLabel.SPOOF.value) or not np.any(labels == TrialLabel.TARGET.value):
        logger.warning(f"The {view} view of the protocol has no spoof or no target trials")
        return float("nan"), float("nan")
    subset = scores.subset(mask)
    return sasv_eer(subset)[0], min_adcf(subset)[0]


def cmd_ablate(args):
    store = read_store(args.store)
    trials = read_protocol(args.protocol)
    base = _train_config(args)
    utts = _training_utterances(args)
    datasets = training_datasets(store, base, utts)
    seen = {u.attack_id for u in (utts if utts is not None else store.metas()) if u.attack_id is not None}
    attack_of = {m.utt_id: m.attack_id for m in store.metas()}
    dev_mask, eval_mask = attack_split_masks(trials, attack_of, seen)
    rate = args.dropout if args.dropout is not None else DEFAULT_DROPOUT
    evaluator = ScoreEvaluator([SasvEerMetric(), MinADcfMetric()], replicates=args.replicates, level=args.level,
                               seed=base.seed, n_jobs=args.n_jobs)
    rows = []
    for bn, drop, atmm in itertools.product((False, True), (False, True), (False, True)):
        cfg = base.with_overrides(use_batchnorm=bn, dropout_rate=rate if drop else 0.0, atmm=atmm)
        model, _ = fit_model(store, cfg, datasets=datasets)
        scores = export_scores(model, trials, store)
        report = evaluator.evaluate(scores).set_index("metric")
        eer, dcf = report.loc["sasv_eer"], report.loc["min_adcf"]
        views = [*_view_point_estimates(scores, dev_mask, "dev"), *_view_point_estimates(scores, eval_mask, "eval")]
        rows.append(("on" if bn else "off", cfg.dropout_rate, "on" if atmm else "off",
                     eer["point"], eer["ci_lower"], eer["ci_upper"],
                     dcf["point"], dcf["ci_lower"], dcf["ci_upper"], *views))
        logger.info(f"bn={rows[-1][0]} dropout={cfg.dropout_rate} atmm={rows[-1][2]}: "
                    f"SASV-EER {eer['point']:.4f}, min a-DCF {dcf['point']:.4f} "
                    f"(dev {views[1]:.4f}, eval {views[3]:.4f})")
    out = ensure_directory_exists(args.out)
    write_tsv(pd.DataFrame(rows, columns=ABLATION_COLUMNS), out / "ablation.tsv", header=True)


def cmd_hist(args):
    scores = read_scores(args.scores)
    out = ensure_directory_exists(args.out)
    write_histograms(scores, out / "histograms.csv", bins=args.bins, column=args.column)


# --- parser --------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--out", default=".", help="Output directory")
    p.add_argument("--seed", type=int, default=None, help="Seed (overrides the config file)")
    p.add_argument("--log-dir", default=None, help="Also log to <log-dir>/<command>.log")
    p.add_argument("--verbose", "-v", action="store_true", help="Debug logging")


def _add_training(p):
    p.add_argument("--store", required=True, help="Embedding store (.sgem)")
    p.add_argument("--config", help="Training config file (key = value)")
    p.add_argument("--metadata", help="Restrict training to the utterances of this metadata TSV")
    p.add_argument("--strategy", choices=["s1", "s2", "s3"], type=str.lower)
    p.add_argument("--atmm", type=_on_off, metavar="{on,off}")
    p.add_argument("--bn", type=_on_off, metavar="{on,off}")
    p.add_argument("--dropout", type=float, metavar="RATE")


def _add_evaluation(p):
    p.add_argument("--replicates", type=int, default=1000, help="Bootstrap replicates")
    p.add_argument("--level", type=float, default=0.95, help="Confidence level")
    p.add_argument("--n-jobs", type=int, default=1, help="Parallel bootstrap workers")


def build_parser():
    parser = argparse.ArgumentParser(prog="sasvfusion", description="Spoofing-aware speaker verification fusion")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="Generate a synthetic embedding store with train/eval metadata")
    _add_common(p)
    defaults = SynthConfig()
    p.add_argument("--speakers", type=int, default=defaults.n_speakers)
    p.add_argument("--utts", type=int, default=defaults.utts_per_speaker, help="Bona fide utterances per speaker")
    p.add_argument("--spoofs", type=int, default=defaults.spoofs_per_speaker, help="Spoofed utterances per speaker")
    p.add_argument("--asv-dim", type=int, default=defaults.asv_dim)
    p.add_argument("--cm-dim", type=int, default=defaults.cm_dim)
    p.add_argument("--noise", type=float, default=defaults.speaker_noise)
    p.add_argument("--mimicry", type=float, default=defaults.spoof_mimicry)
    p.add_argument("--separation", type=float, default=defaults.cm_separation)
    p.add_argument("--unseen-attacks", type=int, default=4, help="Attacks kept out of the training metadata")
    p.add_argument("--unseen-spoofs", type=int, default=10, help="Spoofed utterances per speaker from unseen attacks")
    p.add_argument("--eval-fraction", type=float, default=0.3, help="Share of speakers held out")
    p.add_argument("--eval-quota", type=int, default=3, help="Evaluation trials per test utterance and class")
    p.add_argument("--enroll-size", type=int, default=3)
    p.set_defaults(func=cmd_gen, seed=0)

    p = sub.add_parser("train", help="Train a fusion model and write a checkpoint")
    _add_common(p)
    _add_training(p)
    p.add_argument("--checkpoint", help="Checkpoint path (default <out>/model.ckpt)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Score a protocol and report metrics with confidence intervals")
    _add_common(p)
    _add_evaluation(p)
    p.add_argument("--store", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", choices=["asv", "cm"],
                   help="Score with the cosine ASV baseline, or with the CM path of --checkpoint alone")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="Train and evaluate the BN x dropout x ATMM grid")
    _add_common(p)
    _add_training(p)
    _add_evaluation(p)
    p.add_argument("--protocol", required=True, help="Evaluation protocol")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("hist", help="Per-class score histograms as CSV")
    _add_common(p)
    p.add_argument("--scores", required=True, help="Score file written by eval")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--column", choices=["s_sasv", "s_cm"], default="s_sasv")
    p.set_defaults(func=cmd_hist)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logger(PACKAGE_LOGGER, log_file=f"{args.command}.log" if args.log_dir else None,
                 log_level=logging.DEBUG if args.verbose else logging.INFO, log_dir=args.log_dir or "logs")
    try:
        args.func(args)
    except FileNotFoundError as exc:
        return _fail(exc, EXIT_MISSING_FILE)
    except MissingUtteranceError as exc:
        return _fail(exc, EXIT_MISSING_UTTERANCE)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except StoreFormatError as exc:
        return _fail(exc, EXIT_STORE_FORMAT)
    except ContractViolation as exc:
        return _fail(exc, EXIT_CONTRACT)
    return 0


def _fail(exc, code):
    message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
    print(f"sasvfusion: error: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
